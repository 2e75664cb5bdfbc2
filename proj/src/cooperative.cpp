#include "odit/cooperative.hpp"

#include <algorithm>

#include "odit/error.hpp"

namespace odit {

double aggregate(std::span<const double> node_stats) {
  if (node_stats.empty()) throw ValidationError("cannot aggregate zero nodes");
  std::vector<double> sorted(node_stats.begin(), node_stats.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  return total;
}

GlobalAlarm global_step(const NodeStatistics& stats, double h) {
  if (!(h > 0.0)) throw ValidationError("threshold h must be positive");
  GlobalAlarm alarm;
  alarm.global_s = aggregate(stats);
  alarm.contributing = stats.s;
  if (check_alarm(alarm.global_s, h)) {
    alarm.alarmed = true;
    alarm.alarm_time = stats.t;
  }
  return alarm;
}

CooperativeDetector::CooperativeDetector(std::vector<std::shared_ptr<const OditModel>> models, double h,
                                         std::size_t history_cap)
    : h_(h), history_cap_(history_cap) {
  if (models.empty()) throw ValidationError("cooperative detection needs at least one node");
  if (!(h > 0.0)) throw ValidationError("threshold h must be positive");
  nodes_.reserve(models.size());
  for (auto& m : models) nodes_.emplace_back(std::move(m), history_cap);
}

GlobalAlarm CooperativeDetector::finish_step(NodeStatistics stats) {
  auto alarm = global_step(stats, h_);
  global_s_ = alarm.global_s;
  t_ = stats.t;
  if (history_cap_ > 0) {
    global_history_.push_back(StatPoint{t_, global_s_});
    while (global_history_.size() > history_cap_) global_history_.pop_front();
  }
  return alarm;
}

GlobalAlarm CooperativeDetector::step(std::span<const std::vector<double>> per_node) {
  if (per_node.size() != nodes_.size()) throw ValidationError("expected one observation per node");
  NodeStatistics stats;
  stats.s.reserve(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) stats.s.push_back(nodes_[n].step(per_node[n]).s);
  stats.t = t_ + 1;
  return finish_step(std::move(stats));
}

GlobalAlarm CooperativeDetector::step_counts(std::span<const std::span<const std::int64_t>> per_node) {
  if (per_node.size() != nodes_.size()) throw ValidationError("expected one observation per node");
  NodeStatistics stats;
  stats.s.reserve(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) stats.s.push_back(nodes_[n].step_counts(per_node[n]).s);
  stats.t = t_ + 1;
  return finish_step(std::move(stats));
}

void CooperativeDetector::reset() {
  for (auto& n : nodes_) n.reset();
  global_s_ = 0.0;
  t_ = 0;
  global_history_.clear();
}

}  // namespace odit
