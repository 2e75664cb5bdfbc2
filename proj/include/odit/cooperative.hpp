#pragma once

// Cooperative detection: nodes advance in lockstep, the center sums their local
// statistics and applies a single global threshold.

#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "odit/core_detector.hpp"

namespace odit {

struct NodeStatistics {
  std::vector<double> s;
  TimeIndex t = 0;
};

struct GlobalAlarm {
  bool alarmed = false;
  std::optional<TimeIndex> alarm_time;
  double global_s = 0.0;
  std::vector<double> contributing;
};

// Sum of the per-node statistics. Summation runs over the sorted values so the
// result does not depend on node order.
double aggregate(std::span<const double> node_stats);
inline double aggregate(const NodeStatistics& stats) { return aggregate(stats.s); }

GlobalAlarm global_step(const NodeStatistics& stats, double h);

struct StatPoint {
  TimeIndex t = 0;
  double s = 0.0;
};
using StatHistory = std::deque<StatPoint>;

class CooperativeDetector {
 public:
  CooperativeDetector(std::vector<std::shared_ptr<const OditModel>> models, double h,
                      std::size_t history_cap = DetectorState::kDefaultHistoryCap);

  std::size_t nodes() const { return nodes_.size(); }
  double threshold() const { return h_; }

  // One synchronous step: every node consumes its observation, then the center sums.
  GlobalAlarm step(std::span<const std::vector<double>> per_node);
  GlobalAlarm step_counts(std::span<const std::span<const std::int64_t>> per_node);

  double global_s() const { return global_s_; }
  TimeIndex t() const { return t_; }
  const StatHistory& global_history() const { return global_history_; }
  const DetectorState& node_state(std::size_t n) const { return nodes_.at(n).state(); }
  const OditDetector& node(std::size_t n) const { return nodes_.at(n); }
  void reset();

 private:
  GlobalAlarm finish_step(NodeStatistics stats);

  std::vector<OditDetector> nodes_;
  double h_;
  std::size_t history_cap_;
  double global_s_ = 0.0;
  TimeIndex t_ = 0;
  StatHistory global_history_;
};

}  // namespace odit
