#include "odit/mitigation.hpp"

#include <cmath>
#include <iostream>

#include "odit/error.hpp"

namespace odit {

void MitigationConfig::validate() const {
  if (!std::isfinite(theta1) || !std::isfinite(theta2) || theta1 < 0.0 || theta2 < 0.0) {
    throw ValidationError("mitigation thresholds must be finite and >= 0");
  }
}

OnsetEstimate estimate_onset(const StatHistory& global_history, TimeIndex alarm) {
  if (global_history.empty()) throw ValidationError("onset estimation needs a non-empty history");
  for (auto it = global_history.rbegin(); it != global_history.rend(); ++it) {
    if (it->t <= alarm && it->s == 0.0) return OnsetEstimate{it->t + 1, false};
  }
  const TimeIndex start = global_history.front().t;
  // The implicit s_0 = 0 sits just before a history that starts at t = 1.
  if (start <= 1) return OnsetEstimate{1, false};
  std::cerr << "warning: statistic stayed positive over the retained window; onset set to window start t="
            << start << "\n";
  return OnsetEstimate{start, true};
}

namespace {

void check_range(TimeIndex onset, TimeIndex alarm) {
  if (onset == 0 || onset > alarm) throw ValidationError("averaging range requires 1 <= onset <= alarm");
}

template <typename Hist>
auto covered_range(const Hist& history, TimeIndex onset, TimeIndex alarm) {
  check_range(onset, alarm);
  if (history.empty() || history.front().t > onset || history.back().t < alarm) {
    throw ValidationError("history does not cover [" + std::to_string(onset) + ", " + std::to_string(alarm) + "]");
  }
  auto first = history.begin() + static_cast<std::ptrdiff_t>(onset - history.front().t);
  auto last = history.begin() + static_cast<std::ptrdiff_t>(alarm - history.front().t) + 1;
  TimeIndex expect = onset;
  for (auto it = first; it != last; ++it, ++expect) {
    if (it->t != expect) throw ValidationError("history has a gap at t=" + std::to_string(expect));
  }
  return std::pair{first, last};
}

}  // namespace

double node_score(const History& node_history, TimeIndex onset, TimeIndex alarm) {
  auto [first, last] = covered_range(node_history, onset, alarm);
  double total = 0.0;
  for (auto it = first; it != last; ++it) total += it->s;
  return total / static_cast<double>(alarm - onset + 1);
}

double node_score(const StatHistory& node_history, TimeIndex onset, TimeIndex alarm) {
  auto [first, last] = covered_range(node_history, onset, alarm);
  double total = 0.0;
  for (auto it = first; it != last; ++it) total += it->s;
  return total / static_cast<double>(alarm - onset + 1);
}

std::vector<double> device_score(const History& node_history, TimeIndex onset, TimeIndex alarm,
                                 bool absolute_components) {
  auto [first, last] = covered_range(node_history, onset, alarm);
  std::vector<double> total(first->y.size(), 0.0);
  for (auto it = first; it != last; ++it) {
    if (it->y.size() != total.size()) throw ValidationError("distance vectors change dimension in history");
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += absolute_components ? std::abs(it->y[j]) : it->y[j];
  }
  const auto n = static_cast<double>(alarm - onset + 1);
  for (double& v : total) v /= n;
  return total;
}

MitigationReport identify(std::vector<double> node_scores, std::vector<std::vector<double>> device_scores,
                          TimeIndex onset, TimeIndex alarm, const MitigationConfig& cfg) {
  cfg.validate();
  if (node_scores.size() != device_scores.size()) throw ValidationError("one device score vector per node expected");
  if (onset > alarm) throw ValidationError("onset must not exceed the alarm time");
  MitigationReport report;
  report.onset = onset;
  report.alarm = alarm;
  for (std::size_t n = 0; n < node_scores.size(); ++n) {
    if (node_scores[n] < cfg.theta1) continue;
    report.flagged_nodes.push_back(n);
    for (std::size_t j = 0; j < device_scores[n].size(); ++j) {
      if (device_scores[n][j] >= cfg.theta2) report.flagged_devices.push_back(DeviceRef{n, j});
    }
  }
  report.node_scores = std::move(node_scores);
  report.device_scores = std::move(device_scores);
  return report;
}

MitigationReport mitigate(const CooperativeDetector& detector, TimeIndex alarm, const MitigationConfig& cfg) {
  const auto onset = estimate_onset(detector.global_history(), alarm);
  std::vector<double> node_scores;
  std::vector<std::vector<double>> device_scores;
  for (std::size_t n = 0; n < detector.nodes(); ++n) {
    const auto& hist = detector.node_state(n).history();
    node_scores.push_back(node_score(hist, onset.onset, alarm));
    device_scores.push_back(device_score(hist, onset.onset, alarm, cfg.absolute_components));
  }
  auto report = identify(std::move(node_scores), std::move(device_scores), onset.onset, alarm, cfg);
  report.onset_fallback = onset.window_fallback;
  return report;
}

}  // namespace odit
