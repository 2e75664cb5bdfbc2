#pragma once

// Post-alarm localization: onset estimate from the global statistic, per-node
// average statistics, per-device average distance components, block decisions.

#include <cstddef>
#include <utility>
#include <vector>

#include "odit/cooperative.hpp"
#include "odit/core_detector.hpp"

namespace odit {

struct MitigationConfig {
  double theta1 = 0.0;  // node threshold on the average statistic
  double theta2 = 0.0;  // device threshold on the average distance component
  // Average |y| instead of the signed component.
  bool absolute_components = false;

  void validate() const;
};

struct OnsetEstimate {
  TimeIndex onset = 0;
  // The statistic never touched zero in the retained window; onset is the window start.
  bool window_fallback = false;
};

struct DeviceRef {
  std::size_t node = 0;
  std::size_t device = 0;

  auto operator<=>(const DeviceRef&) const = default;
};

struct MitigationReport {
  TimeIndex onset = 0;
  TimeIndex alarm = 0;
  bool onset_fallback = false;
  std::vector<double> node_scores;
  std::vector<std::vector<double>> device_scores;
  std::vector<std::size_t> flagged_nodes;
  std::vector<DeviceRef> flagged_devices;
};

// tau = 1 + (last t <= alarm with s_t = 0).
OnsetEstimate estimate_onset(const StatHistory& global_history, TimeIndex alarm);

// Average of s_t^n over [onset, alarm]; the history must cover every step of the range.
double node_score(const History& node_history, TimeIndex onset, TimeIndex alarm);
double node_score(const StatHistory& node_history, TimeIndex onset, TimeIndex alarm);

// Per-device average of y_t^{n,j} over [onset, alarm].
std::vector<double> device_score(const History& node_history, TimeIndex onset, TimeIndex alarm,
                                 bool absolute_components = false);

MitigationReport identify(std::vector<double> node_scores, std::vector<std::vector<double>> device_scores,
                          TimeIndex onset, TimeIndex alarm, const MitigationConfig& cfg);

// Full post-alarm procedure over a cooperative detector's retained histories. The
// onset comes from the cooperative statistic and is applied to every node.
MitigationReport mitigate(const CooperativeDetector& detector, TimeIndex alarm, const MitigationConfig& cfg);

}  // namespace odit
