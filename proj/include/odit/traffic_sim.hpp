#pragma once

// Synthetic IoT packet counts: two-state session model per device, independent
// devices grouped under nodes, and rate-increase attacks on a random device subset.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "odit/core_detector.hpp"
#include "odit/mitigation.hpp"

namespace odit {

struct DeviceProfile {
  static constexpr std::size_t kAlwaysOn = 0;

  std::string kind;
  double active_prob = 1.0;
  double active_mean = 0.0;
  double idle_prob = 0.0;
  double idle_mean = 0.0;
  std::size_t session_len = kAlwaysOn;  // steps per session
  double sigma = 5.0;

  bool always_on() const { return session_len == kAlwaysOn; }
  void validate() const;
  bool operator==(const DeviceProfile&) const = default;
};

// thermostat, smart_light, security_camera, smart_printer, smart_tv
std::vector<DeviceProfile> standard_profiles();
DeviceProfile standard_profile(const std::string& kind);

struct Topology {
  std::vector<std::vector<DeviceProfile>> nodes;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t total_devices() const;
  void validate() const;

  // `devices_per_node` devices per node, kinds taken from `kinds` in turn.
  static Topology cycled(std::size_t node_count, std::size_t devices_per_node,
                         const std::vector<DeviceProfile>& kinds = standard_profiles());
};

struct AttackSpec {
  TimeIndex onset = 1;
  double fraction_compromised = 0.1;
  double rate_increase = 0.1;
  std::uint64_t selection_seed = 0;
  std::vector<DeviceRef> devices;        // explicit targets; overrides the fraction
  std::optional<std::size_t> duration;  // steps; open-ended when empty

  void validate() const;
};

struct TrafficTrace {
  std::vector<RawTrace> nodes;
  Topology topology;
  std::uint64_t seed = 0;
  std::vector<DeviceRef> attacked;  // sorted
  std::optional<TimeIndex> onset;

  std::size_t steps() const { return nodes.empty() ? 0 : nodes.front().steps(); }
};

// Row r of the returned series is time r + 1. Counts in rows whose time lies in
// [scale_from, scale_until) are drawn with both state means multiplied by `scale`.
std::vector<std::int64_t> generate_device(const DeviceProfile& profile, std::size_t steps, std::uint64_t seed,
                                          double scale = 1.0, TimeIndex scale_from = 1,
                                          std::optional<TimeIndex> scale_until = std::nullopt);

// Sub-seed of device (node, device) under a network seed.
std::uint64_t device_seed(std::uint64_t network_seed, std::size_t node, std::size_t device);

TrafficTrace generate_network(const Topology& topology, std::size_t steps, std::uint64_t seed,
                              std::size_t threads = 0);

// Devices hit by the spec: the explicit list, or round(fraction * total) devices
// drawn uniformly over the whole topology.
std::vector<DeviceRef> select_targets(const Topology& topology, const AttackSpec& spec);

TrafficTrace inject_attack(const TrafficTrace& trace, const AttackSpec& spec);

// Integer d-dimensional stream: round(100 * N(0.5, 0.1)) per component before
// `onset`, uniform integers in [0, 100] from `onset` on (0 disables the anomaly).
RawTrace gaussian_count_trace(std::size_t steps, std::size_t d, TimeIndex onset, std::uint64_t seed);

}  // namespace odit
