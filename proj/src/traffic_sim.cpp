#include "odit/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odit/error.hpp"
#include "odit/parallel.hpp"
#include "odit/random.hpp"

namespace odit {

void DeviceProfile::validate() const {
  const auto prob_ok = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
  if (!prob_ok(active_prob) || !prob_ok(idle_prob)) throw ValidationError(kind + ": state probabilities must be in [0,1]");
  if (std::abs(active_prob + idle_prob - 1.0) > 1e-9) throw ValidationError(kind + ": active_prob + idle_prob must be 1");
  if (!(active_mean >= 0.0) || !(idle_mean >= 0.0) || !std::isfinite(active_mean) || !std::isfinite(idle_mean)) {
    throw ValidationError(kind + ": state means must be finite and >= 0");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError(kind + ": sigma must be positive");
}

std::vector<DeviceProfile> standard_profiles() {
  return {
      {"thermostat", 0.25, 25.0, 0.75, 5.0, 5, 5.0},
      {"smart_light", 0.05, 10.0, 0.95, 5.0, 10, 5.0},
      {"security_camera", 1.0, 80.0, 0.0, 0.0, DeviceProfile::kAlwaysOn, 5.0},
      {"smart_printer", 0.05, 75.0, 0.95, 5.0, 40, 5.0},
      {"smart_tv", 0.3, 120.0, 0.7, 10.0, 900, 5.0},
  };
}

DeviceProfile standard_profile(const std::string& kind) {
  for (auto& p : standard_profiles()) {
    if (p.kind == kind) return p;
  }
  throw ValidationError("unknown device kind '" + kind + "'");
}

std::size_t Topology::total_devices() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.size();
  return n;
}

void Topology::validate() const {
  if (nodes.empty()) throw ValidationError("topology needs at least one node");
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    if (nodes[n].empty()) throw ValidationError("node " + std::to_string(n) + " has no devices");
    for (const auto& p : nodes[n]) p.validate();
  }
}

Topology Topology::cycled(std::size_t node_count, std::size_t devices_per_node,
                          const std::vector<DeviceProfile>& kinds) {
  if (kinds.empty()) throw ValidationError("no device kinds to cycle");
  Topology topo;
  topo.nodes.resize(node_count);
  for (auto& node : topo.nodes) {
    for (std::size_t j = 0; j < devices_per_node; ++j) node.push_back(kinds[j % kinds.size()]);
  }
  topo.validate();
  return topo;
}

void AttackSpec::validate() const {
  if (onset < 1) throw ValidationError("attack onset must be >= 1 (time starts at 1)");
  if (devices.empty() && !(fraction_compromised > 0.0 && fraction_compromised <= 1.0)) {
    throw ValidationError("fraction_compromised must be in (0,1]");
  }
  if (!(rate_increase >= 0.0) || !std::isfinite(rate_increase)) throw ValidationError("rate_increase must be >= 0");
  if (duration && *duration == 0) throw ValidationError("attack duration must be positive");
}

std::vector<std::int64_t> generate_device(const DeviceProfile& profile, std::size_t steps, std::uint64_t seed,
                                          double scale, TimeIndex scale_from, std::optional<TimeIndex> scale_until) {
  profile.validate();
  if (steps < 1) throw ValidationError("steps must be >= 1");
  // States and noise draw from separate engines so the scale never shifts either sequence.
  Engine states(derive_seed(seed, {0}));
  Engine noise(derive_seed(seed, {1}));
  std::vector<std::int64_t> out(steps);
  bool active = true;
  for (std::size_t r = 0; r < steps; ++r) {
    if (!profile.always_on() && r % profile.session_len == 0) active = uniform01(states) < profile.active_prob;
    const TimeIndex t = r + 1;
    const bool scaled = t >= scale_from && (!scale_until || t < *scale_until);
    const double mean = (profile.always_on() || active ? profile.active_mean : profile.idle_mean) * (scaled ? scale : 1.0);
    const double v = std::round(mean + profile.sigma * standard_normal(noise));
    out[r] = v > 0.0 ? static_cast<std::int64_t>(v) : 0;
  }
  return out;
}

std::uint64_t device_seed(std::uint64_t network_seed, std::size_t node, std::size_t device) {
  return derive_seed(network_seed, {node, device});
}

namespace {

std::vector<std::string> device_names(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t j = 0; j < n; ++j) ids.push_back(std::to_string(j));
  return ids;
}

RawTrace assemble(const std::vector<std::vector<std::int64_t>>& columns, std::size_t steps) {
  std::vector<std::int64_t> flat(steps * columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (std::size_t r = 0; r < steps; ++r) flat[r * columns.size() + j] = columns[j][r];
  }
  return RawTrace(device_names(columns.size()), steps, std::move(flat));
}

}  // namespace

TrafficTrace generate_network(const Topology& topology, std::size_t steps, std::uint64_t seed, std::size_t threads) {
  topology.validate();
  if (steps < 1) throw ValidationError("steps must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t n = 0; n < topology.nodes.size(); ++n) {
    for (std::size_t j = 0; j < topology.nodes[n].size(); ++j) jobs.emplace_back(n, j);
  }
  std::vector<std::vector<std::vector<std::int64_t>>> columns(topology.nodes.size());
  for (std::size_t n = 0; n < topology.nodes.size(); ++n) columns[n].resize(topology.nodes[n].size());
  parallel_for(
      jobs.size(),
      [&](std::size_t i) {
        const auto [n, j] = jobs[i];
        columns[n][j] = generate_device(topology.nodes[n][j], steps, device_seed(seed, n, j));
      },
      threads == 0 ? default_threads() : threads);
  TrafficTrace trace;
  trace.topology = topology;
  trace.seed = seed;
  for (const auto& node : columns) trace.nodes.push_back(assemble(node, steps));
  return trace;
}

std::vector<DeviceRef> select_targets(const Topology& topology, const AttackSpec& spec) {
  spec.validate();
  std::vector<DeviceRef> out;
  if (!spec.devices.empty()) {
    for (const auto& d : spec.devices) {
      if (d.node >= topology.nodes.size() || d.device >= topology.nodes[d.node].size()) {
        throw ValidationError("attack target (" + std::to_string(d.node) + ", " + std::to_string(d.device) +
                              ") is not in the topology");
      }
      out.push_back(d);
    }
  } else {
    std::vector<DeviceRef> all;
    for (std::size_t n = 0; n < topology.nodes.size(); ++n) {
      for (std::size_t j = 0; j < topology.nodes[n].size(); ++j) all.push_back({n, j});
    }
    const auto count = static_cast<std::size_t>(std::round(spec.fraction_compromised * static_cast<double>(all.size())));
    if (count == 0) throw ValidationError("fraction_compromised selects no device");
    Engine eng(derive_seed(spec.selection_seed, {0x7a}));
    for (std::size_t i = 0; i < count; ++i) {
      const auto pick = i + uniform_below(eng, all.size() - i);
      std::swap(all[i], all[pick]);
    }
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TrafficTrace inject_attack(const TrafficTrace& trace, const AttackSpec& spec) {
  spec.validate();
  if (trace.nodes.size() != trace.topology.nodes.size()) throw ValidationError("trace does not match its topology");
  const auto steps = trace.steps();
  if (spec.onset > steps) throw ValidationError("attack onset lies beyond the trace");
  auto targets = select_targets(trace.topology, spec);
  TrafficTrace out = trace;
  std::optional<TimeIndex> until;
  if (spec.duration) until = spec.onset + *spec.duration;
  for (const auto& d : targets) {
    const auto series = generate_device(trace.topology.nodes[d.node][d.device], steps,
                                        device_seed(trace.seed, d.node, d.device), 1.0 + spec.rate_increase,
                                        spec.onset, until);
    auto counts = out.nodes[d.node].counts();
    const auto width = out.nodes[d.node].devices();
    for (std::size_t r = 0; r < steps; ++r) counts[r * width + d.device] = series[r];
    out.nodes[d.node] = RawTrace(out.nodes[d.node].device_ids(), steps, std::move(counts));
  }
  out.attacked = std::move(targets);
  out.onset = spec.onset;
  return out;
}

RawTrace gaussian_count_trace(std::size_t steps, std::size_t d, TimeIndex onset, std::uint64_t seed) {
  if (steps < 1 || d < 1) throw ValidationError("steps and d must be >= 1");
  Engine eng(derive_seed(seed, {0x9a}));
  std::vector<std::int64_t> flat(steps * d);
  for (std::size_t r = 0; r < steps; ++r) {
    const bool anomalous = onset != 0 && r + 1 >= onset;
    for (std::size_t j = 0; j < d; ++j) {
      std::int64_t v;
      if (anomalous) {
        v = static_cast<std::int64_t>(uniform_below(eng, 101));
      } else {
        v = static_cast<std::int64_t>(std::max(0.0, std::round(100.0 * (0.5 + 0.1 * standard_normal(eng)))));
      }
      flat[r * d + j] = v;
    }
  }
  return RawTrace(device_names(d), steps, std::move(flat));
}

}  // namespace odit
