#pragma once

// Comparison detectors: parametric CUSUM on two-component Gaussian mixtures (known
// or estimated), per-device raw-rate thresholds, and a windowed Renyi-divergence test.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odit/core_detector.hpp"
#include "odit/mitigation.hpp"
#include "odit/traffic_sim.hpp"

namespace odit {

// Pre-change density p*N(active_mean, sigma) + (1-p)*N(idle_mean, sigma). The
// post-change density scales both means by attack_scale.
struct DeviceMixture {
  double active_prob = 1.0;
  double active_mean = 0.0;
  double idle_mean = 0.0;
  double sigma = 5.0;
  double attack_scale = 1.0;

  void validate() const;
};

struct MixtureParams {
  std::vector<std::vector<DeviceMixture>> nodes;

  std::size_t total_devices() const;
};

DeviceMixture mixture_from_profile(const DeviceProfile& profile, double rate_increase);
MixtureParams clairvoyant_params(const Topology& topology, double rate_increase);

double log_mixture_density(double x, double p, double mean_a, double mean_b, double sigma);
// log f1(x) - log f0(x); each density floored at 1e-300 before the log.
double mixture_llr(double count, const DeviceMixture& params);

inline double cusum_step(double s, double llr) { return cusum_recursion(s, llr); }

// Per-device CUSUM statistics summed over the whole network.
class CooperativeCusum {
 public:
  CooperativeCusum(MixtureParams params, double h);

  // One synchronous step; per_node[n] holds that node's device counts.
  bool step(std::span<const std::span<const std::int64_t>> per_node);
  double global_s() const { return global_s_; }
  TimeIndex t() const { return t_; }
  std::optional<TimeIndex> alarm_time() const { return alarm_time_; }
  const std::vector<std::vector<double>>& device_stats() const { return stats_; }
  void reset();

 private:
  MixtureParams params_;
  double h_;
  std::vector<std::vector<double>> stats_;
  // Cached LLR per integer count, per device.
  std::vector<std::vector<std::vector<double>>> llr_table_;
  double global_s_ = 0.0;
  TimeIndex t_ = 0;
  std::optional<TimeIndex> alarm_time_;
};

struct EmFit {
  double weight_high = 1.0;  // mixing weight of the higher-mean component
  double mean_high = 0.0;
  double mean_low = 0.0;
  double sigma = 1.0;
  std::size_t iterations = 0;
  bool collapsed = false;  // single component
};

struct EmOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-9;  // on the mean per-sample log-likelihood
  double min_sigma = 0.5;
};

// Two-component shared-sigma Gaussian mixture on integer samples, k-means start.
EmFit fit_mixture(std::span<const std::int64_t> samples, const EmOptions& opts = {});

// Per-device fits on the nominal trace; the attack scale of each device is the
// weight-averaged ratio of attack-trace to nominal component means.
MixtureParams fit_gcusum(const std::vector<RawTrace>& nominal, const std::vector<RawTrace>& attack,
                         const EmOptions& opts = {});

// Per-device count threshold at the q-quantile of a nominal trace.
std::vector<double> percentile_thresholds(const RawTrace& nominal, double q);

class FilterDetector {
 public:
  explicit FilterDetector(std::vector<std::vector<double>> thresholds);

  bool step(std::span<const std::span<const std::int64_t>> per_node);
  std::optional<TimeIndex> alarm_time() const { return alarm_time_; }
  TimeIndex t() const { return t_; }
  // Devices that exceeded their threshold at any step so far.
  const std::vector<DeviceRef>& flagged() const { return flagged_; }
  void reset();

 private:
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::vector<bool>> exceeded_;
  std::vector<DeviceRef> flagged_;
  TimeIndex t_ = 0;
  std::optional<TimeIndex> alarm_time_;
};

// Per-device filtering score over rows [first, last): peak count / threshold.
std::vector<double> filter_scores(const RawTrace& trace, std::span<const double> thresholds, std::size_t first,
                                  std::size_t last);

struct RenyiConfig {
  std::size_t window_len = 30;
  double order = 2.0;
  std::size_t bins = 20;
  double lo = 0.0;
  double hi = 0.0;  // 0 picks 1.5 x the nominal maximum
  double smoothing = 1.0;
  double threshold = 1.0;

  void validate() const;
};

// (1/(a-1)) log sum p_i^a q_i^(1-a) over bins; both inputs must be distributions.
double renyi_divergence(std::span<const double> p, std::span<const double> q, double order);
double kl_divergence(std::span<const double> p, std::span<const double> q);

class Histogram {
 public:
  Histogram(std::size_t bins, double lo, double hi);
  std::size_t bin_of(double v) const;
  std::size_t bins() const { return bins_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  std::size_t bins_;
  double lo_, hi_;
};

// One reference distribution per node, built from that node's aggregate counts.
struct RenyiModel {
  RenyiConfig config;
  std::vector<Histogram> histograms;
  std::vector<std::vector<double>> reference;  // smoothed, normalized
};

RenyiModel train_renyi(const std::vector<RawTrace>& nominal, RenyiConfig cfg);

// Sum over nodes of the windowed divergence; zero until the window is full.
class RenyiDetector {
 public:
  RenyiDetector(std::shared_ptr<const RenyiModel> model, double threshold);

  bool step(std::span<const std::span<const std::int64_t>> per_node);
  double statistic() const { return statistic_; }
  std::optional<TimeIndex> alarm_time() const { return alarm_time_; }
  TimeIndex t() const { return t_; }
  void reset();

 private:
  std::shared_ptr<const RenyiModel> model_;
  double threshold_;
  std::vector<std::deque<std::size_t>> windows_;
  std::vector<std::vector<double>> counts_;
  double statistic_ = 0.0;
  TimeIndex t_ = 0;
  std::optional<TimeIndex> alarm_time_;
};

}  // namespace odit
