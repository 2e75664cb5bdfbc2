#pragma once

// Seeded trial harness: first-alarm bookkeeping, delay vs false-alarm curves,
// device-identification ROC, timing grids, and the fixed experiment scenarios.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odit/baselines.hpp"
#include "odit/core_detector.hpp"
#include "odit/dynamic_env.hpp"
#include "odit/mitigation.hpp"
#include "odit/random.hpp"
#include "odit/traffic_sim.hpp"

namespace odit {

struct TrialOutcome {
  std::optional<TimeIndex> alarm_time;
  std::optional<TimeIndex> attack_onset;
  std::optional<TimeIndex> delay;
  bool false_alarm = false;
  std::uint64_t seed = 0;
};

// Attack-free run when onset is empty.
TrialOutcome classify_trial(std::optional<TimeIndex> alarm, std::optional<TimeIndex> onset, std::uint64_t seed = 0);

// Streams observations through a fresh single-node detector with threshold h.
TrialOutcome run_trial(const OditModel& model, double h, std::span<const Observation> stream,
                       std::optional<TimeIndex> onset, std::uint64_t seed = 0);

// Statistic path: entry r is the statistic after the observation at time r + 1.
using StatPath = std::vector<double>;

std::optional<TimeIndex> first_passage(std::span<const double> path, double h);
double path_max(std::span<const double> path);

// Per-detector raw material for a curve: attack-free peaks over the horizon W and
// full paths of attacked runs with a shared onset.
struct DetectorRuns {
  std::vector<double> null_maxima;
  std::vector<StatPath> attacked;
  TimeIndex onset = 1;
};

struct CurvePoint {
  double h = 0.0;
  double fpr = 0.0;
  std::optional<double> add;  // detected-only; empty without detections
  double ci = 0.0;            // 95% normal half-width of the detected-only ADD
  double censored_add = 0.0;  // misses count as the full post-onset horizon
  std::size_t detections = 0;
  std::size_t misses = 0;
  std::size_t pre_onset_alarms = 0;
};

struct Curve {
  std::string detector;
  std::string scenario;
  std::size_t trials = 0;
  std::vector<CurvePoint> points;  // sorted by fpr
};

CurvePoint evaluate_threshold(const DetectorRuns& runs, double h);
// Smallest threshold with empirical FPR <= target over the null peaks.
double matched_threshold(std::span<const double> null_maxima, double target_fpr);
Curve add_vs_fpr(const DetectorRuns& runs, std::span<const double> h_grid, std::string detector,
                 std::string scenario);
// Thresholds matching each target FPR.
std::vector<double> thresholds_for_fprs(std::span<const double> null_maxima, std::span<const double> fprs);

// Scenario-level harness: each callback returns the statistic path for one seeded run.
struct PathScenario {
  std::string id;
  std::function<StatPath(std::uint64_t seed)> null_run;
  std::function<StatPath(std::uint64_t seed)> attacked_run;
  TimeIndex onset = 1;
};

DetectorRuns collect_runs(const PathScenario& scenario, std::size_t trials, std::uint64_t seed,
                          std::size_t threads = 0);
Curve add_vs_fpr(const PathScenario& scenario, std::span<const double> h_grid, std::size_t trials,
                 std::uint64_t seed, std::string detector, std::size_t threads = 0);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Thresholds swept from +inf down through every score; tied scores enter together.
RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels);
// Devices of nodes below theta1 are never flagged; theta2 sweeps the device scores.
RocResult mitigation_roc(const MitigationReport& report, const std::vector<DeviceRef>& ground_truth,
                         double theta1 = 0.0);

struct ScalingCell {
  std::size_t m2 = 0;
  std::size_t d = 0;
  double median_seconds = 0.0;  // per evidence computation
};

struct ScalingTable {
  std::vector<ScalingCell> cells;
  std::vector<double> m2_ratios;  // time(2 M2) / time(M2) per adjacent pair and d
  std::vector<double> d_ratios;
  double m2_r2 = 0.0;  // smallest linear-fit R^2 along M2 over the d rows
  double d_r2 = 0.0;
};

ScalingTable scaling_bench(std::span<const std::size_t> m2s, std::span<const std::size_t> ds, std::size_t reps,
                           std::uint64_t seed, std::size_t k = 2);

double r_squared(std::span<const double> x, std::span<const double> y);

// i.i.d. N(mean, sd) points in d dimensions.
std::vector<Observation> gaussian_points(std::size_t n, std::size_t d, double mean, double sd, Engine& eng);

// Stream with nominal points before onset and uniform [0,1]^d points from onset on.
std::vector<Observation> gaussian_anomaly_stream(std::size_t len, std::size_t d, TimeIndex onset, Engine& eng);

struct ToyConfig {
  std::size_t m1 = 50;
  std::size_t m2 = 500;
  std::size_t k = 2;
  double alpha = 0.05;
  std::size_t d = 2;
  TimeIndex onset = 6;
  std::size_t horizon = 50;
  std::size_t calibration_trials = 200;
  double target_fpr = 0.05;
  std::size_t seeds = 200;
};

struct ToyResult {
  std::vector<double> thresholds;
  std::vector<TrialOutcome> outcomes;
  // Delays with false alarms and misses counted as the horizon.
  std::vector<double> penalized_delays;
  double median_delay = 0.0;
  std::size_t false_alarms = 0;
  std::size_t misses = 0;
  std::size_t detected_at_onset_plus_one = 0;
};

ToyResult toy_experiment(const ToyConfig& cfg, std::uint64_t seed, std::size_t threads = 0);

struct ConvergenceConfig {
  std::vector<std::size_t> m2_values = {100, 1000, 10000};
  std::size_t m1 = 500;
  double alpha = 0.05;
  std::size_t d = 2;
  std::size_t test_points = 1000;
  double mean = 0.5;
  double sd = 0.1;
};

struct ConvergenceResult {
  std::vector<std::size_t> m2_values;
  std::vector<std::size_t> k_values;
  std::vector<double> mean_abs_error;
};

// Mean |D_t - log f0(x_alpha)/f0(x_t)| on nominal points; k grows as round(sqrt(M2)).
ConvergenceResult convergence_experiment(const ConvergenceConfig& cfg, std::uint64_t seed);

struct StealthConfig {
  std::size_t nodes = 10;
  std::size_t devices_per_node = 20;
  std::size_t train_steps = 144000;
  std::size_t attack_train_steps = 36000;
  std::size_t m1 = 500;
  std::size_t m2 = 2000;
  std::size_t k = 4;
  double alpha = 0.5;
  std::size_t fpr_horizon = 3600;
  std::size_t warmup = 100;  // attack-free steps before onset
  std::size_t post_horizon = 2000;
  std::size_t trials = 200;
  double fraction = 0.1;
  double rate_increase = 0.1;
  double target_fpr = 0.05;
  double filter_quantile = 0.999;
  RenyiConfig renyi;
  std::vector<double> curve_fprs = {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  std::size_t threads = 0;

  void validate() const;
};

struct DetectorSummary {
  std::string id;
  double h = 0.0;
  CurvePoint at_target;
  Curve curve;
};

struct StealthResult {
  std::vector<DetectorSummary> detectors;  // odit_coop, odit_single, cusum, gcusum, renyi, filter
  std::vector<double> odit_auc;            // per trial detected by cooperative ODIT
  std::vector<double> filter_auc;          // same trials and windows
  std::vector<double> odit_auc_post_window;  // ODIT scores over [onset, horizon end], every trial
  double mean_odit_auc = 0.0;
  double mean_filter_auc = 0.0;
  double mean_odit_auc_post_window = 0.0;
  double seconds = 0.0;

  const DetectorSummary& detector(const std::string& id) const;
};

StealthResult stealth_experiment(const StealthConfig& cfg, std::uint64_t seed);

struct DynamicConfig {
  std::vector<std::string> kinds = {"thermostat", "smart_light", "security_camera"};
  std::size_t max_per_kind = 4;
  std::size_t train_steps = 20000;
  std::size_t m1 = 200;
  std::size_t m2 = 2000;
  std::size_t k = 3;
  double alpha = 0.05;
  double regression_fraction = 0.5;  // share of combinations with an exact baseline for fitting
  double h = 20.0;
  TimeIndex onset = 51;
  std::size_t post_horizon = 300;
  double rate_increase = 1.0;
  std::size_t trials = 100;
};

struct DynamicResult {
  BaselineRegressor regressor;
  std::vector<double> exact_delays;   // censored at the post horizon
  std::vector<double> approx_delays;
  double exact_add = 0.0;
  double approx_add = 0.0;
  double median_abs_difference = 0.0;
  // relative baseline error on combinations left out of the fit
  double held_out_median_rel_error = 0.0;
  std::size_t held_out = 0;
  std::size_t exact_false_alarms = 0;
  std::size_t approx_false_alarms = 0;
};

DynamicResult dynamic_experiment(const DynamicConfig& cfg, std::uint64_t seed);

}  // namespace odit
