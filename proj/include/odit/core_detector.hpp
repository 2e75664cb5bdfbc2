#pragma once

// Single-node Online Discrepancy Test: training from attack-free data,
// per-step kNN anomaly evidence, CUSUM-style accumulation and stopping rule.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace odit {

// Observation time. The first observation of a stream is t = 1; t = 0 is the
// implicit initial state with s_0 = 0.
using TimeIndex = std::uint64_t;

// Packet counts, one row per time step, one column per device.
class RawTrace {
 public:
  RawTrace() = default;
  RawTrace(std::vector<std::string> device_ids, std::size_t steps, std::vector<std::int64_t> counts);

  std::size_t steps() const { return steps_; }
  std::size_t devices() const { return device_ids_.size(); }
  bool empty() const { return steps_ == 0; }

  std::int64_t at(std::size_t row, std::size_t device) const { return counts_[row * devices() + device]; }
  std::span<const std::int64_t> row(std::size_t r) const {
    return {counts_.data() + r * devices(), devices()};
  }
  // Rows [first, first + n).
  RawTrace slice(std::size_t first, std::size_t n) const;

  const std::vector<std::string>& device_ids() const { return device_ids_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

 private:
  std::vector<std::string> device_ids_;
  std::size_t steps_ = 0;
  std::vector<std::int64_t> counts_;
};

struct NormalizationMap {
  std::vector<double> maxima;

  std::size_t size() const { return maxima.size(); }
  void validate() const;
  bool operator==(const NormalizationMap&) const = default;
};

struct Observation {
  std::vector<double> values;
  TimeIndex time_index = 0;
};

// Row-major point cloud of fixed dimension; the storage behind reference sets.
class PointSet {
 public:
  explicit PointSet(std::size_t dim = 0) : dim_(dim) {}
  PointSet(std::size_t dim, std::vector<double> flat);
  static PointSet from_observations(std::span<const Observation> points);

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }
  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  void push_back(std::span<const double> p);
  const std::vector<double>& data() const { return data_; }

  bool operator==(const PointSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

enum class EvidenceMode { LogRatio, LegacyGem };

std::string to_string(EvidenceMode mode);
EvidenceMode evidence_mode_from_string(const std::string& s);

struct DetectorConfig {
  std::size_t k = 2;
  double alpha = 0.05;
  std::size_t m1 = 50;
  std::size_t m2 = 500;
  double h = 10.0;
  std::uint64_t seed = 0;
  EvidenceMode evidence_mode = EvidenceMode::LogRatio;

  void validate() const;
  bool operator==(const DetectorConfig&) const = default;
};

// Parameters of the bipartite GEM evidence (edge-length sums over a kNN graph).
struct LegacyGemConfig {
  std::size_t n1 = 5;
  std::size_t n2 = 10;
  std::size_t m_graph = 4;
  std::size_t k = 2;
  std::size_t s = 1;
  double gamma = 1.0;

  void validate() const;
  bool operator==(const LegacyGemConfig&) const = default;
};

struct OditModel {
  PointSet reference_set;
  // L~_(alpha) in LogRatio mode, L_(M) in LegacyGem mode.
  double baseline_stat = 0.0;
  NormalizationMap normalization;
  DetectorConfig config;
  std::optional<LegacyGemConfig> legacy;
  std::size_t d = 0;
  std::vector<std::string> device_ids;

  bool operator==(const OditModel&) const = default;
};

struct Neighbor {
  double squared_distance = 0.0;
  std::size_t index = 0;
};

struct KnnResult {
  double distance = 0.0;
  std::size_t index = 0;  // reference index of the k-th neighbor
};

// The k closest references in ascending (distance, index) order. Ties are broken by
// the lower reference index; duplicated references count as distinct neighbors.
std::vector<Neighbor> nearest_neighbors(std::span<const double> point, const PointSet& refs, std::size_t k);
KnnResult knn_distance(std::span<const double> point, const PointSet& refs, std::size_t k);

struct EvidenceResult {
  double d_t = 0.0;
  double l_t = 0.0;
  // Signed per-device offset x_t minus the k-th nearest reference.
  std::vector<double> y_t;
  std::size_t neighbor_index = 0;
};

NormalizationMap build_normalization(const RawTrace& raw);
std::vector<Observation> normalize(const RawTrace& raw, const NormalizationMap& map);
Observation normalize_row(std::span<const std::int64_t> counts, const NormalizationMap& map, TimeIndex t);

struct TrainingSplit {
  std::vector<Observation> part1;
  std::vector<Observation> part2;
};
TrainingSplit split_training(std::span<const Observation> data, std::size_t m1, std::size_t m2,
                             std::uint64_t seed);

// Rank (1-based, ascending) of the stored percentile among m1 training kNN distances.
std::size_t percentile_rank(std::size_t m1, double alpha);

OditModel train(std::span<const Observation> data, const DetectorConfig& cfg);
OditModel train_legacy(std::span<const Observation> data, const LegacyGemConfig& cfg, std::uint64_t seed = 0);
// Convenience: build_normalization + normalize + train, keeping device ids.
OditModel train_from_raw(const RawTrace& raw, const DetectorConfig& cfg);

// Sum of gamma-powered distances to the (k-s+1)..k-th neighbors.
double legacy_edge_length(std::span<const Neighbor> neighbors, const LegacyGemConfig& cfg);

// Finite stand-in for log(0) when the test point coincides with a reference.
double neg_cap(std::size_t d, double baseline_stat);

EvidenceResult evidence(const OditModel& model, std::span<const double> x);
inline EvidenceResult evidence(const OditModel& model, const Observation& x) { return evidence(model, x.values); }

// Shared recursion s_t = max(s_{t-1} + increment, 0).
inline double cusum_recursion(double previous, double increment) {
  const double next = previous + increment;
  return next > 0.0 ? next : 0.0;
}

struct HistoryEntry {
  TimeIndex t = 0;
  std::vector<double> y;
  double s = 0.0;
};
using History = std::deque<HistoryEntry>;

class DetectorState {
 public:
  static constexpr std::size_t kDefaultHistoryCap = 1000;

  explicit DetectorState(std::size_t history_cap = kDefaultHistoryCap) : history_cap_(history_cap) {}

  double s() const { return s_; }
  TimeIndex t() const { return t_; }
  TimeIndex last_zero() const { return last_zero_; }
  const History& history() const { return history_; }
  std::size_t history_cap() const { return history_cap_; }

  // Advances one step; returns the new statistic.
  double update(const EvidenceResult& ev);
  void reset();

 private:
  double s_ = 0.0;
  TimeIndex t_ = 0;
  TimeIndex last_zero_ = 0;
  std::size_t history_cap_;
  History history_;
};

inline bool check_alarm(const DetectorState& state, double h) { return state.s() >= h; }
inline bool check_alarm(double s, double h) { return s >= h; }

// Streaming wrapper binding a shared immutable model to one mutable state.
class OditDetector {
 public:
  explicit OditDetector(std::shared_ptr<const OditModel> model,
                        std::size_t history_cap = DetectorState::kDefaultHistoryCap);

  struct Step {
    EvidenceResult evidence;
    double s = 0.0;
    bool alarm = false;
  };

  Step step(std::span<const double> x);
  Step step_counts(std::span<const std::int64_t> counts);

  const OditModel& model() const { return *model_; }
  const DetectorState& state() const { return state_; }
  void reset() { state_.reset(); }

 private:
  std::shared_ptr<const OditModel> model_;
  DetectorState state_;
};

// Geometric candidate grid for threshold calibration; the last candidate is the
// "never alarm" surrogate.
struct ThresholdGrid {
  double lowest = 1e-3;
  double highest = 1e6;
  double ratio = 1.02;

  std::vector<double> candidates() const;
};

struct Calibration {
  double h = 0.0;
  double estimated_fpr = 0.0;
};

// Produces one attack-free test stream of `horizon` observations for a trial seed.
using NominalStreamSource = std::function<std::vector<Observation>(std::uint64_t trial_seed, std::size_t horizon)>;

// Smallest grid threshold whose Monte-Carlo probability of any alarm within
// `horizon` steps is at most target_fpr. Windows are drawn from the nominal trace.
Calibration calibrate_threshold(const OditModel& model, std::span<const Observation> nominal, double target_fpr,
                                std::size_t horizon, std::size_t trials, std::uint64_t seed,
                                const ThresholdGrid& grid = {});
Calibration calibrate_threshold(const OditModel& model, const NominalStreamSource& source, double target_fpr,
                                std::size_t horizon, std::size_t trials, std::uint64_t seed,
                                const ThresholdGrid& grid = {});
// Grid selection given the per-trial maximum statistic.
Calibration threshold_from_maxima(std::span<const double> maxima, double target_fpr, const ThresholdGrid& grid);

// Peak statistic of a fresh detector over a stream.
double max_statistic(const OditModel& model, std::span<const Observation> stream);

}  // namespace odit
