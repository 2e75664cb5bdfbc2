#pragma once

// Varying device populations: dimensions of the maximal training set are masked
// per time step, and the baseline statistic is predicted from per-application
// device counts instead of being retrained for every combination.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "odit/core_detector.hpp"

namespace odit {

struct ApplicationProfile {
  std::vector<std::string> applications;
  std::vector<std::size_t> max_devices;     // per application
  std::vector<std::size_t> dimension_app;   // application index of each dimension

  std::size_t dims() const { return dimension_app.size(); }
  void validate() const;
};

class ActiveMask {
 public:
  ActiveMask(std::vector<bool> active, const ApplicationProfile& profile);
  static ActiveMask full(const ApplicationProfile& profile);
  // First `count[a]` dimensions of each application are active.
  static ActiveMask from_counts(std::span<const std::size_t> counts, const ApplicationProfile& profile);

  const std::vector<bool>& active() const { return active_; }
  const std::vector<std::size_t>& active_indices() const { return indices_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::vector<double> counts_as_reals() const;
  std::size_t active_count() const { return indices_.size(); }
  bool is_full() const { return indices_.size() == active_.size(); }

 private:
  std::vector<bool> active_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> counts_;
};

// kNN over the active dimensions only; neighbor selection uses the same metric.
std::vector<Neighbor> masked_nearest_neighbors(std::span<const double> point, const PointSet& refs,
                                               const ActiveMask& mask, std::size_t k);
KnnResult masked_knn_distance(std::span<const double> point, const PointSet& refs, const ActiveMask& mask,
                              std::size_t k);

// Exact baseline for one device combination: the usual training steps run on the
// maximal training set restricted to the active dimensions.
double train_masked_baseline(std::span<const Observation> data, const DetectorConfig& cfg, const ActiveMask& mask);

struct BaselineSample {
  std::vector<double> counts;
  double baseline = 0.0;
};

// Affine least-squares model baseline ~ c0 + sum_a c_a * count_a.
class BaselineRegressor {
 public:
  BaselineRegressor() = default;
  BaselineRegressor(std::vector<BaselineSample> samples, std::vector<double> coefficients);

  const std::vector<BaselineSample>& samples() const { return samples_; }
  // Intercept first, then one slope per application.
  const std::vector<double>& coefficients() const { return coefficients_; }
  double residual_rms() const { return residual_rms_; }
  double residual_max() const { return residual_max_; }
  double floor() const { return floor_; }
  std::size_t inputs() const { return coefficients_.empty() ? 0 : coefficients_.size() - 1; }

  double raw_predict(std::span<const double> counts) const;
  bool in_sampled_range(std::span<const double> counts) const;

 private:
  std::vector<BaselineSample> samples_;
  std::vector<double> coefficients_;
  double residual_rms_ = 0.0;
  double residual_max_ = 0.0;
  double floor_ = 0.0;
  std::vector<double> lo_, hi_;
};

BaselineRegressor fit_baseline_regressor(std::vector<BaselineSample> samples);

struct BaselinePrediction {
  double value = 0.0;
  bool extrapolated = false;
};

// Positive prediction, floored at half the smallest training baseline.
BaselinePrediction predict_baseline(const BaselineRegressor& reg, std::span<const double> counts);

// Plug-in point for other regression families.
using BaselineApproximator = std::function<double(std::span<const double> counts)>;
BaselineApproximator affine_approximator(BaselineRegressor reg);

// Which dimension count enters D_t under masking.
enum class DimensionRule { Active, Max };

EvidenceResult masked_evidence(const OditModel& model, std::span<const double> x, const ActiveMask& mask,
                               double baseline, DimensionRule rule = DimensionRule::Active);

}  // namespace odit
