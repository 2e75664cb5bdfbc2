#include "odit/dynamic_env.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "odit/error.hpp"
#include "odit/knn_kernel.hpp"

namespace odit {

void ApplicationProfile::validate() const {
  if (applications.empty()) throw ValidationError("application profile needs at least one application");
  if (max_devices.size() != applications.size()) throw ValidationError("one maximum per application expected");
  for (std::size_t m : max_devices) {
    if (m < 1) throw ValidationError("application maxima must be >= 1");
  }
  std::vector<std::size_t> per_app(applications.size(), 0);
  for (std::size_t a : dimension_app) {
    if (a >= applications.size()) throw ValidationError("dimension mapped to an unknown application");
    ++per_app[a];
  }
  for (std::size_t a = 0; a < applications.size(); ++a) {
    if (per_app[a] != max_devices[a]) {
      throw ValidationError("application '" + applications[a] + "' has " + std::to_string(per_app[a]) +
                            " dimensions but maximum " + std::to_string(max_devices[a]));
    }
  }
}

ActiveMask::ActiveMask(std::vector<bool> active, const ApplicationProfile& profile) : active_(std::move(active)) {
  profile.validate();
  if (active_.size() != profile.dims()) throw ValidationError("mask length does not match the profile dimensions");
  counts_.assign(profile.applications.size(), 0);
  for (std::size_t j = 0; j < active_.size(); ++j) {
    if (!active_[j]) continue;
    indices_.push_back(j);
    ++counts_[profile.dimension_app[j]];
  }
  if (indices_.empty()) throw ValidationError("mask has no active dimension");
}

ActiveMask ActiveMask::full(const ApplicationProfile& profile) {
  return ActiveMask(std::vector<bool>(profile.dims(), true), profile);
}

ActiveMask ActiveMask::from_counts(std::span<const std::size_t> counts, const ApplicationProfile& profile) {
  profile.validate();
  if (counts.size() != profile.applications.size()) throw ValidationError("one count per application expected");
  std::vector<bool> active(profile.dims(), false);
  std::vector<std::size_t> taken(counts.size(), 0);
  for (std::size_t j = 0; j < profile.dims(); ++j) {
    const auto a = profile.dimension_app[j];
    if (counts[a] > profile.max_devices[a]) throw ValidationError("count exceeds the application maximum");
    if (taken[a] < counts[a]) {
      active[j] = true;
      ++taken[a];
    }
  }
  return ActiveMask(std::move(active), profile);
}

std::vector<double> ActiveMask::counts_as_reals() const { return {counts_.begin(), counts_.end()}; }

std::vector<Neighbor> masked_nearest_neighbors(std::span<const double> point, const PointSet& refs,
                                               const ActiveMask& mask, std::size_t k) {
  if (k == 0) throw ValidationError("k must be positive");
  if (refs.size() < k) throw ValidationError("kNN needs at least k references");
  if (point.size() != refs.dim() || mask.active().size() != refs.dim()) {
    throw ValidationError("point, mask and references must share the full dimension");
  }
  if (mask.is_full()) return nearest_neighbors(point, refs, k);
  const auto& idx = mask.active_indices();
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double bound = best.size() == k ? best.back().squared_distance : std::numeric_limits<double>::infinity();
    const double acc =
        detail::squared_distance_bounded(point.data(), refs.point(i).data(), idx.data(), idx.size(), bound);
    if (!(acc < bound)) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), acc,
                                [](double v, const Neighbor& nb) { return v < nb.squared_distance; });
    best.insert(pos, Neighbor{acc, i});
    if (best.size() > k) best.pop_back();
  }
  return best;
}

KnnResult masked_knn_distance(std::span<const double> point, const PointSet& refs, const ActiveMask& mask,
                              std::size_t k) {
  const auto nb = masked_nearest_neighbors(point, refs, mask, k);
  return KnnResult{std::sqrt(nb.back().squared_distance), nb.back().index};
}

double train_masked_baseline(std::span<const Observation> data, const DetectorConfig& cfg, const ActiveMask& mask) {
  cfg.validate();
  const auto split = split_training(data, cfg.m1, cfg.m2, cfg.seed);
  const auto refs = PointSet::from_observations(split.part2);
  std::vector<double> distances;
  distances.reserve(cfg.m1);
  for (const auto& p : split.part1) distances.push_back(masked_knn_distance(p.values, refs, mask, cfg.k).distance);
  std::sort(distances.begin(), distances.end());
  const double baseline = distances[percentile_rank(cfg.m1, cfg.alpha) - 1];
  if (!(baseline > 0.0)) throw ComputationError("masked baseline statistic is 0; deduplicate or jitter the data");
  return baseline;
}

BaselineRegressor::BaselineRegressor(std::vector<BaselineSample> samples, std::vector<double> coefficients)
    : samples_(std::move(samples)), coefficients_(std::move(coefficients)) {
  if (samples_.empty() || coefficients_.size() != samples_.front().counts.size() + 1) {
    throw ValidationError("regressor coefficients must be intercept plus one slope per input");
  }
  const std::size_t p = inputs();
  lo_.assign(p, std::numeric_limits<double>::infinity());
  hi_.assign(p, -std::numeric_limits<double>::infinity());
  double min_baseline = std::numeric_limits<double>::infinity();
  double sq = 0.0;
  for (const auto& s : samples_) {
    if (s.counts.size() != p) throw ValidationError("regressor samples have inconsistent input sizes");
    for (std::size_t a = 0; a < p; ++a) {
      lo_[a] = std::min(lo_[a], s.counts[a]);
      hi_[a] = std::max(hi_[a], s.counts[a]);
    }
    const double r = s.baseline - raw_predict(s.counts);
    sq += r * r;
    residual_max_ = std::max(residual_max_, std::abs(r));
    min_baseline = std::min(min_baseline, s.baseline);
  }
  residual_rms_ = std::sqrt(sq / static_cast<double>(samples_.size()));
  floor_ = 0.5 * min_baseline;
}

double BaselineRegressor::raw_predict(std::span<const double> counts) const {
  if (counts.size() != inputs()) throw ValidationError("prediction needs one count per application");
  double v = coefficients_[0];
  for (std::size_t a = 0; a < counts.size(); ++a) v += coefficients_[a + 1] * counts[a];
  return v;
}

bool BaselineRegressor::in_sampled_range(std::span<const double> counts) const {
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a] < lo_[a] || counts[a] > hi_[a]) return false;
  }
  return true;
}

BaselineRegressor fit_baseline_regressor(std::vector<BaselineSample> samples) {
  if (samples.empty()) throw ValidationError("regression needs samples");
  const std::size_t p = samples.front().counts.size();
  if (samples.size() < p + 1) {
    throw ValidationError("regression needs at least " + std::to_string(p + 1) + " samples for " +
                          std::to_string(p) + " applications");
  }
  for (const auto& s : samples) {
    if (s.counts.size() != p) throw ValidationError("regressor samples have inconsistent input sizes");
    if (!(s.baseline > 0.0) || !std::isfinite(s.baseline)) throw ValidationError("sample baselines must be > 0");
  }

  const auto rows = static_cast<Eigen::Index>(samples.size());
  const auto cols = static_cast<Eigen::Index>(p + 1);
  Eigen::MatrixXd X(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    X(i, 0) = 1.0;
    for (std::size_t a = 0; a < p; ++a) X(i, static_cast<Eigen::Index>(a) + 1) = samples[i].counts[a];
    y(i) = samples[i].baseline;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) {
    std::ostringstream msg;
    msg << "rank-deficient regression inputs; collinear columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index c = qr.rank(); c < cols; ++c) {
      const auto col = perm(c);
      if (col == 0) {
        msg << " intercept";
      } else {
        msg << " count[" << (col - 1) << "]";
      }
    }
    throw ComputationError(msg.str());
  }
  const Eigen::VectorXd beta = qr.solve(y);
  std::vector<double> coefficients(beta.data(), beta.data() + beta.size());
  return BaselineRegressor(std::move(samples), std::move(coefficients));
}

BaselinePrediction predict_baseline(const BaselineRegressor& reg, std::span<const double> counts) {
  BaselinePrediction out;
  out.value = std::max(reg.raw_predict(counts), reg.floor());
  out.extrapolated = !reg.in_sampled_range(counts);
  if (out.extrapolated) std::cerr << "warning: baseline prediction outside the sampled count range\n";
  return out;
}

BaselineApproximator affine_approximator(BaselineRegressor reg) {
  return [reg = std::move(reg)](std::span<const double> counts) { return predict_baseline(reg, counts).value; };
}

EvidenceResult masked_evidence(const OditModel& model, std::span<const double> x, const ActiveMask& mask,
                               double baseline, DimensionRule rule) {
  if (x.size() != model.d) throw ValidationError("dimension mismatch between observation and model");
  if (!(baseline > 0.0)) throw ValidationError("baseline must be positive");
  const auto nb = masked_nearest_neighbors(x, model.reference_set, mask, model.config.k);
  EvidenceResult ev;
  ev.neighbor_index = nb.back().index;
  ev.l_t = std::sqrt(nb.back().squared_distance);
  const auto ref = model.reference_set.point(ev.neighbor_index);
  ev.y_t.assign(x.size(), 0.0);
  for (std::size_t j : mask.active_indices()) ev.y_t[j] = x[j] - ref[j];
  const auto d = rule == DimensionRule::Active ? mask.active_count() : model.d;
  if (ev.l_t == 0.0) {
    ev.d_t = neg_cap(d, baseline);
  } else {
    ev.d_t = static_cast<double>(d) * (std::log(ev.l_t) - std::log(baseline));
  }
  return ev;
}

}  // namespace odit
