#include "odit/core_detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "odit/error.hpp"
#include "odit/knn_kernel.hpp"
#include "odit/random.hpp"

namespace odit {

RawTrace::RawTrace(std::vector<std::string> device_ids, std::size_t steps, std::vector<std::int64_t> counts)
    : device_ids_(std::move(device_ids)), steps_(steps), counts_(std::move(counts)) {
  if (counts_.size() != steps_ * device_ids_.size()) {
    throw ValidationError("trace has " + std::to_string(counts_.size()) + " counts, expected " +
                          std::to_string(steps_) + " x " + std::to_string(device_ids_.size()));
  }
  std::set<std::string> seen;
  for (const auto& id : device_ids_) {
    if (!seen.insert(id).second) throw ValidationError("duplicate device id '" + id + "'");
  }
  for (std::int64_t c : counts_) {
    if (c < 0) throw ValidationError("negative packet count " + std::to_string(c));
  }
}

RawTrace RawTrace::slice(std::size_t first, std::size_t n) const {
  if (first + n > steps_) throw ValidationError("trace slice out of range");
  const auto d = devices();
  std::vector<std::int64_t> out(counts_.begin() + static_cast<std::ptrdiff_t>(first * d),
                                counts_.begin() + static_cast<std::ptrdiff_t>((first + n) * d));
  return RawTrace(device_ids_, n, std::move(out));
}

void NormalizationMap::validate() const {
  for (double m : maxima) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("normalization maxima must be finite and > 0");
  }
}

PointSet::PointSet(std::size_t dim, std::vector<double> flat) : dim_(dim), data_(std::move(flat)) {
  if (dim_ == 0 && !data_.empty()) throw ValidationError("point set with zero dimension");
  if (dim_ != 0 && data_.size() % dim_ != 0) throw ValidationError("point set storage is not a multiple of dim");
}

PointSet PointSet::from_observations(std::span<const Observation> points) {
  if (points.empty()) return PointSet{};
  PointSet set(points.front().values.size());
  set.data_.reserve(points.size() * set.dim_);
  for (const auto& p : points) set.push_back(p.values);
  return set;
}

void PointSet::push_back(std::span<const double> p) {
  if (p.size() != dim_) throw ValidationError("point dimension mismatch");
  data_.insert(data_.end(), p.begin(), p.end());
}

std::string to_string(EvidenceMode mode) { return mode == EvidenceMode::LogRatio ? "LogRatio" : "LegacyGem"; }

EvidenceMode evidence_mode_from_string(const std::string& s) {
  if (s == "LogRatio" || s == "log_ratio") return EvidenceMode::LogRatio;
  if (s == "LegacyGem" || s == "legacy_gem") return EvidenceMode::LegacyGem;
  throw ValidationError("unknown evidence mode '" + s + "'");
}

void DetectorConfig::validate() const {
  if (k == 0) throw ValidationError("k must be positive");
  if (m1 == 0 || m2 == 0) throw ValidationError("m1 and m2 must be positive");
  if (k > m2) throw ValidationError("k must not exceed m2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(h > 0.0)) throw ValidationError("threshold h must be positive");
}

void LegacyGemConfig::validate() const {
  if (n1 == 0 || n2 == 0 || m_graph == 0 || k == 0) throw ValidationError("legacy sizes must be positive");
  if (m_graph > n1) throw ValidationError("m_graph must not exceed n1");
  if (s < 1 || s > k) throw ValidationError("legacy s must satisfy 1 <= s <= k");
  if (k > n2) throw ValidationError("legacy k must not exceed n2");
  if (!(gamma > 0.0)) throw ValidationError("legacy gamma must be positive");
}

std::vector<Neighbor> nearest_neighbors(std::span<const double> point, const PointSet& refs, std::size_t k) {
  if (refs.size() < k) {
    throw ValidationError("kNN needs at least k=" + std::to_string(k) + " references, got " +
                          std::to_string(refs.size()));
  }
  if (k == 0) throw ValidationError("k must be positive");
  if (point.size() != refs.dim()) throw ValidationError("point dimension does not match the reference set");

  const std::size_t dim = refs.dim();
  const std::size_t n = refs.size();
  const double* base = refs.data().data();
  const double* x = point.data();

  // Sorted by (squared distance, index). References are scanned in index order, so an
  // equal distance never displaces an earlier neighbor.
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double bound = best.size() == k ? best.back().squared_distance : std::numeric_limits<double>::infinity();
    const double acc = detail::squared_distance_bounded(x, base + i * dim, dim, bound);
    if (!(acc < bound)) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), acc,
                                [](double v, const Neighbor& nb) { return v < nb.squared_distance; });
    best.insert(pos, Neighbor{acc, i});
    if (best.size() > k) best.pop_back();
  }
  return best;
}

KnnResult knn_distance(std::span<const double> point, const PointSet& refs, std::size_t k) {
  const auto nb = nearest_neighbors(point, refs, k);
  return KnnResult{std::sqrt(nb.back().squared_distance), nb.back().index};
}

NormalizationMap build_normalization(const RawTrace& raw) {
  if (raw.empty() || raw.devices() == 0) throw ValidationError("cannot build normalization from an empty trace");
  NormalizationMap map;
  map.maxima.assign(raw.devices(), 0.0);
  for (std::size_t t = 0; t < raw.steps(); ++t) {
    const auto row = raw.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) map.maxima[j] = std::max(map.maxima[j], static_cast<double>(row[j]));
  }
  for (double& m : map.maxima) {
    if (m == 0.0) m = 1.0;  // always-idle device
  }
  return map;
}

Observation normalize_row(std::span<const std::int64_t> counts, const NormalizationMap& map, TimeIndex t) {
  if (counts.size() != map.size()) {
    throw ValidationError("dimension mismatch: trace has " + std::to_string(counts.size()) +
                          " devices, normalization has " + std::to_string(map.size()));
  }
  Observation obs;
  obs.time_index = t;
  obs.values.resize(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) obs.values[j] = static_cast<double>(counts[j]) / map.maxima[j];
  return obs;
}

std::vector<Observation> normalize(const RawTrace& raw, const NormalizationMap& map) {
  if (raw.devices() != map.size()) {
    throw ValidationError("dimension mismatch: trace has " + std::to_string(raw.devices()) +
                          " devices, normalization has " + std::to_string(map.size()));
  }
  map.validate();
  std::vector<Observation> out;
  out.reserve(raw.steps());
  for (std::size_t t = 0; t < raw.steps(); ++t) out.push_back(normalize_row(raw.row(t), map, t + 1));
  return out;
}

TrainingSplit split_training(std::span<const Observation> data, std::size_t m1, std::size_t m2, std::uint64_t seed) {
  if (data.size() < m1 + m2) {
    throw ValidationError("training needs m1 + m2 = " + std::to_string(m1 + m2) + " points, got " +
                          std::to_string(data.size()));
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first m1 + m2 slots become a uniform random sample.
  Engine eng(derive_seed(seed, {0x5b11u}));
  for (std::size_t i = 0; i < m1 + m2; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(eng, data.size() - i));
    std::swap(idx[i], idx[j]);
  }
  TrainingSplit split;
  split.part1.reserve(m1);
  split.part2.reserve(m2);
  for (std::size_t i = 0; i < m1; ++i) split.part1.push_back(data[idx[i]]);
  for (std::size_t i = m1; i < m1 + m2; ++i) split.part2.push_back(data[idx[i]]);
  return split;
}

std::size_t percentile_rank(std::size_t m1, double alpha) {
  // The small offset absorbs representation error in (1 - alpha) * m1, e.g. 0.95 * 100.
  const auto r = static_cast<std::size_t>(std::floor((1.0 - alpha) * static_cast<double>(m1) + 1e-9)) + 1;
  return std::min(m1, r);
}

namespace {

void check_dimensions(std::span<const Observation> data) {
  if (data.empty()) throw ValidationError("training data is empty");
  const std::size_t d = data.front().values.size();
  if (d == 0) throw ValidationError("observations must have at least one dimension");
  for (const auto& o : data) {
    if (o.values.size() != d) throw ValidationError("observations have inconsistent dimensions");
    for (double v : o.values) {
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("observation entries must be finite and >= 0");
    }
  }
}

[[noreturn]] void degenerate_baseline() {
  throw ComputationError(
      "baseline statistic is 0: the training data contains too many duplicated points; "
      "deduplicate the training set or add a small jitter before training");
}

}  // namespace

OditModel train(std::span<const Observation> data, const DetectorConfig& cfg) {
  cfg.validate();
  if (cfg.evidence_mode != EvidenceMode::LogRatio) {
    throw ValidationError("train() builds LogRatio models; use train_legacy() for LegacyGem");
  }
  check_dimensions(data);
  const auto split = split_training(data, cfg.m1, cfg.m2, cfg.seed);

  OditModel model;
  model.config = cfg;
  model.d = data.front().values.size();
  model.reference_set = PointSet::from_observations(split.part2);
  model.normalization.maxima.assign(model.d, 1.0);

  std::vector<double> distances;
  distances.reserve(cfg.m1);
  for (const auto& p : split.part1) distances.push_back(knn_distance(p.values, model.reference_set, cfg.k).distance);
  std::sort(distances.begin(), distances.end());
  model.baseline_stat = distances[percentile_rank(cfg.m1, cfg.alpha) - 1];
  if (!(model.baseline_stat > 0.0)) degenerate_baseline();
  return model;
}

double legacy_edge_length(std::span<const Neighbor> neighbors, const LegacyGemConfig& cfg) {
  double total = 0.0;
  for (std::size_t n = cfg.k - cfg.s; n < cfg.k; ++n) {
    total += std::pow(std::sqrt(neighbors[n].squared_distance), cfg.gamma);
  }
  return total;
}

OditModel train_legacy(std::span<const Observation> data, const LegacyGemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_dimensions(data);
  const auto split = split_training(data, cfg.n1, cfg.n2, seed);

  OditModel model;
  model.legacy = cfg;
  model.d = data.front().values.size();
  model.reference_set = PointSet::from_observations(split.part2);
  model.normalization.maxima.assign(model.d, 1.0);
  model.config.k = cfg.k;
  model.config.m1 = cfg.n1;
  model.config.m2 = cfg.n2;
  model.config.seed = seed;
  model.config.evidence_mode = EvidenceMode::LegacyGem;

  std::vector<double> lengths;
  lengths.reserve(cfg.n1);
  for (const auto& p : split.part1) {
    lengths.push_back(legacy_edge_length(nearest_neighbors(p.values, model.reference_set, cfg.k), cfg));
  }
  std::sort(lengths.begin(), lengths.end());
  // The M-point graph keeps the m_graph smallest totals; its boundary point is the largest kept.
  model.baseline_stat = lengths[cfg.m_graph - 1];
  if (!(model.baseline_stat > 0.0)) degenerate_baseline();
  return model;
}

OditModel train_from_raw(const RawTrace& raw, const DetectorConfig& cfg) {
  auto map = build_normalization(raw);
  const auto data = normalize(raw, map);
  auto model = train(data, cfg);
  model.normalization = std::move(map);
  model.device_ids = raw.device_ids();
  return model;
}

double neg_cap(std::size_t d, double baseline_stat) {
  return -10.0 * static_cast<double>(d) * std::abs(std::log(baseline_stat)) - 10.0;
}

EvidenceResult evidence(const OditModel& model, std::span<const double> x) {
  if (x.size() != model.d) {
    throw ValidationError("dimension mismatch: observation has " + std::to_string(x.size()) +
                          " entries, model expects " + std::to_string(model.d));
  }
  if (!(model.baseline_stat > 0.0)) throw ValidationError("model baseline statistic must be positive");

  const bool legacy = model.config.evidence_mode == EvidenceMode::LegacyGem;
  const std::size_t k = legacy ? model.legacy.value().k : model.config.k;
  const auto nb = nearest_neighbors(x, model.reference_set, k);

  EvidenceResult ev;
  ev.neighbor_index = nb.back().index;
  ev.l_t = std::sqrt(nb.back().squared_distance);
  const auto ref = model.reference_set.point(ev.neighbor_index);
  ev.y_t.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) ev.y_t[j] = x[j] - ref[j];

  if (legacy) {
    ev.d_t = legacy_edge_length(nb, *model.legacy) - model.baseline_stat;
  } else if (ev.l_t == 0.0) {
    ev.d_t = neg_cap(model.d, model.baseline_stat);
  } else {
    ev.d_t = static_cast<double>(model.d) * (std::log(ev.l_t) - std::log(model.baseline_stat));
  }
  return ev;
}

double DetectorState::update(const EvidenceResult& ev) {
  s_ = cusum_recursion(s_, ev.d_t);
  ++t_;
  if (s_ == 0.0) last_zero_ = t_;
  if (history_cap_ > 0) {
    history_.push_back(HistoryEntry{t_, ev.y_t, s_});
    while (history_.size() > history_cap_) history_.pop_front();
  }
  return s_;
}

void DetectorState::reset() {
  s_ = 0.0;
  t_ = 0;
  last_zero_ = 0;
  history_.clear();
}

OditDetector::OditDetector(std::shared_ptr<const OditModel> model, std::size_t history_cap)
    : model_(std::move(model)), state_(history_cap) {
  if (!model_) throw ValidationError("detector needs a model");
}

OditDetector::Step OditDetector::step(std::span<const double> x) {
  Step out;
  out.evidence = evidence(*model_, x);
  out.s = state_.update(out.evidence);
  out.alarm = check_alarm(out.s, model_->config.h);
  return out;
}

OditDetector::Step OditDetector::step_counts(std::span<const std::int64_t> counts) {
  const auto obs = normalize_row(counts, model_->normalization, state_.t() + 1);
  return step(obs.values);
}

std::vector<double> ThresholdGrid::candidates() const {
  if (!(lowest > 0.0) || !(highest > lowest) || !(ratio > 1.0)) throw ValidationError("invalid threshold grid");
  std::vector<double> out;
  for (double h = lowest; h < highest; h *= ratio) out.push_back(h);
  out.push_back(highest);
  return out;
}

Calibration threshold_from_maxima(std::span<const double> maxima, double target_fpr, const ThresholdGrid& grid) {
  if (!(target_fpr > 0.0 && target_fpr <= 1.0)) throw ValidationError("target false alarm rate must lie in (0, 1]");
  if (maxima.empty()) throw ValidationError("calibration needs at least one trial");
  std::vector<double> sorted(maxima.begin(), maxima.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  double best_fpr = 1.0;
  for (double h : grid.candidates()) {
    // Trials whose peak reaches h raise an alarm.
    const auto alarms = static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), h));
    const double fpr = alarms / n;
    best_fpr = std::min(best_fpr, fpr);
    if (fpr <= target_fpr) return Calibration{h, fpr};
  }
  std::ostringstream msg;
  msg << "no threshold in the grid reaches false alarm rate " << target_fpr << "; best achievable is " << best_fpr;
  throw ComputationError(msg.str());
}

double max_statistic(const OditModel& model, std::span<const Observation> stream) {
  double s = 0.0;
  double peak = 0.0;
  for (const auto& obs : stream) {
    s = cusum_recursion(s, evidence(model, obs.values).d_t);
    peak = std::max(peak, s);
  }
  return peak;
}

Calibration calibrate_threshold(const OditModel& model, const NominalStreamSource& source, double target_fpr,
                                std::size_t horizon, std::size_t trials, std::uint64_t seed,
                                const ThresholdGrid& grid) {
  if (trials == 0) throw ValidationError("calibration needs at least one trial");
  if (horizon == 0) throw ValidationError("calibration horizon must be positive");
  std::vector<double> maxima;
  maxima.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const auto stream = source(derive_seed(seed, {0xca1bu, i}), horizon);
    maxima.push_back(max_statistic(model, stream));
  }
  return threshold_from_maxima(maxima, target_fpr, grid);
}

Calibration calibrate_threshold(const OditModel& model, std::span<const Observation> nominal, double target_fpr,
                                std::size_t horizon, std::size_t trials, std::uint64_t seed,
                                const ThresholdGrid& grid) {
  if (nominal.size() < horizon) {
    throw ValidationError("nominal trace shorter than the calibration horizon");
  }
  const NominalStreamSource windows = [&](std::uint64_t trial_seed, std::size_t len) {
    Engine eng(trial_seed);
    const auto start = static_cast<std::size_t>(uniform_below(eng, nominal.size() - len + 1));
    return std::vector<Observation>(nominal.begin() + static_cast<std::ptrdiff_t>(start),
                                    nominal.begin() + static_cast<std::ptrdiff_t>(start + len));
  };
  return calibrate_threshold(model, windows, target_fpr, horizon, trials, seed, grid);
}

}  // namespace odit
