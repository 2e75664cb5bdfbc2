#include "odit/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "odit/error.hpp"

namespace odit {

namespace {

constexpr double kLogFloor = -690.7755278982137;  // log(1e-300)
constexpr double kLogSqrt2Pi = 0.9189385332046727;
constexpr std::size_t kLlrTableSize = 1024;

double log_normal(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

void DeviceMixture::validate() const {
  if (!(active_prob >= 0.0 && active_prob <= 1.0)) throw ValidationError("mixture active_prob must be in [0,1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("mixture sigma must be positive");
  if (!std::isfinite(active_mean) || !std::isfinite(idle_mean)) throw ValidationError("mixture means must be finite");
  if (!(attack_scale >= 0.0) || !std::isfinite(attack_scale)) throw ValidationError("attack scale must be >= 0");
}

std::size_t MixtureParams::total_devices() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.size();
  return n;
}

DeviceMixture mixture_from_profile(const DeviceProfile& profile, double rate_increase) {
  profile.validate();
  DeviceMixture m;
  m.active_prob = profile.always_on() ? 1.0 : profile.active_prob;
  m.active_mean = profile.active_mean;
  m.idle_mean = profile.idle_mean;
  m.sigma = profile.sigma;
  m.attack_scale = 1.0 + rate_increase;
  return m;
}

MixtureParams clairvoyant_params(const Topology& topology, double rate_increase) {
  topology.validate();
  MixtureParams params;
  for (const auto& node : topology.nodes) {
    auto& out = params.nodes.emplace_back();
    for (const auto& p : node) out.push_back(mixture_from_profile(p, rate_increase));
  }
  return params;
}

double log_mixture_density(double x, double p, double mean_a, double mean_b, double sigma) {
  double v = -std::numeric_limits<double>::infinity();
  if (p > 0.0) v = log_add(v, std::log(p) + log_normal(x, mean_a, sigma));
  if (p < 1.0) v = log_add(v, std::log1p(-p) + log_normal(x, mean_b, sigma));
  return std::max(v, kLogFloor);
}

double mixture_llr(double count, const DeviceMixture& m) {
  const double f1 = log_mixture_density(count, m.active_prob, m.active_mean * m.attack_scale,
                                        m.idle_mean * m.attack_scale, m.sigma);
  const double f0 = log_mixture_density(count, m.active_prob, m.active_mean, m.idle_mean, m.sigma);
  return f1 - f0;
}

CooperativeCusum::CooperativeCusum(MixtureParams params, double h) : params_(std::move(params)), h_(h) {
  if (params_.nodes.empty()) throw ValidationError("cooperative CUSUM needs at least one node");
  if (!(h > 0.0)) throw ValidationError("threshold h must be positive");
  for (const auto& node : params_.nodes) {
    if (node.empty()) throw ValidationError("cooperative CUSUM needs at least one device per node");
    auto& tables = llr_table_.emplace_back();
    for (const auto& dev : node) {
      dev.validate();
      auto& table = tables.emplace_back(kLlrTableSize);
      for (std::size_t c = 0; c < kLlrTableSize; ++c) table[c] = mixture_llr(static_cast<double>(c), dev);
    }
    stats_.emplace_back(node.size(), 0.0);
  }
}

bool CooperativeCusum::step(std::span<const std::span<const std::int64_t>> per_node) {
  if (per_node.size() != params_.nodes.size()) throw ValidationError("expected one count row per node");
  ++t_;
  std::vector<double> all;
  all.reserve(params_.total_devices());
  for (std::size_t n = 0; n < per_node.size(); ++n) {
    if (per_node[n].size() != stats_[n].size()) throw ValidationError("device count mismatch at node " + std::to_string(n));
    for (std::size_t j = 0; j < per_node[n].size(); ++j) {
      const auto c = per_node[n][j];
      const double llr = c >= 0 && static_cast<std::size_t>(c) < kLlrTableSize
                             ? llr_table_[n][j][static_cast<std::size_t>(c)]
                             : mixture_llr(static_cast<double>(c), params_.nodes[n][j]);
      stats_[n][j] = cusum_step(stats_[n][j], llr);
      all.push_back(stats_[n][j]);
    }
  }
  std::sort(all.begin(), all.end());
  global_s_ = std::accumulate(all.begin(), all.end(), 0.0);
  const bool alarmed = check_alarm(global_s_, h_);
  if (alarmed && !alarm_time_) alarm_time_ = t_;
  return alarmed;
}

void CooperativeCusum::reset() {
  for (auto& node : stats_) std::fill(node.begin(), node.end(), 0.0);
  global_s_ = 0.0;
  t_ = 0;
  alarm_time_.reset();
}

namespace {

struct WeightedValues {
  std::vector<double> value;
  std::vector<double> weight;
  double total = 0.0;
};

WeightedValues tally(std::span<const std::int64_t> samples) {
  std::map<std::int64_t, double> counts;
  for (auto v : samples) counts[v] += 1.0;
  WeightedValues out;
  for (const auto& [v, w] : counts) {
    out.value.push_back(static_cast<double>(v));
    out.weight.push_back(w);
    out.total += w;
  }
  return out;
}

double single_loglik(const WeightedValues& data, double mean, double sigma) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.value.size(); ++i) ll += data.weight[i] * log_normal(data.value[i], mean, sigma);
  return ll;
}

EmFit single_fit(const WeightedValues& data, const EmOptions& opts) {
  double mean = 0.0;
  for (std::size_t i = 0; i < data.value.size(); ++i) mean += data.weight[i] * data.value[i];
  mean /= data.total;
  double var = 0.0;
  for (std::size_t i = 0; i < data.value.size(); ++i) var += data.weight[i] * (data.value[i] - mean) * (data.value[i] - mean);
  EmFit fit;
  fit.weight_high = 1.0;
  fit.mean_high = fit.mean_low = mean;
  fit.sigma = std::max(std::sqrt(var / data.total), opts.min_sigma);
  fit.collapsed = true;
  return fit;
}

struct EmRun {
  EmFit fit;
  double loglik = 0.0;
  bool converged = false;
};

EmRun run_em(const WeightedValues& data, EmFit start, const EmOptions& opts) {
  EmRun run;
  run.fit = start;
  auto& f = run.fit;
  double prev = -std::numeric_limits<double>::infinity();
  std::vector<double> resp(data.value.size());
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < data.value.size(); ++i) {
      const double a = std::log(f.weight_high) + log_normal(data.value[i], f.mean_high, f.sigma);
      const double b = std::log1p(-f.weight_high) + log_normal(data.value[i], f.mean_low, f.sigma);
      const double lse = log_add(a, b);
      resp[i] = std::exp(a - lse);
      ll += data.weight[i] * lse;
    }
    double wh = 0.0, sh = 0.0, sl = 0.0;
    for (std::size_t i = 0; i < data.value.size(); ++i) {
      wh += data.weight[i] * resp[i];
      sh += data.weight[i] * resp[i] * data.value[i];
      sl += data.weight[i] * (1.0 - resp[i]) * data.value[i];
    }
    const double wl = data.total - wh;
    f.iterations = it;
    if (wh <= 0.0 || wl <= 0.0) {
      run.loglik = ll;
      run.converged = false;
      return run;
    }
    f.weight_high = std::clamp(wh / data.total, 1e-12, 1.0 - 1e-12);
    f.mean_high = sh / wh;
    f.mean_low = sl / wl;
    double ss = 0.0;
    for (std::size_t i = 0; i < data.value.size(); ++i) {
      const double dh = data.value[i] - f.mean_high;
      const double dl = data.value[i] - f.mean_low;
      ss += data.weight[i] * (resp[i] * dh * dh + (1.0 - resp[i]) * dl * dl);
    }
    f.sigma = std::max(std::sqrt(ss / data.total), opts.min_sigma);
    run.loglik = ll;
    if (std::abs(ll - prev) <= opts.tolerance * data.total) {
      run.converged = true;
      break;
    }
    prev = ll;
  }
  if (f.mean_low > f.mean_high) {
    std::swap(f.mean_low, f.mean_high);
    f.weight_high = 1.0 - f.weight_high;
  }
  return run;
}

std::optional<EmFit> kmeans_start(const WeightedValues& data, const EmOptions& opts) {
  double lo = data.value.front(), hi = data.value.back();
  if (hi - lo < 1e-12) return std::nullopt;
  double c_lo = lo, c_hi = hi;
  for (int it = 0; it < 100; ++it) {
    double s_lo = 0.0, w_lo = 0.0, s_hi = 0.0, w_hi = 0.0;
    for (std::size_t i = 0; i < data.value.size(); ++i) {
      if (std::abs(data.value[i] - c_lo) <= std::abs(data.value[i] - c_hi)) {
        s_lo += data.weight[i] * data.value[i];
        w_lo += data.weight[i];
      } else {
        s_hi += data.weight[i] * data.value[i];
        w_hi += data.weight[i];
      }
    }
    if (w_lo == 0.0 || w_hi == 0.0) return std::nullopt;
    const double n_lo = s_lo / w_lo, n_hi = s_hi / w_hi;
    const bool stable = n_lo == c_lo && n_hi == c_hi;
    c_lo = n_lo;
    c_hi = n_hi;
    if (stable) break;
  }
  EmFit f;
  f.mean_low = c_lo;
  f.mean_high = c_hi;
  double w_hi = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < data.value.size(); ++i) {
    const bool high = std::abs(data.value[i] - c_lo) > std::abs(data.value[i] - c_hi);
    const double c = high ? c_hi : c_lo;
    if (high) w_hi += data.weight[i];
    ss += data.weight[i] * (data.value[i] - c) * (data.value[i] - c);
  }
  f.weight_high = std::clamp(w_hi / data.total, 1e-6, 1.0 - 1e-6);
  f.sigma = std::max(std::sqrt(ss / data.total), opts.min_sigma);
  return f;
}

EmFit choose(const WeightedValues& data, const EmRun& two, const EmOptions& opts, const std::string& label) {
  const auto one = single_fit(data, opts);
  const double bic1 = -2.0 * single_loglik(data, one.mean_high, one.sigma) + 2.0 * std::log(data.total);
  const double bic2 = -2.0 * two.loglik + 4.0 * std::log(data.total);
  if (bic1 <= bic2 || two.fit.weight_high < 1e-3 || two.fit.weight_high > 1.0 - 1e-3) return one;
  if (!two.converged) {
    std::ostringstream msg;
    msg << "EM did not converge after " << opts.max_iterations << " iterations" << label
        << ": weight_high=" << two.fit.weight_high << " mean_high=" << two.fit.mean_high
        << " mean_low=" << two.fit.mean_low << " sigma=" << two.fit.sigma;
    throw ComputationError(msg.str());
  }
  return two.fit;
}

EmFit fit_tally(const WeightedValues& data, const EmOptions& opts, const std::string& label) {
  const auto start = kmeans_start(data, opts);
  if (!start) return single_fit(data, opts);
  return choose(data, run_em(data, *start, opts), opts, label);
}

}  // namespace

EmFit fit_mixture(std::span<const std::int64_t> samples, const EmOptions& opts) {
  if (samples.empty()) throw ValidationError("mixture fit needs samples");
  return fit_tally(tally(samples), opts, "");
}

MixtureParams fit_gcusum(const std::vector<RawTrace>& nominal, const std::vector<RawTrace>& attack,
                         const EmOptions& opts) {
  if (nominal.empty() || nominal.size() != attack.size()) throw ValidationError("need matching nominal and attack traces");
  MixtureParams params;
  for (std::size_t n = 0; n < nominal.size(); ++n) {
    if (nominal[n].empty() || attack[n].empty()) throw ValidationError("G-CUSUM needs nonempty nominal and attack traces");
    if (nominal[n].devices() != attack[n].devices()) throw ValidationError("nominal and attack traces differ in devices");
    auto& out = params.nodes.emplace_back();
    for (std::size_t j = 0; j < nominal[n].devices(); ++j) {
      const std::string label = " (node " + std::to_string(n) + ", device " + std::to_string(j) + ")";
      std::vector<std::int64_t> col(nominal[n].steps()), acol(attack[n].steps());
      for (std::size_t r = 0; r < col.size(); ++r) col[r] = nominal[n].at(r, j);
      for (std::size_t r = 0; r < acol.size(); ++r) acol[r] = attack[n].at(r, j);
      const auto nom = fit_tally(tally(col), opts, label);
      const auto att_data = tally(acol);
      double nom_mean = nom.weight_high * nom.mean_high + (1.0 - nom.weight_high) * nom.mean_low;
      double att_mean;
      if (nom.collapsed) {
        att_mean = single_fit(att_data, opts).mean_high;
      } else {
        const auto att = run_em(att_data, nom, opts).fit;
        att_mean = nom.weight_high * att.mean_high + (1.0 - nom.weight_high) * att.mean_low;
      }
      DeviceMixture m;
      m.active_prob = nom.weight_high;
      m.active_mean = nom.mean_high;
      m.idle_mean = nom.mean_low;
      m.sigma = nom.sigma;
      m.attack_scale = nom_mean > 0.0 ? std::max(att_mean / nom_mean, 0.0) : 1.0;
      out.push_back(m);
    }
  }
  return params;
}

std::vector<double> percentile_thresholds(const RawTrace& nominal, double q) {
  if (nominal.empty()) throw ValidationError("thresholds need a nonempty nominal trace");
  if (!(q > 0.0 && q <= 1.0)) throw ValidationError("quantile must be in (0,1]");
  std::vector<double> out;
  for (std::size_t j = 0; j < nominal.devices(); ++j) {
    std::vector<std::int64_t> col(nominal.steps());
    for (std::size_t r = 0; r < col.size(); ++r) col[r] = nominal.at(r, j);
    std::sort(col.begin(), col.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(col.size())));
    out.push_back(std::max(static_cast<double>(col[std::clamp<std::size_t>(rank, 1, col.size()) - 1]), 0.5));
  }
  return out;
}

FilterDetector::FilterDetector(std::vector<std::vector<double>> thresholds) : thresholds_(std::move(thresholds)) {
  if (thresholds_.empty()) throw ValidationError("filter detector needs at least one node");
  for (const auto& node : thresholds_) {
    for (double th : node) {
      if (!(th > 0.0)) throw ValidationError("filter thresholds must be > 0");
    }
    exceeded_.emplace_back(node.size(), false);
  }
}

bool FilterDetector::step(std::span<const std::span<const std::int64_t>> per_node) {
  if (per_node.size() != thresholds_.size()) throw ValidationError("expected one count row per node");
  ++t_;
  bool any = false;
  for (std::size_t n = 0; n < per_node.size(); ++n) {
    if (per_node[n].size() != thresholds_[n].size()) throw ValidationError("device count mismatch at node " + std::to_string(n));
    for (std::size_t j = 0; j < per_node[n].size(); ++j) {
      if (static_cast<double>(per_node[n][j]) > thresholds_[n][j]) {
        any = true;
        if (!exceeded_[n][j]) {
          exceeded_[n][j] = true;
          flagged_.push_back({n, j});
        }
      }
    }
  }
  if (any && !alarm_time_) alarm_time_ = t_;
  return any;
}

void FilterDetector::reset() {
  for (auto& node : exceeded_) std::fill(node.begin(), node.end(), false);
  flagged_.clear();
  t_ = 0;
  alarm_time_.reset();
}

std::vector<double> filter_scores(const RawTrace& trace, std::span<const double> thresholds, std::size_t first,
                                  std::size_t last) {
  if (thresholds.size() != trace.devices()) throw ValidationError("one threshold per device expected");
  if (first >= last || last > trace.steps()) throw ValidationError("invalid scoring range");
  std::vector<double> out(trace.devices(), 0.0);
  for (std::size_t j = 0; j < trace.devices(); ++j) {
    std::int64_t peak = 0;
    for (std::size_t r = first; r < last; ++r) peak = std::max(peak, trace.at(r, j));
    out[j] = static_cast<double>(peak) / thresholds[j];
  }
  return out;
}

void RenyiConfig::validate() const {
  if (window_len < 2) throw ValidationError("Renyi window must be >= 2");
  if (!(order > 0.0) || order == 1.0 || !std::isfinite(order)) throw ValidationError("Renyi order must be > 0 and != 1");
  if (bins < 2) throw ValidationError("Renyi histogram needs >= 2 bins");
  if (!(smoothing > 0.0)) throw ValidationError("Renyi smoothing must be > 0");
  if (hi != 0.0 && !(hi > lo)) throw ValidationError("Renyi bin range must have hi > lo");
}

double renyi_divergence(std::span<const double> p, std::span<const double> q, double order) {
  if (p.size() != q.size() || p.empty()) throw ValidationError("distributions must share nonempty support");
  if (!(order > 0.0) || order == 1.0) throw ValidationError("Renyi order must be > 0 and != 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) acc += std::pow(p[i], order) * std::pow(q[i], 1.0 - order);
  }
  return std::max(std::log(acc) / (order - 1.0), 0.0);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ValidationError("distributions must share nonempty support");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

Histogram::Histogram(std::size_t bins, double lo, double hi) : bins_(bins), lo_(lo), hi_(hi) {
  if (bins < 2 || !(hi > lo)) throw ValidationError("histogram needs >= 2 bins and hi > lo");
}

std::size_t Histogram::bin_of(double v) const {
  const double pos = (v - lo_) / (hi_ - lo_) * static_cast<double>(bins_);
  if (!(pos > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(pos), bins_ - 1);
}

namespace {

double aggregate_row(std::span<const std::int64_t> row) {
  std::int64_t total = 0;
  for (auto c : row) total += c;
  return static_cast<double>(total);
}

}  // namespace

RenyiModel train_renyi(const std::vector<RawTrace>& nominal, RenyiConfig cfg) {
  cfg.validate();
  if (nominal.empty()) throw ValidationError("Renyi training needs at least one node");
  RenyiModel model;
  model.config = cfg;
  for (const auto& trace : nominal) {
    if (trace.empty()) throw ValidationError("Renyi training trace is empty");
    std::vector<double> agg(trace.steps());
    for (std::size_t r = 0; r < agg.size(); ++r) agg[r] = aggregate_row(trace.row(r));
    const double peak = *std::max_element(agg.begin(), agg.end());
    const double hi = cfg.hi != 0.0 ? cfg.hi : std::max(1.5 * peak, cfg.lo + 1.0);
    Histogram hist(cfg.bins, cfg.lo, hi);
    std::vector<double> q(cfg.bins, cfg.smoothing);
    for (double v : agg) q[hist.bin_of(v)] += 1.0;
    const double norm = static_cast<double>(agg.size()) + cfg.smoothing * static_cast<double>(cfg.bins);
    for (double& v : q) v /= norm;
    model.histograms.push_back(hist);
    model.reference.push_back(std::move(q));
  }
  return model;
}

RenyiDetector::RenyiDetector(std::shared_ptr<const RenyiModel> model, double threshold)
    : model_(std::move(model)), threshold_(threshold) {
  if (!model_) throw ValidationError("Renyi detector needs a model");
  if (!(threshold > 0.0)) throw ValidationError("threshold must be positive");
  reset();
}

bool RenyiDetector::step(std::span<const std::span<const std::int64_t>> per_node) {
  const auto& cfg = model_->config;
  if (per_node.size() != model_->reference.size()) throw ValidationError("expected one count row per node");
  ++t_;
  bool full = true;
  for (std::size_t n = 0; n < per_node.size(); ++n) {
    const auto bin = model_->histograms[n].bin_of(aggregate_row(per_node[n]));
    windows_[n].push_back(bin);
    counts_[n][bin] += 1.0;
    if (windows_[n].size() > cfg.window_len) {
      counts_[n][windows_[n].front()] -= 1.0;
      windows_[n].pop_front();
    }
    full = full && windows_[n].size() == cfg.window_len;
  }
  statistic_ = 0.0;
  if (!full) return false;
  const double norm = static_cast<double>(cfg.window_len) + cfg.smoothing * static_cast<double>(cfg.bins);
  std::vector<double> p(cfg.bins);
  std::vector<double> per(per_node.size());
  for (std::size_t n = 0; n < per_node.size(); ++n) {
    for (std::size_t b = 0; b < cfg.bins; ++b) p[b] = (counts_[n][b] + cfg.smoothing) / norm;
    per[n] = renyi_divergence(p, model_->reference[n], cfg.order);
  }
  std::sort(per.begin(), per.end());
  statistic_ = std::accumulate(per.begin(), per.end(), 0.0);
  const bool alarmed = statistic_ >= threshold_;
  if (alarmed && !alarm_time_) alarm_time_ = t_;
  return alarmed;
}

void RenyiDetector::reset() {
  windows_.assign(model_->reference.size(), {});
  counts_.assign(model_->reference.size(), std::vector<double>(model_->config.bins, 0.0));
  statistic_ = 0.0;
  t_ = 0;
  alarm_time_.reset();
}

}  // namespace odit
