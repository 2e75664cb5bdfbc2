#include "odit/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "odit/cooperative.hpp"
#include "odit/error.hpp"
#include "odit/parallel.hpp"
#include "odit/random.hpp"

namespace odit {

namespace {

std::size_t resolve_threads(std::size_t threads) { return threads == 0 ? default_threads() : threads; }

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrialOutcome classify_trial(std::optional<TimeIndex> alarm, std::optional<TimeIndex> onset, std::uint64_t seed) {
  TrialOutcome out;
  out.alarm_time = alarm;
  out.attack_onset = onset;
  out.seed = seed;
  if (!alarm) return out;
  if (!onset || *alarm < *onset) {
    out.false_alarm = true;
  } else {
    out.delay = *alarm - *onset;
  }
  return out;
}

TrialOutcome run_trial(const OditModel& model, double h, std::span<const Observation> stream,
                       std::optional<TimeIndex> onset, std::uint64_t seed) {
  if (!(h > 0.0)) throw ValidationError("threshold h must be positive");
  DetectorState state(0);
  std::optional<TimeIndex> alarm;
  for (const auto& obs : stream) {
    state.update(evidence(model, obs.values));
    if (check_alarm(state, h)) {
      alarm = state.t();
      break;
    }
  }
  return classify_trial(alarm, onset, seed);
}

std::optional<TimeIndex> first_passage(std::span<const double> path, double h) {
  for (std::size_t r = 0; r < path.size(); ++r) {
    if (check_alarm(path[r], h)) return r + 1;
  }
  return std::nullopt;
}

double path_max(std::span<const double> path) {
  double m = 0.0;
  for (double v : path) m = std::max(m, v);
  return m;
}

CurvePoint evaluate_threshold(const DetectorRuns& runs, double h) {
  if (runs.null_maxima.empty()) throw ValidationError("curve needs attack-free runs");
  CurvePoint pt;
  pt.h = h;
  std::size_t alarms = 0;
  for (double m : runs.null_maxima) alarms += check_alarm(m, h) ? 1 : 0;
  pt.fpr = static_cast<double>(alarms) / static_cast<double>(runs.null_maxima.size());
  std::vector<double> delays;
  double censored = 0.0;
  std::size_t scored = 0;
  for (const auto& path : runs.attacked) {
    if (path.size() < runs.onset) throw ValidationError("attacked run ends before the onset");
    const auto post = static_cast<double>(path.size() - runs.onset + 1);
    const auto alarm = first_passage(path, h);
    if (alarm && *alarm < runs.onset) {
      ++pt.pre_onset_alarms;
      continue;
    }
    ++scored;
    if (alarm) {
      const auto d = static_cast<double>(*alarm - runs.onset);
      delays.push_back(d);
      censored += d;
      ++pt.detections;
    } else {
      censored += post;
      ++pt.misses;
    }
  }
  if (!delays.empty()) {
    const double m = mean_of(delays);
    pt.add = m;
    if (delays.size() > 1) {
      double ss = 0.0;
      for (double d : delays) ss += (d - m) * (d - m);
      pt.ci = 1.96 * std::sqrt(ss / static_cast<double>(delays.size() - 1)) /
              std::sqrt(static_cast<double>(delays.size()));
    }
  }
  pt.censored_add = scored > 0 ? censored / static_cast<double>(scored) : 0.0;
  return pt;
}

double matched_threshold(std::span<const double> null_maxima, double target_fpr) {
  if (null_maxima.empty()) throw ValidationError("threshold matching needs attack-free runs");
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw ValidationError("target FPR must lie in [0,1]");
  std::vector<double> desc(null_maxima.begin(), null_maxima.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());
  const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(desc.size()) + 1e-9));
  if (allowed >= desc.size()) return std::numeric_limits<double>::min();
  // Every peak strictly above desc[allowed] may alarm; there are at most `allowed` of them.
  return std::max(std::nextafter(desc[allowed], std::numeric_limits<double>::infinity()),
                  std::numeric_limits<double>::min());
}

std::vector<double> thresholds_for_fprs(std::span<const double> null_maxima, std::span<const double> fprs) {
  std::vector<double> out;
  for (double f : fprs) out.push_back(matched_threshold(null_maxima, f));
  return out;
}

Curve add_vs_fpr(const DetectorRuns& runs, std::span<const double> h_grid, std::string detector, std::string scenario) {
  if (h_grid.empty()) throw ValidationError("threshold grid is empty");
  Curve c;
  c.detector = std::move(detector);
  c.scenario = std::move(scenario);
  c.trials = runs.attacked.size();
  for (double h : h_grid) c.points.push_back(evaluate_threshold(runs, h));
  std::stable_sort(c.points.begin(), c.points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.fpr < b.fpr || (a.fpr == b.fpr && a.h > b.h);
  });
  return c;
}

DetectorRuns collect_runs(const PathScenario& scenario, std::size_t trials, std::uint64_t seed, std::size_t threads) {
  if (!scenario.null_run || !scenario.attacked_run) throw ValidationError("scenario needs both run callbacks");
  DetectorRuns runs;
  runs.onset = scenario.onset;
  runs.null_maxima.resize(trials);
  runs.attacked.resize(trials);
  parallel_for(
      trials,
      [&](std::size_t i) {
        runs.null_maxima[i] = path_max(scenario.null_run(derive_seed(seed, {1, i})));
        runs.attacked[i] = scenario.attacked_run(derive_seed(seed, {2, i}));
      },
      resolve_threads(threads));
  return runs;
}

Curve add_vs_fpr(const PathScenario& scenario, std::span<const double> h_grid, std::size_t trials, std::uint64_t seed,
                 std::string detector, std::size_t threads) {
  if (h_grid.empty()) throw ValidationError("threshold grid is empty");
  if (trials < 30) throw ValidationError("curves need at least 30 trials");
  return add_vs_fpr(collect_runs(scenario, trials, seed, threads), h_grid, std::move(detector), scenario.id);
}

RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("one label per score expected");
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const auto negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("ROC needs both positive and negative devices");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocResult roc;
  roc.points.push_back({0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    roc.points.push_back({fp / negatives, tp / positives});
    i = j;
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  return roc;
}

RocResult mitigation_roc(const MitigationReport& report, const std::vector<DeviceRef>& ground_truth, double theta1) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& g : ground_truth) {
    if (g.node >= report.device_scores.size() || g.device >= report.device_scores[g.node].size()) {
      throw ValidationError("ground-truth device missing from the mitigation report");
    }
  }
  for (std::size_t n = 0; n < report.device_scores.size(); ++n) {
    const bool node_on = report.node_scores.at(n) >= theta1;
    for (std::size_t j = 0; j < report.device_scores[n].size(); ++j) {
      scores.push_back(node_on ? report.device_scores[n][j] : -std::numeric_limits<double>::infinity());
      labels.push_back(std::find(ground_truth.begin(), ground_truth.end(), DeviceRef{n, j}) != ground_truth.end());
    }
  }
  return roc_curve(scores, labels);
}

double r_squared(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("R^2 needs at least two paired points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("R^2 needs distinct x values");
  if (syy == 0.0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

ScalingTable scaling_bench(std::span<const std::size_t> m2s, std::span<const std::size_t> ds, std::size_t reps,
                           std::uint64_t seed, std::size_t k) {
  if (m2s.empty() || ds.empty() || reps == 0) throw ValidationError("scaling grid and repetitions must be nonempty");
  ScalingTable table;
  using clock = std::chrono::steady_clock;
  struct Cell {
    OditModel model;
    std::vector<std::vector<double>> queries;
    std::vector<double> per_eval;
  };
  std::vector<Cell> cells;
  for (std::size_t d : ds) {
    for (std::size_t m2 : m2s) {
      if (m2 < 1 || d < 1) throw ValidationError("grid cells need m2 >= 1 and d >= 1");
      Engine eng(derive_seed(seed, {m2, d}));
      Cell c;
      c.model.d = d;
      c.model.config.k = std::min(k, m2);
      c.model.baseline_stat = 1.0;
      c.model.reference_set = PointSet(d);
      std::vector<double> p(d);
      for (std::size_t i = 0; i < m2; ++i) {
        for (double& v : p) v = uniform01(eng);
        c.model.reference_set.push_back(p);
      }
      const std::size_t batch = std::max<std::size_t>(1, 20'000'000 / (m2 * d));
      c.queries.assign(batch, std::vector<double>(d));
      for (auto& q : c.queries) {
        for (double& v : q) v = uniform01(eng);
      }
      cells.push_back(std::move(c));
    }
  }
  // repetitions are interleaved across cells so slow periods hit every cell alike
  double sink = 0.0;
  for (std::size_t r = 0; r <= reps; ++r) {
    for (auto& c : cells) {
      const auto start = clock::now();
      for (const auto& q : c.queries) sink += evidence(c.model, q).d_t;
      const std::chrono::duration<double> dt = clock::now() - start;
      if (r > 0) c.per_eval.push_back(dt.count() / static_cast<double>(c.queries.size()));
    }
  }
  if (!std::isfinite(sink)) throw ComputationError("non-finite evidence in timing run");
  std::size_t idx = 0;
  for (std::size_t d : ds) {
    for (std::size_t m2 : m2s) table.cells.push_back({m2, d, median_of(cells[idx++].per_eval)});
  }
  const auto cell = [&](std::size_t mi, std::size_t di) { return table.cells[di * m2s.size() + mi].median_seconds; };
  table.m2_r2 = 1.0;
  table.d_r2 = 1.0;
  for (std::size_t di = 0; di < ds.size(); ++di) {
    std::vector<double> x, y;
    for (std::size_t mi = 0; mi < m2s.size(); ++mi) {
      x.push_back(static_cast<double>(m2s[mi]));
      y.push_back(cell(mi, di));
      if (mi > 0) table.m2_ratios.push_back(cell(mi, di) / cell(mi - 1, di));
    }
    if (m2s.size() >= 2) table.m2_r2 = std::min(table.m2_r2, r_squared(x, y));
  }
  for (std::size_t mi = 0; mi < m2s.size(); ++mi) {
    std::vector<double> x, y;
    for (std::size_t di = 0; di < ds.size(); ++di) {
      x.push_back(static_cast<double>(ds[di]));
      y.push_back(cell(mi, di));
      if (di > 0) table.d_ratios.push_back(cell(mi, di) / cell(mi, di - 1));
    }
    if (ds.size() >= 2) table.d_r2 = std::min(table.d_r2, r_squared(x, y));
  }
  return table;
}

std::vector<Observation> gaussian_points(std::size_t n, std::size_t d, double mean, double sd, Engine& eng) {
  std::vector<Observation> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].values.resize(d);
    out[i].time_index = i + 1;
    // Observations are nonnegative; the clamp is immaterial at the means used here.
    for (double& v : out[i].values) v = std::max(0.0, mean + sd * standard_normal(eng));
  }
  return out;
}

std::vector<Observation> gaussian_anomaly_stream(std::size_t len, std::size_t d, TimeIndex onset, Engine& eng) {
  std::vector<Observation> out;
  out.reserve(len);
  for (std::size_t r = 0; r < len; ++r) {
    const TimeIndex t = r + 1;
    Observation o;
    o.time_index = t;
    o.values.resize(d);
    for (double& v : o.values) v = t >= onset ? uniform01(eng) : std::max(0.0, 0.5 + 0.1 * standard_normal(eng));
    out.push_back(std::move(o));
  }
  return out;
}

ToyResult toy_experiment(const ToyConfig& cfg, std::uint64_t seed, std::size_t threads) {
  if (cfg.seeds == 0) throw ValidationError("experiment needs at least one seed");
  if (cfg.onset < 1 || cfg.onset > cfg.horizon) throw ValidationError("onset must lie within the horizon");
  ToyResult res;
  res.thresholds.resize(cfg.seeds);
  res.outcomes.resize(cfg.seeds);
  parallel_for(
      cfg.seeds,
      [&](std::size_t s) {
        Engine eng(derive_seed(seed, {0xf15, s}));
        const auto data = gaussian_points(cfg.m1 + cfg.m2, cfg.d, 0.5, 0.1, eng);
        DetectorConfig dc;
        dc.k = cfg.k;
        dc.alpha = cfg.alpha;
        dc.m1 = cfg.m1;
        dc.m2 = cfg.m2;
        dc.seed = derive_seed(seed, {0xf16, s});
        const auto model = train(data, dc);
        const NominalStreamSource source = [&](std::uint64_t trial_seed, std::size_t len) {
          Engine e(trial_seed);
          return gaussian_points(len, cfg.d, 0.5, 0.1, e);
        };
        const auto cal = calibrate_threshold(model, source, cfg.target_fpr, cfg.horizon, cfg.calibration_trials,
                                             derive_seed(seed, {0xf17, s}));
        const auto stream = gaussian_anomaly_stream(cfg.horizon, cfg.d, cfg.onset, eng);
        res.thresholds[s] = cal.h;
        res.outcomes[s] = run_trial(model, cal.h, stream, cfg.onset, s);
      },
      resolve_threads(threads));
  for (const auto& o : res.outcomes) {
    if (o.false_alarm) ++res.false_alarms;
    if (!o.alarm_time) ++res.misses;
    if (o.delay && *o.delay == 1) ++res.detected_at_onset_plus_one;
    res.penalized_delays.push_back(o.delay ? static_cast<double>(*o.delay) : static_cast<double>(cfg.horizon));
  }
  res.median_delay = median_of(res.penalized_delays);
  return res;
}

ConvergenceResult convergence_experiment(const ConvergenceConfig& cfg, std::uint64_t seed) {
  ConvergenceResult res;
  const double two_var = 2.0 * cfg.sd * cfg.sd;
  const auto sq_offset = [&](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += (v - cfg.mean) * (v - cfg.mean);
    return s;
  };
  for (std::size_t m2 : cfg.m2_values) {
    Engine eng(derive_seed(seed, {0xc0, m2}));
    const auto data = gaussian_points(cfg.m1 + m2, cfg.d, cfg.mean, cfg.sd, eng);
    DetectorConfig dc;
    dc.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m2)))));
    dc.alpha = cfg.alpha;
    dc.m1 = cfg.m1;
    dc.m2 = m2;
    dc.seed = derive_seed(seed, {0xc1, m2});
    const auto model = train(data, dc);
    // Limit of the baseline as M2 grows: the part-1 point at the same rank of true density.
    const auto split = split_training(data, dc.m1, dc.m2, dc.seed);
    std::vector<double> offsets;
    for (const auto& p : split.part1) offsets.push_back(sq_offset(p.values));
    std::sort(offsets.begin(), offsets.end());
    const double anchor_sq = offsets[percentile_rank(dc.m1, dc.alpha) - 1];
    const auto test = gaussian_points(cfg.test_points, cfg.d, cfg.mean, cfg.sd, eng);
    double total = 0.0;
    for (const auto& x : test) {
      const double llr = (sq_offset(x.values) - anchor_sq) / two_var;
      total += std::abs(evidence(model, x.values).d_t - llr);
    }
    res.m2_values.push_back(m2);
    res.k_values.push_back(dc.k);
    res.mean_abs_error.push_back(total / static_cast<double>(test.size()));
  }
  return res;
}

void StealthConfig::validate() const {
  if (nodes < 1 || devices_per_node < 1) throw ValidationError("stealth scenario needs nodes and devices");
  if (trials < 30) throw ValidationError("stealth scenario needs at least 30 trials");
  if (fpr_horizon < 1 || post_horizon < 1) throw ValidationError("horizons must be positive");
  if (train_steps < m1 + m2) throw ValidationError("training trace shorter than m1 + m2");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw ValidationError("target FPR must lie in (0,1)");
  if (!(filter_quantile > 0.0 && filter_quantile <= 1.0)) throw ValidationError("filter quantile must be in (0,1]");
  renyi.validate();
}

const DetectorSummary& StealthResult::detector(const std::string& id) const {
  for (const auto& d : detectors) {
    if (d.id == id) return d;
  }
  throw ValidationError("no detector '" + id + "' in the stealth result");
}

namespace {

const std::vector<std::string> kStealthDetectors = {"odit_coop", "odit_single", "cusum", "gcusum", "renyi", "filter"};

struct StealthModels {
  Topology topology;
  std::vector<std::shared_ptr<const OditModel>> odit;
  MixtureParams clairvoyant;
  MixtureParams gcusum;
  std::shared_ptr<const RenyiModel> renyi;
  std::vector<std::vector<double>> filter_thresholds;
};

using PerNodeRows = std::vector<std::span<const std::int64_t>>;

PerNodeRows rows_at(const TrafficTrace& trace, std::size_t r) {
  PerNodeRows rows;
  rows.reserve(trace.nodes.size());
  for (const auto& n : trace.nodes) rows.push_back(n.row(r));
  return rows;
}

// Paths of every comparison detector over one trace; ODIT state is left in `coop`.
std::vector<StatPath> stealth_paths(const StealthModels& m, const TrafficTrace& trace, CooperativeDetector& coop) {
  const auto steps = trace.steps();
  std::vector<StatPath> paths(kStealthDetectors.size(), StatPath(steps));
  CooperativeCusum cusum(m.clairvoyant, 1.0);
  CooperativeCusum gcusum(m.gcusum, 1.0);
  RenyiDetector renyi(m.renyi, 1.0);
  for (std::size_t r = 0; r < steps; ++r) {
    const auto rows = rows_at(trace, r);
    coop.step_counts(rows);
    double single = 0.0;
    for (std::size_t n = 0; n < coop.nodes(); ++n) single = std::max(single, coop.node_state(n).s());
    paths[0][r] = coop.global_s();
    paths[1][r] = single;
    cusum.step(rows);
    paths[2][r] = cusum.global_s();
    gcusum.step(rows);
    paths[3][r] = gcusum.global_s();
    renyi.step(rows);
    paths[4][r] = renyi.statistic();
    double ratio = 0.0;
    for (std::size_t n = 0; n < rows.size(); ++n) {
      for (std::size_t j = 0; j < rows[n].size(); ++j) {
        ratio = std::max(ratio, static_cast<double>(rows[n][j]) / m.filter_thresholds[n][j]);
      }
    }
    paths[5][r] = ratio;
  }
  return paths;
}

struct AttackedTrial {
  std::vector<StatPath> paths;
  std::optional<double> odit_auc;
  std::optional<double> filter_auc;
  double odit_auc_post_window = 0.0;
};

}  // namespace

StealthResult stealth_experiment(const StealthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto threads = resolve_threads(cfg.threads);

  StealthModels m;
  m.topology = Topology::cycled(cfg.nodes, cfg.devices_per_node);
  const auto training = generate_network(m.topology, cfg.train_steps, derive_seed(seed, {10}), threads);
  m.odit.resize(cfg.nodes);
  parallel_for(
      cfg.nodes,
      [&](std::size_t n) {
        DetectorConfig dc;
        dc.k = cfg.k;
        dc.alpha = cfg.alpha;
        dc.m1 = cfg.m1;
        dc.m2 = cfg.m2;
        dc.seed = derive_seed(seed, {11, n});
        m.odit[n] = std::make_shared<const OditModel>(train_from_raw(training.nodes[n], dc));
      },
      threads);
  m.clairvoyant = clairvoyant_params(m.topology, cfg.rate_increase);
  {
    auto attack_train = generate_network(m.topology, cfg.attack_train_steps, derive_seed(seed, {12}), threads);
    AttackSpec spec;
    spec.onset = 1;
    spec.fraction_compromised = cfg.fraction;
    spec.rate_increase = cfg.rate_increase;
    spec.selection_seed = derive_seed(seed, {13});
    attack_train = inject_attack(attack_train, spec);
    m.gcusum = fit_gcusum(training.nodes, attack_train.nodes);
  }
  m.renyi = std::make_shared<const RenyiModel>(train_renyi(training.nodes, cfg.renyi));
  for (const auto& node : training.nodes) m.filter_thresholds.push_back(percentile_thresholds(node, cfg.filter_quantile));

  const auto det_count = kStealthDetectors.size();
  std::vector<std::vector<double>> null_max(det_count, std::vector<double>(cfg.trials));
  parallel_for(
      cfg.trials,
      [&](std::size_t i) {
        const auto trace = generate_network(m.topology, cfg.fpr_horizon, derive_seed(seed, {20, i}), 1);
        CooperativeDetector coop(m.odit, 1.0, 0);
        const auto paths = stealth_paths(m, trace, coop);
        for (std::size_t d = 0; d < det_count; ++d) null_max[d][i] = path_max(paths[d]);
      },
      threads);

  std::vector<double> h_target(det_count);
  for (std::size_t d = 0; d < det_count; ++d) h_target[d] = matched_threshold(null_max[d], cfg.target_fpr);

  const TimeIndex onset = cfg.warmup + 1;
  const std::size_t steps = cfg.warmup + cfg.post_horizon;
  std::vector<AttackedTrial> attacked(cfg.trials);
  parallel_for(
      cfg.trials,
      [&](std::size_t i) {
        auto trace = generate_network(m.topology, steps, derive_seed(seed, {30, i}), 1);
        AttackSpec spec;
        spec.onset = onset;
        spec.fraction_compromised = cfg.fraction;
        spec.rate_increase = cfg.rate_increase;
        spec.selection_seed = derive_seed(seed, {31, i});
        trace = inject_attack(trace, spec);
        CooperativeDetector coop(m.odit, h_target[0], steps);
        auto& out = attacked[i];
        out.paths = stealth_paths(m, trace, coop);

        std::vector<double> post_node(cfg.nodes);
        std::vector<std::vector<double>> post_dev(cfg.nodes);
        for (std::size_t n = 0; n < cfg.nodes; ++n) {
          post_node[n] = node_score(coop.node_state(n).history(), onset, steps);
          post_dev[n] = device_score(coop.node_state(n).history(), onset, steps);
        }
        out.odit_auc_post_window =
            mitigation_roc(identify(post_node, post_dev, onset, steps, MitigationConfig{}), trace.attacked).auc;

        const auto alarm = first_passage(out.paths[0], h_target[0]);
        if (!alarm || *alarm < onset) return;
        const auto report = mitigate(coop, *alarm, MitigationConfig{});
        out.odit_auc = mitigation_roc(report, trace.attacked).auc;
        std::vector<double> scores;
        std::vector<bool> labels;
        for (std::size_t n = 0; n < cfg.nodes; ++n) {
          const auto s = filter_scores(trace.nodes[n], m.filter_thresholds[n], report.onset - 1, *alarm);
          for (std::size_t j = 0; j < s.size(); ++j) {
            scores.push_back(s[j]);
            labels.push_back(std::binary_search(trace.attacked.begin(), trace.attacked.end(), DeviceRef{n, j}));
          }
        }
        out.filter_auc = roc_curve(scores, labels).auc;
      },
      threads);

  StealthResult res;
  for (std::size_t d = 0; d < det_count; ++d) {
    DetectorRuns runs;
    runs.onset = onset;
    runs.null_maxima = null_max[d];
    for (const auto& t : attacked) runs.attacked.push_back(t.paths[d]);
    DetectorSummary s;
    s.id = kStealthDetectors[d];
    s.h = h_target[d];
    s.at_target = evaluate_threshold(runs, s.h);
    const auto grid = thresholds_for_fprs(runs.null_maxima, cfg.curve_fprs);
    s.curve = add_vs_fpr(runs, grid, s.id, "stealth");
    res.detectors.push_back(std::move(s));
  }
  for (const auto& t : attacked) {
    if (t.odit_auc) res.odit_auc.push_back(*t.odit_auc);
    if (t.filter_auc) res.filter_auc.push_back(*t.filter_auc);
    res.odit_auc_post_window.push_back(t.odit_auc_post_window);
  }
  res.mean_odit_auc = mean_of(res.odit_auc);
  res.mean_filter_auc = mean_of(res.filter_auc);
  res.mean_odit_auc_post_window = mean_of(res.odit_auc_post_window);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

DynamicResult dynamic_experiment(const DynamicConfig& cfg, std::uint64_t seed) {
  if (cfg.kinds.empty() || cfg.max_per_kind < 1) throw ValidationError("dynamic scenario needs kinds and devices");
  if (cfg.trials == 0 || cfg.onset < 1) throw ValidationError("dynamic scenario needs trials and onset >= 1");
  ApplicationProfile profile;
  Topology topo;
  topo.nodes.emplace_back();
  for (std::size_t a = 0; a < cfg.kinds.size(); ++a) {
    profile.applications.push_back(cfg.kinds[a]);
    profile.max_devices.push_back(cfg.max_per_kind);
    for (std::size_t j = 0; j < cfg.max_per_kind; ++j) {
      profile.dimension_app.push_back(a);
      topo.nodes[0].push_back(standard_profile(cfg.kinds[a]));
    }
  }
  profile.validate();

  const auto training = generate_network(topo, cfg.train_steps, derive_seed(seed, {40}), 1);
  DetectorConfig dc;
  dc.k = cfg.k;
  dc.alpha = cfg.alpha;
  dc.m1 = cfg.m1;
  dc.m2 = cfg.m2;
  dc.seed = derive_seed(seed, {41});
  const auto map = build_normalization(training.nodes[0]);
  const auto data = normalize(training.nodes[0], map);
  auto model = train(data, dc);
  model.normalization = map;

  // Exact baselines for every combination with at least one device per application.
  std::vector<std::vector<std::size_t>> combos;
  std::vector<std::size_t> cur(cfg.kinds.size(), 1);
  for (;;) {
    combos.push_back(cur);
    std::size_t a = 0;
    while (a < cur.size() && cur[a] == cfg.max_per_kind) cur[a++] = 1;
    if (a == cur.size()) break;
    ++cur[a];
  }
  std::vector<double> exact(combos.size());
  for (std::size_t c = 0; c < combos.size(); ++c) {
    exact[c] = train_masked_baseline(data, dc, ActiveMask::from_counts(combos[c], profile));
  }
  const auto combo_index = [&](const std::vector<std::size_t>& counts) {
    std::size_t idx = 0;
    for (std::size_t a = counts.size(); a-- > 0;) idx = idx * cfg.max_per_kind + (counts[a] - 1);
    return idx;
  };

  Engine eng(derive_seed(seed, {42}));
  std::vector<std::size_t> order(combos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < order.size(); ++i) std::swap(order[i], order[i + uniform_below(eng, order.size() - i)]);
  const auto n_fit = std::max<std::size_t>(cfg.kinds.size() + 2,
                                           static_cast<std::size_t>(std::ceil(cfg.regression_fraction *
                                                                              static_cast<double>(combos.size()))));
  std::vector<BaselineSample> samples;
  for (std::size_t i = 0; i < std::min(n_fit, order.size()); ++i) {
    const auto& c = combos[order[i]];
    samples.push_back({std::vector<double>(c.begin(), c.end()), exact[order[i]]});
  }
  DynamicResult res;
  res.regressor = fit_baseline_regressor(std::move(samples));
  std::vector<double> rel;
  for (std::size_t i = n_fit; i < order.size(); ++i) {
    const auto& c = combos[order[i]];
    const std::vector<double> q(c.begin(), c.end());
    rel.push_back(std::abs(predict_baseline(res.regressor, q).value - exact[order[i]]) / exact[order[i]]);
  }
  res.held_out_median_rel_error = median_of(rel);
  res.held_out = rel.size();

  const auto steps = cfg.onset - 1 + cfg.post_horizon;
  const auto run = [&](const TrafficTrace& trace, const ActiveMask& mask, double baseline) {
    double s = 0.0;
    for (std::size_t r = 0; r < steps; ++r) {
      const auto obs = normalize_row(trace.nodes[0].row(r), model.normalization, r + 1);
      s = cusum_recursion(s, masked_evidence(model, obs.values, mask, baseline).d_t);
      if (check_alarm(s, cfg.h)) return std::optional<TimeIndex>(r + 1);
    }
    return std::optional<TimeIndex>();
  };
  std::vector<double> diffs;
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    std::vector<std::size_t> counts(cfg.kinds.size());
    for (auto& c : counts) c = 1 + uniform_below(eng, cfg.max_per_kind);
    const auto mask = ActiveMask::from_counts(counts, profile);
    auto trace = generate_network(topo, steps, derive_seed(seed, {43, i}), 1);
    AttackSpec spec;
    spec.onset = cfg.onset;
    spec.rate_increase = cfg.rate_increase;
    const auto& active = mask.active_indices();
    spec.devices = {DeviceRef{0, active[uniform_below(eng, active.size())]}};
    trace = inject_attack(trace, spec);
    {
      auto flat = trace.nodes[0].counts();
      const auto width = trace.nodes[0].devices();
      for (std::size_t r = 0; r < steps; ++r) {
        for (std::size_t j = 0; j < width; ++j) {
          if (!mask.active()[j]) flat[r * width + j] = 0;
        }
      }
      trace.nodes[0] = RawTrace(trace.nodes[0].device_ids(), steps, std::move(flat));
    }
    const auto real_counts = mask.counts_as_reals();
    const double b_exact = exact[combo_index(counts)];
    const double b_approx = predict_baseline(res.regressor, real_counts).value;
    const auto te = classify_trial(run(trace, mask, b_exact), cfg.onset);
    const auto ta = classify_trial(run(trace, mask, b_approx), cfg.onset);
    if (te.false_alarm) ++res.exact_false_alarms;
    if (ta.false_alarm) ++res.approx_false_alarms;
    if (te.false_alarm || ta.false_alarm) continue;
    const auto post = static_cast<double>(cfg.post_horizon);
    const double de = te.delay ? static_cast<double>(*te.delay) : post;
    const double da = ta.delay ? static_cast<double>(*ta.delay) : post;
    res.exact_delays.push_back(de);
    res.approx_delays.push_back(da);
    diffs.push_back(std::abs(de - da));
  }
  res.exact_add = mean_of(res.exact_delays);
  res.approx_add = mean_of(res.approx_delays);
  res.median_abs_difference = median_of(diffs);
  return res;
}

}  // namespace odit
