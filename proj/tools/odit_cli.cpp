#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "odit/baselines.hpp"
#include "odit/cooperative.hpp"
#include "odit/core_detector.hpp"
#include "odit/error.hpp"
#include "odit/evaluation.hpp"
#include "odit/io.hpp"
#include "odit/mitigation.hpp"
#include "odit/random.hpp"
#include "odit/traffic_sim.hpp"

namespace fs = std::filesystem;
using namespace odit;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> sets;
};

struct Context {
  ConfigFile cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::vector<fs::path> inputs;
};

Context make_context(const CommonArgs& args) {
  Context ctx;
  if (!args.config.empty()) {
    ctx.cfg = ConfigFile::load(args.config);
    ctx.inputs.push_back(args.config);
  }
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
    ctx.cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  ctx.seed = args.seed ? *args.seed : ctx.cfg.get_uint("seed", 0);
  ctx.out = args.out;
  return ctx;
}

fs::path input_path(Context& ctx, const std::string& key) {
  fs::path p = ctx.cfg.require_string(key);
  if (!fs::exists(p)) throw ValidationError("input file for '" + key + "' does not exist: " + p.string());
  ctx.inputs.push_back(p);
  return p;
}

fs::path output_path(const Context& ctx, const std::string& name) {
  const auto p = ctx.out / name;
  const auto canon = fs::weakly_canonical(p);
  for (const auto& in : ctx.inputs) {
    if (fs::weakly_canonical(in) == canon) throw ValidationError("output " + p.string() + " would overwrite an input");
  }
  return p;
}

std::optional<DeviceProfile> profile_override(const ConfigFile& cfg, DeviceProfile p) {
  const auto key = [&](const char* field) { return p.kind + "." + field; };
  p.active_prob = cfg.get_double(key("active_prob"), p.active_prob);
  p.idle_prob = cfg.has(key("idle_prob")) ? cfg.get_double(key("idle_prob"), p.idle_prob) : 1.0 - p.active_prob;
  p.active_mean = cfg.get_double(key("active_mean"), p.active_mean);
  p.idle_mean = cfg.get_double(key("idle_mean"), p.idle_mean);
  p.session_len = static_cast<std::size_t>(cfg.get_uint(key("session_len"), p.session_len));
  p.sigma = cfg.get_double(key("sigma"), p.sigma);
  p.validate();
  return p;
}

std::vector<DeviceRef> parse_devices(const std::vector<std::string>& items) {
  std::vector<DeviceRef> out;
  for (const auto& it : items) {
    const auto c = it.find(':');
    try {
      if (c == std::string::npos) throw std::invalid_argument("no colon");
      out.push_back({std::stoul(it.substr(0, c)), std::stoul(it.substr(c + 1))});
    } catch (const std::exception&) {
      throw ValidationError("attack device '" + it + "' must look like node:device");
    }
  }
  return out;
}

int cmd_simulate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto scenario = cfg.get_string("scenario", "network");
  const auto steps = static_cast<std::size_t>(cfg.get_uint("steps", 1000));
  Json summary = document_header("simulate_summary", ctx.seed);
  TrafficTrace trace;
  if (scenario == "gaussian") {
    const auto d = static_cast<std::size_t>(cfg.get_uint("d", 2));
    const auto onset = cfg.get_uint("onset", 0);
    trace.nodes.push_back(gaussian_count_trace(steps, d, onset, ctx.seed));
    trace.seed = ctx.seed;
    if (onset > 0) {
      trace.onset = onset;
      for (std::size_t j = 0; j < d; ++j) trace.attacked.push_back({0, j});
    }
  } else if (scenario == "network") {
    std::vector<DeviceProfile> kinds;
    for (const auto& k : cfg.get_strings("kinds", {"thermostat", "smart_light", "security_camera", "smart_printer",
                                                   "smart_tv"})) {
      kinds.push_back(*profile_override(cfg, standard_profile(k)));
    }
    const auto topo = Topology::cycled(cfg.get_uint("nodes", 10), cfg.get_uint("devices_per_node", 20), kinds);
    trace = generate_network(topo, steps, ctx.seed, cfg.get_uint("threads", 0));
    if (cfg.get_bool("attack", false)) {
      AttackSpec spec;
      spec.onset = cfg.get_uint("attack.onset", 1);
      spec.fraction_compromised = cfg.get_double("attack.fraction", 0.1);
      spec.rate_increase = cfg.get_double("attack.rate", 0.1);
      spec.selection_seed = cfg.get_uint("attack.selection_seed", derive_seed(ctx.seed, {0xa7}));
      spec.devices = parse_devices(cfg.get_strings("attack.devices", {}));
      if (cfg.has("attack.duration")) spec.duration = cfg.get_uint("attack.duration", 0);
      trace = inject_attack(trace, spec);
    }
  } else {
    throw ValidationError("unknown simulate scenario '" + scenario + "' (network, gaussian)");
  }
  const auto csv = output_path(ctx, "trace.csv");
  const auto gt = output_path(ctx, "ground_truth.json");
  write_trace_csv(csv, trace.nodes);
  write_json(gt, ground_truth_json(trace));
  summary["scenario"] = scenario;
  summary["steps"] = trace.steps();
  summary["nodes"] = trace.nodes.size();
  summary["devices"] = trace.nodes.empty() ? 0 : trace.nodes.front().devices();
  summary["attacked"] = trace.attacked.size();
  summary["trace"] = csv.string();
  summary["ground_truth"] = gt.string();
  write_json(output_path(ctx, "simulate.json"), summary);
  return 0;
}

double cooperative_peak(const std::vector<std::shared_ptr<const OditModel>>& models, const std::vector<RawTrace>& nodes,
                        std::size_t first, std::size_t len) {
  CooperativeDetector det(models, 1.0, 0);
  double peak = 0.0;
  std::vector<std::span<const std::int64_t>> rows(nodes.size());
  for (std::size_t r = first; r < first + len; ++r) {
    for (std::size_t n = 0; n < nodes.size(); ++n) rows[n] = nodes[n].row(r);
    peak = std::max(peak, det.step_counts(rows).global_s);
  }
  return peak;
}

int cmd_train(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto nodes = read_trace_csv(input_path(ctx, "trace"));
  DetectorConfig dc;
  dc.k = cfg.get_uint("k", dc.k);
  dc.alpha = cfg.get_double("alpha", dc.alpha);
  dc.m1 = cfg.get_uint("m1", dc.m1);
  dc.m2 = cfg.get_uint("m2", dc.m2);
  dc.h = cfg.get_double("h", dc.h);
  dc.validate();
  std::vector<OditModel> models;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    auto node_cfg = dc;
    node_cfg.seed = derive_seed(ctx.seed, {n});
    models.push_back(train_from_raw(nodes[n], node_cfg));
  }
  auto doc = models_document(models, ctx.seed);
  doc["cooperative_h"] = nullptr;
  if (cfg.get_bool("calibrate", false)) {
    const double target = cfg.get_double("target_fpr", 0.05);
    const auto horizon = static_cast<std::size_t>(cfg.get_uint("horizon", 100));
    const auto trials = static_cast<std::size_t>(cfg.get_uint("calibration_trials", 200));
    auto calib = nodes;
    if (cfg.has("calibration_trace")) calib = read_trace_csv(input_path(ctx, "calibration_trace"));
    if (calib.size() != nodes.size()) throw ValidationError("calibration trace has a different node count");
    if (calib.front().steps() < horizon) throw ValidationError("calibration trace shorter than the horizon");
    std::vector<std::shared_ptr<const OditModel>> shared;
    Json per_node = Json::array();
    for (std::size_t n = 0; n < models.size(); ++n) {
      const auto obs = normalize(calib[n], models[n].normalization);
      const auto c = calibrate_threshold(models[n], obs, target, horizon, trials, derive_seed(ctx.seed, {0xca, n}));
      models[n].config.h = c.h;
      per_node.push_back({{"h", c.h}, {"estimated_fpr", c.estimated_fpr}});
      shared.push_back(std::make_shared<const OditModel>(models[n]));
    }
    std::vector<double> peaks;
    Engine eng(derive_seed(ctx.seed, {0xcb}));
    for (std::size_t i = 0; i < trials; ++i) {
      const auto start = static_cast<std::size_t>(uniform_below(eng, calib.front().steps() - horizon + 1));
      peaks.push_back(cooperative_peak(shared, calib, start, horizon));
    }
    const auto coop = threshold_from_maxima(peaks, target, ThresholdGrid{});
    doc = models_document(models, ctx.seed);
    doc["cooperative_h"] = coop.h;
    doc["calibration"] = {{"target_fpr", target},       {"horizon", horizon},      {"trials", trials},
                          {"nodes", per_node},          {"cooperative_h", coop.h}, {"cooperative_fpr", coop.estimated_fpr}};
  }
  write_json(output_path(ctx, "model.json"), doc);
  return 0;
}

struct LoadedModels {
  std::vector<OditModel> models;
  std::vector<std::shared_ptr<const OditModel>> shared;
  std::optional<double> cooperative_h;
};

LoadedModels load_models(Context& ctx, const std::vector<RawTrace>& nodes) {
  const auto doc = read_json(input_path(ctx, "model"));
  LoadedModels lm;
  lm.models = models_from_document(doc);
  if (doc.contains("cooperative_h") && doc["cooperative_h"].is_number()) lm.cooperative_h = doc["cooperative_h"].get<double>();
  if (lm.models.size() != nodes.size()) {
    throw ValidationError("dimension mismatch: model has " + std::to_string(lm.models.size()) + " nodes, trace has " +
                          std::to_string(nodes.size()));
  }
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    if (lm.models[n].d != nodes[n].devices()) {
      throw ValidationError("dimension mismatch at node " + std::to_string(n) + ": model expects " +
                            std::to_string(lm.models[n].d) + " devices, trace has " +
                            std::to_string(nodes[n].devices()));
    }
    if (!lm.models[n].device_ids.empty() && lm.models[n].device_ids != nodes[n].device_ids()) {
      throw ValidationError("device ids of node " + std::to_string(n) + " differ between model and trace");
    }
    lm.shared.push_back(std::make_shared<const OditModel>(lm.models[n]));
  }
  return lm;
}

int cmd_detect(Context& ctx, bool cooperative, std::optional<double> threshold_flag) {
  const auto& cfg = ctx.cfg;
  const auto trace_path = input_path(ctx, "trace");
  const auto nodes = read_trace_csv(trace_path);
  auto lm = load_models(ctx, nodes);
  cooperative = cooperative || cfg.get_bool("cooperative", false);
  std::optional<double> h = threshold_flag;
  if (!h && cfg.has("threshold")) h = cfg.get_double("threshold", 0.0);
  if (!h && cooperative && lm.cooperative_h) h = lm.cooperative_h;
  if (h && !(*h > 0.0)) throw ValidationError("threshold must be positive");
  if (cooperative && !h) throw ValidationError("cooperative detection needs --threshold or a calibrated model");

  const auto steps = nodes.front().steps();
  CooperativeDetector det(lm.shared, cooperative ? *h : 1.0, 0);
  std::vector<double> global;
  std::vector<std::vector<double>> per_node(nodes.size());
  std::vector<std::optional<TimeIndex>> node_alarm(nodes.size());
  std::optional<TimeIndex> global_alarm;
  std::vector<std::span<const std::int64_t>> rows(nodes.size());
  for (std::size_t r = 0; r < steps; ++r) {
    for (std::size_t n = 0; n < nodes.size(); ++n) rows[n] = nodes[n].row(r);
    const auto g = det.step_counts(rows);
    global.push_back(g.global_s);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const double s = det.node_state(n).s();
      per_node[n].push_back(s);
      const double hn = h && !cooperative ? *h : lm.models[n].config.h;
      if (!node_alarm[n] && check_alarm(s, hn)) node_alarm[n] = r + 1;
    }
    if (cooperative && !global_alarm && g.alarmed) global_alarm = r + 1;
  }
  if (!cooperative) {
    for (const auto& a : node_alarm) {
      if (a && (!global_alarm || *a < *global_alarm)) global_alarm = a;
    }
  }
  Json rep = document_header("alarm_report", ctx.seed);
  rep["mode"] = cooperative ? "cooperative" : "single";
  rep["trace"] = trace_path.string();
  rep["steps"] = steps;
  if (cooperative) {
    rep["threshold"] = *h;
  } else {
    Json th = Json::array();
    for (const auto& m : lm.models) th.push_back(h ? *h : m.config.h);
    rep["threshold"] = th;
  }
  rep["alarm"] = global_alarm.has_value();
  rep["alarm_time"] = global_alarm ? Json(*global_alarm) : Json(nullptr);
  Json na = Json::array();
  for (const auto& a : node_alarm) na.push_back(a ? Json(*a) : Json(nullptr));
  rep["node_alarm_times"] = na;
  rep["statistic"] = global;
  rep["node_statistics"] = per_node;
  write_json(output_path(ctx, "alarm_report.json"), rep);
  return 0;
}

int cmd_mitigate(Context& ctx, std::optional<double> theta1, std::optional<double> theta2) {
  const auto& cfg = ctx.cfg;
  const auto nodes = read_trace_csv(input_path(ctx, "trace"));
  auto lm = load_models(ctx, nodes);
  const auto report_doc = read_json(input_path(ctx, "alarm_report"));
  check_header(report_doc, "alarm_report");
  if (!report_doc.contains("alarm_time") || report_doc["alarm_time"].is_null()) {
    throw ComputationError("the alarm report contains no alarm; nothing to mitigate");
  }
  const auto alarm = report_doc["alarm_time"].get<TimeIndex>();
  if (alarm < 1 || alarm > nodes.front().steps()) throw ValidationError("alarm time lies outside the trace");
  MitigationConfig mc;
  mc.theta1 = theta1 ? *theta1 : cfg.get_double("theta1", 0.0);
  mc.theta2 = theta2 ? *theta2 : cfg.get_double("theta2", 0.0);
  mc.absolute_components = cfg.get_bool("absolute", false);
  mc.validate();
  CooperativeDetector det(lm.shared, 1.0, alarm);
  std::vector<std::span<const std::int64_t>> rows(nodes.size());
  for (std::size_t r = 0; r < alarm; ++r) {
    for (std::size_t n = 0; n < nodes.size(); ++n) rows[n] = nodes[n].row(r);
    det.step_counts(rows);
  }
  const auto report = mitigate(det, alarm, mc);
  Json doc = document_header("mitigation_report", ctx.seed);
  doc["theta1"] = mc.theta1;
  doc["theta2"] = mc.theta2;
  doc["absolute_components"] = mc.absolute_components;
  const auto body = mitigation_report_json(report);
  for (const auto& [k, v] : body.items()) doc[k] = v;
  if (cfg.has("ground_truth")) {
    const auto gt = ground_truth_from_json(read_json(input_path(ctx, "ground_truth")));
    doc["auc"] = mitigation_roc(report, gt.attacked, mc.theta1).auc;
  }
  write_json(output_path(ctx, "mitigation_report.json"), doc);
  return 0;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ComputationError("cannot write " + p.string());
  out << text;
}

int cmd_evaluate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto scenario = cfg.get_string("scenario", "toy");
  Json summary = document_header("evaluation_summary", ctx.seed);
  summary["scenario"] = scenario;
  if (scenario == "toy") {
    ToyConfig fc;
    fc.seeds = cfg.get_uint("seeds", fc.seeds);
    fc.m1 = cfg.get_uint("m1", fc.m1);
    fc.m2 = cfg.get_uint("m2", fc.m2);
    fc.k = cfg.get_uint("k", fc.k);
    fc.alpha = cfg.get_double("alpha", fc.alpha);
    fc.horizon = cfg.get_uint("horizon", fc.horizon);
    fc.onset = cfg.get_uint("onset", fc.onset);
    fc.calibration_trials = cfg.get_uint("calibration_trials", fc.calibration_trials);
    fc.target_fpr = cfg.get_double("target_fpr", fc.target_fpr);
    const auto res = toy_experiment(fc, ctx.seed, cfg.get_uint("threads", 0));
    std::string csv = "seed,h,alarm_time,delay,false_alarm\n";
    for (std::size_t s = 0; s < res.outcomes.size(); ++s) {
      const auto& o = res.outcomes[s];
      csv += std::to_string(s) + "," + Json(res.thresholds[s]).dump() + "," +
             (o.alarm_time ? std::to_string(*o.alarm_time) : "") + "," + (o.delay ? std::to_string(*o.delay) : "") +
             "," + (o.false_alarm ? "1" : "0") + "\n";
    }
    write_text(output_path(ctx, "toy_trials.csv"), csv);
    summary["median_delay"] = res.median_delay;
    summary["false_alarms"] = res.false_alarms;
    summary["misses"] = res.misses;
    summary["delay_one"] = res.detected_at_onset_plus_one;
    summary["seeds"] = fc.seeds;
  } else if (scenario == "convergence") {
    ConvergenceConfig cc;
    cc.m2_values = cfg.get_sizes("m2_values", cc.m2_values);
    cc.m1 = cfg.get_uint("m1", cc.m1);
    cc.test_points = cfg.get_uint("test_points", cc.test_points);
    const auto res = convergence_experiment(cc, ctx.seed);
    std::string csv = "m2,k,mean_abs_error\n";
    for (std::size_t i = 0; i < res.m2_values.size(); ++i) {
      csv += std::to_string(res.m2_values[i]) + "," + std::to_string(res.k_values[i]) + "," +
             Json(res.mean_abs_error[i]).dump() + "\n";
    }
    write_text(output_path(ctx, "convergence.csv"), csv);
    summary["m2_values"] = res.m2_values;
    summary["k_values"] = res.k_values;
    summary["mean_abs_error"] = res.mean_abs_error;
  } else if (scenario == "stealth") {
    StealthConfig sc;
    sc.nodes = cfg.get_uint("nodes", sc.nodes);
    sc.devices_per_node = cfg.get_uint("devices_per_node", sc.devices_per_node);
    sc.train_steps = cfg.get_uint("train_steps", sc.train_steps);
    sc.attack_train_steps = cfg.get_uint("attack_train_steps", sc.attack_train_steps);
    sc.m1 = cfg.get_uint("m1", sc.m1);
    sc.m2 = cfg.get_uint("m2", sc.m2);
    sc.k = cfg.get_uint("k", sc.k);
    sc.alpha = cfg.get_double("alpha", sc.alpha);
    sc.fpr_horizon = cfg.get_uint("fpr_horizon", sc.fpr_horizon);
    sc.warmup = cfg.get_uint("warmup", sc.warmup);
    sc.post_horizon = cfg.get_uint("post_horizon", sc.post_horizon);
    sc.trials = cfg.get_uint("trials", sc.trials);
    sc.fraction = cfg.get_double("fraction", sc.fraction);
    sc.rate_increase = cfg.get_double("rate_increase", sc.rate_increase);
    sc.target_fpr = cfg.get_double("target_fpr", sc.target_fpr);
    sc.filter_quantile = cfg.get_double("filter_quantile", sc.filter_quantile);
    sc.renyi.window_len = cfg.get_uint("renyi.window", sc.renyi.window_len);
    sc.renyi.order = cfg.get_double("renyi.order", sc.renyi.order);
    sc.renyi.bins = cfg.get_uint("renyi.bins", sc.renyi.bins);
    sc.curve_fprs = cfg.get_doubles("curve_fprs", sc.curve_fprs);
    sc.threads = cfg.get_uint("threads", 0);
    const auto res = stealth_experiment(sc, ctx.seed);
    std::vector<Curve> curves;
    Json dets = Json::object();
    for (const auto& d : res.detectors) {
      curves.push_back(d.curve);
      Json dj = curve_point_json(d.at_target);
      dets[d.id] = dj;
    }
    write_curve_csv(output_path(ctx, "curves.csv"), curves);
    std::string csv = "trial_index,odit_auc,filter_auc\n";
    for (std::size_t i = 0; i < res.odit_auc.size(); ++i) {
      csv += std::to_string(i) + "," + Json(res.odit_auc[i]).dump() + "," + Json(res.filter_auc[i]).dump() + "\n";
    }
    write_text(output_path(ctx, "mitigation_auc.csv"), csv);
    summary["target_fpr"] = sc.target_fpr;
    summary["at_target"] = dets;
    summary["mean_odit_auc"] = res.mean_odit_auc;
    summary["mean_filter_auc"] = res.mean_filter_auc;
    summary["mean_odit_auc_post_window"] = res.mean_odit_auc_post_window;
    summary["mitigated_trials"] = res.odit_auc.size();
    summary["seconds"] = res.seconds;
  } else if (scenario == "dynamic") {
    DynamicConfig dc;
    dc.trials = cfg.get_uint("trials", dc.trials);
    dc.h = cfg.get_double("h", dc.h);
    dc.rate_increase = cfg.get_double("rate_increase", dc.rate_increase);
    const auto res = dynamic_experiment(dc, ctx.seed);
    std::string csv = "trial_index,exact_delay,approx_delay\n";
    for (std::size_t i = 0; i < res.exact_delays.size(); ++i) {
      csv += std::to_string(i) + "," + Json(res.exact_delays[i]).dump() + "," + Json(res.approx_delays[i]).dump() + "\n";
    }
    write_text(output_path(ctx, "dynamic.csv"), csv);
    summary["exact_add"] = res.exact_add;
    summary["approx_add"] = res.approx_add;
    summary["median_abs_difference"] = res.median_abs_difference;
    summary["held_out_median_rel_error"] = res.held_out_median_rel_error;
    summary["coefficients"] = res.regressor.coefficients();
    summary["residual_rms"] = res.regressor.residual_rms();
  } else {
    throw ValidationError("unknown evaluation scenario '" + scenario + "' (toy, convergence, stealth, dynamic)");
  }
  write_json(output_path(ctx, "summary.json"), summary);
  return 0;
}

int cmd_bench(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto m2s = cfg.get_sizes("m2_values", {500, 1000, 2000});
  const auto ds = cfg.get_sizes("d_values", {25, 50, 100});
  const auto table = scaling_bench(m2s, ds, cfg.get_uint("reps", 15), ctx.seed, cfg.get_uint("k", 2));
  std::string csv = "m2,d,median_seconds\n";
  for (const auto& c : table.cells) {
    csv += std::to_string(c.m2) + "," + std::to_string(c.d) + "," + Json(c.median_seconds).dump() + "\n";
  }
  write_text(output_path(ctx, "bench.csv"), csv);
  Json doc = document_header("bench_summary", ctx.seed);
  doc["m2_ratios"] = table.m2_ratios;
  doc["d_ratios"] = table.d_ratios;
  doc["m2_r2"] = table.m2_r2;
  doc["d_r2"] = table.d_r2;
  write_json(output_path(ctx, "bench.json"), doc);
  return 0;
}

void emit_error(const std::string& type, const std::string& message, int code, std::uint64_t seed) {
  Json err = document_header("error", seed);
  err["error"] = {{"type", type}, {"message", message}};
  err["exit_code"] = code;
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online discrepancy test toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonArgs common;
  bool cooperative = false;
  std::optional<double> threshold, theta1, theta2;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "flat key=value config file");
    sub->add_option("--seed", common.seed, "root seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--set", common.sets, "config override key=value (repeatable)");
  };
  auto* simulate = app.add_subcommand("simulate", "generate a trace CSV and ground truth");
  auto* train = app.add_subcommand("train", "train per-node models from an attack-free trace");
  auto* detect = app.add_subcommand("detect", "stream a trace through trained models");
  auto* mit = app.add_subcommand("mitigate", "localize attacking devices after an alarm");
  auto* evaluate = app.add_subcommand("evaluate", "run a seeded evaluation scenario");
  auto* bench = app.add_subcommand("bench", "time evidence computation over an (M2, d) grid");
  for (auto* s : {simulate, train, detect, mit, evaluate, bench}) add_common(s);
  detect->add_flag("--cooperative", cooperative, "sum node statistics against one global threshold");
  detect->add_option("--threshold", threshold, "alarm threshold h");
  mit->add_option("--theta1", theta1, "node threshold");
  mit->add_option("--theta2", theta2, "device threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("validation_error", e.what(), 2, 0);
    return 2;
  }

  std::uint64_t seed = common.seed.value_or(0);
  try {
    auto ctx = make_context(common);
    seed = ctx.seed;
    if (*simulate) return cmd_simulate(ctx);
    if (*train) return cmd_train(ctx);
    if (*detect) return cmd_detect(ctx, cooperative, threshold);
    if (*mit) return cmd_mitigate(ctx, theta1, theta2);
    if (*evaluate) return cmd_evaluate(ctx);
    if (*bench) return cmd_bench(ctx);
  } catch (const ValidationError& e) {
    emit_error("validation_error", e.what(), 2, seed);
    return 2;
  } catch (const ComputationError& e) {
    emit_error("runtime_error", e.what(), 3, seed);
    return 3;
  } catch (const std::exception& e) {
    emit_error("runtime_error", e.what(), 3, seed);
    return 3;
  }
  return 3;
}
