#include "odit/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "odit/error.hpp"

namespace odit {

namespace fs = std::filesystem;

Json document_header(const std::string& kind, std::uint64_t seed) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["kind"] = kind;
  return j;
}

void check_header(const Json& doc, const std::string& kind) {
  if (!doc.is_object() || !doc.contains("schema_version")) throw ValidationError("document has no schema_version");
  if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion) {
    throw ValidationError("schema version mismatch: expected " + std::to_string(kSchemaVersion) + ", got " +
                          doc["schema_version"].dump());
  }
  if (!doc.contains("kind") || doc["kind"] != kind) {
    throw ValidationError("expected a '" + kind + "' document, got " + (doc.contains("kind") ? doc["kind"].dump() : "none"));
  }
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ComputationError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
bool parse_integer(const std::string& s, T& out) {
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

std::vector<RawTrace> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace CSV is empty");
  if (trim(line) != "t,node,device,count") {
    throw ValidationError("trace CSV header must be 't,node,device,count', got '" + trim(line) + "'");
  }
  struct Row {
    std::uint64_t t;
    std::size_t node;
    std::size_t device;
    std::int64_t count;
  };
  std::vector<std::vector<std::string>> ids;  // per node, order of first appearance
  std::vector<std::map<std::string, std::size_t>> id_index;
  std::vector<Row> rows;
  std::uint64_t max_t = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto f = split(body, ',');
    const auto where = " at line " + std::to_string(lineno);
    if (f.size() != 4) throw ValidationError("expected 4 fields" + where);
    std::uint64_t t = 0;
    std::size_t node = 0;
    std::int64_t count = 0;
    if (!parse_integer(trim(f[0]), t) || t < 1) throw ValidationError("time must be an integer >= 1" + where);
    if (!parse_integer(trim(f[1]), node)) throw ValidationError("node must be a nonnegative integer" + where);
    const auto dev = trim(f[2]);
    if (dev.empty()) throw ValidationError("empty device id" + where);
    const auto cs = trim(f[3]);
    if (!parse_integer(cs, count)) throw ValidationError("count '" + cs + "' is not an integer" + where);
    if (count < 0) throw ValidationError("negative count" + where);
    if (node >= ids.size()) {
      if (node > 100000) throw ValidationError("node index too large" + where);
      ids.resize(node + 1);
      id_index.resize(node + 1);
    }
    auto [it, inserted] = id_index[node].try_emplace(dev, ids[node].size());
    if (inserted) ids[node].push_back(dev);
    rows.push_back({t, node, it->second, count});
    max_t = std::max(max_t, t);
  }
  if (rows.empty()) throw ValidationError("trace CSV has no data rows");
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if (ids[n].empty()) throw ValidationError("node " + std::to_string(n) + " has no rows; nodes must be numbered 0..N-1");
  }
  std::vector<std::vector<std::int64_t>> counts(ids.size());
  std::vector<std::vector<bool>> seen(ids.size());
  for (std::size_t n = 0; n < ids.size(); ++n) {
    counts[n].assign(max_t * ids[n].size(), 0);
    seen[n].assign(max_t * ids[n].size(), false);
  }
  for (const auto& r : rows) {
    const auto idx = (r.t - 1) * ids[r.node].size() + r.device;
    if (seen[r.node][idx]) {
      throw ValidationError("duplicate row for t=" + std::to_string(r.t) + ", node " + std::to_string(r.node) +
                            ", device " + ids[r.node][r.device]);
    }
    seen[r.node][idx] = true;
    counts[r.node][idx] = r.count;
  }
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const auto miss = std::find(seen[n].begin(), seen[n].end(), false);
    if (miss != seen[n].end()) {
      const auto idx = static_cast<std::size_t>(miss - seen[n].begin());
      throw ValidationError("missing row for t=" + std::to_string(idx / ids[n].size() + 1) + ", node " +
                            std::to_string(n) + ", device " + ids[n][idx % ids[n].size()]);
    }
  }
  std::vector<RawTrace> out;
  for (std::size_t n = 0; n < ids.size(); ++n) out.emplace_back(ids[n], max_t, std::move(counts[n]));
  return out;
}

std::vector<RawTrace> read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace_csv(buf.str());
}

void write_trace_csv(const fs::path& path, const std::vector<RawTrace>& nodes) {
  if (nodes.empty()) throw ValidationError("nothing to write");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ComputationError("cannot write " + path.string());
  out << "t,node,device,count\n";
  const auto steps = nodes.front().steps();
  std::string line;
  for (std::size_t r = 0; r < steps; ++r) {
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      if (nodes[n].steps() != steps) throw ValidationError("nodes have different trace lengths");
      for (std::size_t j = 0; j < nodes[n].devices(); ++j) {
        line.clear();
        line += std::to_string(r + 1);
        line += ',';
        line += std::to_string(n);
        line += ',';
        line += nodes[n].device_ids()[j];
        line += ',';
        line += std::to_string(nodes[n].at(r, j));
        line += '\n';
        out << line;
      }
    }
  }
}

Json ground_truth_json(const TrafficTrace& trace) {
  Json j = document_header("ground_truth", trace.seed);
  Json attacked = Json::array();
  for (const auto& d : trace.attacked) attacked.push_back({d.node, d.device});
  j["attacked"] = attacked;
  j["onset"] = trace.onset ? Json(*trace.onset) : Json(nullptr);
  return j;
}

GroundTruth ground_truth_from_json(const Json& doc) {
  check_header(doc, "ground_truth");
  GroundTruth g;
  try {
    for (const auto& p : doc.at("attacked")) g.attacked.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
    if (!doc.at("onset").is_null()) g.onset = doc.at("onset").get<TimeIndex>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed ground truth: ") + e.what());
  }
  std::sort(g.attacked.begin(), g.attacked.end());
  return g;
}

Json model_to_json(const OditModel& model) {
  Json j;
  j["d"] = model.d;
  j["device_ids"] = model.device_ids;
  j["baseline_stat"] = model.baseline_stat;
  j["normalization"] = model.normalization.maxima;
  const auto& c = model.config;
  j["config"] = {{"k", c.k},   {"alpha", c.alpha}, {"m1", c.m1},
                 {"m2", c.m2}, {"h", c.h},         {"seed", c.seed},
                 {"evidence_mode", to_string(c.evidence_mode)}};
  if (model.legacy) {
    const auto& l = *model.legacy;
    j["legacy"] = {{"n1", l.n1}, {"n2", l.n2}, {"m_graph", l.m_graph}, {"k", l.k}, {"s", l.s}, {"gamma", l.gamma}};
  } else {
    j["legacy"] = nullptr;
  }
  j["reference_set"] = model.reference_set.data();
  return j;
}

OditModel model_from_json(const Json& j) {
  OditModel m;
  try {
    m.d = j.at("d").get<std::size_t>();
    m.device_ids = j.at("device_ids").get<std::vector<std::string>>();
    m.baseline_stat = j.at("baseline_stat").get<double>();
    m.normalization.maxima = j.at("normalization").get<std::vector<double>>();
    const auto& c = j.at("config");
    m.config.k = c.at("k").get<std::size_t>();
    m.config.alpha = c.at("alpha").get<double>();
    m.config.m1 = c.at("m1").get<std::size_t>();
    m.config.m2 = c.at("m2").get<std::size_t>();
    m.config.h = c.at("h").get<double>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.evidence_mode = evidence_mode_from_string(c.at("evidence_mode").get<std::string>());
    if (!j.at("legacy").is_null()) {
      const auto& l = j.at("legacy");
      LegacyGemConfig lg;
      lg.n1 = l.at("n1").get<std::size_t>();
      lg.n2 = l.at("n2").get<std::size_t>();
      lg.m_graph = l.at("m_graph").get<std::size_t>();
      lg.k = l.at("k").get<std::size_t>();
      lg.s = l.at("s").get<std::size_t>();
      lg.gamma = l.at("gamma").get<double>();
      lg.validate();
      m.legacy = lg;
    }
    m.reference_set = PointSet(m.d, j.at("reference_set").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
  if (m.d == 0 || m.reference_set.size() * m.d != m.reference_set.data().size()) {
    throw ValidationError("model reference set does not match its dimension");
  }
  if (m.normalization.size() != m.d) throw ValidationError("model normalization does not match its dimension");
  m.normalization.validate();
  if (!m.device_ids.empty() && m.device_ids.size() != m.d) throw ValidationError("model device ids do not match d");
  if (!(m.baseline_stat > 0.0)) throw ValidationError("model baseline statistic must be positive");
  if (m.config.evidence_mode == EvidenceMode::LegacyGem && !m.legacy) {
    throw ValidationError("LegacyGem model without legacy parameters");
  }
  if (m.config.evidence_mode == EvidenceMode::LogRatio) m.config.validate();
  return m;
}

Json models_document(const std::vector<OditModel>& models, std::uint64_t seed) {
  Json j = document_header("model", seed);
  j["nodes"] = Json::array();
  for (const auto& m : models) j["nodes"].push_back(model_to_json(m));
  return j;
}

std::vector<OditModel> models_from_document(const Json& doc) {
  check_header(doc, "model");
  if (!doc.contains("nodes") || !doc["nodes"].is_array() || doc["nodes"].empty()) {
    throw ValidationError("model document has no node models");
  }
  std::vector<OditModel> out;
  for (const auto& j : doc["nodes"]) out.push_back(model_from_json(j));
  return out;
}

Json dynamic_to_json(const DynamicModel& dm) {
  Json apps = Json::array();
  for (std::size_t a = 0; a < dm.profile.applications.size(); ++a) {
    apps.push_back({{"id", dm.profile.applications[a]}, {"max_devices", dm.profile.max_devices[a]}});
  }
  Json samples = Json::array();
  for (const auto& s : dm.regressor.samples()) samples.push_back({{"counts", s.counts}, {"baseline", s.baseline}});
  Json j;
  j["applications"] = apps;
  j["dimension_app"] = dm.profile.dimension_app;
  j["samples"] = samples;
  j["coefficients"] = dm.regressor.coefficients();
  return j;
}

DynamicModel dynamic_from_json(const Json& j) {
  DynamicModel dm;
  std::vector<BaselineSample> samples;
  std::vector<double> coefficients;
  try {
    for (const auto& a : j.at("applications")) {
      dm.profile.applications.push_back(a.at("id").get<std::string>());
      dm.profile.max_devices.push_back(a.at("max_devices").get<std::size_t>());
    }
    dm.profile.dimension_app = j.at("dimension_app").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("samples")) {
      samples.push_back({s.at("counts").get<std::vector<double>>(), s.at("baseline").get<double>()});
    }
    coefficients = j.at("coefficients").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed dynamic block: ") + e.what());
  }
  dm.profile.validate();
  dm.regressor = BaselineRegressor(std::move(samples), std::move(coefficients));
  if (dm.regressor.inputs() != dm.profile.applications.size()) {
    throw ValidationError("dynamic regressor inputs do not match the application count");
  }
  return dm;
}

std::optional<DynamicModel> dynamic_from_document(const Json& doc) {
  if (!doc.contains("dynamic") || doc["dynamic"].is_null()) return std::nullopt;
  return dynamic_from_json(doc["dynamic"]);
}

Json mitigation_report_json(const MitigationReport& report) {
  Json j;
  j["onset"] = report.onset;
  j["alarm"] = report.alarm;
  j["onset_window_fallback"] = report.onset_fallback;
  j["node_scores"] = report.node_scores;
  j["device_scores"] = report.device_scores;
  j["flagged_nodes"] = report.flagged_nodes;
  Json flagged = Json::array();
  for (const auto& d : report.flagged_devices) flagged.push_back({d.node, d.device});
  j["flagged_devices"] = flagged;
  return j;
}

ConfigFile ConfigFile::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(body.substr(0, eq));
    if (key.empty()) throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(body.substr(eq + 1));
  }
  return cfg;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string ConfigFile::require_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ValidationError("missing required setting '" + key + "'");
  return it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("setting '" + key + "' must be a number, got '" + it->second + "'");
  }
}

std::uint64_t ConfigFile::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  if (!parse_integer(it->second, v)) {
    throw ValidationError("setting '" + key + "' must be a nonnegative integer, got '" + it->second + "'");
  }
  return v;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ValidationError("setting '" + key + "' must be true or false, got '" + it->second + "'");
}

std::vector<std::string> ConfigFile::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  for (const auto& part : split(it->second, ',')) {
    const auto p = trim(part);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_strings(key, {})) {
    ConfigFile one;
    one.values_[key] = s;
    out.push_back(one.get_double(key, 0.0));
  }
  return out;
}

std::vector<std::size_t> ConfigFile::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& s : get_strings(key, {})) {
    ConfigFile one;
    one.values_[key] = s;
    out.push_back(static_cast<std::size_t>(one.get_uint(key, 0)));
  }
  return out;
}

void write_curve_csv(const fs::path& path, const std::vector<Curve>& curves) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ComputationError("cannot write " + path.string());
  out.precision(17);
  out << "fpr,add,ci,h,detector,censored_add,detections,misses,pre_onset_alarms\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out << p.fpr << ',';
      if (p.add) {
        out << *p.add;
      } else {
        out << "nan";
      }
      out << ',' << p.ci << ',' << p.h << ',' << c.detector << ',' << p.censored_add << ',' << p.detections << ',' << p.misses << ','
          << p.pre_onset_alarms << '\n';
    }
  }
}

void write_roc_csv(const fs::path& path, const RocResult& roc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ComputationError("cannot write " + path.string());
  out.precision(17);
  out << "fpr,tpr\n";
  for (const auto& p : roc.points) out << p.fpr << ',' << p.tpr << '\n';
}

Json curve_point_json(const CurvePoint& p) {
  Json j;
  j["h"] = p.h;
  j["fpr"] = p.fpr;
  j["add"] = p.add ? Json(*p.add) : Json(nullptr);
  j["ci"] = p.ci;
  j["censored_add"] = p.censored_add;
  j["detections"] = p.detections;
  j["misses"] = p.misses;
  j["pre_onset_alarms"] = p.pre_onset_alarms;
  return j;
}

}  // namespace odit
