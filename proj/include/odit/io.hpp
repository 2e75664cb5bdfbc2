#pragma once

// File formats: trace CSV (t,node,device,count), JSON documents with a common
// header, flat key=value config files, and result tables.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odit/core_detector.hpp"
#include "odit/dynamic_env.hpp"
#include "odit/evaluation.hpp"
#include "odit/mitigation.hpp"
#include "odit/traffic_sim.hpp"

namespace odit {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.3.0";

// {schema_version, tool_version, seed, kind}
Json document_header(const std::string& kind, std::uint64_t seed);
// Throws ValidationError on a missing header, a schema mismatch or a different kind.
void check_header(const Json& doc, const std::string& kind);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

// One RawTrace per node. Rows may come in any order; every (t, node, device) must
// appear exactly once with t = 1..T. Device ids keep their order of first appearance.
std::vector<RawTrace> read_trace_csv(const std::filesystem::path& path);
std::vector<RawTrace> parse_trace_csv(const std::string& text);
void write_trace_csv(const std::filesystem::path& path, const std::vector<RawTrace>& nodes);

Json ground_truth_json(const TrafficTrace& trace);
struct GroundTruth {
  std::vector<DeviceRef> attacked;
  std::optional<TimeIndex> onset;
};
GroundTruth ground_truth_from_json(const Json& doc);

Json model_to_json(const OditModel& model);
OditModel model_from_json(const Json& j);
// Document holding one model per node.
Json models_document(const std::vector<OditModel>& models, std::uint64_t seed);
std::vector<OditModel> models_from_document(const Json& doc);

// Stored under "dynamic" in a model document: {applications, samples, coefficients}.
struct DynamicModel {
  ApplicationProfile profile;
  BaselineRegressor regressor;
};
Json dynamic_to_json(const DynamicModel& dm);
DynamicModel dynamic_from_json(const Json& j);
std::optional<DynamicModel> dynamic_from_document(const Json& doc);

Json mitigation_report_json(const MitigationReport& report);

// key = value lines; '#' starts a comment; keys are case-sensitive.
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(const std::string& text, const std::string& origin = "config");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

// fpr,add,ci,h, then the detector id, the censored ADD and counts
void write_curve_csv(const std::filesystem::path& path, const std::vector<Curve>& curves);
void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

Json curve_point_json(const CurvePoint& p);

}  // namespace odit
