#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odit/core_detector.hpp"
#include "odit/random.hpp"

namespace testutil {

inline std::vector<odit::Observation> uniform_points(std::size_t n, std::size_t d, odit::Engine& eng) {
  std::vector<odit::Observation> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].values.resize(d);
    for (auto& v : out[i].values) v = odit::uniform01(eng);
    out[i].time_index = i + 1;
  }
  return out;
}

inline odit::PointSet to_set(const std::vector<odit::Observation>& pts) { return odit::PointSet::from_observations(pts); }

// k-th smallest distance and its index by sorting every (distance, index) pair.
inline std::pair<double, std::size_t> brute_kth(std::span<const double> x, const odit::PointSet& refs, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - refs.point(i)[j];
      s += diff * diff;
    }
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  return {std::sqrt(all[k - 1].first), all[k - 1].second};
}

inline odit::OditModel hand_model(std::vector<std::vector<double>> refs, double baseline, std::size_t k,
                                  odit::EvidenceMode mode = odit::EvidenceMode::LogRatio) {
  odit::OditModel m;
  m.d = refs.front().size();
  m.reference_set = odit::PointSet(m.d);
  for (const auto& r : refs) m.reference_set.push_back(r);
  m.baseline_stat = baseline;
  m.config.k = k;
  m.config.m2 = refs.size();
  m.config.evidence_mode = mode;
  m.normalization.maxima.assign(m.d, 1.0);
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::path(ODIT_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
