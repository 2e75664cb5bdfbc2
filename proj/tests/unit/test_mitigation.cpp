#include <doctest.h>

#include <algorithm>
#include <memory>

#include "helpers.hpp"
#include "odit/error.hpp"
#include "odit/evaluation.hpp"
#include "odit/mitigation.hpp"

using namespace odit;

namespace {

StatHistory stat_history(const std::vector<double>& s, TimeIndex first = 1) {
  StatHistory h;
  for (std::size_t i = 0; i < s.size(); ++i) h.push_back({first + i, s[i]});
  return h;
}

History node_history(const std::vector<std::vector<double>>& y, const std::vector<double>& s, TimeIndex first = 1) {
  History h;
  for (std::size_t i = 0; i < s.size(); ++i) h.push_back({first + i, y[i], s[i]});
  return h;
}

}  // namespace

TEST_CASE("onset is one past the last zero") {
  const auto h = stat_history({0, 0, 0, 0, 0, 1, 2, 4});
  CHECK(estimate_onset(h, 8).onset == 6);
  CHECK_FALSE(estimate_onset(h, 8).window_fallback);
  const auto late = stat_history({1, 0, 3});
  CHECK(estimate_onset(late, 3).onset == 3);
}

TEST_CASE("onset falls back to the window start") {
  const auto h = stat_history({1, 2, 3}, 10);
  const auto e = estimate_onset(h, 12);
  CHECK(e.onset == 10);
  CHECK(e.window_fallback);
  // History starting at t=1 has the implicit s_0 = 0 in front of it.
  CHECK(estimate_onset(stat_history({1, 2, 3}), 3).onset == 1);
  CHECK_THROWS_AS(estimate_onset(StatHistory{}, 3), ValidationError);
}

TEST_CASE("node score averages") {
  CHECK(node_score(stat_history({4, 4, 4, 4}), 2, 4) == 4.0);
  CHECK(node_score(stat_history({1, 2, 3}), 1, 3) == 2.0);
  CHECK(node_score(stat_history({0, 0, 0}), 1, 3) == 0.0);
  CHECK_THROWS_AS(node_score(stat_history({1, 2}, 3), 1, 4), ValidationError);
}

TEST_CASE("device score averages signed components") {
  const auto h = node_history({{0.2, -1.0}, {0.4, 1.0}}, {1, 2});
  const auto s = device_score(h, 1, 2);
  CHECK(s[0] == doctest::Approx(0.3));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(device_score(h, 1, 2, true)[1] == doctest::Approx(1.0));
}

TEST_CASE("identify flags by thresholds") {
  std::vector<double> nodes{0.0, 5.0};
  std::vector<std::vector<double>> devs{{0.9, 0.1}, {0.2, 0.8}};
  MitigationConfig all;
  const auto r = identify(nodes, devs, 1, 3, all);
  CHECK(r.flagged_nodes == std::vector<std::size_t>{0, 1});
  CHECK(r.flagged_devices.size() == 4);
  MitigationConfig strict{1.0, 0.5};
  const auto s = identify(nodes, devs, 1, 3, strict);
  CHECK(s.flagged_nodes == std::vector<std::size_t>{1});
  CHECK(s.flagged_devices == std::vector<DeviceRef>{{1, 1}});
  MitigationConfig none{0.0, 1e300};
  CHECK(identify(nodes, devs, 1, 3, none).flagged_devices.empty());
  CHECK_THROWS_AS(identify(nodes, devs, 1, 3, MitigationConfig{-1.0, 0.0}), ValidationError);
}

TEST_CASE("flag sets shrink as thresholds rise") {
  Engine eng(3);
  std::vector<double> nodes(6);
  std::vector<std::vector<double>> devs(6, std::vector<double>(8));
  for (auto& v : nodes) v = uniform01(eng) * 4.0;
  for (auto& row : devs) {
    for (auto& v : row) v = uniform01(eng) - 0.3;
  }
  std::size_t prev_nodes = 1000, prev_devs = 1000;
  for (double t1 = 0.0; t1 < 4.5; t1 += 0.5) {
    std::size_t inner_prev = 1000;
    for (double t2 = 0.0; t2 < 1.0; t2 += 0.1) {
      const auto r = identify(nodes, devs, 1, 2, MitigationConfig{t1, t2});
      CHECK(r.flagged_devices.size() <= inner_prev);
      inner_prev = r.flagged_devices.size();
      for (const auto& d : r.flagged_devices) {
        CHECK(std::find(r.flagged_nodes.begin(), r.flagged_nodes.end(), d.node) != r.flagged_nodes.end());
      }
    }
    const auto r = identify(nodes, devs, 1, 2, MitigationConfig{t1, 0.0});
    CHECK(r.flagged_nodes.size() <= prev_nodes);
    CHECK(r.flagged_devices.size() <= prev_devs);
    prev_nodes = r.flagged_nodes.size();
    prev_devs = r.flagged_devices.size();
  }
}

TEST_CASE("mitigate replays the clamp reset point and finds the attacked dimension") {
  std::vector<std::shared_ptr<const OditModel>> models;
  for (std::size_t n = 0; n < 2; ++n) {
    Engine eng(derive_seed(4, {n}));
    DetectorConfig cfg;
    cfg.seed = n;
    models.push_back(std::make_shared<const OditModel>(train(gaussian_points(550, 3, 0.5, 0.1, eng), cfg)));
  }
  Engine eng(12);
  CooperativeDetector coop(models, 30.0, 500);
  std::optional<TimeIndex> alarm;
  for (TimeIndex t = 1; t <= 400 && !alarm; ++t) {
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < 2; ++n) {
      auto x = gaussian_points(1, 3, 0.5, 0.1, eng).front().values;
      if (n == 1 && t >= 50) x[2] += 0.6;
      rows.push_back(x);
    }
    if (coop.step(rows).alarmed) alarm = t;
  }
  REQUIRE(alarm.has_value());
  const auto rep = mitigate(coop, *alarm, MitigationConfig{});
  CHECK(rep.onset <= rep.alarm);
  TimeIndex last_zero = 0;
  for (const auto& p : coop.global_history()) {
    if (p.s == 0.0) last_zero = p.t;
  }
  CHECK(rep.onset == last_zero + 1);
  const auto& dev = rep.device_scores[1];
  CHECK(std::max_element(dev.begin(), dev.end()) - dev.begin() == 2);
  CHECK(rep.node_scores[1] > rep.node_scores[0]);
}
