#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <set>

#include "helpers.hpp"
#include "odit/error.hpp"
#include "odit/evaluation.hpp"

using namespace odit;

TEST_CASE("raw trace rejects malformed input") {
  CHECK_THROWS_AS(RawTrace({"a", "a"}, 1, {1, 2}), ValidationError);
  CHECK_THROWS_AS(RawTrace({"a", "b"}, 1, {1, -2}), ValidationError);
  CHECK_THROWS_AS(RawTrace({"a", "b"}, 2, {1, 2, 3}), ValidationError);
  RawTrace ok({"a", "b"}, 2, {1, 2, 3, 4});
  CHECK(ok.at(1, 0) == 3);
  CHECK(ok.slice(1, 1).at(0, 1) == 4);
}

TEST_CASE("normalization maxima") {
  RawTrace one({"x"}, 3, {3, 5, 2});
  CHECK(build_normalization(one).maxima == std::vector<double>{5.0});
  RawTrace zeros({"x"}, 3, {0, 0, 0});
  CHECK(build_normalization(zeros).maxima == std::vector<double>{1.0});
  RawTrace two({"x", "y"}, 2, {1, 10, 4, 2});
  CHECK(build_normalization(two).maxima == std::vector<double>{4.0, 10.0});
  CHECK_THROWS_AS(build_normalization(RawTrace{}), ValidationError);
}

TEST_CASE("normalize keeps overshoot") {
  NormalizationMap map{{5.0}};
  RawTrace raw({"x"}, 3, {5, 0, 8});
  const auto obs = normalize(raw, map);
  CHECK(obs[0].values[0] == 1.0);
  CHECK(obs[1].values[0] == 0.0);
  CHECK(obs[2].values[0] == doctest::Approx(1.6));
  CHECK(obs[2].time_index == 3);
  CHECK_THROWS_AS(normalize(RawTrace({"x", "y"}, 1, {1, 1}), map), ValidationError);
}

TEST_CASE("split training") {
  Engine eng(1);
  const auto pts = testutil::uniform_points(15, 2, eng);
  const auto a = split_training(pts, 5, 10, 42);
  CHECK(a.part1.size() == 5);
  CHECK(a.part2.size() == 10);
  std::set<TimeIndex> seen;
  for (const auto& p : a.part1) seen.insert(p.time_index);
  for (const auto& p : a.part2) seen.insert(p.time_index);
  CHECK(seen.size() == 15);
  const auto b = split_training(pts, 5, 10, 42);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.part1[i].time_index == b.part1[i].time_index);
  CHECK_THROWS_AS(split_training(std::span(pts).first(10), 5, 10, 42), ValidationError);
}

TEST_CASE("knn distance small cases") {
  PointSet refs(2, {0, 0, 1, 0, 0, 1});
  const std::vector<double> origin{0.0, 0.0};
  CHECK(knn_distance(origin, refs, 1).distance == 0.0);
  PointSet refs2(2, {1, 0, 0, 1, 3, 0});
  const auto r = knn_distance(origin, refs2, 2);
  CHECK(r.distance == 1.0);
  CHECK(r.index == 1);
  CHECK(knn_distance(origin, refs2, 1).index == 0);
  CHECK_THROWS_AS(knn_distance(origin, refs2, 4), ValidationError);
}

TEST_CASE("knn matches exhaustive sort") {
  Engine eng(7);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t d = 1 + uniform_below(eng, 12);
    const auto refs = testutil::to_set(testutil::uniform_points(50, d, eng));
    const auto q = testutil::uniform_points(1, d, eng).front();
    for (std::size_t k : {1, 3, 10}) {
      const auto got = knn_distance(q.values, refs, k);
      const auto want = testutil::brute_kth(q.values, refs, k);
      CHECK(got.distance == doctest::Approx(want.first).epsilon(1e-12));
      CHECK(got.index == want.second);
    }
  }
}

TEST_CASE("duplicated references count separately") {
  PointSet refs(1, {0.5, 0.5, 0.9});
  const std::vector<double> x{0.5};
  CHECK(knn_distance(x, refs, 2).distance == 0.0);
  CHECK(knn_distance(x, refs, 2).index == 1);
  CHECK(knn_distance(x, refs, 3).distance == doctest::Approx(0.4));
}

TEST_CASE("percentile rank rule") {
  CHECK(percentile_rank(5, 0.2) == 5);
  CHECK(percentile_rank(100, 0.05) == 96);
  CHECK(percentile_rank(1, 0.5) == 1);
  CHECK(percentile_rank(50, 0.05) == 48);
}

TEST_CASE("train matches independent recomputation") {
  Engine eng(3);
  const auto data = gaussian_points(600, 2, 0.5, 0.1, eng);
  DetectorConfig cfg;
  cfg.seed = 99;
  const auto model = train(data, cfg);
  const auto split = split_training(data, cfg.m1, cfg.m2, cfg.seed);
  const auto refs = PointSet::from_observations(split.part2);
  std::vector<double> dist;
  for (const auto& p : split.part1) dist.push_back(testutil::brute_kth(p.values, refs, cfg.k).first);
  std::sort(dist.begin(), dist.end());
  CHECK(model.baseline_stat == doctest::Approx(dist[percentile_rank(cfg.m1, cfg.alpha) - 1]).epsilon(1e-12));
  CHECK(model.reference_set == refs);
  CHECK(model.d == 2);
  CHECK(train(data, cfg) == model);
}

TEST_CASE("train rejects bad input") {
  std::vector<Observation> dup(20, Observation{{0.3, 0.3}, 1});
  DetectorConfig cfg;
  cfg.m1 = 5;
  cfg.m2 = 10;
  CHECK_THROWS_AS(train(dup, cfg), ComputationError);
  std::vector<Observation> neg(20, Observation{{-0.1, 0.3}, 1});
  CHECK_THROWS_AS(train(neg, cfg), ValidationError);
  cfg.k = 11;
  Engine eng(1);
  CHECK_THROWS_AS(train(testutil::uniform_points(20, 2, eng), cfg), ValidationError);
  cfg.k = 2;
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.alpha = 0.05;
  cfg.evidence_mode = EvidenceMode::LegacyGem;
  CHECK_THROWS_AS(train(testutil::uniform_points(20, 2, eng), cfg), ValidationError);
}

TEST_CASE("legacy GEM training") {
  Engine eng(11);
  const auto data = testutil::uniform_points(15, 2, eng);
  LegacyGemConfig lc;  // n1=5, n2=10, M=4, k=2, s=1, gamma=1
  const auto model = train_legacy(data, lc, 5);
  const auto split = split_training(data, 5, 10, 5);
  const auto refs = PointSet::from_observations(split.part2);
  std::vector<double> lm;
  for (const auto& p : split.part1) lm.push_back(knn_distance(p.values, refs, 2).distance);
  std::sort(lm.begin(), lm.end());
  CHECK(model.baseline_stat == doctest::Approx(lm[3]).epsilon(1e-12));
}

TEST_CASE("legacy edge length with s=2 gamma=2") {
  LegacyGemConfig lc;
  lc.k = 2;
  lc.s = 2;
  lc.gamma = 2.0;
  PointSet refs(2, {0.0, 0.0, 3.0, 0.0, 0.0, 4.0, 5.0, 5.0, 9.0, 9.0});
  const std::vector<double> x{0.0, 1.0};
  const auto nb = nearest_neighbors(x, refs, 2);
  // neighbors (0,0) at 1 and (0,4) at 3
  CHECK(legacy_edge_length(nb, lc) == doctest::Approx(1.0 + 9.0));
  lc.s = 1;
  CHECK(legacy_edge_length(nb, lc) == doctest::Approx(9.0));
}

TEST_CASE("evidence examples") {
  auto model = testutil::hand_model({{0.0, 0.0}, {5.0, 5.0}}, 0.5, 1);
  SUBCASE("zero at baseline") {
    const std::vector<double> x{0.5, 0.0};
    CHECK(evidence(model, x).d_t == doctest::Approx(0.0));
  }
  SUBCASE("e times baseline in 2 dims") {
    const std::vector<double> x{0.5 * std::exp(1.0), 0.0};
    CHECK(evidence(model, x).d_t == doctest::Approx(2.0));
  }
  SUBCASE("coincident point uses the finite cap") {
    const std::vector<double> x{5.0, 5.0};
    const auto ev = evidence(model, x);
    CHECK(ev.d_t == neg_cap(2, 0.5));
    CHECK(std::isfinite(ev.d_t));
  }
  SUBCASE("offset vector and distance agree") {
    const std::vector<double> x{0.8, 0.1};
    const auto ev = evidence(model, x);
    CHECK(ev.y_t == std::vector<double>{0.8, 0.1});
    CHECK(ev.l_t * ev.l_t == doctest::Approx(0.8 * 0.8 + 0.1 * 0.1));
  }
  SUBCASE("dimension mismatch") {
    const std::vector<double> x{0.1};
    CHECK_THROWS_AS(evidence(model, x), ValidationError);
  }
}

TEST_CASE("legacy evidence subtracts") {
  auto model = testutil::hand_model({{0.0}, {5.0}}, 0.3, 1, EvidenceMode::LegacyGem);
  LegacyGemConfig lc;
  lc.k = 1;
  lc.s = 1;
  model.legacy = lc;
  const std::vector<double> x{0.7};
  CHECK(evidence(model, x).d_t == doctest::Approx(0.4));
}

TEST_CASE("log-ratio evidence is increasing in distance") {
  auto model = testutil::hand_model({{0.0, 0.0}}, 0.2, 1);
  double prev = -std::numeric_limits<double>::infinity();
  for (double r = 0.01; r < 2.0; r += 0.01) {
    const std::vector<double> x{r, 0.0};
    const double d = evidence(model, x).d_t;
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("state update recursion") {
  DetectorState st(3);
  EvidenceResult ev;
  ev.d_t = -1.0;
  st.update(ev);
  CHECK(st.s() == 0.0);
  CHECK(st.last_zero() == 1);
  ev.d_t = 2.0;
  st.update(ev);
  ev.d_t = 3.0;
  st.update(ev);
  CHECK(st.s() == 5.0);
  CHECK(st.last_zero() == 1);
  ev.d_t = -5.0;
  st.update(ev);
  CHECK(st.s() == 0.0);
  CHECK(st.last_zero() == 4);
  CHECK(st.history().size() == 3);
  CHECK(st.history().front().t == 2);

  DetectorState half;
  ev.d_t = 0.5;
  half.update(ev);
  ev.d_t = -0.5;
  half.update(ev);
  CHECK(half.s() == 0.0);
  CHECK(half.last_zero() == 2);
}

TEST_CASE("alarm is inclusive") {
  CHECK_FALSE(check_alarm(9.99, 10.0));
  CHECK(check_alarm(10.0, 10.0));
}

TEST_CASE("statistic stays nonnegative and replays identically") {
  Engine eng(5);
  const auto data = gaussian_points(600, 3, 0.5, 0.1, eng);
  auto model = std::make_shared<const OditModel>(train(data, DetectorConfig{}));
  const auto stream = gaussian_anomaly_stream(300, 3, 150, eng);
  OditDetector a(model), b(model);
  for (const auto& x : stream) {
    const auto sa = a.step(x.values);
    const auto sb = b.step(x.values);
    CHECK(sa.s >= 0.0);
    CHECK(sa.s == sb.s);
  }
}

TEST_CASE("alarm time is nondecreasing in h") {
  Engine eng(6);
  const auto data = gaussian_points(600, 2, 0.5, 0.1, eng);
  const auto model = train(data, DetectorConfig{});
  const auto stream = gaussian_anomaly_stream(200, 2, 100, eng);
  std::optional<TimeIndex> prev;
  for (double h = 0.5; h < 200.0; h *= 1.3) {
    const auto o = run_trial(model, h, stream, std::nullopt);
    if (prev) {
      REQUIRE(o.alarm_time.has_value() == true);
      CHECK(*o.alarm_time >= *prev);
    }
    if (!o.alarm_time) break;
    prev = o.alarm_time;
  }
}

TEST_CASE("threshold grid calibration") {
  ThresholdGrid grid;
  const auto c = grid.candidates();
  CHECK(c.front() == doctest::Approx(grid.lowest));
  std::vector<double> maxima{3.0, 1.0, 7.0, 2.0};
  CHECK(threshold_from_maxima(maxima, 1.0, grid).h == c.front());
  const auto top = threshold_from_maxima(maxima, 1e-9, grid);
  CHECK(top.estimated_fpr == 0.0);
  CHECK(top.h > 7.0);
  CHECK_THROWS_AS(threshold_from_maxima(std::vector<double>{2e6}, 0.5, grid), ComputationError);
}

TEST_CASE("calibrated threshold holds on fresh trials") {
  Engine eng(8);
  const auto data = gaussian_points(550, 2, 0.5, 0.1, eng);
  const auto model = train(data, DetectorConfig{});
  const auto source = [](std::uint64_t seed, std::size_t horizon) {
    Engine e(seed);
    return gaussian_points(horizon, 2, 0.5, 0.1, e);
  };
  const auto cal = calibrate_threshold(model, source, 0.05, 50, 2000, 21);
  CHECK(cal.estimated_fpr <= 0.05);
  std::size_t alarms = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto stream = source(derive_seed(777, {i}), 50);
    if (max_statistic(model, stream) >= cal.h) ++alarms;
  }
  // 3-sigma binomial band around the target
  CHECK(static_cast<double>(alarms) / 1000.0 <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 1000.0));
}
