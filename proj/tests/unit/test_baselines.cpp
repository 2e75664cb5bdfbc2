#include <doctest.h>

#include <cmath>
#include <memory>

#include "helpers.hpp"
#include "odit/baselines.hpp"
#include "odit/error.hpp"

using namespace odit;

namespace {

std::vector<std::int64_t> mixture_samples(std::size_t n, double p, double hi, double lo, double sigma, std::uint64_t seed) {
  Engine eng(seed);
  std::vector<std::int64_t> out(n);
  for (auto& v : out) {
    const double mean = uniform01(eng) < p ? hi : lo;
    const double x = std::round(mean + sigma * standard_normal(eng));
    v = x > 0.0 ? static_cast<std::int64_t>(x) : 0;
  }
  return out;
}

RawTrace column_trace(const std::vector<std::int64_t>& v) { return RawTrace({"0"}, v.size(), v); }

}  // namespace

TEST_CASE("mixture LLR closed forms") {
  DeviceMixture m{1.0, 80.0, 0.0, 5.0, 1.1};
  CHECK(mixture_llr(90.0, m) == doctest::Approx(1.92).epsilon(1e-12));
  DeviceMixture same = m;
  same.attack_scale = 1.0;
  for (double x = 0; x < 200; x += 7) CHECK(mixture_llr(x, same) == 0.0);
  DeviceMixture mix{0.25, 25.0, 5.0, 5.0, 1.1};
  CHECK(mixture_llr(60.0, mix) > 0.0);
  // far tails stay finite through the density floor
  CHECK(std::isfinite(mixture_llr(1e6, mix)));
}

TEST_CASE("cusum step clamps and accumulates") {
  CHECK(cusum_step(0.0, -1.0) == 0.0);
  CHECK(cusum_step(2.0, 3.0) == 5.0);
  CHECK(cusum_step(0.5, -0.5) == 0.0);
}

TEST_CASE("cooperative CUSUM sums device statistics") {
  const auto topo = Topology::cycled(2, 5);
  CooperativeCusum cc(clairvoyant_params(topo, 0.1), 50.0);
  CHECK(cc.global_s() == 0.0);
  const auto trace = generate_network(topo, 300, 3, 1);
  for (std::size_t r = 0; r < 300; ++r) {
    std::vector<std::span<const std::int64_t>> rows{trace.nodes[0].row(r), trace.nodes[1].row(r)};
    cc.step(rows);
    double sum = 0.0, mx = 0.0;
    for (const auto& node : cc.device_stats()) {
      for (double s : node) {
        CHECK(s >= 0.0);
        sum += s;
        mx = std::max(mx, s);
      }
    }
    CHECK(cc.global_s() == doctest::Approx(sum));
    CHECK(cc.global_s() >= mx);
  }
}

TEST_CASE("clairvoyant CUSUM detects a camera attack") {
  Topology topo;
  topo.nodes = {{standard_profile("security_camera"), standard_profile("thermostat")}};
  const auto clean = generate_network(topo, 400, 9, 1);
  AttackSpec spec;
  spec.onset = 201;
  spec.devices = {{0, 0}};
  const auto hit = inject_attack(clean, spec);
  CooperativeCusum cc(clairvoyant_params(topo, 0.1), 15.0);
  for (std::size_t r = 0; r < 400; ++r) {
    std::vector<std::span<const std::int64_t>> rows{hit.nodes[0].row(r)};
    cc.step(rows);
  }
  REQUIRE(cc.alarm_time().has_value());
  CHECK(*cc.alarm_time() > 200);
  CHECK(*cc.alarm_time() < 260);
}

TEST_CASE("EM recovers a two-component mixture") {
  const auto s = mixture_samples(100000, 0.25, 25.0, 5.0, 5.0, 17);
  const auto fit = fit_mixture(s);
  CHECK_FALSE(fit.collapsed);
  CHECK(std::abs(fit.mean_high - 25.0) <= 0.5);
  CHECK(std::abs(fit.mean_low - 5.0) <= 0.5);
  CHECK(std::abs(fit.weight_high - 0.25) <= 0.05);
}

TEST_CASE("EM collapses on a single-state device") {
  const auto s = mixture_samples(20000, 1.0, 80.0, 0.0, 5.0, 18);
  const auto fit = fit_mixture(s);
  CHECK(fit.collapsed);
  CHECK(fit.weight_high == doctest::Approx(1.0));
  CHECK(fit.mean_high == doctest::Approx(80.0).epsilon(0.01));
}

TEST_CASE("EM rejects empty input") { CHECK_THROWS_AS(fit_mixture(std::vector<std::int64_t>{}), ValidationError); }

TEST_CASE("G-CUSUM recovers the attack scale in most seeds") {
  int good = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto nominal = mixture_samples(50000, 0.25, 25.0, 5.0, 5.0, seed);
    const auto attack = mixture_samples(20000, 0.25, 27.5, 5.5, 5.0, seed + 100);
    const auto params = fit_gcusum({column_trace(nominal)}, {column_trace(attack)});
    const auto& d = params.nodes[0][0];
    if (std::abs(d.attack_scale - 1.1) <= 0.03 && std::abs(d.active_mean - 25.0) <= 0.5 &&
        std::abs(d.active_prob - 0.25) <= 0.05) {
      ++good;
    }
  }
  CHECK(good >= 2);
  CHECK_THROWS_AS(fit_gcusum({column_trace({1, 2})}, {RawTrace({"0"}, 0, {})}), ValidationError);
}

TEST_CASE("filter detector") {
  RawTrace tr({"a", "b"}, 4, {1, 2, 3, 4, 0, 9, 2, 1});
  SUBCASE("threshold above the maximum never alarms") {
    FilterDetector f({{100.0, 100.0}});
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<std::span<const std::int64_t>> rows{tr.row(r)};
      CHECK_FALSE(f.step(rows));
    }
    CHECK_FALSE(f.alarm_time().has_value());
  }
  SUBCASE("half threshold alarms at the first nonzero count") {
    FilterDetector f({{0.5, 0.5}});
    std::vector<std::span<const std::int64_t>> rows{tr.row(0)};
    CHECK(f.step(rows));
    CHECK(f.alarm_time() == TimeIndex{1});
    CHECK(f.flagged().size() == 2);
  }
  SUBCASE("flags only the exceeding device") {
    FilterDetector f({{5.0, 5.0}});
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<std::span<const std::int64_t>> rows{tr.row(r)};
      f.step(rows);
    }
    CHECK(f.alarm_time() == TimeIndex{3});
    CHECK(f.flagged() == std::vector<DeviceRef>{{0, 1}});
  }
  CHECK_THROWS_AS(FilterDetector(std::vector<std::vector<double>>{{0.0}}), ValidationError);
  const std::vector<double> th{4.0, 2.0};
  const auto sc = filter_scores(tr, th, 0, 4);
  CHECK(sc[0] == doctest::Approx(0.75));
  CHECK(sc[1] == doctest::Approx(4.5));
}

TEST_CASE("percentile thresholds") {
  std::vector<std::int64_t> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int64_t>(i);
  const auto th = percentile_thresholds(column_trace(v), 0.999);
  CHECK(th[0] >= 998.0);
  CHECK(th[0] <= 999.0);
  const auto zero = percentile_thresholds(column_trace(std::vector<std::int64_t>(10, 0)), 0.5);
  CHECK(zero[0] > 0.0);
}

TEST_CASE("Renyi divergence properties") {
  const std::vector<double> p{0.2, 0.5, 0.3};
  const std::vector<double> q{0.4, 0.4, 0.2};
  CHECK(renyi_divergence(p, p, 2.0) == doctest::Approx(0.0));
  CHECK(renyi_divergence(p, q, 2.0) > 0.0);
  CHECK(renyi_divergence(p, q, 1.0 + 1e-7) == doctest::Approx(kl_divergence(p, q)).epsilon(1e-6));
  CHECK(renyi_divergence(p, q, 1.0 - 1e-7) == doctest::Approx(kl_divergence(p, q)).epsilon(1e-6));
  CHECK_THROWS_AS(renyi_divergence(p, q, 1.0), ValidationError);
  RenyiConfig bad;
  bad.window_len = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("Renyi detector is zero until the window fills and reacts to a shift") {
  const auto topo = Topology::cycled(1, 10);
  const auto nominal = generate_network(topo, 20000, 5, 1);
  RenyiConfig cfg;
  auto model = std::make_shared<const RenyiModel>(train_renyi(nominal.nodes, cfg));
  const auto clean = generate_network(topo, 600, 6, 1);
  AttackSpec spec;
  spec.onset = 301;
  spec.fraction_compromised = 1.0;
  spec.rate_increase = 1.0;
  const auto hit = inject_attack(clean, spec);
  RenyiDetector det(model, 1e9);
  double pre = 0.0, post = 0.0;
  for (std::size_t r = 0; r < 600; ++r) {
    std::vector<std::span<const std::int64_t>> rows{hit.nodes[0].row(r)};
    det.step(rows);
    if (r < cfg.window_len - 1) CHECK(det.statistic() == 0.0);
    CHECK(det.statistic() >= 0.0);
    if (r >= 100 && r < 300) pre = std::max(pre, det.statistic());
    if (r >= 400) post = std::min(post == 0.0 ? 1e300 : post, det.statistic());
  }
  CHECK(post > pre);
}
