#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "odit/error.hpp"
#include "odit/traffic_sim.hpp"

using namespace odit;

namespace {

double mean_of(const std::vector<std::int64_t>& v, std::size_t from = 0) {
  double s = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) s += static_cast<double>(v[i]);
  return s / static_cast<double>(v.size() - from);
}

}  // namespace

TEST_CASE("standard profiles") {
  const auto cam = standard_profile("security_camera");
  CHECK(cam.always_on());
  CHECK(cam.active_mean == 80.0);
  CHECK(standard_profile("smart_tv").session_len == 900);
  CHECK(standard_profile("thermostat").active_prob == 0.25);
  CHECK_THROWS_AS(standard_profile("toaster"), ValidationError);
  auto bad = standard_profile("thermostat");
  bad.idle_prob = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("camera counts are rounded normal draws around 80") {
  const auto v = generate_device(standard_profile("security_camera"), 100000, 3);
  const double m = mean_of(v);
  CHECK(m == doctest::Approx(80.0).epsilon(0.002));
  double ss = 0.0;
  for (auto c : v) ss += (static_cast<double>(c) - m) * (static_cast<double>(c) - m);
  // rounding adds 1/12 to the variance
  CHECK(std::sqrt(ss / static_cast<double>(v.size())) == doctest::Approx(std::sqrt(25.0 + 1.0 / 12.0)).epsilon(0.02));
}

TEST_CASE("vanishing sigma gives a constant series") {
  auto p = standard_profile("security_camera");
  p.active_mean = 25.0;
  p.sigma = 1e-9;
  const auto v = generate_device(p, 500, 1);
  for (auto c : v) CHECK(c == 25);
}

TEST_CASE("thermostat active-state mean and session frequency") {
  auto p = standard_profile("thermostat");
  p.active_prob = 1.0;
  p.idle_prob = 0.0;
  CHECK(mean_of(generate_device(p, 100000, 4)) == doctest::Approx(25.0).epsilon(0.004));

  const auto base = standard_profile("thermostat");
  const std::size_t steps = 200000;
  const auto v = generate_device(base, steps, 5);
  // sessions are 5 steps; classify each session by its mean count
  std::size_t sessions = 0, active = 0;
  for (std::size_t s = 0; s + 5 <= steps; s += 5) {
    double m = 0.0;
    for (std::size_t r = s; r < s + 5; ++r) m += static_cast<double>(v[r]);
    ++sessions;
    if (m / 5.0 > 15.0) ++active;
  }
  const double n = static_cast<double>(sessions);
  const double sd = std::sqrt(0.25 * 0.75 / n);
  CHECK(std::abs(static_cast<double>(active) / n - 0.25) < 3.0 * sd + 0.002);
}

TEST_CASE("outputs are nonnegative integers and deterministic") {
  const auto topo = Topology::cycled(3, 7);
  const auto a = generate_network(topo, 2000, 11, 1);
  const auto b = generate_network(topo, 2000, 11, 4);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(a.nodes[n].counts() == b.nodes[n].counts());
    for (auto c : a.nodes[n].counts()) CHECK(c >= 0);
  }
  const auto c = generate_network(topo, 2000, 12, 1);
  CHECK(a.nodes[0].counts() != c.nodes[0].counts());
}

TEST_CASE("single device network reduces to the device generator") {
  const auto prof = standard_profile("smart_light");
  Topology topo;
  topo.nodes = {{prof}};
  const auto t = generate_network(topo, 300, 8, 1);
  CHECK(t.nodes[0].counts() == generate_device(prof, 300, device_seed(8, 0, 0)));
}

TEST_CASE("target selection") {
  const auto topo = Topology::cycled(10, 10);
  AttackSpec spec;
  spec.selection_seed = 3;
  const auto targets = select_targets(topo, spec);
  CHECK(targets.size() == 10);
  CHECK(std::is_sorted(targets.begin(), targets.end()));
  spec.fraction_compromised = 0.001;
  CHECK_THROWS_AS(select_targets(topo, spec), ValidationError);
  spec.devices = {{1, 2}};
  CHECK(select_targets(topo, spec) == std::vector<DeviceRef>{{1, 2}});
  spec.devices = {{10, 0}};
  CHECK_THROWS_AS(select_targets(topo, spec), ValidationError);
}

TEST_CASE("attack injection keeps unattacked and pre-onset data") {
  const auto topo = Topology::cycled(4, 10);
  const auto clean = generate_network(topo, 3000, 21, 1);
  AttackSpec spec;
  spec.onset = 1001;
  spec.selection_seed = 5;
  const auto hit = inject_attack(clean, spec);
  CHECK(hit.attacked.size() == 4);
  CHECK(hit.onset == TimeIndex{1001});
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t j = 0; j < 10; ++j) {
      const bool attacked = std::find(hit.attacked.begin(), hit.attacked.end(), DeviceRef{n, j}) != hit.attacked.end();
      for (std::size_t r = 0; r < 3000; ++r) {
        if (!attacked || r < 1000) {
          if (hit.nodes[n].at(r, j) != clean.nodes[n].at(r, j)) {
            FAIL("row changed outside the attack");
          }
        }
      }
    }
  }
  spec.rate_increase = 0.0;
  const auto same = inject_attack(clean, spec);
  for (std::size_t n = 0; n < 4; ++n) CHECK(same.nodes[n].counts() == clean.nodes[n].counts());
}

TEST_CASE("camera attack raises the mean by ten percent") {
  Topology topo;
  topo.nodes = {{standard_profile("security_camera")}};
  const auto clean = generate_network(topo, 11000, 2, 1);
  AttackSpec spec;
  spec.onset = 1001;
  spec.devices = {{0, 0}};
  const auto hit = inject_attack(clean, spec);
  const auto& c = hit.nodes[0].counts();
  CHECK(std::abs(mean_of(c, 1000) - 88.0) < 0.5);
}

TEST_CASE("bounded attack duration") {
  Topology topo;
  topo.nodes = {{standard_profile("security_camera")}};
  const auto clean = generate_network(topo, 400, 2, 1);
  AttackSpec spec;
  spec.onset = 101;
  spec.duration = 100;
  spec.rate_increase = 1.0;
  spec.devices = {{0, 0}};
  const auto hit = inject_attack(clean, spec);
  for (std::size_t r = 200; r < 400; ++r) CHECK(hit.nodes[0].at(r, 0) == clean.nodes[0].at(r, 0));
  CHECK(mean_of(std::vector<std::int64_t>(hit.nodes[0].counts().begin() + 100, hit.nodes[0].counts().begin() + 200)) >
        140.0);
}

TEST_CASE("40 hours of 100 devices is generated quickly") {
  const auto topo = Topology::cycled(1, 100);
  const auto start = std::chrono::steady_clock::now();
  const auto t = generate_network(topo, 144000, 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(t.steps() == 144000);
  CHECK(secs < 60.0);
}

TEST_CASE("gaussian count trace") {
  const auto tr = gaussian_count_trace(2000, 2, 1001, 4);
  double m = 0.0;
  for (std::size_t r = 0; r < 1000; ++r) m += static_cast<double>(tr.at(r, 0));
  CHECK(m / 1000.0 == doctest::Approx(50.0).epsilon(0.02));
  for (auto c : tr.counts()) {
    CHECK(c >= 0);
    CHECK(c <= 100);
  }
}
