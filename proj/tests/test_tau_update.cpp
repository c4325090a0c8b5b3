#include "doctest.h"
#include "test_util.hpp"

#include "nlos/photon.hpp"
#include "nlos/tau_update.hpp"

#include <cmath>

using namespace nlos;

namespace {

// Brute-force minimum of f over an n-point uniform grid of [0, 1].
std::pair<double, double> grid_min(const BinProblem& p, int n) {
  double best = std::numeric_limits<double>::infinity(), arg = 0;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    const double f = bin_objective(p, t);
    if (f < best) {
      best = f;
      arg = t;
    }
  }
  return {best, arg};
}

BinProblem random_problem(std::mt19937_64& rng, int which) {
  std::uniform_real_distribution<double> ud(0, 1);
  BinProblem p;
  p.pulses = static_cast<std::uint32_t>(1 + std::floor(std::pow(10.0, 3 * ud(rng))));
  p.mu = std::pow(10.0, -1 + 5 * ud(rng));
  p.s = -0.5 + 2 * ud(rng);
  if (which == 0) p.d = 0;
  else if (which == 1) p.d = p.pulses;
  else p.d = std::uniform_int_distribution<std::uint32_t>(1, std::max(1u, p.pulses - 1))(rng);
  if (which == 2 && p.pulses == 1) p.pulses = 2;
  return p;
}

MeasurementGeometry geo_3x3(int Q) { return make_confocal_scan(3, 3, 0.5, 0.5, 32e-12, Q); }

}  // namespace

TEST_CASE("closed-form cases") {
  SUBCASE("no events and no pull") {
    for (std::uint32_t n : {1u, 10u, 100000u})
      for (double mu : {1e-3, 1.0, 1e6}) CHECK(solve_bin({0, n, mu, 0.0}) == 0.0);
  }
  SUBCASE("every pulse detected") {
    const BinProblem p{100, 100, 1e6, 0.5};
    const double expect = 0.5 * (0.5 + std::sqrt(0.25 + 2.0 * 100 / 1e6));
    CHECK(expect == doctest::Approx(0.500099980).epsilon(1e-9));
    CHECK(solve_bin(p) == doctest::Approx(expect).epsilon(1e-15));
    const auto [fmin, arg] = grid_min(p, 1000001);
    CHECK(std::abs(arg - solve_bin(p)) <= 1e-6);
    CHECK(bin_objective(p, solve_bin(p)) <= fmin + 1e-9);
  }
  SUBCASE("interior cubic root") {
    const BinProblem p{5, 100, 50, 0.05};
    const double t = solve_bin(p);
    CHECK(t > 0);
    CHECK(t < 1);
    CHECK(std::abs(bin_cubic(p, t)) <= 1e-12);
    CHECK(bin_objective(p, t) <= grid_min(p, 100001).first + 1e-9);
  }
}

TEST_CASE("1000 random problems against a 1e5-point grid") {
  std::mt19937_64 rng(2024);
  double worst_gap = -1e300, worst_cubic = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_problem(rng, t % 3);
    const double x = solve_bin(p);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    const double gap = bin_objective(p, x) - grid_min(p, 100001).first;
    worst_gap = std::max(worst_gap, gap);
    CHECK(gap <= 1e-9);
    if (p.d > 0 && p.d < p.pulses) {
      worst_cubic = std::max(worst_cubic, std::abs(bin_cubic(p, x)));
      CHECK(std::abs(bin_cubic(p, x)) <= 1e-12);
    }
  }
  MESSAGE("worst f gap " << worst_gap << ", worst |p(tau)| " << worst_cubic);
}

TEST_CASE("solution is nondecreasing in s") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    auto p = random_problem(rng, t % 3);
    double prev = -1;
    for (double s = -1.0; s <= 2.0; s += 0.05) {
      p.s = s;
      const double x = solve_bin(p);
      CHECK(x >= prev - 1e-12);
      prev = x;
    }
  }
}

TEST_CASE("update_tau") {
  const auto geo = geo_3x3(64);
  const PatchConfig cfg{{3, 3, 64}, {3, 3, 64}};
  PhotonHistogram h;
  h.geometry = geo;
  h.pulses = 1000;
  h.counts.assign(geo.signal_size(), 0);

  SUBCASE("all zero") {
    const auto t = update_tau(h, TransientSignal(geo), TransientSignal(geo), 1.0, 1.0, cfg);
    CHECK(t.values.isZero(0));
  }
  SUBCASE("data dominates with a weak pull") {
    std::mt19937_64 rng(3);
    PhotonHistogram big = h;
    big.pulses = 1000000;
    for (auto& c : big.counts) c = std::uniform_int_distribution<std::uint32_t>(0, 50000)(rng);
    TransientSignal a(geo, test::random_vector(geo.signal_size(), rng, 0, 1));
    TransientSignal b(geo, test::random_vector(geo.signal_size(), rng, 0, 1));
    const auto t = update_tau(big, a, b, 0.5e-6, 0.5e-6, cfg);
    for (std::size_t i = 0; i < big.counts.size(); ++i)
      CHECK(std::abs(t.values[i] - big.counts[i] / 1e6) <= 1e-3);
  }
  SUBCASE("assembly matches a per-bin grid oracle") {
    std::mt19937_64 rng(4);
    for (auto& c : h.counts) c = std::uniform_int_distribution<std::uint32_t>(0, 40)(rng);
    h.counts[0] = 1000;
    TransientSignal pr(geo, test::random_vector(geo.signal_size(), rng, 0, 0.05));
    TransientSignal au(geo, test::random_vector(geo.signal_size(), rng, 0, 0.05));
    const double lt = 3000, l = 5000;
    const auto t = update_tau(h, pr, au, lt, l, cfg);
    const int n = 20001;
    for (Eigen::Index i = 0; i < t.values.size(); ++i) {
      // Minimize nll + lt (x - pr)^2 + l (x - au)^2 directly on the grid.
      double best = std::numeric_limits<double>::infinity(), arg = 0;
      for (int g = 0; g < n; ++g) {
        const double x = double(g) / (n - 1);
        const double f = bin_nll(h.counts[i], h.pulses, x) + lt * (x - pr.values[i]) * (x - pr.values[i]) +
                         l * (x - au.values[i]) * (x - au.values[i]);
        if (f < best) {
          best = f;
          arg = x;
        }
      }
      CHECK(std::abs(t.values[i] - arg) <= 1.0 / (n - 1));
    }
  }
  SUBCASE("never increases the subproblem objective") {
    std::mt19937_64 rng(6);
    for (auto& c : h.counts) c = std::uniform_int_distribution<std::uint32_t>(0, 30)(rng);
    TransientSignal pr(geo, test::random_vector(geo.signal_size(), rng, 0, 0.05));
    TransientSignal au(geo, test::random_vector(geo.signal_size(), rng, 0, 0.05));
    const Eigen::VectorXd prev = test::random_vector(geo.signal_size(), rng, 0.001, 0.05);
    const auto t = update_tau(h, pr, au, 100, 200, cfg);
    auto obj = [&](const Eigen::VectorXd& x) {
      return nll(x, h) + 100 * (x - pr.values).squaredNorm() + 200 * (x - au.values).squaredNorm();
    };
    CHECK(obj(t.values) <= obj(prev));
    CHECK((t.values.array() >= 0).all());
    CHECK((t.values.array() < 1).all());
  }
  SUBCASE("overlapping tiling is rejected") {
    CHECK_THROWS_AS(update_tau(h, TransientSignal(geo), TransientSignal(geo), 1, 1,
                               PatchConfig{{3, 3, 8}, {1, 1, 8}}),
                    ConfigError);
  }
}

TEST_CASE("adaptive lambda") {
  MeasurementGeometry g;
  g.num_bins = 1;
  g.pairs.assign(1, MeasurementPair{});
  PhotonHistogram h;
  h.geometry = g;
  h.pulses = 100;
  h.counts = {5};
  const TransientSignal tau0(g, Eigen::VectorXd::Constant(1, 0.05));

  SUBCASE("single-bin value") {
    // blend (P*(DS) + Au)/2 = 0.03
    const auto r = adaptive_lambda(h, tau0, TransientSignal(g, Eigen::VectorXd::Constant(1, 0.02)),
                                   TransientSignal(g, Eigen::VectorXd::Constant(1, 0.04)));
    const double num = -95 * std::log(0.95) - 5 * std::log(0.05);
    CHECK(r.value == doctest::Approx(num / 0.0004).epsilon(1e-10));
    CHECK(r.value == doctest::Approx(49630.0).epsilon(1e-4));
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("doubling the residual divides by four") {
    const auto a = adaptive_lambda(h, tau0, TransientSignal(g, Eigen::VectorXd::Constant(1, 0.03)),
                                   TransientSignal(g, Eigen::VectorXd::Constant(1, 0.03)));
    const auto b = adaptive_lambda(h, tau0, TransientSignal(g, Eigen::VectorXd::Constant(1, 0.01)),
                                   TransientSignal(g, Eigen::VectorXd::Constant(1, 0.01)));
    CHECK(a.value == doctest::Approx(4 * b.value).epsilon(1e-12));
  }
  SUBCASE("empty data falls back to one") {
    PhotonHistogram z = h;
    z.counts = {0};
    const auto r = adaptive_lambda(z, TransientSignal(g), TransientSignal(g, Eigen::VectorXd::Constant(1, 0.1)),
                                   TransientSignal(g));
    CHECK(r.degenerate);
    CHECK(r.value == 1.0);
    CHECK_FALSE(r.warning.empty());
  }
  SUBCASE("zero residual falls back to one") {
    const auto r = adaptive_lambda(h, tau0, tau0, tau0);
    CHECK(r.degenerate);
    CHECK(r.value == 1.0);
  }
}
