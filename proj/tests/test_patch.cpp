#include "doctest.h"
#include "test_util.hpp"

#include "nlos/patch.hpp"

#include <algorithm>
#include <cmath>

using namespace nlos;

namespace {

MeasurementGeometry scan_geo(int nx, int ny, int Q) {
  return make_confocal_scan(nx, ny, 0.5, 0.5, 32e-12, Q);
}

double orth_error(const Eigen::MatrixXd& m) {
  return (m * m.transpose() - Eigen::MatrixXd::Identity(m.rows(), m.rows())).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd random_orthogonal(int n, std::mt19937_64& rng) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) a.col(i) = test::random_vector(n, rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

// Dense orthonormal DCT-II basis from its defining formula.
Eigen::MatrixXd dct_reference(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      d(i, k) = std::sqrt((k == 0 ? 1.0 : 2.0) / n) * std::cos(M_PI * (i + 0.5) * k / n);
  return d;
}

}  // namespace

TEST_CASE("patch extraction layout") {
  const auto geo = scan_geo(1, 1, 4);
  TransientSignal s(geo, Eigen::Vector4d(1, 2, 3, 4));
  PatchConfig cfg{{1, 1, 2}, {1, 1, 2}};
  const auto p = extract_patches(s, cfg);
  REQUIRE(p.cols() == 2);
  CHECK(p(0, 0) == 1);
  CHECK(p(1, 0) == 2);
  CHECK(p(0, 1) == 3);
  CHECK(p(1, 1) == 4);

  const auto geo2 = scan_geo(3, 3, 70);
  TransientSignal c(geo2, Eigen::VectorXd::Constant(geo2.signal_size(), 2.5));
  const auto pc = extract_patches(c, PatchConfig{{3, 3, 10}, {3, 3, 10}});
  CHECK((pc.array() == 2.5).all());
}

TEST_CASE("default patch config") {
  const auto cfg = PatchConfig::default_for(scan_geo(2, 5, 200));
  CHECK(cfg.shape == std::array<int, 3>{2, 3, 64});
  CHECK(cfg.non_overlapping());
}

TEST_CASE("aggregate inverts extract bit for bit") {
  std::mt19937_64 rng(31);
  for (const auto& [nx, ny, Q, shape] :
       {std::tuple{3, 3, 128, std::array<int, 3>{3, 3, 64}},
        std::tuple{5, 4, 100, std::array<int, 3>{2, 3, 64}},
        std::tuple{3, 3, 50, std::array<int, 3>{1, 1, 7}}}) {
    const auto geo = scan_geo(nx, ny, Q);
    TransientSignal s(geo, test::random_vector(geo.signal_size(), rng));
    const PatchConfig cfg{shape, shape};
    const auto back = aggregate_patches(extract_patches(s, cfg), cfg, geo);
    CHECK(back.values == s.values);
  }
}

TEST_CASE("overlapping aggregation") {
  const auto geo = scan_geo(3, 3, 20);
  const PatchConfig cfg{{2, 2, 4}, {1, 1, 1}};
  TransientSignal c(geo, Eigen::VectorXd::Constant(geo.signal_size(), 0.37));
  CHECK(aggregate_patches(extract_patches(c, cfg), cfg, geo).values == c.values);
  const auto z = extract_patches(TransientSignal(geo), cfg);
  CHECK(aggregate_patches(Eigen::MatrixXd::Zero(z.rows(), z.cols()), cfg, geo).values.isZero(0));
  CHECK_THROWS_AS(aggregate_patches(Eigen::MatrixXd::Zero(z.rows(), z.cols() + 1), cfg, geo),
                  ConfigError);
}

TEST_CASE("DCT dictionary") {
  for (int n : {1, 2, 3, 8, 64}) {
    const auto d = dct_matrix(n);
    CHECK((d - dct_reference(n)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(orth_error(d) <= 1e-12);
  }
  const SignalDictionary dict({3, 2, 4});
  const auto m = dict.matrix();
  CHECK(orth_error(m) <= 1e-12);
  // D = D_q (x) D_y (x) D_x with x fastest in the vectorized patch.
  Eigen::MatrixXd kron(24, 24);
  const auto dx = dct_reference(3), dy = dct_reference(2), dq = dct_reference(4);
  for (int a = 0; a < 24; ++a)
    for (int b = 0; b < 24; ++b)
      kron(a, b) = dq(a / 6, b / 6) * dy(a / 3 % 2, b / 3 % 2) * dx(a % 3, b % 3);
  CHECK((m - kron).cwiseAbs().maxCoeff() <= 1e-13);

  std::mt19937_64 rng(2);
  Eigen::MatrixXd p(24, 5);
  for (int i = 0; i < 5; ++i) p.col(i) = test::random_vector(24, rng);
  CHECK((dict.analyze(p) - m.transpose() * p).norm() <= 1e-12 * p.norm());
  CHECK((dict.synthesize(p) - m * p).norm() <= 1e-12 * p.norm());
  CHECK(dict.analyze(p).norm() == doctest::Approx(p.norm()).epsilon(1e-12));
}

TEST_CASE("keep threshold") {
  Eigen::VectorXd v(10);
  v << 5, 1, 9, 3, 7, 2, 8, 4, 6, 0;
  CHECK(keep_threshold(v, 0.3) == 7);
  CHECK(keep_threshold(v, 1.0) == 0);
  CHECK(std::isinf(keep_threshold(v, 0.0)));
  CHECK_THROWS_AS(keep_threshold(v, 1.5), ConfigError);
}

TEST_CASE("S update") {
  const SignalDictionary dict({3, 3, 8});
  std::mt19937_64 rng(41);
  const int n = 72, cols = 10;
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(n, cols);
  std::uniform_int_distribution<int> pick(0, n * cols - 1);
  const double rho = 0.05;
  const int keep = static_cast<int>(std::lround(rho * n * cols));
  for (int placed = 0; placed < keep;) {
    const int idx = pick(rng);
    if (s0.data()[idx] != 0) continue;
    s0.data()[idx] = (placed % 2 ? -1.0 : 1.0) * (1.0 + placed);
    ++placed;
  }
  const Eigen::MatrixXd p = dict.synthesize(s0);

  SUBCASE("exact synthesis is recovered") {
    const auto r = update_S(p, p, dict, rho);
    CHECK((r.S - s0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.kept == static_cast<std::size_t>(keep));
  }
  SUBCASE("rho = 1 keeps every coefficient") {
    Eigen::MatrixXd q(n, cols);
    for (int i = 0; i < cols; ++i) q.col(i) = test::random_vector(n, rng);
    const auto r = update_S(p, q, dict, 1.0);
    CHECK((r.S - dict.analyze(0.5 * (p + q))).cwiseAbs().maxCoeff() <= 1e-13);
  }
  SUBCASE("rho = 0 keeps nothing") {
    CHECK(update_S(p, p, dict, 0.0).S.isZero(0));
  }
  SUBCASE("no swap of a kept and a dropped coefficient lowers the objective") {
    Eigen::MatrixXd a(n, 2), b(n, 2);
    for (int i = 0; i < 2; ++i) {
      a.col(i) = test::random_vector(n, rng);
      b.col(i) = test::random_vector(n, rng);
    }
    const auto r = update_S(a, b, dict, 0.1);
    auto cost = [&](const Eigen::MatrixXd& s) {
      const auto ds = dict.synthesize(s);
      return (a - ds).squaredNorm() + (b - ds).squaredNorm();
    };
    const double base = cost(r.S);
    const Eigen::MatrixXd c = dict.analyze(0.5 * (a + b));
    int swaps = 0;
    for (Eigen::Index i = 0; i < c.size() && swaps < 400; i += 3)
      for (Eigen::Index j = 0; j < c.size() && swaps < 400; j += 5) {
        if (r.S.data()[i] == 0 || r.S.data()[j] != 0) continue;
        Eigen::MatrixXd s = r.S;
        s.data()[i] = 0;
        s.data()[j] = c.data()[j];
        CHECK(cost(s) >= base - 1e-12);
        ++swaps;
      }
    CHECK(swaps > 0);
  }
}

TEST_CASE("block matching") {
  const auto grid = VoxelGrid::make({8, 8, 8}, Vec3::Zero(), Vec3::Ones());

  SUBCASE("constant volume uses the lexicographic tie-break") {
    AlbedoVolume u(grid);
    u.values.setConstant(1.0);
    const BlockConfig cfg{4, 5, 2, 4};
    const auto groups = block_match(u, cfg);
    REQUIRE(groups.size() == 8);
    const auto& g = groups[0];
    CHECK(g.ref == BlockOrigin{0, 0, 0});
    const std::vector<BlockOrigin> expect{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 1, 0}, {0, 1, 1}};
    CHECK(g.members == expect);
  }
  SUBCASE("brute force nearest blocks") {
    std::mt19937_64 rng(5);
    AlbedoVolume u(grid, test::random_vector(grid.count(), rng, 0, 1));
    const BlockConfig cfg{3, 6, 2, 3};
    const auto groups = block_match(u, cfg);
    for (const auto& g : groups) {
      REQUIRE(g.members.size() == 6);
      CHECK(g.members[0] == g.ref);
      std::vector<std::pair<double, BlockOrigin>> all;
      for (int x = std::max(0, g.ref[0] - 2); x <= std::min(5, g.ref[0] + 2); ++x)
        for (int y = std::max(0, g.ref[1] - 2); y <= std::min(5, g.ref[1] + 2); ++y)
          for (int z = std::max(0, g.ref[2] - 2); z <= std::min(5, g.ref[2] + 2); ++z) {
            if (BlockOrigin{x, y, z} == g.ref) continue;
            double d = 0;
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                  const double t = u(g.ref[0] + a, g.ref[1] + b, g.ref[2] + c) - u(x + a, y + b, z + c);
                  d += t * t;
                }
            all.push_back({d, {x, y, z}});
          }
      std::sort(all.begin(), all.end());
      for (int m = 1; m < 6; ++m) CHECK(g.members[m] == all[m - 1].second);
    }
  }
  SUBCASE("one neighbour is the block itself") {
    AlbedoVolume u(grid);
    u(5, 5, 5) = 3.0;
    for (const auto& g : block_match(u, BlockConfig{4, 1, 5, 4})) {
      REQUIRE(g.members.size() == 1);
      CHECK(g.members[0] == g.ref);
    }
  }
  SUBCASE("window too small") {
    AlbedoVolume u(grid);
    CHECK_THROWS_AS(block_match(u, BlockConfig{4, 100, 1, 4}), ConfigError);
  }
}

TEST_CASE("block gather, scatter and coverage are consistent") {
  const auto grid = VoxelGrid::make({6, 5, 7}, Vec3::Zero(), Vec3::Ones());
  std::mt19937_64 rng(6);
  AlbedoVolume u(grid, test::random_vector(grid.count(), rng));
  const BlockConfig cfg{3, 4, 2, 3};
  const auto groups = block_match(u, cfg);
  const auto blocks = gather_blocks(u, groups, 3);
  std::vector<Eigen::MatrixXd> t;
  for (const auto& b : blocks) {
    Eigen::MatrixXd m(b.rows(), b.cols());
    for (int c = 0; c < b.cols(); ++c) m.col(c) = test::random_vector(b.rows(), rng);
    t.push_back(m);
  }
  // <B u, T> = <u, B^T T>
  double lhs = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) lhs += (blocks[i].array() * t[i].array()).sum();
  CHECK(lhs == doctest::Approx(u.values.dot(scatter_blocks(t, groups, grid, 3))).epsilon(1e-12));
  // B^T B u = coverage .* u
  const auto btbu = scatter_blocks(blocks, groups, grid, 3);
  const auto cov = block_coverage(groups, grid, 3);
  CHECK((btbu - cov.cwiseProduct(u.values)).norm() <= 1e-12 * btbu.norm());
}

TEST_CASE("procrustes") {
  std::mt19937_64 rng(7);
  const auto q = random_orthogonal(6, rng);
  CHECK((procrustes(q, Eigen::MatrixXd::Identity(6, 6)) - q).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd m(6, 6);
  for (int i = 0; i < 6; ++i) m.col(i) = test::random_vector(6, rng);
  const auto r = procrustes(m, Eigen::MatrixXd::Identity(6, 6));
  CHECK(orth_error(r) <= 1e-12);
  // Maximizes trace(R^T M) over orthogonal R.
  for (int t = 0; t < 50; ++t)
    CHECK((random_orthogonal(6, rng).transpose() * m).trace() <= (r.transpose() * m).trace() + 1e-12);

  Eigen::MatrixXd low = Eigen::MatrixXd::Zero(6, 6);
  low.col(0) = test::random_vector(6, rng);
  bool degenerate = false;
  const auto rl = procrustes(low, random_orthogonal(6, rng), &degenerate);
  CHECK(degenerate);
  CHECK(orth_error(rl) <= 1e-12);
}

TEST_CASE("dictionary triplet") {
  std::mt19937_64 rng(8);
  const int b = 2, y = 4, x = b * b * b;

  SUBCASE("DCT initialization is orthogonal") {
    const auto t = DictionaryTriplet::dct_init(b, y);
    CHECK(orth_error(t.ds) <= 1e-12);
    CHECK(orth_error(t.dn) <= 1e-12);
  }
  SUBCASE("consistent blocks give zero residual after one sweep") {
    DictionaryTriplet init;
    init.ds = random_orthogonal(x, rng);
    init.dn = random_orthogonal(y, rng);
    std::vector<Eigen::MatrixXd> blocks;
    for (int i = 0; i < 6; ++i) {
      Eigen::MatrixXd c = Eigen::MatrixXd::Zero(x, y);
      c(i % x, i % y) = 2.0 + i;
      c((i + 3) % x, (i + 1) % y) = -1.0 - i;
      blocks.push_back(init.ds * c * init.dn.transpose());
    }
    const double rho = 12.0 / (6 * x * y);
    const auto t = update_triplet(blocks, init, rho, 1);
    CHECK(t.sweep_residuals.back() <= 1e-20 + 1e-12 * blocks.size());
    CHECK(triplet_residual(blocks, t) <= 1e-12);
  }
  SUBCASE("a single block with everything kept is exact") {
    Eigen::MatrixXd blk(x, y);
    for (int c = 0; c < y; ++c) blk.col(c) = test::random_vector(x, rng);
    DictionaryTriplet init;
    init.ds = random_orthogonal(x, rng);
    init.dn = random_orthogonal(y, rng);
    CHECK(triplet_residual({blk}, update_triplet({blk}, init, 1.0, 1)) <= 1e-20 + 1e-24 * blk.squaredNorm());
  }
  SUBCASE("random blocks: residual non-increasing, factors orthogonal") {
    std::vector<Eigen::MatrixXd> blocks;
    for (int i = 0; i < 20; ++i) {
      Eigen::MatrixXd blk(x, y);
      for (int c = 0; c < y; ++c) blk.col(c) = test::random_vector(x, rng);
      blocks.push_back(blk);
    }
    auto t = DictionaryTriplet::dct_init(b, y);
    double prev = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < 3; ++sweep) {
      t = update_triplet(blocks, t, 0.2, 1);
      CHECK(orth_error(t.ds) <= 1e-12);
      CHECK(orth_error(t.dn) <= 1e-12);
      // Procrustes steps never increase the residual for the fixed codes.
      CHECK(t.sweep_residuals.back() <= prev * (1 + 1e-12));
      prev = t.sweep_residuals.back();
    }
  }
}
