#pragma once

#include "nlos/core.hpp"

#include <cmath>
#include <random>

namespace nlos::test {

inline VoxelGrid cube_grid(int n, double z0 = 0.3, double size = 1.0) {
  const double s = size / n;
  return VoxelGrid::make({n, n, n}, Vec3(-0.5 * size, -0.5 * size, z0), Vec3(s, s, s));
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline SurfaceG random_surface(const VoxelGrid& grid, std::mt19937_64& rng) {
  std::bernoulli_distribution fg(0.5);
  std::uniform_int_distribution<int> k(0, grid.nz() - 1);
  std::uniform_real_distribution<double> a(0.01, 3.0);
  SurfaceG g(grid);
  for (int i = 0; i < grid.nx(); ++i)
    for (int j = 0; j < grid.ny(); ++j)
      if (fg(rng)) g.set_foreground(i, j, k(rng), a(rng));
  return g;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace nlos::test
