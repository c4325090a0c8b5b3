#include "nlos/forward.hpp"

#include "nlos/parallel.hpp"

#include <cmath>

namespace nlos {

std::optional<int> bin_of(double path_length, const MeasurementGeometry& geometry) {
  if (!(path_length >= 0)) return std::nullopt;
  const double t = (path_length / geometry.c - geometry.time_origin) / geometry.bin_width;
  const double q = std::round(t);
  if (q < 0 || q >= geometry.num_bins) return std::nullopt;
  return static_cast<int>(q);
}

ForwardOperator::ForwardOperator(const VoxelGrid& grid, const MeasurementGeometry& geometry,
                                 bool cosine_factor)
    : grid_(grid), geometry_(geometry), cosine_factor_(cosine_factor), voxels_(grid.count()) {
  grid_.validate();
  geometry_.validate();
  const std::size_t P = geometry_.pairs.size();
  bins_.assign(P * voxels_, -1);
  weights_.assign(P * voxels_, 0.0);
  const double dv = grid_.voxel_volume();
  parallel_for(0, P, [&](std::size_t p) {
    const auto& m = geometry_.pairs[p];
    for (int i = 0; i < grid_.nx(); ++i)
      for (int j = 0; j < grid_.ny(); ++j)
        for (int k = 0; k < grid_.nz(); ++k) {
          const Vec3 x = grid_.center(i, j, k);
          const double dzi = x.z() - m.illum.z();
          const double dzd = x.z() - m.detect.z();
          if (dzi <= 0 || dzd <= 0) continue;
          const double ri = (x - m.illum).norm();
          const double rd = (x - m.detect).norm();
          const auto q = bin_of(ri + rd, geometry_);
          if (!q) continue;
          double w = dv / (ri * ri * rd * rd);
          if (cosine_factor_) w *= (dzi / ri) * (dzd / rd);
          const std::size_t idx = p * voxels_ + grid_.index(i, j, k);
          bins_[idx] = *q;
          weights_[idx] = w;
        }
  });
}

Eigen::VectorXd ForwardOperator::apply(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != voxels_)
    throw DimensionMismatch("forward: volume size does not match operator grid");
  const std::size_t P = geometry_.pairs.size();
  const int Q = geometry_.num_bins;
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P * Q));
  parallel_for(0, P, [&](std::size_t p) {
    double* row = tau.data() + p * Q;
    const std::int32_t* b = bins_.data() + p * voxels_;
    const double* w = weights_.data() + p * voxels_;
    for (std::size_t v = 0; v < voxels_; ++v)
      if (b[v] >= 0) row[b[v]] += w[v] * u[static_cast<Eigen::Index>(v)];
  });
  return tau;
}

Eigen::VectorXd ForwardOperator::apply_adjoint(const Eigen::VectorXd& tau) const {
  const std::size_t P = geometry_.pairs.size();
  const int Q = geometry_.num_bins;
  if (static_cast<std::size_t>(tau.size()) != P * Q)
    throw DimensionMismatch("adjoint: signal size does not match operator geometry");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(voxels_));
  parallel_for(0, voxels_, [&](std::size_t v) {
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t idx = p * voxels_ + v;
      if (bins_[idx] >= 0) acc += weights_[idx] * tau[static_cast<Eigen::Index>(p * Q + bins_[idx])];
    }
    u[static_cast<Eigen::Index>(v)] = acc;
  });
  return u;
}

TransientSignal ForwardOperator::forward(const AlbedoVolume& u) const {
  if (!(u.grid == grid_)) throw DimensionMismatch("forward: volume grid differs from operator grid");
  return TransientSignal(geometry_, apply(u.values));
}

AlbedoVolume ForwardOperator::adjoint(const TransientSignal& tau) const {
  if (!(tau.geometry == geometry_))
    throw DimensionMismatch("adjoint: signal geometry differs from operator geometry");
  return AlbedoVolume(grid_, apply_adjoint(tau.values));
}

LinearMap ForwardOperator::as_linear_map() const {
  return LinearMap{[this](const Eigen::VectorXd& x) { return apply(x); },
                   [this](const Eigen::VectorXd& y) { return apply_adjoint(y); },
                   static_cast<Eigen::Index>(geometry_.signal_size()),
                   static_cast<Eigen::Index>(voxels_)};
}

}  // namespace nlos
