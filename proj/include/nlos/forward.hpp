#pragma once

#include "nlos/core.hpp"
#include "nlos/solvers.hpp"

#include <optional>

namespace nlos {

/// Nearest time bin for an optical path length in metres, or nullopt when the
/// bin falls outside [0, Q).
std::optional<int> bin_of(double path_length, const MeasurementGeometry& geometry);

/// Matrix-free transient operator: each voxel deposits u * dV / (r_i^2 r_d^2)
/// into the nearest bin of its illumination-voxel-detection path. Voxels on
/// or behind the wall plane of a pair contribute nothing to that pair.
///
/// The per-(pair, voxel) bin and weight are tabulated once, so apply and
/// apply_adjoint read the same table and are exact transposes.
class ForwardOperator {
 public:
  ForwardOperator(const VoxelGrid& grid, const MeasurementGeometry& geometry,
                  bool cosine_factor = false);

  const VoxelGrid& grid() const { return grid_; }
  const MeasurementGeometry& geometry() const { return geometry_; }
  bool cosine_factor() const { return cosine_factor_; }

  TransientSignal forward(const AlbedoVolume& u) const;
  AlbedoVolume adjoint(const TransientSignal& tau) const;

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& tau) const;

  /// The operator as a generic map (rows = P*Q, cols = voxels).
  LinearMap as_linear_map() const;

 private:
  VoxelGrid grid_;
  MeasurementGeometry geometry_;
  bool cosine_factor_;
  std::size_t voxels_;
  std::vector<std::int32_t> bins_;  // [p * voxels + v], -1 when no contribution
  std::vector<double> weights_;
};

}  // namespace nlos
