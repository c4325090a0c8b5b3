#pragma once

// Reference reconstructors without surface priors, and the surface metrics
// used to compare every method on equal footing.

#include "nlos/core.hpp"
#include "nlos/forward.hpp"

#include <vector>

namespace nlos {

class ZeroSignal : public Error {
 public:
  using Error::Error;
};

/// A^T (d / N).
AlbedoVolume back_projection(const PhotonHistogram& hist, const ForwardOperator& op);

/// Negated discrete Laplacian (6-neighbour, zero outside the grid) of a
/// separable Gaussian blur (radius ceil(3 sigma), zero padded). When clamp is
/// set, negative responses are cut to zero.
AlbedoVolume log_filter(const AlbedoVolume& u, double sigma, bool clamp = true);

/// Laplacian-of-Gaussian filtered back-projection.
AlbedoVolume log_bp(const PhotonHistogram& hist, const ForwardOperator& op, double sigma = 1.0);

struct LsCgResult {
  AlbedoVolume u;
  /// ln(||A^T A u - A^T tau|| / ||A^T tau||); entry 0 is the back-projection start.
  std::vector<double> log_normal_residual;
  /// ln(||A u - tau|| / ||tau||), same indexing.
  std::vector<double> log_misfit;
};

/// Unregularized least squares: CG on the normal equations from u = A^T tau,
/// stopping early once the relative normal residual reaches 1e-13.
LsCgResult ls_cg_reconstruct(const PhotonHistogram& hist, const ForwardOperator& op, int iters);
LsCgResult ls_cg_reconstruct(const TransientSignal& tau, const ForwardOperator& op, int iters);

/// ||A u - tau|| / ||tau||. Throws ZeroSignal when tau vanishes.
double rel_misfit(const AlbedoVolume& u, const TransientSignal& tau, const ForwardOperator& op);

struct SurfaceMetrics {
  double iou = 0.0;
  double depth_rmse_voxels = 0.0;  ///< NaN when the foregrounds do not intersect
  double precision = 0.0;
  double recall = 0.0;
  bool empty_truth = false;
};

/// Surfaces must share the pixel lattice; depth indices are compared as is.
SurfaceMetrics metrics(const SurfaceG& recon, const SurfaceG& truth);

/// Thresholded back-projection baseline: zero every voxel below
/// fraction * max, then surfaciate.
SurfaceG thresholded_surface(const AlbedoVolume& u, double fraction = 0.5);

}  // namespace nlos
