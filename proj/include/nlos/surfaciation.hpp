#pragma once

// Projection of an albedo volume onto a surface element: a depth map, an
// albedo map and a foreground indicator, each obtained from a weighted graph
// least-squares problem over the pixel lattice.

#include "nlos/core.hpp"
#include "nlos/solvers.hpp"

#include <utility>
#include <vector>

namespace nlos {

/// Positive entries of each pixel column, as (depth index, albedo) pairs in
/// increasing depth. Pixels are i-major.
struct PixelColumnSummary {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<std::vector<std::pair<int, double>>> entries;

  bool foreground(std::size_t pixel) const { return !entries[pixel].empty(); }
};

PixelColumnSummary summarize_columns(const AlbedoVolume& u);

/// Unit weights between 8-connected pixels, listed once per ordered pair.
std::vector<GraphEdge> lattice_weights(int nx, int ny);

struct SurfaciationOptions {
  double tol = 1e-12;
};

/// Step 1: depth in index space. Foreground data weight 2, data value the
/// u^2-weighted mean of the column's depth indices.
GraphLS depth_problem(const PixelColumnSummary& s, const std::vector<GraphEdge>& w);

/// Per-pixel mixing weights of Step 2 (inverse squared distance to d*,
/// 2 on exact hits, normalized); empty for background pixels.
std::vector<std::vector<double>> albedo_mixing(const PixelColumnSummary& s,
                                               const Eigen::VectorXd& d_star);

/// sum_n r_n u_n per pixel with the Step 2 mixing weights, 0 on background.
Eigen::VectorXd interpolated_albedo(const PixelColumnSummary& s, const Eigen::VectorXd& d_star);

/// Step 2: albedo. Foreground data weight 1, data value the interpolated albedo.
GraphLS albedo_problem(const PixelColumnSummary& s, const Eigen::VectorXd& d_star,
                       const std::vector<GraphEdge>& w);

/// Step 3: indicator. gamma = alpha*/(2 max alpha*), reset to 0.75 on
/// background and on pixels whose interpolated albedo is below 0.1 of its
/// maximum; data value the interpolated albedo over its maximum.
GraphLS indicator_problem(const PixelColumnSummary& s, const Eigen::VectorXd& interp,
                          const Eigen::VectorXd& alpha_star, const std::vector<GraphEdge>& w);

Eigen::VectorXd solve_depth(const PixelColumnSummary& s, const std::vector<GraphEdge>& w,
                            const SurfaciationOptions& opts = {});
Eigen::VectorXd solve_albedo(const PixelColumnSummary& s, const Eigen::VectorXd& d_star,
                             const std::vector<GraphEdge>& w, const SurfaciationOptions& opts = {});
Eigen::VectorXd solve_indicator(const PixelColumnSummary& s, const Eigen::VectorXd& interp,
                                const Eigen::VectorXd& alpha_star,
                                const std::vector<GraphEdge>& w,
                                const SurfaciationOptions& opts = {});

struct SurfaciationDetail {
  SurfaceG surface;
  Eigen::VectorXd d_star;
  Eigen::VectorXd alpha_star;
  Eigen::VectorXd e_star;
};

/// Depth, then albedo, then indicator; threshold e* at 0.5, snap d* to the
/// nearest index (ties toward the wall), drop pixels with alpha* <= 0.
SurfaciationDetail surfaciate_detailed(const AlbedoVolume& u, const SurfaciationOptions& opts = {});
SurfaceG surfaciate(const AlbedoVolume& u, const SurfaciationOptions& opts = {});

}  // namespace nlos
