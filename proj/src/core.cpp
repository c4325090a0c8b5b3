#include "nlos/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nlos {

MembershipError::MembershipError(int i_, int j_, int count_)
    : Error("pixel (" + std::to_string(i_) + "," + std::to_string(j_) +
            ") is not a surface column: " + std::to_string(count_) +
            " nonzero entries or a negative entry"),
      i(i_),
      j(j_),
      count(count_) {}

VoxelGrid VoxelGrid::make(std::array<int, 3> dims, const Vec3& origin,
                          const Vec3& voxel_size) {
  VoxelGrid g{dims, origin, voxel_size};
  g.validate();
  return g;
}

void VoxelGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InvariantError("voxel grid dims must be >= 1");
    if (!(voxel_size[a] > 0) || !std::isfinite(voxel_size[a]))
      throw InvariantError("voxel size must be positive and finite");
    if (!std::isfinite(origin[a])) throw InvariantError("grid origin must be finite");
  }
}

int VoxelGrid::nearest_depth_index(double z) const {
  const double t = (z - origin.z()) / voxel_size.z() - 0.5;
  return static_cast<int>(std::ceil(t - 0.5));
}

AlbedoVolume::AlbedoVolume(const VoxelGrid& g, Eigen::VectorXd v)
    : grid(g), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != grid.count())
    throw DimensionMismatch("albedo volume payload does not match grid");
}

TransientSignal::TransientSignal(const MeasurementGeometry& g, Eigen::VectorXd v)
    : geometry(g), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != geometry.signal_size())
    throw DimensionMismatch("signal payload does not match geometry");
}

// ---------------------------------------------------------------------------

SurfaceG::SurfaceG(const VoxelGrid& g)
    : grid(g), e(g.pixel_count(), 0), depth(g.pixel_count()), albedo(g.pixel_count()) {}

void SurfaceG::set_foreground(int i, int j, int k, double a) {
  const auto p = grid.pixel_index(i, j);
  e[p] = 1;
  depth[p] = k;
  albedo[p] = a;
}

void SurfaceG::set_background(int i, int j) {
  const auto p = grid.pixel_index(i, j);
  e[p] = 0;
  depth[p].reset();
  albedo[p].reset();
}

std::size_t SurfaceG::foreground_count() const {
  return static_cast<std::size_t>(std::count(e.begin(), e.end(), std::uint8_t{1}));
}

void SurfaceG::validate() const {
  grid.validate();
  const auto n = grid.pixel_count();
  if (e.size() != n || depth.size() != n || albedo.size() != n)
    throw InvariantError("surface matrices do not match the pixel lattice");
  for (std::size_t p = 0; p < n; ++p) {
    const int i = static_cast<int>(p / grid.ny());
    const int j = static_cast<int>(p % grid.ny());
    const auto where = " at pixel (" + std::to_string(i) + "," + std::to_string(j) + ")";
    if (e[p] > 1) throw InvariantError("indicator must be 0 or 1" + where);
    const bool fg = e[p] == 1;
    if (fg != depth[p].has_value() || fg != albedo[p].has_value())
      throw InvariantError("indicator, depth and albedo disagree on background" + where);
    if (fg) {
      if (*depth[p] < 0 || *depth[p] >= grid.nz())
        throw InvariantError("depth index out of range" + where);
      if (!(*albedo[p] > 0) || !std::isfinite(*albedo[p]))
        throw InvariantError("foreground albedo must be positive" + where);
    }
  }
}

AlbedoVolume surface_to_volume(const SurfaceG& g) {
  AlbedoVolume u(g.grid);
  for (int i = 0; i < g.grid.nx(); ++i)
    for (int j = 0; j < g.grid.ny(); ++j) {
      const auto p = g.grid.pixel_index(i, j);
      if (g.e[p]) u(i, j, *g.depth[p]) = *g.albedo[p];
    }
  return u;
}

SurfaceG volume_to_surface(const AlbedoVolume& u) {
  SurfaceG g(u.grid);
  const int K = u.grid.nz();
  for (int i = 0; i < u.grid.nx(); ++i)
    for (int j = 0; j < u.grid.ny(); ++j) {
      int positives = 0;
      int nonzeros = 0;
      bool negative = false;
      int k_hit = -1;
      for (int k = 0; k < K; ++k) {
        const double v = u(i, j, k);
        if (v != 0.0) ++nonzeros;
        if (v > 0.0) {
          ++positives;
          k_hit = k;
        } else if (v < 0.0 || std::isnan(v)) {
          negative = true;
        }
      }
      if (negative || positives > 1) throw MembershipError(i, j, nonzeros);
      if (positives == 1) g.set_foreground(i, j, k_hit, u(i, j, k_hit));
    }
  return g;
}

bool is_surface(const AlbedoVolume& u) {
  try {
    volume_to_surface(u);
    return true;
  } catch (const MembershipError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

void MeasurementGeometry::validate() const {
  if (pairs.empty()) throw InvariantError("geometry needs at least one measurement pair");
  if (num_bins < 1) throw InvariantError("geometry needs at least one time bin");
  if (!(bin_width > 0)) throw InvariantError("bin width must be positive");
  if (!(c > 0)) throw InvariantError("speed of light must be positive");
  if (scan_shape[0] < 1 || scan_shape[1] < 1 ||
      static_cast<std::size_t>(scan_shape[0]) * scan_shape[1] != pairs.size())
    throw InvariantError("scan shape does not cover the measurement pairs");
}

bool MeasurementGeometry::confocal() const {
  return std::all_of(pairs.begin(), pairs.end(),
                     [](const MeasurementPair& m) { return m.illum == m.detect; });
}

MeasurementGeometry make_confocal_scan(int nx, int ny, double half_width_x,
                                       double half_width_y, double bin_width,
                                       int num_bins, double wall_z) {
  if (nx < 1 || ny < 1) throw ConfigError("scan needs at least one point per axis");
  MeasurementGeometry g;
  g.bin_width = bin_width;
  g.num_bins = num_bins;
  g.scan_shape = {nx, ny};
  auto coord = [](int idx, int n, double hw) {
    return n == 1 ? 0.0 : -hw + 2.0 * hw * idx / (n - 1);
  };
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const Vec3 pt(coord(ix, nx, half_width_x), coord(iy, ny, half_width_y), wall_z);
      g.pairs.push_back({pt, pt});
    }
  g.validate();
  return g;
}

std::array<int, 2> infer_scan_shape(const std::vector<MeasurementPair>& pairs) {
  const int P = static_cast<int>(pairs.size());
  std::vector<double> xs, ys;
  for (const auto& m : pairs) {
    xs.push_back(m.illum.x());
    ys.push_back(m.illum.y());
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());
  if (nx * ny != P) return {P, 1};
  for (int p = 0; p < P; ++p) {
    if (pairs[p].illum.x() != xs[p % nx] || pairs[p].illum.y() != ys[p / nx])
      return {P, 1};
  }
  return {nx, ny};
}

void PhotonHistogram::validate() const {
  geometry.validate();
  if (pulses < 1) throw InvariantError("histogram needs at least one pulse");
  if (counts.size() != geometry.signal_size())
    throw InvariantError("histogram counts do not match geometry");
  for (std::size_t idx = 0; idx < counts.size(); ++idx) {
    if (counts[idx] > pulses) {
      std::ostringstream os;
      os << "count exceeds pulses at (p,q) = (" << idx / geometry.num_bins << ","
         << idx % geometry.num_bins << ")";
      throw InvariantError(os.str());
    }
  }
}

// ---------------------------------------------------------------------------

SurfaceG make_pyramid_scene(const VoxelGrid& grid, double base, double height,
                            double standoff) {
  grid.validate();
  if (!(base > 0) || height < 0) throw GeometryError("pyramid needs base > 0, height >= 0");
  const Vec3 ext = grid.extent();
  const double tol = 1e-12;
  if (base > ext.x() + tol || base > ext.y() + tol)
    throw GeometryError("pyramid base exceeds the lateral grid extent");
  if (standoff < grid.origin.z() - tol ||
      standoff + height > grid.origin.z() + ext.z() + tol)
    throw GeometryError("pyramid depth range exceeds the grid extent");

  const double cx = grid.origin.x() + 0.5 * ext.x();
  const double cy = grid.origin.y() + 0.5 * ext.y();
  const double half = 0.5 * base;
  SurfaceG g(grid);
  for (int i = 0; i < grid.nx(); ++i)
    for (int j = 0; j < grid.ny(); ++j) {
      const Vec3 c = grid.center(i, j, 0);
      const double r = std::max(std::abs(c.x() - cx), std::abs(c.y() - cy));
      if (r > half + tol) continue;
      const double z = standoff + height * std::min(1.0, r / half);
      const int k = std::clamp(grid.nearest_depth_index(z), 0, grid.nz() - 1);
      g.set_foreground(i, j, k, 1.0);
    }
  return g;
}

SurfaceG make_plane_scene(const VoxelGrid& grid, const Rect& extent, double depth,
                          double albedo) {
  grid.validate();
  const Vec3 ext = grid.extent();
  const double tol = 1e-12;
  if (depth < grid.origin.z() - tol || depth > grid.origin.z() + ext.z() + tol)
    throw GeometryError("plane depth lies outside the grid");
  if (!(albedo > 0)) throw GeometryError("plane albedo must be positive");
  SurfaceG g(grid);
  if (!(extent.x1 > extent.x0) || !(extent.y1 > extent.y0)) return g;
  if (extent.x0 < grid.origin.x() - tol || extent.x1 > grid.origin.x() + ext.x() + tol ||
      extent.y0 < grid.origin.y() - tol || extent.y1 > grid.origin.y() + ext.y() + tol)
    throw GeometryError("plane rectangle exceeds the lateral grid extent");
  const int k = std::clamp(grid.nearest_depth_index(depth), 0, grid.nz() - 1);
  for (int i = 0; i < grid.nx(); ++i)
    for (int j = 0; j < grid.ny(); ++j) {
      const Vec3 c = grid.center(i, j, k);
      if (c.x() >= extent.x0 && c.x() <= extent.x1 && c.y() >= extent.y0 &&
          c.y() <= extent.y1)
        g.set_foreground(i, j, k, albedo);
    }
  return g;
}

}  // namespace nlos
