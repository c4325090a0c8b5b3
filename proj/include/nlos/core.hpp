#pragma once

// Domain types shared by every stage of the reconstruction pipeline: voxel
// grids, albedo volumes, surface elements, measurement geometry and the
// photon histogram / transient signal containers.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlos {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value that is structurally invalid for the type it was meant to build.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised by volume_to_surface when a pixel column cannot belong to a surface.
class MembershipError : public Error {
 public:
  MembershipError(int i, int j, int count);
  int i;
  int j;
  int count;  ///< number of offending entries in the column
};

// ---------------------------------------------------------------------------
// Grids and volumes
// ---------------------------------------------------------------------------

/// Regular voxel grid. x is horizontal, y vertical, z the depth away from the
/// relay wall. Flat storage is i-major with k contiguous.
struct VoxelGrid {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 origin = Vec3::Zero();
  Vec3 voxel_size = Vec3::Ones();

  /// Validating constructor.
  static VoxelGrid make(std::array<int, 3> dims, const Vec3& origin,
                        const Vec3& voxel_size);
  void validate() const;

  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }
  std::size_t count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  std::size_t pixel_index(int i, int j) const {
    return static_cast<std::size_t>(i) * dims[1] + j;
  }
  Vec3 center(int i, int j, int k) const {
    return origin + Vec3((i + 0.5) * voxel_size.x(), (j + 0.5) * voxel_size.y(),
                         (k + 0.5) * voxel_size.z());
  }
  double voxel_volume() const {
    return voxel_size.x() * voxel_size.y() * voxel_size.z();
  }
  Vec3 extent() const {
    return Vec3(dims[0] * voxel_size.x(), dims[1] * voxel_size.y(),
                dims[2] * voxel_size.z());
  }
  /// Nearest depth-plane index for a physical depth; half-way ties go toward
  /// the wall. Not clamped.
  int nearest_depth_index(double z) const;

  bool operator==(const VoxelGrid& o) const {
    return dims == o.dims && origin == o.origin && voxel_size == o.voxel_size;
  }
};

struct AlbedoVolume {
  VoxelGrid grid;
  Eigen::VectorXd values;

  AlbedoVolume() = default;
  explicit AlbedoVolume(const VoxelGrid& g)
      : grid(g), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.count()))) {}
  AlbedoVolume(const VoxelGrid& g, Eigen::VectorXd v);

  double operator()(int i, int j, int k) const {
    return values[static_cast<Eigen::Index>(grid.index(i, j, k))];
  }
  double& operator()(int i, int j, int k) {
    return values[static_cast<Eigen::Index>(grid.index(i, j, k))];
  }
};

// ---------------------------------------------------------------------------
// Surfaces
// ---------------------------------------------------------------------------

/// Matrix form (indicator, depth, albedo) of a volume with at most one
/// positive voxel per pixel column. Background pixels hold std::nullopt in
/// depth and albedo; pixel storage is i-major.
struct SurfaceG {
  VoxelGrid grid;
  std::vector<std::uint8_t> e;
  std::vector<std::optional<int>> depth;
  std::vector<std::optional<double>> albedo;

  SurfaceG() = default;
  /// All-background surface on the grid.
  explicit SurfaceG(const VoxelGrid& g);

  void set_foreground(int i, int j, int k, double a);
  void set_background(int i, int j);
  bool is_foreground(int i, int j) const { return e[grid.pixel_index(i, j)] != 0; }
  std::size_t foreground_count() const;

  /// Throws InvariantError if e/d/alpha linkage or value ranges are broken.
  void validate() const;

  bool operator==(const SurfaceG& o) const {
    return grid == o.grid && e == o.e && depth == o.depth && albedo == o.albedo;
  }
};

AlbedoVolume surface_to_volume(const SurfaceG& g);

/// Inverse of surface_to_volume. Throws MembershipError for the first column
/// holding two or more positive entries or any negative entry.
SurfaceG volume_to_surface(const AlbedoVolume& u);

bool is_surface(const AlbedoVolume& u);

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

struct MeasurementPair {
  Vec3 illum = Vec3::Zero();
  Vec3 detect = Vec3::Zero();
  bool operator==(const MeasurementPair& o) const {
    return illum == o.illum && detect == o.detect;
  }
};

struct MeasurementGeometry {
  std::vector<MeasurementPair> pairs;
  double bin_width = 32e-12;  // seconds
  int num_bins = 1;
  double time_origin = 0.0;  // seconds
  double c = kSpeedOfLight;
  /// Layout of the pairs as an nx-by-ny scan, pair index p = iy * nx + ix.
  std::array<int, 2> scan_shape{1, 1};

  void validate() const;
  int num_pairs() const { return static_cast<int>(pairs.size()); }
  std::size_t signal_size() const {
    return pairs.size() * static_cast<std::size_t>(num_bins);
  }
  bool confocal() const;

  bool operator==(const MeasurementGeometry& o) const {
    return pairs == o.pairs && bin_width == o.bin_width && num_bins == o.num_bins &&
           time_origin == o.time_origin && c == o.c && scan_shape == o.scan_shape;
  }
};

/// nx-by-ny grid of confocal points in the plane z = wall_z, pair order
/// matching scan_shape.
MeasurementGeometry make_confocal_scan(int nx, int ny, double half_width_x,
                                       double half_width_y, double bin_width,
                                       int num_bins, double wall_z = 0.0);

/// Recovers an nx-by-ny scan layout from the illumination coordinates when
/// they form a full lexicographic lattice, otherwise returns {P, 1}.
std::array<int, 2> infer_scan_shape(const std::vector<MeasurementPair>& pairs);

/// Per-pair, per-bin photon event counts. counts[p * Q + q].
struct PhotonHistogram {
  MeasurementGeometry geometry;
  std::vector<std::uint32_t> counts;
  std::uint32_t pulses = 1;
  std::string rng_id;
  std::uint64_t seed = 0;

  std::uint32_t at(int p, int q) const {
    return counts[static_cast<std::size_t>(p) * geometry.num_bins + q];
  }
  void validate() const;
};

/// Real-valued per-pair, per-bin intensity. values[p * Q + q].
struct TransientSignal {
  MeasurementGeometry geometry;
  Eigen::VectorXd values;

  TransientSignal() = default;
  explicit TransientSignal(const MeasurementGeometry& g)
      : geometry(g),
        values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.signal_size()))) {}
  TransientSignal(const MeasurementGeometry& g, Eigen::VectorXd v);

  double at(int p, int q) const {
    return values[static_cast<Eigen::Index>(p) * geometry.num_bins + q];
  }
};

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

/// Square-based pyramid centred on the grid's lateral centre, apex toward the
/// wall at z = standoff and base plane at z = standoff + height. Albedo 1.
SurfaceG make_pyramid_scene(const VoxelGrid& grid, double base, double height,
                            double standoff);

/// Lateral rectangle [x0, x1] x [y0, y1] in metres.
struct Rect {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

/// Constant-depth rectangle with uniform albedo, depth snapped to the nearest
/// voxel plane.
SurfaceG make_plane_scene(const VoxelGrid& grid, const Rect& extent, double depth,
                          double albedo);

}  // namespace nlos
