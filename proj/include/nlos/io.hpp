#pragma once

// File formats (volume, histogram, surface), JSON scene / geometry / config
// parsing, run manifests, CSV traces and 16-bit PGM renders.

#include "nlos/core.hpp"
#include "nlos/driver.hpp"
#include "nlos/photon.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace nlos {

using Json = nlohmann::ordered_json;

/// Malformed file; offset is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& message);
  std::size_t offset;
};

// Volume: "NLOSVOL1", "I J K", voxel size, origin, then I*J*K LE doubles.
void write_volume(std::ostream& os, const AlbedoVolume& u);
AlbedoVolume read_volume(std::istream& is);
void write_volume_file(const std::string& path, const AlbedoVolume& u);
AlbedoVolume read_volume_file(const std::string& path);

// Histogram: "NLOSHIST1", "P Q N", "bin_width time_origin", "rng_id seed",
// P pair lines, then P*Q LE uint32 counts.
void write_histogram(std::ostream& os, const PhotonHistogram& h);
PhotonHistogram read_histogram(std::istream& is);
void write_histogram_file(const std::string& path, const PhotonHistogram& h);
PhotonHistogram read_histogram_file(const std::string& path);

// Surface: "NLOSSURF1", "I J", then one "e d alpha" line per pixel (i-major),
// "0 - -" for background. Depths are 0-based indices.
void write_surface(std::ostream& os, const SurfaceG& g);
/// Without a grid, the surface gets unit voxels at the origin and just enough
/// depth slices for its deepest pixel.
SurfaceG read_surface(std::istream& is, const VoxelGrid* grid = nullptr);
void write_surface_file(const std::string& path, const SurfaceG& g);
SurfaceG read_surface_file(const std::string& path, const VoxelGrid* grid = nullptr);

// JSON documents. Unknown or mistyped fields raise ConfigError naming them.
Json load_json_file(const std::string& path);
VoxelGrid parse_grid(const Json& j, const std::string& where = "grid");
Json grid_to_json(const VoxelGrid& g);
MeasurementGeometry parse_geometry(const Json& j);
Json geometry_to_json(const MeasurementGeometry& g);

struct Scene {
  VoxelGrid grid;
  SurfaceG surface;
  AlbedoVolume volume;
  NoiseModel noise;
  double peak_count = 0.0;  ///< when > 0, eta is rescaled so max(eta tau) * N hits it
  bool cosine_factor = false;
};
Scene parse_scene(const Json& j);

SscrConfig parse_sscr_config(const Json& j);
Json sscr_config_to_json(const SscrConfig& c);

struct RunConfig {
  VoxelGrid grid;
  SscrConfig sscr;
  double logbp_sigma = 1.0;
  int ls_iters = 1000;
  double baseline_threshold = 0.5;
  int threads = 1;
};
RunConfig parse_run_config(const Json& j);
Json run_config_to_json(const RunConfig& c);

/// iteration, objective, individual terms, weights, thresholds, misfits.
void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace);
/// iteration, ln normal residual, ln misfit.
void write_curves_csv(std::ostream& os, const std::vector<double>& normal,
                      const std::vector<double>& misfit);

Json sscr_params_to_json(const SscrState& s);

/// 16-bit binary PGM, big-endian samples, row 0 at the top.
struct Image16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;
};
void write_pgm(std::ostream& os, const Image16& img);
Image16 read_pgm(std::istream& is);

enum class View { Front, Top, Side };
View parse_view(const std::string& s);
/// Maximum-intensity projection, linearly scaled so [min, max] -> [0, 65535].
/// front: x right, y up (along z); top: x right, z down (along y);
/// side: z right, y up (along x).
Image16 render_volume(const AlbedoVolume& u, View view);
enum class SurfaceMap { Depth, Albedo };
/// I x J map (x right, y up); background 0, foreground scaled to [1, 65535].
Image16 render_surface(const SurfaceG& g, SurfaceMap map);

}  // namespace nlos
