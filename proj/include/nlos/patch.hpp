#pragma once

// Signal patches and their DCT dictionary, plus the block-matching and
// orthogonal dictionary machinery used for the albedo volume.

#include "nlos/core.hpp"

#include <array>
#include <vector>

namespace nlos {

// ---------------------------------------------------------------------------
// Signal patches
// ---------------------------------------------------------------------------

/// Patch shape and stride over the (scan x, scan y, time) signal tensor.
struct PatchConfig {
  std::array<int, 3> shape{3, 3, 64};
  std::array<int, 3> stride{3, 3, 64};

  /// min(nx,3) x min(ny,3) x 64, non-overlapping.
  static PatchConfig default_for(const MeasurementGeometry& geometry);

  bool non_overlapping() const { return shape == stride; }
  void validate(const MeasurementGeometry& geometry) const;
};

/// Zero-padded tiling of a signal tensor by a PatchConfig.
struct PatchLayout {
  std::array<int, 3> dims{};    ///< nx, ny, Q
  std::array<int, 3> padded{};  ///< dims rounded up so the tiling ends flush
  std::array<int, 3> counts{};  ///< patch origins per axis
  PatchConfig cfg;

  PatchLayout(const PatchConfig& cfg, const MeasurementGeometry& geometry);
  int patch_size() const { return cfg.shape[0] * cfg.shape[1] * cfg.shape[2]; }
  int patch_count() const { return counts[0] * counts[1] * counts[2]; }
};

/// Columns are vectorized patches (x fastest, then y, then time), ordered
/// lexicographically by patch origin (x, y, time).
Eigen::MatrixXd extract_patches(const TransientSignal& sig, const PatchConfig& cfg);
Eigen::MatrixXd extract_patches(const Eigen::VectorXd& values, const MeasurementGeometry& geometry,
                                const PatchConfig& cfg);

/// Inverse of extract_patches: every signal entry becomes the mean of the
/// patch entries covering it, padding is dropped.
TransientSignal aggregate_patches(const Eigen::MatrixXd& patches, const PatchConfig& cfg,
                                  const MeasurementGeometry& geometry);

/// Orthonormal DCT-II synthesis matrix of order n: columns are the cosine
/// atoms, so the coefficients of x are D^T x.
Eigen::MatrixXd dct_matrix(int n);

/// D = D_q (x) D_y (x) D_x acting on vectorized patches.
class SignalDictionary {
 public:
  explicit SignalDictionary(const std::array<int, 3>& shape);

  /// D * coeffs, column by column.
  Eigen::MatrixXd synthesize(const Eigen::MatrixXd& coeffs) const;
  /// D^T * patches, column by column.
  Eigen::MatrixXd analyze(const Eigen::MatrixXd& patches) const;
  /// The explicit Kronecker matrix; only sensible for small patches.
  Eigen::MatrixXd matrix() const;

  const std::array<int, 3>& shape() const { return shape_; }
  const Eigen::MatrixXd& factor(int axis) const { return factors_[axis]; }

 private:
  Eigen::MatrixXd transform(const Eigen::MatrixXd& m, bool transpose) const;
  std::array<int, 3> shape_;
  std::array<Eigen::MatrixXd, 3> factors_;
};

/// Hard-threshold level keeping round(keep_fraction * n) of the largest
/// magnitudes; +inf when nothing is kept.
double keep_threshold(const Eigen::Ref<const Eigen::VectorXd>& magnitudes, double keep_fraction);

struct SUpdate {
  Eigen::MatrixXd S;
  double threshold = 0.0;
  std::size_t kept = 0;
};

/// Sparse common coefficients of two patch sets: hard thresholding of
/// D^T (Ptau + PAu) / 2, keeping entries with magnitude >= the threshold.
SUpdate update_S(const Eigen::MatrixXd& ptau, const Eigen::MatrixXd& pau,
                 const SignalDictionary& dict, double keep_fraction);

// ---------------------------------------------------------------------------
// Block matching and the dictionary triplet
// ---------------------------------------------------------------------------

struct BlockConfig {
  int block = 4;      ///< cube edge b, so x = b^3
  int neighbors = 16; ///< y, matched blocks per group (reference included)
  int window = 5;     ///< search half-width in voxels
  int stride = 4;     ///< spacing of reference blocks

  void validate(const VoxelGrid& grid) const;
};

using BlockOrigin = std::array<int, 3>;

struct BlockGroup {
  BlockOrigin ref{};
  std::vector<BlockOrigin> members;  ///< members[0] == ref
};

/// For every reference block, the reference itself followed by the
/// neighbors - 1 window blocks closest in squared distance (ties broken by
/// lexicographic origin). Throws ConfigError when a window offers fewer
/// candidates than requested.
std::vector<BlockGroup> block_match(const AlbedoVolume& u, const BlockConfig& cfg);

/// Fewest blocks any reference window can offer under cfg (reference included).
int min_window_candidates(const VoxelGrid& grid, const BlockConfig& cfg);

/// The matrices B u_i, columns = vectorized member blocks.
std::vector<Eigen::MatrixXd> gather_blocks(const AlbedoVolume& u,
                                           const std::vector<BlockGroup>& groups, int block);

/// sum_i B_i^T targets_i as a voxel vector.
Eigen::VectorXd scatter_blocks(const std::vector<Eigen::MatrixXd>& targets,
                               const std::vector<BlockGroup>& groups, const VoxelGrid& grid,
                               int block);

/// Number of matrix slots each voxel occupies across all groups.
Eigen::VectorXd block_coverage(const std::vector<BlockGroup>& groups, const VoxelGrid& grid,
                               int block);

class DegenerateSVD : public Error {
 public:
  using Error::Error;
};

struct DictionaryTriplet {
  Eigen::MatrixXd ds;  ///< x-by-x, local structure
  Eigen::MatrixXd dn;  ///< y-by-y, non-local correlation
  std::vector<Eigen::MatrixXd> coeffs;
  double threshold = 0.0;
  int degenerate_svds = 0;
  std::vector<double> sweep_residuals;  ///< sum_i ||B_i - Ds C_i Dn^T||^2 after each sweep

  /// 3D DCT for the blocks and DCT of order y for the groups, no coefficients.
  static DictionaryTriplet dct_init(int block, int neighbors);

  Eigen::MatrixXd reconstruct(std::size_t i) const {
    return ds * coeffs[i] * dn.transpose();
  }
};

/// Orthogonal factor U V^T of M = U S V^T; null directions of a rank-
/// deficient M are filled from the polar factor of prev restricted to them.
Eigen::MatrixXd procrustes(const Eigen::MatrixXd& m, const Eigen::MatrixXd& prev,
                           bool* degenerate = nullptr);

/// Alternating sparse coding / Procrustes sweeps starting from prev.
DictionaryTriplet update_triplet(const std::vector<Eigen::MatrixXd>& blocks,
                                 const DictionaryTriplet& prev, double keep_fraction,
                                 int sweeps);

double triplet_residual(const std::vector<Eigen::MatrixXd>& blocks, const DictionaryTriplet& t);

}  // namespace nlos
