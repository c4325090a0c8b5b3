#include "nlos/patch.hpp"

#include "nlos/parallel.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nlos {

// ---------------------------------------------------------------------------
// Signal patches
// ---------------------------------------------------------------------------

PatchConfig PatchConfig::default_for(const MeasurementGeometry& geometry) {
  PatchConfig cfg;
  cfg.shape = {std::min(geometry.scan_shape[0], 3), std::min(geometry.scan_shape[1], 3), 64};
  cfg.stride = cfg.shape;
  return cfg;
}

void PatchConfig::validate(const MeasurementGeometry& geometry) const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw ConfigError("patch shape entries must be >= 1");
    if (stride[a] < 1 || stride[a] > shape[a])
      throw ConfigError("patch stride must lie in [1, patch shape]");
  }
  if (shape[0] > geometry.scan_shape[0] || shape[1] > geometry.scan_shape[1])
    throw ConfigError("patch is wider than the measurement scan");
}

PatchLayout::PatchLayout(const PatchConfig& c, const MeasurementGeometry& geometry) : cfg(c) {
  cfg.validate(geometry);
  dims = {geometry.scan_shape[0], geometry.scan_shape[1], geometry.num_bins};
  for (int a = 0; a < 3; ++a) {
    const int r = cfg.shape[a];
    const int s = cfg.stride[a];
    const int steps = dims[a] <= r ? 0 : (dims[a] - r + s - 1) / s;
    padded[a] = r + steps * s;
    counts[a] = steps + 1;
  }
}

Eigen::MatrixXd extract_patches(const Eigen::VectorXd& values, const MeasurementGeometry& geometry,
                                const PatchConfig& cfg) {
  const PatchLayout lay(cfg, geometry);
  if (static_cast<std::size_t>(values.size()) != geometry.signal_size())
    throw DimensionMismatch("signal size does not match geometry");
  const auto [nx, ny, nq] = lay.dims;
  const auto [rx, ry, rq] = cfg.shape;
  Eigen::MatrixXd out(lay.patch_size(), lay.patch_count());
  int col = 0;
  for (int a = 0; a < lay.counts[0]; ++a)
    for (int b = 0; b < lay.counts[1]; ++b)
      for (int c = 0; c < lay.counts[2]; ++c, ++col) {
        const int ox = a * cfg.stride[0], oy = b * cfg.stride[1], oq = c * cfg.stride[2];
        int row = 0;
        for (int t = 0; t < rq; ++t)
          for (int y = 0; y < ry; ++y)
            for (int x = 0; x < rx; ++x, ++row) {
              const int ix = ox + x, iy = oy + y, iq = oq + t;
              out(row, col) = (ix < nx && iy < ny && iq < nq)
                                  ? values[(static_cast<Eigen::Index>(iy) * nx + ix) * nq + iq]
                                  : 0.0;
            }
      }
  return out;
}

Eigen::MatrixXd extract_patches(const TransientSignal& sig, const PatchConfig& cfg) {
  return extract_patches(sig.values, sig.geometry, cfg);
}

TransientSignal aggregate_patches(const Eigen::MatrixXd& patches, const PatchConfig& cfg,
                                  const MeasurementGeometry& geometry) {
  const PatchLayout lay(cfg, geometry);
  if (patches.rows() != lay.patch_size() || patches.cols() != lay.patch_count())
    throw ConfigError("patch matrix does not match the tiling");
  const auto [nx, ny, nq] = lay.dims;
  const auto [rx, ry, rq] = cfg.shape;
  TransientSignal sig(geometry);
  std::vector<int> cover(geometry.signal_size(), 0);
  int col = 0;
  for (int a = 0; a < lay.counts[0]; ++a)
    for (int b = 0; b < lay.counts[1]; ++b)
      for (int c = 0; c < lay.counts[2]; ++c, ++col) {
        const int ox = a * cfg.stride[0], oy = b * cfg.stride[1], oq = c * cfg.stride[2];
        int row = 0;
        for (int t = 0; t < rq; ++t)
          for (int y = 0; y < ry; ++y)
            for (int x = 0; x < rx; ++x, ++row) {
              const int ix = ox + x, iy = oy + y, iq = oq + t;
              if (ix >= nx || iy >= ny || iq >= nq) continue;
              const auto idx = (static_cast<Eigen::Index>(iy) * nx + ix) * nq + iq;
              // Incremental mean keeps repeated equal values bit-exact.
              const int n = ++cover[static_cast<std::size_t>(idx)];
              sig.values[idx] += (patches(row, col) - sig.values[idx]) / n;
            }
      }
  return sig;
}

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      d(i, k) = scale * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return d;
}

SignalDictionary::SignalDictionary(const std::array<int, 3>& shape) : shape_(shape) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw ConfigError("dictionary shape entries must be >= 1");
    factors_[a] = dct_matrix(shape[a]);
  }
}

Eigen::MatrixXd SignalDictionary::transform(const Eigen::MatrixXd& m, bool transpose) const {
  const int size = shape_[0] * shape_[1] * shape_[2];
  if (m.rows() != size) throw DimensionMismatch("patch length does not match dictionary");
  const std::array<int, 3> strides{1, shape_[0], shape_[0] * shape_[1]};
  Eigen::MatrixXd cur = m;
  Eigen::MatrixXd next(m.rows(), m.cols());
  for (int axis = 0; axis < 3; ++axis) {
    const int n = shape_[axis];
    if (n == 1) continue;
    const Eigen::MatrixXd f = transpose ? Eigen::MatrixXd(factors_[axis].transpose())
                                        : factors_[axis];
    const int st = strides[axis];
    for (Eigen::Index col = 0; col < m.cols(); ++col) {
      for (int base = 0; base < size; ++base) {
        if ((base / st) % n != 0) continue;  // not the start of a line
        for (int o = 0; o < n; ++o) {
          double acc = 0.0;
          for (int i = 0; i < n; ++i) acc += f(o, i) * cur(base + i * st, col);
          next(base + o * st, col) = acc;
        }
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

Eigen::MatrixXd SignalDictionary::synthesize(const Eigen::MatrixXd& coeffs) const {
  return transform(coeffs, false);
}

Eigen::MatrixXd SignalDictionary::analyze(const Eigen::MatrixXd& patches) const {
  return transform(patches, true);
}

Eigen::MatrixXd SignalDictionary::matrix() const {
  const int size = shape_[0] * shape_[1] * shape_[2];
  return synthesize(Eigen::MatrixXd::Identity(size, size));
}

double keep_threshold(const Eigen::Ref<const Eigen::VectorXd>& magnitudes, double keep_fraction) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep fraction must lie in [0, 1]");
  const auto n = magnitudes.size();
  const auto k = static_cast<Eigen::Index>(std::llround(keep_fraction * static_cast<double>(n)));
  if (k == 0 || n == 0) return std::numeric_limits<double>::infinity();
  std::vector<double> v(magnitudes.data(), magnitudes.data() + n);
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end(), std::greater<>());
  return v[static_cast<std::size_t>(k - 1)];
}

SUpdate update_S(const Eigen::MatrixXd& ptau, const Eigen::MatrixXd& pau,
                 const SignalDictionary& dict, double keep_fraction) {
  if (ptau.rows() != pau.rows() || ptau.cols() != pau.cols())
    throw DimensionMismatch("update_S: patch sets differ in shape");
  const Eigen::MatrixXd coeffs = dict.analyze(0.5 * (ptau + pau));
  const Eigen::VectorXd mags = coeffs.reshaped().cwiseAbs();
  SUpdate out;
  out.threshold = keep_threshold(mags, keep_fraction);
  out.S = Eigen::MatrixXd::Zero(coeffs.rows(), coeffs.cols());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    if (std::abs(coeffs.data()[i]) >= out.threshold) {
      out.S.data()[i] = coeffs.data()[i];
      ++out.kept;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Block matching
// ---------------------------------------------------------------------------

void BlockConfig::validate(const VoxelGrid& grid) const {
  if (block < 1 || neighbors < 1 || window < 0 || stride < 1)
    throw ConfigError("block config needs block, neighbors, stride >= 1 and window >= 0");
  for (int a = 0; a < 3; ++a)
    if (block > grid.dims[a]) throw ConfigError("block edge exceeds the voxel grid");
}

namespace {

std::vector<int> reference_origins(int dim, int block, int stride) {
  std::vector<int> out;
  for (int o = 0; o + block <= dim; o += stride) out.push_back(o);
  if (out.back() != dim - block) out.push_back(dim - block);
  return out;
}

double block_distance(const AlbedoVolume& u, const BlockOrigin& a, const BlockOrigin& b,
                      int block) {
  double d = 0.0;
  for (int x = 0; x < block; ++x)
    for (int y = 0; y < block; ++y)
      for (int z = 0; z < block; ++z) {
        const double diff = u(a[0] + x, a[1] + y, a[2] + z) - u(b[0] + x, b[1] + y, b[2] + z);
        d += diff * diff;
      }
  return d;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

int min_window_candidates(const VoxelGrid& grid, const BlockConfig& cfg) {
  cfg.validate(grid);
  long total = 1;
  for (int a = 0; a < 3; ++a) {
    const int hi_origin = grid.dims[a] - cfg.block;
    int fewest = std::numeric_limits<int>::max();
    for (int o : reference_origins(grid.dims[a], cfg.block, cfg.stride)) {
      const int lo = std::max(0, o - cfg.window);
      const int hi = std::min(hi_origin, o + cfg.window);
      fewest = std::min(fewest, hi - lo + 1);
    }
    total *= fewest;
  }
  return static_cast<int>(std::min<long>(total, std::numeric_limits<int>::max()));
}

std::vector<BlockGroup> block_match(const AlbedoVolume& u, const BlockConfig& cfg) {
  cfg.validate(u.grid);
  if (min_window_candidates(u.grid, cfg) < cfg.neighbors)
    throw ConfigError("search window holds fewer blocks than the requested neighbor count");
  const auto& dims = u.grid.dims;
  const auto ox = reference_origins(dims[0], cfg.block, cfg.stride);
  const auto oy = reference_origins(dims[1], cfg.block, cfg.stride);
  const auto oz = reference_origins(dims[2], cfg.block, cfg.stride);
  std::vector<BlockGroup> groups;
  for (int a : ox)
    for (int b : oy)
      for (int c : oz) groups.push_back(BlockGroup{{a, b, c}, {}});

  parallel_for(0, groups.size(), [&](std::size_t gi) {
    auto& grp = groups[gi];
    const auto& ref = grp.ref;
    std::vector<std::pair<double, BlockOrigin>> cand;
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, ref[a] - cfg.window);
      hi[a] = std::min(dims[a] - cfg.block, ref[a] + cfg.window);
    }
    for (int x = lo[0]; x <= hi[0]; ++x)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int z = lo[2]; z <= hi[2]; ++z) {
          const BlockOrigin o{x, y, z};
          if (o == ref) continue;
          cand.emplace_back(block_distance(u, ref, o, cfg.block), o);
        }
    const std::size_t take = static_cast<std::size_t>(cfg.neighbors - 1);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    grp.members.reserve(take + 1);
    grp.members.push_back(ref);
    for (std::size_t n = 0; n < take; ++n) grp.members.push_back(cand[n].second);
  });
  return groups;
}

std::vector<Eigen::MatrixXd> gather_blocks(const AlbedoVolume& u,
                                           const std::vector<BlockGroup>& groups, int block) {
  const int x = block * block * block;
  std::vector<Eigen::MatrixXd> out(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& mem = groups[g].members;
    Eigen::MatrixXd m(x, static_cast<Eigen::Index>(mem.size()));
    for (std::size_t c = 0; c < mem.size(); ++c) {
      int row = 0;
      for (int a = 0; a < block; ++a)
        for (int b = 0; b < block; ++b)
          for (int z = 0; z < block; ++z, ++row)
            m(row, static_cast<Eigen::Index>(c)) = u(mem[c][0] + a, mem[c][1] + b, mem[c][2] + z);
    }
    out[g] = std::move(m);
  }
  return out;
}

Eigen::VectorXd scatter_blocks(const std::vector<Eigen::MatrixXd>& targets,
                               const std::vector<BlockGroup>& groups, const VoxelGrid& grid,
                               int block) {
  if (targets.size() != groups.size()) throw DimensionMismatch("scatter: group count differs");
  AlbedoVolume acc(grid);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& mem = groups[g].members;
    for (std::size_t c = 0; c < mem.size(); ++c) {
      int row = 0;
      for (int a = 0; a < block; ++a)
        for (int b = 0; b < block; ++b)
          for (int z = 0; z < block; ++z, ++row)
            acc(mem[c][0] + a, mem[c][1] + b, mem[c][2] + z) +=
                targets[g](row, static_cast<Eigen::Index>(c));
    }
  }
  return acc.values;
}

Eigen::VectorXd block_coverage(const std::vector<BlockGroup>& groups, const VoxelGrid& grid,
                               int block) {
  AlbedoVolume acc(grid);
  for (const auto& grp : groups)
    for (const auto& o : grp.members)
      for (int a = 0; a < block; ++a)
        for (int b = 0; b < block; ++b)
          for (int z = 0; z < block; ++z) acc(o[0] + a, o[1] + b, o[2] + z) += 1.0;
  return acc.values;
}

// ---------------------------------------------------------------------------
// Dictionary triplet
// ---------------------------------------------------------------------------

DictionaryTriplet DictionaryTriplet::dct_init(int block, int neighbors) {
  const Eigen::MatrixXd c = dct_matrix(block);
  DictionaryTriplet t;
  t.ds = kron(c, kron(c, c));
  t.dn = dct_matrix(neighbors);
  return t;
}

Eigen::MatrixXd procrustes(const Eigen::MatrixXd& m, const Eigen::MatrixXd& prev,
                           bool* degenerate) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const Eigen::Index n = m.rows();
  const double cutoff = sv.size() > 0 ? 1e-12 * sv[0] : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > cutoff) ++rank;
  const Eigen::MatrixXd& u = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();
  if (degenerate) *degenerate = rank < n;
  if (rank == n) return u * v.transpose();
  const Eigen::Index null = n - rank;
  const Eigen::MatrixXd un = u.rightCols(null);
  const Eigen::MatrixXd vn = v.rightCols(null);
  Eigen::JacobiSVD<Eigen::MatrixXd> fill(un.transpose() * prev * vn,
                                         Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd w = fill.matrixU() * fill.matrixV().transpose();
  return u.leftCols(rank) * v.leftCols(rank).transpose() + un * w * vn.transpose();
}

double triplet_residual(const std::vector<Eigen::MatrixXd>& blocks, const DictionaryTriplet& t) {
  double r = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    r += (blocks[i] - t.reconstruct(i)).squaredNorm();
  return r;
}

DictionaryTriplet update_triplet(const std::vector<Eigen::MatrixXd>& blocks,
                                 const DictionaryTriplet& prev, double keep_fraction,
                                 int sweeps) {
  if (blocks.empty()) throw ConfigError("update_triplet needs at least one block matrix");
  if (sweeps < 1) throw ConfigError("update_triplet needs at least one sweep");
  const Eigen::Index x = blocks.front().rows();
  const Eigen::Index y = blocks.front().cols();
  for (const auto& b : blocks)
    if (b.rows() != x || b.cols() != y) throw DimensionMismatch("block matrices differ in shape");
  if (prev.ds.rows() != x || prev.dn.rows() != y)
    throw DimensionMismatch("triplet dictionaries do not match block shape");

  DictionaryTriplet t;
  t.ds = prev.ds;
  t.dn = prev.dn;
  t.coeffs.resize(blocks.size());
  const std::size_t n = blocks.size();
  for (int s = 0; s < sweeps; ++s) {
    std::vector<Eigen::MatrixXd> raw(n);
    parallel_for(0, n, [&](std::size_t i) { raw[i] = t.ds.transpose() * blocks[i] * t.dn; });
    Eigen::VectorXd mags(static_cast<Eigen::Index>(n) * x * y);
    for (std::size_t i = 0; i < n; ++i)
      mags.segment(static_cast<Eigen::Index>(i) * x * y, x * y) = raw[i].reshaped().cwiseAbs();
    t.threshold = keep_threshold(mags, keep_fraction);
    for (std::size_t i = 0; i < n; ++i)
      t.coeffs[i] = (raw[i].array().abs() >= t.threshold).select(raw[i], 0.0);

    Eigen::MatrixXd ms = Eigen::MatrixXd::Zero(x, x);
    for (std::size_t i = 0; i < n; ++i) ms += blocks[i] * (t.dn * t.coeffs[i].transpose());
    bool degenerate = false;
    t.ds = procrustes(ms, t.ds, &degenerate);
    t.degenerate_svds += degenerate;

    Eigen::MatrixXd mn = Eigen::MatrixXd::Zero(y, y);
    for (std::size_t i = 0; i < n; ++i) mn += blocks[i].transpose() * (t.ds * t.coeffs[i]);
    t.dn = procrustes(mn, t.dn, &degenerate);
    t.degenerate_svds += degenerate;

    t.sweep_residuals.push_back(triplet_residual(blocks, t));
  }
  return t;
}

}  // namespace nlos
