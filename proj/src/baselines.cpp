#include "nlos/baselines.hpp"

#include "nlos/surfaciation.hpp"

#include <cmath>
#include <limits>

namespace nlos {

namespace {

Eigen::VectorXd histogram_rate(const PhotonHistogram& hist) {
  Eigen::VectorXd tau(static_cast<Eigen::Index>(hist.counts.size()));
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    tau[static_cast<Eigen::Index>(i)] = static_cast<double>(hist.counts[i]) / hist.pulses;
  return tau;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  return k;
}

AlbedoVolume blur_axis(const AlbedoVolume& in, const std::vector<double>& kernel, int axis) {
  AlbedoVolume out(in.grid);
  const int radius = static_cast<int>(kernel.size() / 2);
  const auto& d = in.grid.dims;
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          std::array<int, 3> c{i, j, k};
          c[axis] += t;
          if (c[axis] < 0 || c[axis] >= d[axis]) continue;
          acc += kernel[t + radius] * in(c[0], c[1], c[2]);
        }
        out(i, j, k) = acc;
      }
  return out;
}

}  // namespace

AlbedoVolume back_projection(const PhotonHistogram& hist, const ForwardOperator& op) {
  return AlbedoVolume(op.grid(), op.apply_adjoint(histogram_rate(hist)));
}

AlbedoVolume log_filter(const AlbedoVolume& u, double sigma, bool clamp) {
  if (!(sigma > 0)) throw ConfigError("LoG sigma must be positive");
  const auto kernel = gaussian_kernel(sigma);
  AlbedoVolume g = u;
  for (int axis = 0; axis < 3; ++axis) g = blur_axis(g, kernel, axis);
  AlbedoVolume out(u.grid);
  const auto& d = u.grid.dims;
  auto at = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= d[0] || j >= d[1] || k >= d[2]) return 0.0;
    return g(i, j, k);
  };
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        const double lap = at(i - 1, j, k) + at(i + 1, j, k) + at(i, j - 1, k) +
                           at(i, j + 1, k) + at(i, j, k - 1) + at(i, j, k + 1) - 6.0 * g(i, j, k);
        const double v = -lap;
        out(i, j, k) = clamp ? std::max(0.0, v) : v;
      }
  return out;
}

AlbedoVolume log_bp(const PhotonHistogram& hist, const ForwardOperator& op, double sigma) {
  return log_filter(back_projection(hist, op), sigma, true);
}

LsCgResult ls_cg_reconstruct(const TransientSignal& tau, const ForwardOperator& op, int iters) {
  if (iters < 1) throw ConfigError("least-squares CG needs at least one iteration");
  const Eigen::VectorXd atb = op.apply_adjoint(tau.values);
  const double atb_norm = atb.norm();
  const double tau_norm = tau.values.norm();
  if (atb_norm == 0 || tau_norm == 0) throw ZeroSignal("least-squares CG on a zero signal");
  LsCgResult res;
  auto record = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd ax = op.apply(x);
    res.log_normal_residual.push_back(std::log((op.apply_adjoint(ax) - atb).norm() / atb_norm));
    res.log_misfit.push_back(std::log((ax - tau.values).norm() / tau_norm));
  };
  record(atb);
  // Past this floor the iterates only chase round-off.
  const auto cg = cg_solve(normal_map(op.as_linear_map()), atb, atb, iters, 1e-13,
                           [&](int, const Eigen::VectorXd& x) { record(x); });
  res.u = AlbedoVolume(op.grid(), cg.x);
  return res;
}

LsCgResult ls_cg_reconstruct(const PhotonHistogram& hist, const ForwardOperator& op, int iters) {
  return ls_cg_reconstruct(TransientSignal(hist.geometry, histogram_rate(hist)), op, iters);
}

double rel_misfit(const AlbedoVolume& u, const TransientSignal& tau, const ForwardOperator& op) {
  const double tn = tau.values.norm();
  if (tn == 0) throw ZeroSignal("relative misfit against a zero signal");
  return (op.apply(u.values) - tau.values).norm() / tn;
}

SurfaceMetrics metrics(const SurfaceG& recon, const SurfaceG& truth) {
  if (recon.grid.nx() != truth.grid.nx() || recon.grid.ny() != truth.grid.ny())
    throw DimensionMismatch("metrics: surfaces on different pixel lattices");
  SurfaceMetrics m;
  std::size_t inter = 0, uni = 0, nr = 0, nt = 0;
  double sq = 0.0;
  for (std::size_t p = 0; p < truth.e.size(); ++p) {
    const bool r = recon.e[p] != 0, t = truth.e[p] != 0;
    nr += r;
    nt += t;
    uni += (r || t);
    if (r && t) {
      ++inter;
      const double dd = static_cast<double>(*recon.depth[p] - *truth.depth[p]);
      sq += dd * dd;
    }
  }
  if (nt == 0) {
    m.empty_truth = true;
    return m;
  }
  m.iou = static_cast<double>(inter) / static_cast<double>(uni);
  m.depth_rmse_voxels =
      inter > 0 ? std::sqrt(sq / static_cast<double>(inter)) : std::numeric_limits<double>::quiet_NaN();
  m.precision = nr > 0 ? static_cast<double>(inter) / static_cast<double>(nr) : 0.0;
  m.recall = static_cast<double>(inter) / static_cast<double>(nt);
  return m;
}

SurfaceG thresholded_surface(const AlbedoVolume& u, double fraction) {
  AlbedoVolume v = u;
  const double cut = fraction * u.values.maxCoeff();
  for (auto& x : v.values) x = x >= cut && x > 0 ? x : 0.0;
  return surfaciate(v);
}

}  // namespace nlos
