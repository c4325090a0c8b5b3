#include "nlos/tau_update.hpp"

#include "nlos/parallel.hpp"
#include "nlos/photon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nlos {

double bin_objective(const BinProblem& p, double tau) {
  const double r = tau - p.s;
  return bin_nll(p.d, p.pulses, tau) + p.mu * r * r;
}

double bin_cubic(const BinProblem& p, double x) {
  const double a = p.pulses / (2.0 * p.mu);
  const double c = p.d / (2.0 * p.mu);
  return ((x - (p.s + 1.0)) * x + (p.s - a)) * x + c;
}

namespace {

double cubic_slope(const BinProblem& p, double x) {
  const double a = p.pulses / (2.0 * p.mu);
  return (3.0 * x - 2.0 * (p.s + 1.0)) * x + (p.s - a);
}

}  // namespace

double solve_bin(const BinProblem& p) {
  if (!(p.mu > 0)) throw ConfigError("bin problem needs mu > 0");
  if (p.d > p.pulses) throw ConfigError("bin problem needs d <= N");
  const double ratio = 2.0 * p.pulses / p.mu;
  if (p.d == 0) {
    const double t = 1.0 - p.s;
    return std::max(0.0, 1.0 - 0.5 * (t + std::sqrt(t * t + ratio)));
  }
  if (p.d == p.pulses) return std::min(1.0, 0.5 * (p.s + std::sqrt(p.s * p.s + ratio)));

  // p(0) = d/(2mu) > 0 and p(1) = (d-N)/(2mu) < 0, with a single crossing.
  constexpr double eps = 1e-15;
  double lo = eps, hi = 1.0 - eps;
  double x = std::clamp(static_cast<double>(p.d) / p.pulses, lo, hi);
  double best = x;
  double best_val = std::abs(bin_cubic(p, x));
  for (int it = 0; it < 200; ++it) {
    const double v = bin_cubic(p, x);
    if (std::abs(v) < best_val) {
      best_val = std::abs(v);
      best = x;
    }
    if (v == 0.0) break;
    if (v > 0) lo = x; else hi = x;
    if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) break;
    const double slope = cubic_slope(p, x);
    double next = slope != 0.0 ? x - v / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  for (double cand : {lo, hi}) {
    const double v = std::abs(bin_cubic(p, cand));
    if (v < best_val) {
      best_val = v;
      best = cand;
    }
  }
  return best;
}

TransientSignal update_tau(const PhotonHistogram& hist, const TransientSignal& patch_recon,
                           const TransientSignal& au, double lambda_t, double lambda,
                           const PatchConfig& patch_cfg) {
  if (!patch_cfg.non_overlapping())
    throw ConfigError("signal update needs a non-overlapping patch tiling");
  if (!(lambda_t > 0) || !(lambda > 0)) throw ConfigError("signal update needs positive weights");
  const auto n = static_cast<Eigen::Index>(hist.counts.size());
  if (patch_recon.values.size() != n || au.values.size() != n)
    throw DimensionMismatch("signal update: histogram and predictions differ in size");
  const double mu = lambda_t + lambda;
  TransientSignal tau(hist.geometry);
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    BinProblem bp;
    bp.d = hist.counts[idx];
    bp.pulses = hist.pulses;
    bp.mu = mu;
    bp.s = (lambda_t * patch_recon.values[i] + lambda * au.values[i]) / mu;
    tau.values[i] = solve_bin(bp);
  });
  return tau;
}

AdaptiveLambda adaptive_lambda(const PhotonHistogram& hist, const TransientSignal& tau0,
                               const TransientSignal& patch_recon1, const TransientSignal& au0) {
  AdaptiveLambda out;
  out.numerator = nll(tau0, hist);
  out.denominator = (tau0.values - 0.5 * (patch_recon1.values + au0.values)).squaredNorm();
  if (out.denominator > 0 && out.numerator > 0 && std::isfinite(out.numerator)) {
    out.value = out.numerator / out.denominator;
    return out;
  }
  out.degenerate = true;
  out.value = 1.0;
  std::ostringstream os;
  os << "adaptive lambda degenerate (numerator " << out.numerator << ", denominator "
     << out.denominator << "); using 1";
  out.warning = os.str();
  return out;
}

}  // namespace nlos
