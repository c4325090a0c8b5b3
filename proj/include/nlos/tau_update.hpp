#pragma once

// Per-bin update of the transient estimate: the Bernoulli negative
// log-likelihood plus a quadratic pull, minimized exactly bin by bin.

#include "nlos/core.hpp"
#include "nlos/patch.hpp"

#include <cstdint>
#include <string>

namespace nlos {

/// f(tau) = (d - N) ln(1 - tau) - d ln(tau) + mu (tau - s)^2 on [0, 1].
struct BinProblem {
  std::uint32_t d = 0;
  std::uint32_t pulses = 1;
  double mu = 1.0;
  double s = 0.0;
};

double bin_objective(const BinProblem& p, double tau);

/// x^3 - (s+1) x^2 + (s - N/(2mu)) x + d/(2mu); its root in (0,1) is the
/// stationary point of f when 0 < d < N.
double bin_cubic(const BinProblem& p, double x);

/// Global minimizer of f on [0, 1]. Closed forms for d = 0 and d = N,
/// safeguarded Newton on the cubic otherwise.
double solve_bin(const BinProblem& p);

/// Minimizes nll(tau) + lambda_t ||tau - patch_recon||^2 + lambda ||tau - Au||^2
/// bin by bin. patch_recon is the aggregated dictionary synthesis, which
/// stands in for the patch-space term only under a non-overlapping tiling.
TransientSignal update_tau(const PhotonHistogram& hist, const TransientSignal& patch_recon,
                           const TransientSignal& au, double lambda_t, double lambda,
                           const PatchConfig& patch_cfg);

struct AdaptiveLambda {
  double value = 1.0;
  double numerator = 0.0;
  double denominator = 0.0;
  bool degenerate = false;
  std::string warning;
};

/// lambda_t = lambda = nll(tau0) / ||tau0 - (patch_recon1 + Au0)/2||^2, falling
/// back to 1 when either side vanishes.
AdaptiveLambda adaptive_lambda(const PhotonHistogram& hist, const TransientSignal& tau0,
                               const TransientSignal& patch_recon1, const TransientSignal& au0);

}  // namespace nlos
