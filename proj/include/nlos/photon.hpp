#pragma once

// Bernoulli photon-event simulation and the matching negative log-likelihood.

#include "nlos/core.hpp"

#include <cstdint>

namespace nlos {

/// Identifier written into histogram files for the sampling scheme below.
inline constexpr const char* kRngId = "splitmix64-mt19937_64-binomial";

class ProbabilityOverflow : public Error {
 public:
  using Error::Error;
};

/// Per-pulse detection probability is eta * tau + dark_rate.
struct NoiseModel {
  double eta = 1.0;
  double dark_rate = 0.0;

  void validate() const;
};

/// Draws counts[p,q] ~ Binomial(N, eta * tau[p,q] + dark_rate). Each bin owns
/// a generator keyed by (seed, p, q), so the output does not depend on the
/// order in which bins are visited.
PhotonHistogram sample_histogram(const TransientSignal& tau, std::uint32_t pulses,
                                 const NoiseModel& model, std::uint64_t seed);

/// Single-bin term (d - N) ln(1 - tau) - d ln(tau) with 0 ln 0 = 0.
double bin_nll(std::uint32_t d, std::uint32_t pulses, double tau);

/// Sum of bin_nll over the histogram; +inf when an observed count is
/// impossible under tau.
double nll(const TransientSignal& tau, const PhotonHistogram& hist);
double nll(const Eigen::VectorXd& tau, const PhotonHistogram& hist);

}  // namespace nlos
