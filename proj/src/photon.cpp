#include "nlos/photon.hpp"

#include "nlos/parallel.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace nlos {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t bin_key(std::uint64_t seed, std::uint64_t p, std::uint64_t q) {
  return splitmix64(splitmix64(splitmix64(seed) ^ p) ^ (q + 0x632be59bd9b4e019ULL));
}

}  // namespace

void NoiseModel::validate() const {
  if (!(eta > 0)) throw ConfigError("detection efficiency eta must be positive");
  if (!(dark_rate >= 0)) throw ConfigError("dark rate must be nonnegative");
}

PhotonHistogram sample_histogram(const TransientSignal& tau, std::uint32_t pulses,
                                 const NoiseModel& model, std::uint64_t seed) {
  model.validate();
  if (pulses < 1) throw ConfigError("pulse count must be positive");
  const auto& geo = tau.geometry;
  geo.validate();
  const int Q = geo.num_bins;
  const std::size_t n = geo.signal_size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double prob = model.eta * tau.values[static_cast<Eigen::Index>(idx)] + model.dark_rate;
    if (!(prob < 1.0) || !(prob >= 0.0)) {
      std::ostringstream os;
      os << "detection probability " << prob << " outside [0,1) at (p,q) = (" << idx / Q
         << "," << idx % Q << ")";
      throw ProbabilityOverflow(os.str());
    }
  }
  PhotonHistogram hist;
  hist.geometry = geo;
  hist.pulses = pulses;
  hist.rng_id = kRngId;
  hist.seed = seed;
  hist.counts.assign(n, 0);
  parallel_for(0, n, [&](std::size_t idx) {
    const double prob = model.eta * tau.values[static_cast<Eigen::Index>(idx)] + model.dark_rate;
    if (prob <= 0.0) return;
    std::mt19937_64 rng(bin_key(seed, idx / Q, idx % Q));
    std::binomial_distribution<std::uint32_t> dist(pulses, prob);
    hist.counts[idx] = dist(rng);
  });
  return hist;
}

double bin_nll(std::uint32_t d, std::uint32_t pulses, double tau) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double f = 0.0;
  if (d < pulses) {
    if (tau >= 1.0) return inf;
    f += (static_cast<double>(d) - pulses) * std::log1p(-tau);
  }
  if (d > 0) {
    if (tau <= 0.0) return inf;
    f -= static_cast<double>(d) * std::log(tau);
  }
  return f;
}

double nll(const Eigen::VectorXd& tau, const PhotonHistogram& hist) {
  if (static_cast<std::size_t>(tau.size()) != hist.counts.size())
    throw DimensionMismatch("nll: signal and histogram sizes differ");
  double f = 0.0;
  for (std::size_t idx = 0; idx < hist.counts.size(); ++idx)
    f += bin_nll(hist.counts[idx], hist.pulses, tau[static_cast<Eigen::Index>(idx)]);
  return f;
}

double nll(const TransientSignal& tau, const PhotonHistogram& hist) {
  return nll(tau.values, hist);
}

}  // namespace nlos
