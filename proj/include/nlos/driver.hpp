#pragma once

// SSCR orchestration: initialization, the five-stage outer loop, the
// u-update with its balanced prior weights, and objective bookkeeping.

#include "nlos/core.hpp"
#include "nlos/forward.hpp"
#include "nlos/patch.hpp"
#include "nlos/solvers.hpp"
#include "nlos/tau_update.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nlos {

/// A sub-step failed; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage(std::move(stage)) {}
  std::string stage;
};

struct BalanceMultipliers {
  double ut = 1.0;
  double u = 1.0;
  double g = 1.0;
};

struct SscrConfig {
  int outer_iters = 5;
  double k_sparse = 10.0;
  BregmanOptions bregman;  ///< J rounds, CG caps
  double keep_fraction_s = 0.02;
  double keep_fraction_c = 0.05;
  std::optional<PatchConfig> patch;  ///< PatchConfig::default_for(geometry) when unset
  BlockConfig block;
  int triplet_sweeps = 1;
  BalanceMultipliers balance;
  bool cosine_factor = false;
  void validate() const;
};

/// tau0 = d / N.
TransientSignal init_tau(const PhotonHistogram& hist);
/// Bins with d = N, where tau0 = 1.
std::size_t saturated_bins(const PhotonHistogram& hist);

struct InitU {
  AlbedoVolume u;
  AlbedoVolume u_bp;
  AlbedoVolume u_ls;
  double s_imp = 0.0;
  double mu_s = 1.0;
  bool all_zero = false;
  std::vector<std::string> warnings;
};

/// Back-projection, CG least squares, then split Bregman with the implicit
/// l1 weight k_sparse ||tau0 - A u_ls||^2 / ||u_ls||_1.
InitU init_u(const TransientSignal& tau0, const ForwardOperator& op, const SscrConfig& cfg);

/// Weights of the u-subproblem divided through by the data weight lambda.
struct UWeights {
  double ut = 0.0;
  double u = 0.0;
  double g = 0.0;
  double s_imp = 0.0;
  double mu_s = 1.0;
};

/// Fixed auxiliaries of the u-subproblem.
struct UTerms {
  Eigen::VectorXd tau;
  Eigen::VectorXd patch_recon;  ///< P*(DS)
  Eigen::VectorXd block_rhs;    ///< sum_i B_i^T Ds C_i Dn^T
  Eigen::VectorXd coverage;     ///< diagonal of sum_i B_i^T B_i
  Eigen::VectorXd g;            ///< volume of the current surface
  double block_target_energy = 0.0;  ///< sum_i ||Ds C_i Dn^T||^2
};

/// Value of ||tau - Au||^2 + ut ||Au - P*(DS)||^2 + u sum ||B_i u - T_i||^2
/// + g ||u - g||^2 + s_imp ||u||_1.
double u_objective(const ForwardOperator& op, const Eigen::VectorXd& u, const UTerms& t,
                   const UWeights& w);

struct BalancedWeights {
  UWeights weights;
  double data = 0.0;
  double prior_ut = 0.0;
  double prior_u = 0.0;
  double prior_g = 0.0;
};

/// Each prior weight makes its term equal multiplier x ||tau - Au||^2 at u;
/// a prior already satisfied at u (zero residual) gets weight 0, as do all
/// priors when the data term itself vanishes.
BalancedWeights balanced_weights(const ForwardOperator& op, const Eigen::VectorXd& u,
                                 const UTerms& t, const BalanceMultipliers& m, double s_imp,
                                 double mu_s);

/// Minimizes u_objective from u_start: split Bregman on the combined normal
/// operator (1+ut) A^T A + u diag(coverage) + g I, or plain CG when s_imp = 0.
Eigen::VectorXd update_u(const ForwardOperator& op, const Eigen::VectorXd& u_start,
                         const UTerms& t, const UWeights& w, const BregmanOptions& opts);

struct ObjectiveWeights {
  double lambda_t = 0.0;
  double lambda = 0.0;
  double lambda_ut = 0.0;
  double lambda_u = 0.0;
  double lambda_g = 0.0;
  double s_u = 0.0;
  double lambda_pt = 0.0;  ///< weight of |S|_0
  double lambda_pu = 0.0;  ///< weight of |C|_0, inside the lambda_u bracket
};

struct ObjectiveTerms {
  double nll = 0.0;
  double patch_tau = 0.0;  ///< ||P(tau) - DS||^2
  double patch_au = 0.0;   ///< ||P(Au) - DS||^2
  double s_count = 0.0;    ///< |S|_0
  double data = 0.0;       ///< ||tau - Au||^2
  double l1 = 0.0;         ///< ||u||_1
  double surface = 0.0;    ///< ||u - g||^2
  double blocks = 0.0;     ///< sum ||B_i u - Ds C_i Dn^T||^2
  double c_count = 0.0;    ///< sum |C_i|_0
  double total(const ObjectiveWeights& w) const;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  ObjectiveTerms terms;
  ObjectiveWeights weights;
  double nll = 0.0;
  double rel_misfit = 0.0;    ///< ||tau - Au|| / ||tau||, 0 for a zero tau
  double rel_misfit_d = 0.0;  ///< ||tau0 - Au|| / ||tau0||, 0 for a zero tau0
  double s_threshold = 0.0;
  std::size_t s_kept = 0;
  double c_threshold = 0.0;
  double triplet_residual = 0.0;
  std::size_t foreground = 0;
};

struct SscrParams {
  double s_imp = 0.0;
  double mu_s = 1.0;
  AdaptiveLambda lambda;
  PatchConfig patch;
  BlockConfig block;
  std::size_t saturated_bins = 0;
  std::vector<std::string> warnings;
};

struct SscrState {
  TransientSignal tau;
  AlbedoVolume u;
  SurfaceG g;
  DictionaryTriplet triplet;
  std::vector<BlockGroup> groups;
  Eigen::MatrixXd S;
  SscrParams params;
  std::vector<IterationRecord> trace;
  std::vector<std::string> stage_log;
};

/// Objective terms at the state (the surface prior itself counts as 0).
ObjectiveTerms objective_terms(const SscrState& s, const PhotonHistogram& hist,
                               const ForwardOperator& op);
double objective(const SscrState& s, const PhotonHistogram& hist, const ForwardOperator& op,
                 const ObjectiveWeights& w);

/// Stage names in the order they are logged.
inline constexpr const char* kStageTau0 = "A1:tau0";
inline constexpr const char* kStageU0 = "A2:u0";
inline constexpr const char* kStageG = "B1:g";
inline constexpr const char* kStageTriplet = "B2:triplet";
inline constexpr const char* kStageS = "B3:S";
inline constexpr const char* kStageTau = "B4:tau";
inline constexpr const char* kStageU = "B5:u";
inline constexpr const char* kStageFinal = "final:g";

/// Called after every completed stage with its name and the current state.
using StageObserver = std::function<void(const char* stage, const SscrState& state)>;

SscrState sscr_reconstruct(const PhotonHistogram& hist, const MeasurementGeometry& geometry,
                           const VoxelGrid& grid, const SscrConfig& cfg,
                           const StageObserver& observer = {});

}  // namespace nlos
