#pragma once

// Generic iterative kernels: conjugate gradient, weighted graph least squares,
// soft thresholding and split-Bregman L1-regularized least squares.

#include "nlos/core.hpp"

#include <functional>
#include <vector>

namespace nlos {

/// A linear operator given by its action and the action of its transpose.
struct LinearMap {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply_adjoint;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

LinearMap identity_map(Eigen::Index n);
LinearMap dense_map(const Eigen::MatrixXd& m);
/// A^T A + shift * I, symmetric.
LinearMap normal_map(const LinearMap& a, double shift = 0.0);

enum class CgStatus { Converged, MaxIterations, Breakdown };

struct CgResult {
  Eigen::VectorXd x;
  /// Relative residual ||b - Mx|| / ||b||; entry 0 is the starting point,
  /// entry n the residual after iteration n.
  std::vector<double> residual_history;
  int iterations = 0;
  CgStatus status = CgStatus::MaxIterations;
};

/// Conjugate gradient for a symmetric positive semidefinite map. On
/// breakdown (vanishing curvature along a search direction) the iterate with
/// the smallest residual seen so far is returned with status Breakdown.
/// observer, when set, sees every iterate after its update.
using CgObserver = std::function<void(int iteration, const Eigen::VectorXd& x)>;
CgResult cg_solve(const LinearMap& m, const Eigen::VectorXd& b, const Eigen::VectorXd& x0,
                  int max_iter, double rel_tol, const CgObserver& observer = {});

// ---------------------------------------------------------------------------

class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// Pair term w * (u_i - u_j)^2 of a graph least-squares objective.
struct GraphEdge {
  int i = 0;
  int j = 0;
  double w = 0.0;
};

/// F(u) = sum_i lambda_i (u_i - d_i)^2 + sum_edges w (u_i - u_j)^2.
struct GraphLS {
  int nodes = 0;
  std::vector<double> lambda;
  std::vector<double> data;
  std::vector<GraphEdge> edges;
};

struct GraphLsResult {
  Eigen::VectorXd u;
  /// Connected components without any data weight; their nodes are set to 0.
  int isolated_components = 0;
  double relative_residual = 0.0;
  int iterations = 0;
};

double graph_ls_objective(const GraphLS& problem, const Eigen::VectorXd& u);

/// Solves the normal system lambda_i u_i + sum_k (w_ik + w_ki)(u_i - u_k) =
/// lambda_i d_i by conjugate gradients. max_iter <= 0 picks 20 * nodes.
/// Throws SingularSystem only when no node carries data weight at all.
GraphLsResult graph_ls_solve(const GraphLS& problem, double tol = 1e-8, int max_iter = 0);

// ---------------------------------------------------------------------------

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double t);

struct BregmanOptions {
  int outer_iters = 10;
  int cg_max_iter = 20;
  double cg_rel_tol = 0.005;
};

struct BregmanResult {
  Eigen::VectorXd v;  ///< sparse split variable after the last round (the answer)
  Eigen::VectorXd u;  ///< least-squares variable after the last round
  /// ||v_j - u_j|| / max(1, ||u_j||) after each round.
  std::vector<double> constraint_gap;
};

/// Split Bregman for min u^T M u - 2 rhs^T u + s ||u||_1, M symmetric positive
/// semidefinite, starting from u0. Each round soft-thresholds, then solves
/// (M + mu I) u = rhs + mu (v + b) by CG from the previous u.
BregmanResult split_bregman(const LinearMap& normal, const Eigen::VectorXd& rhs, double s,
                            double mu, const BregmanOptions& opts, const Eigen::VectorXd& u0);

/// Split-Bregman solution of min ||A u - tau||^2 + s_imp ||u||_1 with penalty
/// mu_s. u_init, when given, replaces the unregularized least-squares start.
BregmanResult l1_ls_bregman(const LinearMap& a, const Eigen::VectorXd& tau, double s_imp,
                            double mu_s, const BregmanOptions& opts,
                            const Eigen::VectorXd* u_init = nullptr);

}  // namespace nlos
