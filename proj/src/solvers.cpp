#include "nlos/solvers.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nlos {

LinearMap identity_map(Eigen::Index n) {
  auto id = [](const Eigen::VectorXd& x) { return x; };
  return LinearMap{id, id, n, n};
}

LinearMap dense_map(const Eigen::MatrixXd& m) {
  return LinearMap{[m](const Eigen::VectorXd& x) -> Eigen::VectorXd { return m * x; },
                   [m](const Eigen::VectorXd& y) -> Eigen::VectorXd { return m.transpose() * y; },
                   m.rows(), m.cols()};
}

LinearMap normal_map(const LinearMap& a, double shift) {
  auto f = [a, shift](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd y = a.apply_adjoint(a.apply(x));
    if (shift != 0.0) y += shift * x;
    return y;
  };
  return LinearMap{f, f, a.cols, a.cols};
}

CgResult cg_solve(const LinearMap& m, const Eigen::VectorXd& b, const Eigen::VectorXd& x0,
                  int max_iter, double rel_tol, const CgObserver& observer) {
  CgResult res;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x = Eigen::VectorXd::Zero(b.size());
    res.residual_history = {0.0};
    res.status = CgStatus::Converged;
    return res;
  }
  Eigen::VectorXd x = x0;
  Eigen::VectorXd r = b - m.apply(x);
  double rr = r.squaredNorm();
  double rel = std::sqrt(rr) / bnorm;
  res.residual_history.push_back(rel);

  Eigen::VectorXd best = x;
  double best_rel = rel;
  if (rel <= rel_tol) {
    res.x = x;
    res.status = CgStatus::Converged;
    return res;
  }
  Eigen::VectorXd p = r;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd mp = m.apply(p);
    const double curvature = p.dot(mp);
    if (!(curvature > std::numeric_limits<double>::min() * p.squaredNorm())) {
      res.x = best;
      res.iterations = it - 1;
      res.status = CgStatus::Breakdown;
      return res;
    }
    const double alpha = rr / curvature;
    x += alpha * p;
    r -= alpha * mp;
    const double rr_new = r.squaredNorm();
    rel = std::sqrt(rr_new) / bnorm;
    res.residual_history.push_back(rel);
    res.iterations = it;
    if (observer) observer(it, x);
    if (rel < best_rel) {
      best_rel = rel;
      best = x;
    }
    if (rel <= rel_tol) {
      res.x = x;
      res.status = CgStatus::Converged;
      return res;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  res.x = x;
  res.status = CgStatus::MaxIterations;
  return res;
}

// ---------------------------------------------------------------------------

double graph_ls_objective(const GraphLS& problem, const Eigen::VectorXd& u) {
  double f = 0.0;
  for (int i = 0; i < problem.nodes; ++i) {
    const double r = u[i] - problem.data[i];
    f += problem.lambda[i] * r * r;
  }
  for (const auto& e : problem.edges) {
    const double r = u[e.i] - u[e.j];
    f += e.w * r * r;
  }
  return f;
}

namespace {

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

}  // namespace

GraphLsResult graph_ls_solve(const GraphLS& problem, double tol, int max_iter) {
  const int n = problem.nodes;
  if (static_cast<int>(problem.lambda.size()) != n || static_cast<int>(problem.data.size()) != n)
    throw DimensionMismatch("graph problem weights do not match node count");
  for (const auto& e : problem.edges)
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n || e.w < 0)
      throw ConfigError("graph edge out of range or with negative weight");

  // Components that no data weight reaches are pinned to zero.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& e : problem.edges)
    if (e.w > 0) parent[find_root(parent, e.i)] = find_root(parent, e.j);
  std::vector<char> anchored(n, 0);
  for (int i = 0; i < n; ++i)
    if (problem.lambda[i] > 0) anchored[find_root(parent, i)] = 1;

  GraphLsResult res;
  std::vector<char> pinned(n, 0);
  {
    std::vector<char> seen(n, 0);
    for (int i = 0; i < n; ++i) {
      const int r = find_root(parent, i);
      if (!anchored[r]) {
        pinned[i] = 1;
        if (!seen[r]) {
          seen[r] = 1;
          ++res.isolated_components;
        }
      }
    }
  }
  if (std::all_of(pinned.begin(), pinned.end(), [](char c) { return c != 0; }))
    throw SingularSystem("graph least squares has no data weight on any node");

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    diag[i] = problem.lambda[i];
    rhs[i] = problem.lambda[i] * problem.data[i];
  }
  for (const auto& e : problem.edges) {
    if (e.w == 0 || e.i == e.j) continue;
    diag[e.i] += e.w;
    diag[e.j] += e.w;
    trip.emplace_back(e.i, e.j, -e.w);
    trip.emplace_back(e.j, e.i, -e.w);
  }
  for (int i = 0; i < n; ++i) {
    if (pinned[i]) {
      diag[i] = 1.0;
      rhs[i] = 0.0;
    }
    trip.emplace_back(i, i, diag[i]);
  }
  Eigen::SparseMatrix<double> sys(n, n);
  sys.setFromTriplets(trip.begin(), trip.end());
  sys.prune([&](Eigen::Index r, Eigen::Index c, double) { return r == c || (!pinned[r] && !pinned[c]); });

  // Start from the data on anchored nodes and the running mean of the
  // component's data elsewhere; a constant field is then already exact.
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  std::vector<double> mean(n, 0.0);
  std::vector<int> cnt(n, 0);
  for (int i = 0; i < n; ++i)
    if (problem.lambda[i] > 0) {
      const int r = find_root(parent, i);
      ++cnt[r];
      mean[r] += (problem.data[i] - mean[r]) / cnt[r];
    }
  for (int i = 0; i < n; ++i) {
    if (pinned[i]) continue;
    x0[i] = problem.lambda[i] > 0 ? problem.data[i] : mean[find_root(parent, i)];
  }

  LinearMap m{[&sys](const Eigen::VectorXd& x) -> Eigen::VectorXd { return sys * x; },
              [&sys](const Eigen::VectorXd& x) -> Eigen::VectorXd { return sys * x; }, n, n};
  const auto cg = cg_solve(m, rhs, x0, max_iter > 0 ? max_iter : 20 * n, tol);
  res.u = cg.x;
  res.iterations = cg.iterations;
  res.relative_residual = cg.residual_history.empty() ? 0.0 : cg.residual_history.back();
  if (cg.status == CgStatus::Breakdown) res.relative_residual = (rhs - sys * res.u).norm() / std::max(rhs.norm(), 1e-300);
  return res;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double t) {
  if (t < 0) throw ConfigError("soft threshold level must be nonnegative");
  return x.unaryExpr([t](double v) {
    const double a = std::abs(v) - t;
    return a > 0 ? std::copysign(a, v) : 0.0;
  });
}

BregmanResult split_bregman(const LinearMap& normal, const Eigen::VectorXd& rhs, double s,
                            double mu, const BregmanOptions& opts, const Eigen::VectorXd& u0) {
  if (s < 0) throw ConfigError("l1 weight must be nonnegative");
  if (!(mu > 0)) throw ConfigError("Bregman penalty must be positive");
  BregmanResult res;
  Eigen::VectorXd u = u0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(u.size());
  Eigen::VectorXd v = u;
  LinearMap shifted = normal;
  shifted.apply = [&normal, mu](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return normal.apply(x) + mu * x;
  };
  shifted.apply_adjoint = shifted.apply;
  const double level = s / (2.0 * mu);
  for (int j = 0; j < opts.outer_iters; ++j) {
    v = soft_threshold(u - b, level);
    u = cg_solve(shifted, rhs + mu * (v + b), u, opts.cg_max_iter, opts.cg_rel_tol).x;
    b += v - u;
    res.constraint_gap.push_back((v - u).norm() / std::max(1.0, u.norm()));
  }
  res.v = v;
  res.u = u;
  return res;
}

BregmanResult l1_ls_bregman(const LinearMap& a, const Eigen::VectorXd& tau, double s_imp,
                            double mu_s, const BregmanOptions& opts,
                            const Eigen::VectorXd* u_init) {
  if (s_imp < 0) throw ConfigError("l1 weight must be nonnegative");
  if (!(mu_s > 0)) throw ConfigError("Bregman penalty must be positive");
  const Eigen::VectorXd atb = a.apply_adjoint(tau);
  const LinearMap normal = normal_map(a);
  const Eigen::VectorXd u =
      u_init ? *u_init : cg_solve(normal, atb, atb, opts.cg_max_iter, opts.cg_rel_tol).x;
  return split_bregman(normal, atb, s_imp, mu_s, opts, u);
}

}  // namespace nlos
