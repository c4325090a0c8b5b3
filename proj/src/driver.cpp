#include "nlos/driver.hpp"

#include "nlos/photon.hpp"
#include "nlos/surfaciation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nlos {

namespace {

std::size_t count_nonzero(const Eigen::VectorXd& v, double tol = 1e-12) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) n += std::abs(v[i]) > tol;
  return n;
}

std::size_t count_nonzero(const Eigen::MatrixXd& m) {
  return static_cast<std::size_t>((m.array() != 0.0).count());
}

double safe_rel(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

void SscrConfig::validate() const {
  if (outer_iters < 1) throw ConfigError("outer_iters must be >= 1");
  if (!(k_sparse > 0)) throw ConfigError("k_sparse must be positive");
  if (bregman.outer_iters < 1) throw ConfigError("bregman_iters must be >= 1");
  if (bregman.cg_max_iter < 1) throw ConfigError("cg_max_iter must be >= 1");
  if (!(bregman.cg_rel_tol > 0)) throw ConfigError("cg_rel_tol must be positive");
  if (!(keep_fraction_s > 0 && keep_fraction_s <= 1))
    throw ConfigError("keep_fraction_s must lie in (0, 1]");
  if (!(keep_fraction_c > 0 && keep_fraction_c <= 1))
    throw ConfigError("keep_fraction_c must lie in (0, 1]");
  if (triplet_sweeps < 1) throw ConfigError("triplet_sweeps must be >= 1");
  if (!(balance.ut > 0 && balance.u > 0 && balance.g > 0))
    throw ConfigError("balance multipliers must be positive");
}

TransientSignal init_tau(const PhotonHistogram& hist) {
  TransientSignal tau(hist.geometry);
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    tau.values[static_cast<Eigen::Index>(i)] =
        static_cast<double>(hist.counts[i]) / static_cast<double>(hist.pulses);
  return tau;
}

std::size_t saturated_bins(const PhotonHistogram& hist) {
  return static_cast<std::size_t>(
      std::count(hist.counts.begin(), hist.counts.end(), hist.pulses));
}

InitU init_u(const TransientSignal& tau0, const ForwardOperator& op, const SscrConfig& cfg) {
  InitU out;
  const VoxelGrid& grid = op.grid();
  out.u = AlbedoVolume(grid);
  out.u_bp = op.adjoint(tau0);
  out.u_ls = AlbedoVolume(grid);
  if (tau0.values.isZero(0.0)) {
    out.all_zero = true;
    out.warnings.push_back("all-zero signal: u0 set to zero");
    return out;
  }
  const LinearMap a = op.as_linear_map();
  const Eigen::VectorXd& atb = out.u_bp.values;
  out.u_ls.values = cg_solve(normal_map(a), atb, atb, cfg.bregman.cg_max_iter,
                             cfg.bregman.cg_rel_tol).x;
  const double misfit = (tau0.values - op.apply(out.u_ls.values)).squaredNorm();
  const double l1 = out.u_ls.values.lpNorm<1>();
  const double l0 = static_cast<double>(count_nonzero(out.u_ls.values));
  if (l1 > 0) {
    out.s_imp = cfg.k_sparse * misfit / l1;
    out.mu_s = l0 / (2.0 * l1) * out.s_imp;
  }
  if (!(out.mu_s > 0)) {
    out.mu_s = 1.0;
    out.warnings.push_back("least-squares start fits exactly: l1 weight 0, Bregman penalty 1");
  }
  if (out.s_imp > 0) {
    out.u.values =
        l1_ls_bregman(a, tau0.values, out.s_imp, out.mu_s, cfg.bregman, &out.u_ls.values).v;
  } else {
    out.u.values = out.u_ls.values;
  }
  return out;
}

double u_objective(const ForwardOperator& op, const Eigen::VectorXd& u, const UTerms& t,
                   const UWeights& w) {
  const Eigen::VectorXd au = op.apply(u);
  const double blocks = std::max(
      0.0, u.dot(t.coverage.cwiseProduct(u)) - 2.0 * u.dot(t.block_rhs) + t.block_target_energy);
  return (t.tau - au).squaredNorm() + w.ut * (au - t.patch_recon).squaredNorm() +
         w.u * blocks + w.g * (u - t.g).squaredNorm() + w.s_imp * u.lpNorm<1>();
}

BalancedWeights balanced_weights(const ForwardOperator& op, const Eigen::VectorXd& u,
                                 const UTerms& t, const BalanceMultipliers& m, double s_imp,
                                 double mu_s) {
  BalancedWeights b;
  const Eigen::VectorXd au = op.apply(u);
  b.data = (t.tau - au).squaredNorm();
  b.prior_ut = (au - t.patch_recon).squaredNorm();
  b.prior_u = std::max(
      0.0, u.dot(t.coverage.cwiseProduct(u)) - 2.0 * u.dot(t.block_rhs) + t.block_target_energy);
  b.prior_g = (u - t.g).squaredNorm();
  auto weight = [&](double multiplier, double prior) {
    return b.data > 0 && prior > 0 ? multiplier * b.data / prior : 0.0;
  };
  b.weights.ut = weight(m.ut, b.prior_ut);
  b.weights.u = weight(m.u, b.prior_u);
  b.weights.g = weight(m.g, b.prior_g);
  b.weights.s_imp = s_imp;
  b.weights.mu_s = mu_s;
  return b;
}

Eigen::VectorXd update_u(const ForwardOperator& op, const Eigen::VectorXd& u_start,
                         const UTerms& t, const UWeights& w, const BregmanOptions& opts) {
  LinearMap normal;
  normal.rows = normal.cols = u_start.size();
  normal.apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd y = (1.0 + w.ut) * op.apply_adjoint(op.apply(x));
    if (w.u != 0) y += w.u * t.coverage.cwiseProduct(x);
    if (w.g != 0) y += w.g * x;
    return y;
  };
  normal.apply_adjoint = normal.apply;
  Eigen::VectorXd rhs = op.apply_adjoint(t.tau);
  if (w.ut != 0) rhs += w.ut * op.apply_adjoint(t.patch_recon);
  if (w.u != 0) rhs += w.u * t.block_rhs;
  if (w.g != 0) rhs += w.g * t.g;
  if (w.s_imp == 0) return cg_solve(normal, rhs, u_start, opts.cg_max_iter, opts.cg_rel_tol).x;
  return split_bregman(normal, rhs, w.s_imp, w.mu_s, opts, u_start).v;
}

double ObjectiveTerms::total(const ObjectiveWeights& w) const {
  return nll + w.lambda_t * patch_tau + w.lambda_ut * patch_au + w.lambda_pt * s_count +
         w.lambda * data + w.s_u * l1 + w.lambda_g * surface +
         w.lambda_u * (blocks + w.lambda_pu * c_count);
}

ObjectiveTerms objective_terms(const SscrState& s, const PhotonHistogram& hist,
                               const ForwardOperator& op) {
  ObjectiveTerms t;
  const Eigen::VectorXd au = op.apply(s.u.values);
  t.nll = nll(s.tau.values, hist);
  t.data = (s.tau.values - au).squaredNorm();
  t.l1 = s.u.values.lpNorm<1>();
  t.surface = (s.u.values - surface_to_volume(s.g).values).squaredNorm();
  if (s.S.size() > 0) {
    const SignalDictionary dict(s.params.patch.shape);
    const Eigen::MatrixXd ds = dict.synthesize(s.S);
    t.patch_tau = (extract_patches(s.tau, s.params.patch) - ds).squaredNorm();
    t.patch_au = (extract_patches(au, s.tau.geometry, s.params.patch) - ds).squaredNorm();
    t.s_count = static_cast<double>(count_nonzero(s.S));
  }
  if (!s.groups.empty()) {
    const auto blocks = gather_blocks(s.u, s.groups, s.params.block.block);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      t.blocks += (blocks[i] - s.triplet.reconstruct(i)).squaredNorm();
      t.c_count += static_cast<double>(count_nonzero(s.triplet.coeffs[i]));
    }
  }
  return t;
}

double objective(const SscrState& s, const PhotonHistogram& hist, const ForwardOperator& op,
                 const ObjectiveWeights& w) {
  return objective_terms(s, hist, op).total(w);
}

namespace {

BlockConfig resolve_block(const BlockConfig& requested, const VoxelGrid& grid,
                          std::vector<std::string>& warnings) {
  BlockConfig b = requested;
  const int smallest = *std::min_element(grid.dims.begin(), grid.dims.end());
  if (b.block > smallest) {
    warnings.push_back("block edge " + std::to_string(b.block) + " clamped to " +
                       std::to_string(smallest));
    b.block = smallest;
  }
  const int available = min_window_candidates(grid, b);
  if (b.neighbors > available) {
    warnings.push_back("block neighbors " + std::to_string(b.neighbors) + " clamped to " +
                       std::to_string(available));
    b.neighbors = available;
  }
  return b;
}

template <class F>
void run_stage(SscrState& st, const char* name, const StageObserver& observer, F&& body) {
  st.stage_log.emplace_back(name);
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  if (observer) observer(name, st);
}

}  // namespace

SscrState sscr_reconstruct(const PhotonHistogram& hist, const MeasurementGeometry& geometry,
                           const VoxelGrid& grid, const SscrConfig& cfg,
                           const StageObserver& observer) {
  cfg.validate();
  grid.validate();
  hist.validate();
  if (!(hist.geometry == geometry))
    throw DimensionMismatch("histogram geometry differs from the reconstruction geometry");

  SscrState st;
  SscrParams& prm = st.params;
  prm.patch = cfg.patch.value_or(PatchConfig::default_for(geometry));
  prm.patch.validate(geometry);
  if (!prm.patch.non_overlapping())
    throw ConfigError("patch tiling must be non-overlapping for the tau update");
  prm.block = resolve_block(cfg.block, grid, prm.warnings);

  const ForwardOperator op(grid, geometry, cfg.cosine_factor);
  const SignalDictionary dict(prm.patch.shape);
  TransientSignal tau0;

  run_stage(st, kStageTau0, observer, [&] {
    tau0 = init_tau(hist);
    st.tau = tau0;
    prm.saturated_bins = saturated_bins(hist);
    if (prm.saturated_bins > 0)
      prm.warnings.push_back(std::to_string(prm.saturated_bins) + " saturated bins (d = N)");
  });
  run_stage(st, kStageU0, observer, [&] {
    InitU init = init_u(tau0, op, cfg);
    st.u = std::move(init.u);
    prm.s_imp = init.s_imp;
    prm.mu_s = init.mu_s;
    for (auto& w : init.warnings) prm.warnings.push_back(std::move(w));
  });
  st.triplet = DictionaryTriplet::dct_init(prm.block.block, prm.block.neighbors);
  st.g = SurfaceG(grid);

  const double tau0_norm = tau0.values.norm();
  for (int k = 1; k <= cfg.outer_iters; ++k) {
    IterationRecord rec;
    rec.iteration = k;
    Eigen::VectorXd au;

    run_stage(st, kStageG, observer, [&] { st.g = surfaciate(st.u); });
    run_stage(st, kStageTriplet, observer, [&] {
      st.groups = block_match(st.u, prm.block);
      const auto blocks = gather_blocks(st.u, st.groups, prm.block.block);
      st.triplet = update_triplet(blocks, st.triplet, cfg.keep_fraction_c, cfg.triplet_sweeps);
      if (st.triplet.degenerate_svds > 0)
        prm.warnings.push_back("iteration " + std::to_string(k) + ": " +
                               std::to_string(st.triplet.degenerate_svds) +
                               " rank-deficient Procrustes steps");
    });
    run_stage(st, kStageS, observer, [&] {
      au = op.apply(st.u.values);
      const SUpdate su = update_S(extract_patches(st.tau, prm.patch),
                                  extract_patches(au, geometry, prm.patch), dict,
                                  cfg.keep_fraction_s);
      st.S = su.S;
      rec.s_threshold = su.threshold;
      rec.s_kept = su.kept;
    });
    TransientSignal patch_recon;
    run_stage(st, kStageTau, observer, [&] {
      patch_recon = aggregate_patches(dict.synthesize(st.S), prm.patch, geometry);
      const TransientSignal au_sig(geometry, au);
      if (k == 1) {
        prm.lambda = adaptive_lambda(hist, tau0, patch_recon, au_sig);
        if (prm.lambda.degenerate) prm.warnings.push_back(prm.lambda.warning);
      }
      st.tau = update_tau(hist, patch_recon, au_sig, prm.lambda.value, prm.lambda.value,
                          prm.patch);
    });
    UWeights uw;
    run_stage(st, kStageU, observer, [&] {
      UTerms terms;
      terms.tau = st.tau.values;
      terms.patch_recon = patch_recon.values;
      std::vector<Eigen::MatrixXd> targets(st.groups.size());
      for (std::size_t i = 0; i < st.groups.size(); ++i) {
        targets[i] = st.triplet.reconstruct(i);
        terms.block_target_energy += targets[i].squaredNorm();
      }
      terms.block_rhs = scatter_blocks(targets, st.groups, grid, prm.block.block);
      terms.coverage = block_coverage(st.groups, grid, prm.block.block);
      terms.g = surface_to_volume(st.g).values;
      uw = balanced_weights(op, st.u.values, terms, cfg.balance, prm.s_imp, prm.mu_s).weights;
      st.u.values = update_u(op, st.u.values, terms, uw, cfg.bregman);
    });

    const double lam = prm.lambda.value;
    rec.weights.lambda_t = lam;
    rec.weights.lambda = lam;
    rec.weights.lambda_ut = lam * uw.ut;
    rec.weights.lambda_u = lam * uw.u;
    rec.weights.lambda_g = lam * uw.g;
    rec.weights.s_u = lam * uw.s_imp;
    rec.weights.lambda_pt = rec.s_kept > 0 ? 2.0 * lam * rec.s_threshold * rec.s_threshold : 0.0;
    rec.c_threshold = st.triplet.threshold;
    rec.weights.lambda_pu =
        std::isfinite(rec.c_threshold) ? rec.c_threshold * rec.c_threshold : 0.0;
    rec.terms = objective_terms(st, hist, op);
    rec.objective = rec.terms.total(rec.weights);
    rec.nll = rec.terms.nll;
    const Eigen::VectorXd au_new = op.apply(st.u.values);
    rec.rel_misfit = safe_rel((st.tau.values - au_new).norm(), st.tau.values.norm());
    rec.rel_misfit_d = safe_rel((tau0.values - au_new).norm(), tau0_norm);
    rec.triplet_residual =
        st.triplet.sweep_residuals.empty() ? 0.0 : st.triplet.sweep_residuals.back();
    rec.foreground = st.g.foreground_count();
    if (!std::isfinite(rec.objective)) {
      std::ostringstream msg;
      msg << "objective became non-finite at iteration " << k;
      throw StageError(kStageU, msg.str());
    }
    st.trace.push_back(rec);
  }
  run_stage(st, kStageFinal, observer, [&] { st.g = surfaciate(st.u); });
  return st;
}

}  // namespace nlos
