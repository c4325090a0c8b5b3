#include "nlos/surfaciation.hpp"

#include <algorithm>
#include <cmath>

namespace nlos {

PixelColumnSummary summarize_columns(const AlbedoVolume& u) {
  PixelColumnSummary s;
  s.nx = u.grid.nx();
  s.ny = u.grid.ny();
  s.nz = u.grid.nz();
  s.entries.resize(u.grid.pixel_count());
  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < s.ny; ++j) {
      auto& col = s.entries[u.grid.pixel_index(i, j)];
      for (int k = 0; k < s.nz; ++k)
        if (u(i, j, k) > 0.0) col.emplace_back(k, u(i, j, k));
    }
  return s;
}

std::vector<GraphEdge> lattice_weights(int nx, int ny) {
  std::vector<GraphEdge> w;
  for (int p = 0; p < nx; ++p)
    for (int q = 0; q < ny; ++q)
      for (int dp = -1; dp <= 1; ++dp)
        for (int dq = -1; dq <= 1; ++dq) {
          if (dp == 0 && dq == 0) continue;
          const int r = p + dp, t = q + dq;
          if (r < 0 || t < 0 || r >= nx || t >= ny) continue;
          w.push_back({p * ny + q, r * ny + t, 1.0});
        }
  return w;
}

namespace {

GraphLS empty_problem(const PixelColumnSummary& s, const std::vector<GraphEdge>& w) {
  GraphLS g;
  g.nodes = s.nx * s.ny;
  g.lambda.assign(static_cast<std::size_t>(g.nodes), 0.0);
  g.data.assign(static_cast<std::size_t>(g.nodes), 0.0);
  g.edges = w;
  return g;
}

Eigen::VectorXd solve(const GraphLS& g, const SurfaciationOptions& opts) {
  return graph_ls_solve(g, opts.tol).u;
}

}  // namespace

GraphLS depth_problem(const PixelColumnSummary& s, const std::vector<GraphEdge>& w) {
  GraphLS g = empty_problem(s, w);
  for (std::size_t p = 0; p < s.entries.size(); ++p) {
    const auto& col = s.entries[p];
    if (col.empty()) continue;
    double norm = 0.0;
    for (const auto& [k, v] : col) norm += v * v;
    double mean = 0.0;
    for (const auto& [k, v] : col) mean += (v * v / norm) * k;
    // A single entry must reproduce its index bit-exactly.
    g.data[p] = col.size() == 1 ? col.front().first : mean;
    g.lambda[p] = 2.0;
  }
  return g;
}

std::vector<std::vector<double>> albedo_mixing(const PixelColumnSummary& s,
                                               const Eigen::VectorXd& d_star) {
  std::vector<std::vector<double>> r(s.entries.size());
  for (std::size_t p = 0; p < s.entries.size(); ++p) {
    const auto& col = s.entries[p];
    if (col.empty()) continue;
    auto& rp = r[p];
    double total = 0.0;
    for (const auto& [k, v] : col) {
      const double gap = d_star[static_cast<Eigen::Index>(p)] - k;
      rp.push_back(gap != 0.0 ? 1.0 / (gap * gap) : 2.0);
      total += rp.back();
    }
    for (auto& x : rp) x /= total;
  }
  return r;
}

Eigen::VectorXd interpolated_albedo(const PixelColumnSummary& s, const Eigen::VectorXd& d_star) {
  const auto r = albedo_mixing(s, d_star);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.entries.size()));
  for (std::size_t p = 0; p < s.entries.size(); ++p) {
    const auto& col = s.entries[p];
    if (col.size() == 1) {
      out[static_cast<Eigen::Index>(p)] = col.front().second;
      continue;
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < col.size(); ++n) acc += r[p][n] * col[n].second;
    out[static_cast<Eigen::Index>(p)] = acc;
  }
  return out;
}

GraphLS albedo_problem(const PixelColumnSummary& s, const Eigen::VectorXd& d_star,
                       const std::vector<GraphEdge>& w) {
  GraphLS g = empty_problem(s, w);
  const Eigen::VectorXd interp = interpolated_albedo(s, d_star);
  for (std::size_t p = 0; p < s.entries.size(); ++p) {
    if (!s.foreground(p)) continue;
    g.lambda[p] = 1.0;
    g.data[p] = interp[static_cast<Eigen::Index>(p)];
  }
  return g;
}

GraphLS indicator_problem(const PixelColumnSummary& s, const Eigen::VectorXd& interp,
                          const Eigen::VectorXd& alpha_star, const std::vector<GraphEdge>& w) {
  GraphLS g = empty_problem(s, w);
  const double interp_max = interp.size() > 0 ? interp.maxCoeff() : 0.0;
  const double alpha_max = alpha_star.size() > 0 ? alpha_star.maxCoeff() : 0.0;
  for (std::size_t p = 0; p < s.entries.size(); ++p) {
    const auto idx = static_cast<Eigen::Index>(p);
    const bool fg = s.foreground(p);
    double gamma = alpha_max > 0 ? std::max(0.0, alpha_star[idx] / (2.0 * alpha_max)) : 0.75;
    if (!fg || interp[idx] < 0.1 * interp_max) gamma = 0.75;
    g.lambda[p] = gamma;
    g.data[p] = fg && interp_max > 0 ? interp[idx] / interp_max : 0.0;
  }
  return g;
}

Eigen::VectorXd solve_depth(const PixelColumnSummary& s, const std::vector<GraphEdge>& w,
                            const SurfaciationOptions& opts) {
  return solve(depth_problem(s, w), opts);
}

Eigen::VectorXd solve_albedo(const PixelColumnSummary& s, const Eigen::VectorXd& d_star,
                             const std::vector<GraphEdge>& w, const SurfaciationOptions& opts) {
  return solve(albedo_problem(s, d_star, w), opts);
}

Eigen::VectorXd solve_indicator(const PixelColumnSummary& s, const Eigen::VectorXd& interp,
                                const Eigen::VectorXd& alpha_star,
                                const std::vector<GraphEdge>& w,
                                const SurfaciationOptions& opts) {
  return solve(indicator_problem(s, interp, alpha_star, w), opts);
}

SurfaciationDetail surfaciate_detailed(const AlbedoVolume& u, const SurfaciationOptions& opts) {
  SurfaciationDetail out;
  out.surface = SurfaceG(u.grid);
  const auto s = summarize_columns(u);
  const auto n = static_cast<Eigen::Index>(s.entries.size());
  const bool any = std::any_of(s.entries.begin(), s.entries.end(),
                               [](const auto& c) { return !c.empty(); });
  if (!any) {
    out.d_star = Eigen::VectorXd::Zero(n);
    out.alpha_star = Eigen::VectorXd::Zero(n);
    out.e_star = Eigen::VectorXd::Zero(n);
    return out;
  }
  const auto w = lattice_weights(s.nx, s.ny);
  out.d_star = solve_depth(s, w, opts);
  out.alpha_star = solve_albedo(s, out.d_star, w, opts);
  const Eigen::VectorXd interp = interpolated_albedo(s, out.d_star);
  out.e_star = solve_indicator(s, interp, out.alpha_star, w, opts);

  const auto& grid = u.grid;
  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < s.ny; ++j) {
      const auto p = static_cast<Eigen::Index>(grid.pixel_index(i, j));
      if (!(out.e_star[p] >= 0.5) || !(out.alpha_star[p] > 0.0)) continue;
      // Index space: nearest integer, half-way ties toward the wall.
      const int k = std::clamp(static_cast<int>(std::ceil(out.d_star[p] - 0.5)), 0, s.nz - 1);
      out.surface.set_foreground(i, j, k, out.alpha_star[p]);
    }
  return out;
}

SurfaceG surfaciate(const AlbedoVolume& u, const SurfaciationOptions& opts) {
  return surfaciate_detailed(u, opts).surface;
}

}  // namespace nlos
