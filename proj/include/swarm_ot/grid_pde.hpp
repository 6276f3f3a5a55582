// Copyright 2026 The swarm-ot Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Continuum limit on a regular grid: nodes carry mass rho and potential
// phi, 4-neighbor edges carry multipliers lambda. Spatial operators are
// weighted graph Laplacians (no-flux boundary), time stepping is explicit
// Euler.

#ifndef SWARM_OT_GRID_PDE_HPP
#define SWARM_OT_GRID_PDE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm_ot/flow_oracle.hpp"
#include "swarm_ot/geometry.hpp"
#include "swarm_ot/kantorovich_pd.hpp"
#include "swarm_ot/parallel.hpp"
#include "swarm_ot/rng.hpp"
#include "swarm_ot/target_measure.hpp"
#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {

class PositivityError : public std::runtime_error {
 public:
  PositivityError(std::size_t node, std::size_t ix, std::size_t iy, double value)
      : std::runtime_error("positivity violated at node " + std::to_string(node) + " (" +
                           std::to_string(ix) + ", " + std::to_string(iy) + "), rho = " +
                           std::to_string(value) + ": reduce dt"),
        node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// 4-neighbor grid graph; node (ix, iy) has index iy * nx + ix.
inline NeighborGraph grid_graph(std::size_t nx, std::size_t ny, double cost = 1.0) {
  if (nx < 1 || ny < 1 || nx * ny < 2) throw std::invalid_argument("grid needs at least two nodes");
  std::vector<Edge> edges;
  edges.reserve(2 * nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const auto k = static_cast<std::uint32_t>(iy * nx + ix);
      if (ix + 1 < nx) edges.push_back({k, k + 1, cost});
      if (iy + 1 < ny) edges.push_back({k, static_cast<std::uint32_t>(k + nx), cost});
    }
  }
  return NeighborGraph(nx * ny, std::move(edges));
}

struct GridState {
  std::size_t nx = 0;
  std::size_t ny = 0;
  NeighborGraph graph;
  std::vector<double> rho;
  std::vector<double> phi;
  std::vector<double> lam;  // one per graph edge
  double t = 0.0;
  double dt = 1e-3;

  /// phi = 0, lambda = lambda0 everywhere, t = 0.
  static GridState make(std::size_t nx, std::size_t ny, std::vector<double> rho, double dt = 1e-3,
                        double cost = 1.0, double lambda0 = 0.0) {
    if (!(dt > 0.0)) throw std::invalid_argument("pde.dt must be positive");
    if (!(cost > 0.0)) throw std::invalid_argument("grid.cost must be positive");
    if (!(lambda0 >= 0.0)) throw std::invalid_argument("pde.lambda0 must be nonnegative");
    GridState s;
    s.nx = nx;
    s.ny = ny;
    s.graph = grid_graph(nx, ny, cost);
    if (rho.size() != nx * ny) throw std::invalid_argument("initial density does not match the grid");
    for (double r : rho) {
      if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("initial density must be positive");
    }
    s.rho = std::move(rho);
    s.phi.assign(nx * ny, 0.0);
    s.lam.assign(s.graph.edge_count(), lambda0);
    s.dt = dt;
    return s;
  }

  std::size_t size() const { return nx * ny; }
};

/// Seeded uniform values, normalized to unit total mass.
inline std::vector<double> random_density(std::size_t nodes, SplitMix64 rng) {
  std::vector<double> rho(nodes);
  double total = 0.0;
  for (auto& r : rho) {
    r = rng.uniform_open0();
    total += r;
  }
  for (auto& r : rho) r /= total;
  return rho;
}

inline constexpr double kTargetFloor = 1e-6;

/// Target mass per grid node: the density at each cell center of the domain
/// tiled nx by ny, floored at 1e-6 and scaled to unit total.
inline std::vector<double> grid_target(const DensityField& f, std::size_t nx, std::size_t ny) {
  const QuadratureGrid q(f.domain(), std::max<std::size_t>(nx, 2), std::max<std::size_t>(ny, 2));
  if (q.nx() != nx || q.ny() != ny) throw std::invalid_argument("grid target needs at least 2x2 nodes");
  std::vector<double> m(nx * ny);
  double total = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    m[k] = std::max(f.density_at(q.center(k)), kTargetFloor);
    total += m[k];
  }
  for (auto& v : m) v /= total;
  return m;
}

namespace detail {

inline constexpr std::size_t kParallelGridNodes = 4096;

// out_i = sum_j lambda_ij (phi_j - phi_i), summed per node in adjacency
// order so the result is independent of the thread count.
inline void divergence(const NeighborGraph& g, std::span<const double> phi,
                       std::span<const double> lam, std::span<double> out, unsigned threads) {
  auto body = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double sum = 0.0;
      for (const auto& inc : g.neighbors(i)) sum += lam[inc.edge] * (phi[inc.node] - phi[i]);
      out[i] = sum;
    }
  };
  if (threads > 1 && g.node_count() >= kParallelGridNodes) {
    parallel_for_blocks(g.node_count(), threads, body);
  } else {
    body(0, g.node_count());
  }
}

// Same as divergence with every multiplier equal to w.
inline void divergence_uniform(const NeighborGraph& g, std::span<const double> phi, double w,
                               std::span<double> out, unsigned threads) {
  auto body = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double sum = 0.0;
      for (const auto& inc : g.neighbors(i)) sum += w * (phi[inc.node] - phi[i]);
      out[i] = sum;
    }
  };
  if (threads > 1 && g.node_count() >= kParallelGridNodes) {
    parallel_for_blocks(g.node_count(), threads, body);
  } else {
    body(0, g.node_count());
  }
}

inline void check_target(const GridState& s, std::span<const double> rho_star) {
  if (rho_star.size() != s.size()) throw std::invalid_argument("target does not match the grid");
}

}  // namespace detail

/// One explicit step of the primal-dual flow. Both updates read the
/// pre-step state.
inline GridState pd_flow_step(GridState s, std::span<const double> rho_star, unsigned threads = 1) {
  detail::check_target(s, rho_star);
  std::vector<double> div(s.size());
  detail::divergence(s.graph, s.phi, s.lam, div, threads);
  for (std::size_t k = 0; k < s.graph.edge_count(); ++k) {
    const auto& e = s.graph.edge(k);
    const double d = s.phi[e.i] - s.phi[e.j];
    s.lam[k] = std::max(0.0, s.lam[k] + s.dt * 0.5 * (d * d - e.cost * e.cost));
  }
  for (std::size_t i = 0; i < s.size(); ++i) s.phi[i] += s.dt * (div[i] + s.rho[i] - rho_star[i]);
  return s;
}

/// Primal step with every multiplier treated as lam_fixed; s.lam is not
/// touched.
inline GridState relaxed_primal_step(GridState s, std::span<const double> rho_star, double lam_fixed,
                                     unsigned threads = 1) {
  if (!(lam_fixed > 0.0)) throw std::invalid_argument("fixed dual weight must be positive");
  detail::check_target(s, rho_star);
  std::vector<double> div(s.size());
  detail::divergence_uniform(s.graph, s.phi, lam_fixed, div, threads);
  for (std::size_t i = 0; i < s.size(); ++i) s.phi[i] += s.dt * (div[i] + s.rho[i] - rho_star[i]);
  return s;
}

/// Continuity equation with flux -lambda grad(phi): mass moves down the
/// potential along every edge.
inline GridState transport_step(GridState s, std::span<const double> rho_star, unsigned threads = 1) {
  detail::check_target(s, rho_star);
  std::vector<double> div(s.size());
  detail::divergence(s.graph, s.phi, s.lam, div, threads);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double next = s.rho[i] + s.dt * div[i];
    if (!(next > 0.0)) throw PositivityError(i, i % s.nx, i / s.nx, next);
    s.rho[i] = next;
  }
  s.t += s.dt;
  return s;
}

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double slackness = 0.0;
  double dual_feas = 0.0;  // min over edges of lambda
};

inline KktResidual kkt_residual(const GridState& s, std::span<const double> rho_star,
                                unsigned threads = 1) {
  detail::check_target(s, rho_star);
  KktResidual r;
  std::vector<double> div(s.size());
  detail::divergence(s.graph, s.phi, s.lam, div, threads);
  for (std::size_t i = 0; i < s.size(); ++i) {
    r.stationarity = detail::nan_max(r.stationarity, std::abs(div[i] + s.rho[i] - rho_star[i]));
  }
  r.dual_feas = s.lam.empty() ? 0.0 : s.lam[0];
  for (std::size_t k = 0; k < s.graph.edge_count(); ++k) {
    const auto& e = s.graph.edge(k);
    const double gap = std::abs(s.phi[e.i] - s.phi[e.j]) - e.cost;
    r.feasibility = detail::nan_max(r.feasibility, gap);
    r.slackness = detail::nan_max(r.slackness, s.lam[k] * std::abs(gap));
    r.dual_feas = std::min(r.dual_feas, s.lam[k]);
  }
  return r;
}

struct LyapunovReport {
  double t = 0.0;
  double V = 0.0;
  double E = 0.0;
  KktResidual kkt;
  double mass_error = 0.0;
  double min_rho = 0.0;
};

/// V = 1/2 sum (rho - rho*)^2 and E = 1/2 sum_edges lambda dphi^2 + V.
inline LyapunovReport lyapunov(const GridState& s, std::span<const double> rho_star,
                               unsigned threads = 1) {
  LyapunovReport r;
  r.t = s.t;
  r.kkt = kkt_residual(s, rho_star, threads);
  double v = 0.0;
  double mass = 0.0;
  r.min_rho = s.rho.empty() ? 0.0 : s.rho[0];
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s.rho[i] - rho_star[i];
    v += d * d;
    mass += s.rho[i];
    r.min_rho = std::min(r.min_rho, s.rho[i]);
  }
  double grad = 0.0;
  for (std::size_t k = 0; k < s.graph.edge_count(); ++k) {
    const auto& e = s.graph.edge(k);
    const double d = s.phi[e.i] - s.phi[e.j];
    grad += s.lam[k] * d * d;
  }
  r.V = 0.5 * v;
  r.E = 0.5 * grad + r.V;
  r.mass_error = std::abs(mass - 1.0);
  return r;
}

/// Discrete L2 distance sqrt(sum (rho - rho*)^2) = sqrt(2 V).
inline double density_error(const GridState& s, std::span<const double> rho_star) {
  detail::check_target(s, rho_star);
  double v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) v += (s.rho[i] - rho_star[i]) * (s.rho[i] - rho_star[i]);
  return std::sqrt(v);
}

struct PdConvergence {
  GridState state;
  std::size_t iterations = 0;
  bool converged = false;
  KktResidual kkt;
};

/// Iterates pd_flow_step with rho frozen until stationarity and feasibility
/// drop below tol. Practical on small grids only.
inline PdConvergence converge_pd_flow(GridState s, std::span<const double> rho_star, double tol,
                                      std::size_t max_iters, unsigned threads = 1) {
  PdConvergence out;
  for (;;) {
    out.kkt = kkt_residual(s, rho_star, threads);
    if (!std::isfinite(out.kkt.stationarity) || !std::isfinite(out.kkt.feasibility)) break;
    if (out.kkt.stationarity <= tol && out.kkt.feasibility <= tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= max_iters) break;
    for (int l = 0; l < 64 && out.iterations < max_iters; ++l, ++out.iterations) {
      s = pd_flow_step(std::move(s), rho_star, threads);
    }
  }
  out.state = std::move(s);
  return out;
}

/// Exact saddle point of the frozen-rho potential problem. The imbalance
/// rho - rho* is routed by a min-cost flow on the grid graph; flows become
/// multipliers (lambda = |flow| / c) and flow potentials become phi, which
/// satisfies stationarity, feasibility and slackness up to rounding.
///
/// Solutions scale: if the imbalance is alpha times a previously solved one,
/// (phi, alpha * lambda) is again a saddle point. The solver keeps the last
/// solve and reuses it whenever the rescaled candidate passes the
/// stationarity check.
class SteadyStateSolver {
 public:
  explicit SteadyStateSolver(double tol = 1e-8) : tol_(tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("steady-state tolerance must be positive");
  }

  void solve(GridState& s, std::span<const double> rho_star, unsigned threads = 1) {
    detail::check_target(s, rho_star);
    std::vector<double> d(s.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = s.rho[i] - rho_star[i];

    if (!cache_d_.empty() && cache_d_.size() == d.size()) {
      double dd = 0.0, d0d0 = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        dd += d[i] * cache_d_[i];
        d0d0 += cache_d_[i] * cache_d_[i];
      }
      const double alpha = d0d0 > 0.0 ? dd / d0d0 : 0.0;
      if (alpha >= 0.0) {
        s.phi = cache_phi_;
        s.lam = cache_lam_;
        for (auto& l : s.lam) l *= alpha;
        if (kkt_residual(s, rho_star, threads).stationarity <= tol_) {
          ++reuses_;
          return;
        }
      }
    }

    if (arcs_.empty() || arc_nodes_ != s.size()) {
      arcs_ = undirected_arcs(s.graph);
      arc_nodes_ = s.size();
    }
    // The imbalance sums to zero only up to rounding in rho.
    double total = 0.0;
    for (double v : d) total += v;
    const auto flow = solve_transshipment(s.size(), arcs_, d, std::max(1e-9, 2.0 * std::abs(total)));
    double mean = 0.0;
    for (double p : flow.potential) mean += p;
    mean /= static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) s.phi[i] = flow.potential[i] - mean;
    for (std::size_t k = 0; k < s.graph.edge_count(); ++k) {
      s.lam[k] = std::abs(flow.arc_flow[2 * k] - flow.arc_flow[2 * k + 1]) / s.graph.edge(k).cost;
    }
    ++solves_;
    const auto kkt = kkt_residual(s, rho_star, threads);
    if (!(kkt.stationarity <= tol_)) {
      throw std::runtime_error("steady-state solve missed stationarity tolerance: residual " +
                               std::to_string(kkt.stationarity));
    }
    cache_d_ = std::move(d);
    cache_phi_ = s.phi;
    cache_lam_ = s.lam;
  }

  std::size_t solves() const { return solves_; }
  std::size_t reuses() const { return reuses_; }

 private:
  double tol_;
  std::vector<Arc> arcs_;
  std::size_t arc_nodes_ = 0;
  std::vector<double> cache_d_;
  std::vector<double> cache_phi_;
  std::vector<double> cache_lam_;
  std::size_t solves_ = 0;
  std::size_t reuses_ = 0;
};

enum class CoupledMode { kOnTheFlyPd, kOnTheFlyFixed, kInnerSteadyState };

inline CoupledMode parse_coupled_mode(const std::string& name) {
  if (name == "on_the_fly_pd") return CoupledMode::kOnTheFlyPd;
  if (name == "on_the_fly_fixed") return CoupledMode::kOnTheFlyFixed;
  if (name == "inner_steady_state") return CoupledMode::kInnerSteadyState;
  throw std::invalid_argument("unknown pde mode '" + name +
                              "' (expected on_the_fly_pd, on_the_fly_fixed or inner_steady_state)");
}

struct CoupledOptions {
  CoupledMode mode = CoupledMode::kOnTheFlyPd;
  std::size_t inner_iters = 1;
  double horizon = 1.0;
  double lam_fixed = 1.0;
  double steady_tol = 1e-8;
  unsigned threads = 1;
};

struct CoupledResult {
  std::vector<LyapunovReport> reports;  // reports[m] is taken after m outer steps
  GridState final_state;
  std::size_t steady_solves = 0;
  std::size_t steady_reuses = 0;
};

/// Number of dt steps needed to reach the horizon.
inline std::size_t outer_step_count(double horizon, double dt) {
  if (!(horizon >= 0.0)) throw std::invalid_argument("pde.horizon must be nonnegative");
  const double ratio = horizon / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(ratio));
}

/// Alternates potential updates with transport steps until t reaches the
/// horizon. on_the_fly_pd and on_the_fly_fixed take inner_iters potential
/// steps per transport step; inner_steady_state solves the potential problem
/// exactly before each transport step. observer, if set, sees the state and
/// report after every outer step (and once at t = 0).
inline CoupledResult run_coupled(
    GridState s, std::span<const double> rho_star, const CoupledOptions& opt,
    const std::function<void(std::size_t, const GridState&, const LyapunovReport&)>& observer = {}) {
  detail::check_target(s, rho_star);
  if (opt.mode != CoupledMode::kInnerSteadyState && opt.inner_iters < 1) {
    throw std::invalid_argument("pde.inner_iters must be at least 1 for on-the-fly modes");
  }
  if (opt.mode == CoupledMode::kOnTheFlyFixed) {
    if (!(opt.lam_fixed > 0.0)) throw std::invalid_argument("pde.fixed_dual must be positive");
    std::fill(s.lam.begin(), s.lam.end(), opt.lam_fixed);
  }
  const std::size_t steps = outer_step_count(opt.horizon, s.dt);
  const double t0 = s.t;
  SteadyStateSolver steady(opt.steady_tol);

  CoupledResult out;
  out.reports.reserve(steps + 1);
  auto record = [&](std::size_t m) {
    out.reports.push_back(lyapunov(s, rho_star, opt.threads));
    if (observer) observer(m, s, out.reports.back());
  };
  record(0);
  for (std::size_t m = 1; m <= steps; ++m) {
    switch (opt.mode) {
      case CoupledMode::kOnTheFlyPd:
        for (std::size_t l = 0; l < opt.inner_iters; ++l) s = pd_flow_step(std::move(s), rho_star, opt.threads);
        break;
      case CoupledMode::kOnTheFlyFixed:
        for (std::size_t l = 0; l < opt.inner_iters; ++l) {
          s = relaxed_primal_step(std::move(s), rho_star, opt.lam_fixed, opt.threads);
        }
        break;
      case CoupledMode::kInnerSteadyState:
        steady.solve(s, rho_star, opt.threads);
        break;
    }
    s = transport_step(std::move(s), rho_star, opt.threads);
    s.t = t0 + static_cast<double>(m) * s.dt;
    record(m);
  }
  out.steady_solves = steady.solves();
  out.steady_reuses = steady.reuses();
  out.final_state = std::move(s);
  return out;
}

}  // namespace swarm_ot

#endif  // SWARM_OT_GRID_PDE_HPP
