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

// Outer transport loop for a swarm of agents. Each round every agent
//   1. computes its raster Voronoi cell and the target mass it holds,
//   2. refines its potential (and edge multipliers) with n synchronous
//      primal-dual steps shared with its Voronoi neighbors,
//   3. fits an affine model of the potential over its neighborhood, and
//   4. moves to the minimizer of c(x, z) + phi(z) over the eps-ball.

#ifndef SWARM_OT_AGENT_TRANSPORT_HPP
#define SWARM_OT_AGENT_TRANSPORT_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm_ot/geometry.hpp"
#include "swarm_ot/kantorovich_pd.hpp"
#include "swarm_ot/rng.hpp"
#include "swarm_ot/target_measure.hpp"
#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {

/// Raised when the inner primal-dual iteration leaves the finite range. The
/// explicit scheme is only conditionally stable; a smaller tau fixes it.
class PotentialDivergence : public std::runtime_error {
 public:
  PotentialDivergence(std::size_t round, double tau)
      : std::runtime_error("potentials diverged in round " + std::to_string(round) +
                           " (transport.tau = " + std::to_string(tau) + "); try a smaller tau"),
        round_(round) {}
  std::size_t round() const { return round_; }

 private:
  std::size_t round_;
};

struct TransportConfig {
  double eps = 0.02;
  double tau = 1.0;
  /// Zero inner iterations or rounds are allowed and mean "do nothing".
  std::size_t inner_iters = 10;
  std::size_t rounds = 40;
  /// When set, multipliers are pinned to this value and only the primal
  /// update runs.
  std::optional<double> fixed_dual;
  /// Relative eigenvalue cutoff for the neighborhood least-squares fit.
  double grad_tol = 1e-9;
  /// Agents farther apart than this (metric units) do not communicate.
  double comm_radius = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(eps > 0.0)) throw std::invalid_argument("transport.eps must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("transport.tau must be positive");
    if (!(grad_tol > 0.0)) throw std::invalid_argument("transport.grad_tol must be positive");
    if (!(comm_radius > 0.0)) throw std::invalid_argument("transport.comm_radius must be positive");
    if (fixed_dual && !(*fixed_dual > 0.0)) {
      throw std::invalid_argument("transport.fixed_dual must be positive");
    }
  }
};

/// Target measure discretized on the quadrature grid used for partitions.
struct DiscreteTarget {
  QuadratureGrid grid;
  std::vector<double> cell_mass;

  static DiscreteTarget from(const DensityField& f, const QuadratureGrid& q) {
    return {q, discretize(f, q)};
  }
};

struct RoundDiagnostics {
  bool connected = true;
  std::size_t isolated = 0;
  std::size_t duplicates_perturbed = 0;
  std::size_t edge_count = 0;
  double dual_objective = 0.0;
  double feasibility_violation = 0.0;
  double max_step = 0.0;
};

struct SwarmState {
  std::vector<Point> positions;
  PotentialState potentials;
  std::size_t round = 0;
  SplitMix64 rng{0};
  double cost = 0.0;
  RoundDiagnostics last;

  static SwarmState start(std::vector<Point> positions, std::uint64_t seed) {
    SwarmState s;
    s.potentials.phi.assign(positions.size(), 0.0);
    s.positions = std::move(positions);
    s.rng = SplitMix64(seed).split(streams::kDuplicateJitter);
    return s;
  }
};

struct GradientFit {
  Vec2 gradient;
  bool isolated = false;
  int rank = 0;
};

/// Gradient of the least-squares affine fit of (x_j, phi_j) over agent i and
/// its neighbors. Directions the neighborhood does not span get a zero
/// component.
inline GradientFit local_gradient(std::size_t i, std::span<const Point> positions,
                                  std::span<const double> phi,
                                  std::span<const NeighborGraph::Incidence> neighbors,
                                  double rel_tol = 1e-9) {
  GradientFit fit;
  if (neighbors.empty()) {
    fit.isolated = true;
    return fit;
  }
  const double count = static_cast<double>(neighbors.size() + 1);
  Point mean = positions[i];
  double phi_mean = phi[i];
  for (const auto& n : neighbors) {
    mean += positions[n.node];
    phi_mean += phi[n.node];
  }
  mean = (1.0 / count) * mean;
  phi_mean /= count;

  double sxx = 0.0, sxy = 0.0, syy = 0.0, rx = 0.0, ry = 0.0;
  auto add = [&](std::size_t j) {
    const Vec2 d = positions[j] - mean;
    const double v = phi[j] - phi_mean;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
    rx += d.x * v;
    ry += d.y * v;
  };
  add(i);
  for (const auto& n : neighbors) add(n.node);

  // Pseudo-inverse of the 2x2 scatter matrix via its eigen-decomposition.
  const double half_trace = 0.5 * (sxx + syy);
  const double radius = std::hypot(0.5 * (sxx - syy), sxy);
  const double hi = half_trace + radius;
  const double lo = half_trace - radius;
  if (!(hi > 0.0)) return fit;
  Vec2 v_hi{1.0, 0.0};
  if (sxy != 0.0) {
    v_hi = {hi - syy, sxy};
    v_hi = (1.0 / norm(v_hi)) * v_hi;
  } else if (syy > sxx) {
    v_hi = {0.0, 1.0};
  }
  const Vec2 v_lo{-v_hi.y, v_hi.x};
  const Vec2 r{rx, ry};
  fit.gradient = (dot(v_hi, r) / hi) * v_hi;
  fit.rank = 1;
  if (lo > rel_tol * hi) {
    fit.gradient += (dot(v_lo, r) / lo) * v_lo;
    fit.rank = 2;
  }
  return fit;
}

/// Minimizer of c(x, z) + g.(z - x) over the closed eps-ball around x, kept
/// inside the domain. Staying put is optimal whenever |g| <= xi; otherwise
/// the agent moves eps along -g. A boundary-clamped move that no longer
/// decreases the objective is replaced by staying put.
inline Point proximal_step(const Point& x, const Vec2& g, double eps, const MetricCost& metric,
                           const Domain& domain) {
  if (!(eps > 0.0)) throw std::invalid_argument("proximal_step: eps must be positive");
  const double gn = norm(g);
  if (!(gn > metric.xi())) return x;
  const double reach = eps / metric.xi();
  const Point z = domain.clamp(x - (reach / gn) * g);
  const Vec2 d = z - x;
  if (metric(x, z) + dot(g, d) > 0.0) return x;
  return z;
}

namespace detail {

inline std::size_t perturb_duplicates(std::vector<Point>& positions, SplitMix64& rng,
                                      const Domain& domain) {
  std::size_t moved = 0;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (positions[i] == positions[j]) {
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        Point p = domain.clamp(positions[i] + 1e-9 * Vec2{std::cos(angle), std::sin(angle)});
        if (p == positions[j]) p = domain.clamp(positions[i] - 1e-9 * Vec2{std::cos(angle), std::sin(angle)});
        positions[i] = p;
        ++moved;
        j = static_cast<std::size_t>(-1);  // rescan against all earlier agents
      }
    }
  }
  return moved;
}

inline double mass_variance(std::span<const double> masses) {
  const double n = static_cast<double>(masses.size());
  double mean = 0.0;
  for (double m : masses) mean += m;
  mean /= n;
  double var = 0.0;
  for (double m : masses) var += (m - mean) * (m - mean);
  return var / n;
}

// One round given the partition of the current positions.
inline SwarmState advance(SwarmState s, const Partition& partition, const TransportConfig& cfg,
                          const DiscreteTarget& target, const MetricCost& metric,
                          const Domain& domain) {
  const std::size_t n_agents = s.positions.size();
  const NeighborGraph graph = neighbor_graph(partition, metric, cfg.comm_radius);
  const auto masses = cell_masses(target.cell_mass, partition);
  const auto b = MassImbalance::from_cell_masses(masses);

  PotentialState pot = rebind(s.potentials, graph);
  if (cfg.fixed_dual) {
    pot = run_primal_fixed_dual(std::move(pot), b, graph, cfg.tau, *cfg.fixed_dual, cfg.inner_iters);
    std::fill(pot.lambda.begin(), pot.lambda.end(), *cfg.fixed_dual);
  } else {
    pot = run_pd(std::move(pot), b, graph, cfg.tau, cfg.inner_iters);
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    if (!std::isfinite(pot.phi[i])) throw PotentialDivergence(s.round, cfg.tau);
  }

  RoundDiagnostics diag;
  diag.connected = is_connected(graph);
  diag.edge_count = graph.edge_count();
  diag.dual_objective = dual_objective(pot.phi, b);
  diag.feasibility_violation = std::max(0.0, feasibility_violation(pot.phi, graph));
  diag.duplicates_perturbed = s.last.duplicates_perturbed;

  std::vector<Vec2> gradients(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    const auto fit = local_gradient(i, s.positions, pot.phi, graph.neighbors(i), cfg.grad_tol);
    gradients[i] = fit.gradient;
    if (fit.isolated) ++diag.isolated;
  }

  double step_sum = 0.0;
  for (std::size_t i = 0; i < n_agents; ++i) {
    const Point next = proximal_step(s.positions[i], gradients[i], cfg.eps, metric, domain);
    const double step = metric(s.positions[i], next);
    step_sum += step;
    diag.max_step = std::max(diag.max_step, step);
    // Carry the local affine estimate to the new position.
    pot.phi[i] += dot(gradients[i], next - s.positions[i]);
    s.positions[i] = next;
  }
  s.cost += step_sum / static_cast<double>(n_agents);
  s.potentials = std::move(pot);
  s.last = diag;
  ++s.round;
  return s;
}

inline void check_round_inputs(const SwarmState& s, const TransportConfig& cfg,
                               const DiscreteTarget& target, const Domain& domain) {
  cfg.validate();
  if (s.positions.size() < 2) throw std::invalid_argument("transport round needs at least two agents");
  if (s.potentials.phi.size() != s.positions.size()) {
    throw ContractViolation("potential vector does not match the number of agents");
  }
  if (target.cell_mass.size() != target.grid.size()) {
    throw std::invalid_argument("discrete target does not match its grid");
  }
  const auto& gd = target.grid.domain();
  if (gd.lo() != domain.lo() || gd.hi() != domain.hi()) {
    throw std::invalid_argument("target grid and transport domain differ");
  }
}

}  // namespace detail

/// Removes exact position coincidences (1e-9 seeded jitter) and builds the
/// partition of the current positions.
inline Partition prepare_partition(SwarmState& s, const TransportConfig& cfg,
                                   const DiscreteTarget& target, const MetricCost& metric,
                                   const Domain& domain, unsigned threads = 1) {
  (void)cfg;
  s.last.duplicates_perturbed = detail::perturb_duplicates(s.positions, s.rng, domain);
  return build_partition(s.positions, metric, domain, target.grid, threads);
}

/// One round of the multi-agent transport. Uses the fixed-dual primal update
/// when cfg.fixed_dual is set.
inline SwarmState round(SwarmState s, const TransportConfig& cfg, const DiscreteTarget& target,
                        const MetricCost& metric, const Domain& domain, unsigned threads = 1) {
  detail::check_round_inputs(s, cfg, target, domain);
  const Partition p = prepare_partition(s, cfg, target, metric, domain, threads);
  return detail::advance(std::move(s), p, cfg, target, metric, domain);
}

/// Fixed-weighting round: multipliers never change from cfg.fixed_dual.
inline SwarmState round_fixed_dual(SwarmState s, const TransportConfig& cfg,
                                   const DiscreteTarget& target, const MetricCost& metric,
                                   const Domain& domain, unsigned threads = 1) {
  if (!cfg.fixed_dual) throw std::invalid_argument("round_fixed_dual requires transport.fixed_dual");
  return round(std::move(s), cfg, target, metric, domain, threads);
}

struct MetricsRecord {
  std::size_t round = 0;
  double mass_variance = 0.0;
  double transport_cost = 0.0;
  double dual_objective = 0.0;
  double feasibility_violation = 0.0;
  bool connected = true;
};

struct RoundSnapshot {
  std::size_t round = 0;
  std::vector<Point> positions;
  std::vector<double> cell_mass;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<RoundSnapshot> snapshots;
  std::vector<double> step_lengths_max;  // per round, metric units
  SwarmState final_state;
};

/// Runs cfg.rounds rounds and records the state after each (record 0 is the
/// initial configuration).
inline ExperimentResult run_experiment(std::vector<Point> initial, const TransportConfig& cfg,
                                       const DiscreteTarget& target, const MetricCost& metric,
                                       const Domain& domain, std::uint64_t seed = 0,
                                       unsigned threads = 1) {
  for (auto& p : initial) {
    if (!domain.contains(p, kSiteClampSlack)) throw std::domain_error("initial agent position outside the domain");
    p = domain.clamp(p);
  }
  SwarmState s = SwarmState::start(std::move(initial), seed);
  detail::check_round_inputs(s, cfg, target, domain);

  ExperimentResult out;
  for (std::size_t k = 0;; ++k) {
    const Partition p = prepare_partition(s, cfg, target, metric, domain, threads);
    const auto masses = cell_masses(target.cell_mass, p);
    MetricsRecord rec;
    rec.round = k;
    rec.mass_variance = detail::mass_variance(masses);
    rec.transport_cost = s.cost;
    rec.dual_objective = k == 0 ? 0.0 : s.last.dual_objective;
    rec.feasibility_violation = k == 0 ? 0.0 : s.last.feasibility_violation;
    rec.connected = is_connected(neighbor_graph(p, metric, cfg.comm_radius));
    out.records.push_back(rec);
    out.snapshots.push_back({k, s.positions, masses});
    if (k == cfg.rounds) break;
    s = detail::advance(std::move(s), p, cfg, target, metric, domain);
    out.step_lengths_max.push_back(s.last.max_step);
  }
  out.final_state = std::move(s);
  return out;
}

}  // namespace swarm_ot

#endif  // SWARM_OT_AGENT_TRANSPORT_HPP
