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

// Distributed primal-dual iteration for the Kantorovich dual restricted to a
// neighbor graph:
//
//   max_phi  sum_i phi_i b_i   s.t.  |phi_i - phi_j| <= c_ij  on every edge,
//
// with b_i = 1/N - mu*(V_i). The Lagrangian carries one multiplier per edge
// for the squared constraint 1/2 (|phi_i - phi_j|^2 - c_ij^2) <= 0. Each step
// is Jacobi: every node and edge reads the same snapshot, so agent i only
// needs phi_j and lambda_ij from its neighbors.

#ifndef SWARM_OT_KANTOROVICH_PD_HPP
#define SWARM_OT_KANTOROVICH_PD_HPP

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {

struct EdgeKey {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

/// Raised when a potential state is paired with a graph it was not built for.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-agent potentials and per-edge multipliers. lambda[k] belongs to
/// edges[k]; both vectors follow the graph's (i, j) ordering.
struct PotentialState {
  std::vector<double> phi;
  std::vector<EdgeKey> edges;
  std::vector<double> lambda;
  std::size_t iteration = 0;

  static PotentialState zeros(const NeighborGraph& g) {
    PotentialState s;
    s.phi.assign(g.node_count(), 0.0);
    s.edges.reserve(g.edge_count());
    for (const auto& e : g.edges()) s.edges.push_back({e.i, e.j});
    s.lambda.assign(g.edge_count(), 0.0);
    return s;
  }
};

/// Moves a state onto a new graph: phi is kept, multipliers survive on edges
/// present in both graphs, new edges start at zero and vanished ones are
/// dropped.
inline PotentialState rebind(const PotentialState& prev, const NeighborGraph& g) {
  if (prev.phi.size() != g.node_count()) {
    throw ContractViolation("rebind: node count changed");
  }
  PotentialState s = PotentialState::zeros(g);
  s.phi = prev.phi;
  s.iteration = prev.iteration;
  std::size_t k = 0;
  for (std::size_t m = 0; m < s.edges.size(); ++m) {
    while (k < prev.edges.size() && prev.edges[k] < s.edges[m]) ++k;
    if (k < prev.edges.size() && prev.edges[k] == s.edges[m]) s.lambda[m] = prev.lambda[k];
  }
  return s;
}

/// b_i = 1/N - mu*(V_i); sums to zero when both measures have unit mass.
class MassImbalance {
 public:
  static constexpr double kBalanceTolerance = 1e-9;

  explicit MassImbalance(std::vector<double> b) : b_(std::move(b)) {
    const double total = std::accumulate(b_.begin(), b_.end(), 0.0);
    if (std::abs(total) > kBalanceTolerance) {
      throw std::invalid_argument("MassImbalance: entries sum to " + std::to_string(total) +
                                  ", expected 0");
    }
  }

  static MassImbalance from_cell_masses(std::span<const double> masses) {
    const double share = 1.0 / static_cast<double>(masses.size());
    std::vector<double> b(masses.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = share - masses[i];
    return MassImbalance(std::move(b));
  }

  std::size_t size() const { return b_.size(); }
  double operator[](std::size_t i) const { return b_[i]; }
  std::span<const double> values() const { return b_; }

 private:
  std::vector<double> b_;
};

namespace detail {

// max that lets NaN through, so diverged states never look converged.
inline double nan_max(double worst, double x) {
  return (x <= worst || std::isnan(worst)) ? worst : x;
}

inline void check_bound(const PotentialState& s, const NeighborGraph& g, std::size_t b_size) {
  if (s.phi.size() != g.node_count() || b_size != g.node_count()) {
    throw ContractViolation("potential state, imbalance and graph disagree on the node count");
  }
  if (s.edges.size() != g.edge_count() || s.lambda.size() != s.edges.size()) {
    throw ContractViolation("multiplier set does not match the graph's edge set");
  }
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    const auto& e = g.edge(k);
    if (s.edges[k].i != e.i || s.edges[k].j != e.j) {
      throw ContractViolation("multiplier on edge (" + std::to_string(s.edges[k].i) + ", " +
                              std::to_string(s.edges[k].j) + ") is not an edge of the graph");
    }
  }
}

// sum_{j in N_i} lambda_ij (phi_i - phi_j), the weighted Laplacian action.
inline void laplacian_action(std::span<const double> phi, std::span<const double> lambda,
                             const NeighborGraph& g, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    const double flux = lambda[k] * (phi[e.i] - phi[e.j]);
    out[e.i] += flux;
    out[e.j] -= flux;
  }
}

// One synchronous step, updating s in place. scratch must hold node_count
// entries.
inline void pd_step_inplace(PotentialState& s, const MassImbalance& b, const NeighborGraph& g,
                            double tau, std::vector<double>& scratch) {
  scratch.resize(g.node_count());
  laplacian_action(s.phi, s.lambda, g, scratch);
  // Multipliers read the pre-step potentials.
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    const double d = s.phi[e.i] - s.phi[e.j];
    const double grad = 0.5 * (d * d - e.cost * e.cost);
    s.lambda[k] = std::max(0.0, s.lambda[k] + tau * grad);
  }
  for (std::size_t i = 0; i < s.phi.size(); ++i) s.phi[i] += tau * (b[i] - scratch[i]);
  ++s.iteration;
}

inline void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("step size tau must be positive");
}

}  // namespace detail

/// One primal-ascent / dual-descent step:
///   phi_i    += tau * (b_i - sum_j lambda_ij (phi_i - phi_j))
///   lambda_ij = max(0, lambda_ij + tau * 1/2 (|phi_i - phi_j|^2 - c_ij^2))
inline PotentialState pd_step(const PotentialState& s, const MassImbalance& b,
                              const NeighborGraph& g, double tau) {
  detail::check_tau(tau);
  detail::check_bound(s, g, b.size());
  PotentialState out = s;
  std::vector<double> scratch;
  detail::pd_step_inplace(out, b, g, tau, scratch);
  return out;
}

inline PotentialState run_pd(PotentialState s, const MassImbalance& b, const NeighborGraph& g,
                             double tau, std::size_t n) {
  detail::check_tau(tau);
  detail::check_bound(s, g, b.size());
  std::vector<double> scratch;
  for (std::size_t l = 0; l < n; ++l) detail::pd_step_inplace(s, b, g, tau, scratch);
  return s;
}

/// Primal-only step with every multiplier pinned to lambda_fixed (the
/// fixed-weighting variant). The stored multipliers are left untouched.
inline PotentialState run_primal_fixed_dual(PotentialState s, const MassImbalance& b,
                                            const NeighborGraph& g, double tau,
                                            double lambda_fixed, std::size_t n) {
  detail::check_tau(tau);
  detail::check_bound(s, g, b.size());
  if (!(lambda_fixed > 0.0)) throw std::invalid_argument("fixed dual weight must be positive");
  std::vector<double> scratch(g.node_count());
  const std::vector<double> weights(g.edge_count(), lambda_fixed);
  for (std::size_t l = 0; l < n; ++l) {
    detail::laplacian_action(s.phi, weights, g, scratch);
    for (std::size_t i = 0; i < s.phi.size(); ++i) s.phi[i] += tau * (b[i] - scratch[i]);
    ++s.iteration;
  }
  return s;
}

/// sum_i phi_i b_i, the graph-restricted dual objective.
inline double dual_objective(std::span<const double> phi, std::span<const double> b) {
  if (phi.size() != b.size()) throw std::invalid_argument("dual_objective: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) sum += phi[i] * b[i];
  return sum;
}

inline double dual_objective(std::span<const double> phi, const MassImbalance& b) {
  return dual_objective(phi, b.values());
}

/// max over edges of max(0, |phi_i - phi_j| - c_ij).
inline double feasibility_violation(std::span<const double> phi, const NeighborGraph& g) {
  double worst = 0.0;
  for (const auto& e : g.edges()) {
    worst = detail::nan_max(worst, std::abs(phi[e.i] - phi[e.j]) - e.cost);
  }
  return worst;
}

/// max_i |b_i - sum_j lambda_ij (phi_i - phi_j)|.
inline double stationarity_residual(const PotentialState& s, const MassImbalance& b,
                                    const NeighborGraph& g) {
  detail::check_bound(s, g, b.size());
  std::vector<double> lap(g.node_count());
  detail::laplacian_action(s.phi, s.lambda, g, lap);
  double worst = 0.0;
  for (std::size_t i = 0; i < lap.size(); ++i) worst = detail::nan_max(worst, std::abs(b[i] - lap[i]));
  return worst;
}

/// max over edges of lambda_ij * | |phi_i - phi_j| - c_ij |.
inline double slackness_residual(const PotentialState& s, const NeighborGraph& g) {
  double worst = 0.0;
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    worst = detail::nan_max(worst, s.lambda[k] * std::abs(std::abs(s.phi[e.i] - s.phi[e.j]) - e.cost));
  }
  return worst;
}

struct ConvergeResult {
  PotentialState state;
  std::size_t iterations = 0;
  bool converged = false;
  double stationarity = 0.0;
  double feasibility = 0.0;
};

struct ConvergeOptions {
  double stationarity_tol = 1e-8;
  double feasibility_tol = 1e-8;
  std::size_t max_iters = 10'000'000;
  std::size_t check_every = 64;
};

/// Runs pd steps until stationarity and feasibility reach their tolerances
/// (checked every check_every steps), max_iters is spent, or the state stops
/// being finite.
inline ConvergeResult converge_pd(PotentialState s, const MassImbalance& b, const NeighborGraph& g,
                                  double tau, const ConvergeOptions& opt = {}) {
  detail::check_tau(tau);
  detail::check_bound(s, g, b.size());
  const std::size_t check_every = std::max<std::size_t>(1, opt.check_every);
  std::vector<double> scratch;
  ConvergeResult r;
  for (;;) {
    r.stationarity = stationarity_residual(s, b, g);
    const double violation = feasibility_violation(s.phi, g);
    r.feasibility = violation < 0.0 ? 0.0 : violation;
    if (!std::isfinite(r.stationarity) || !std::isfinite(r.feasibility)) {
      break;
    }
    if (r.stationarity <= opt.stationarity_tol && r.feasibility <= opt.feasibility_tol) {
      r.converged = true;
      break;
    }
    if (r.iterations >= opt.max_iters) break;
    const std::size_t burst = std::min(check_every, opt.max_iters - r.iterations);
    for (std::size_t l = 0; l < burst; ++l) detail::pd_step_inplace(s, b, g, tau, scratch);
    r.iterations += burst;
  }
  r.state = std::move(s);
  return r;
}

}  // namespace swarm_ot

#endif  // SWARM_OT_KANTOROVICH_PD_HPP
