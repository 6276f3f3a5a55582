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

// Exact reference values for graph-restricted transport: uncapacitated
// min-cost flow solved by successive shortest augmenting paths with
// Dijkstra on reduced costs.

#ifndef SWARM_OT_FLOW_ORACLE_HPP
#define SWARM_OT_FLOW_ORACLE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarm_ot/geometry.hpp"
#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {

class UnbalancedSupplies : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InfeasibleFlow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed, uncapacitated arc with nonnegative cost.
struct Arc {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  double cost = 0.0;
};

struct TransshipmentResult {
  double value = 0.0;
  std::vector<double> arc_flow;
  /// Dual potentials phi with phi_from - phi_to <= cost on every arc (tight
  /// where flow is positive) and value == sum_v phi_v supply_v.
  std::vector<double> potential;
  std::size_t augmentations = 0;
};

inline constexpr double kDefaultBalanceTolerance = 1e-9;

/// Minimizes sum_a cost_a flow_a subject to outflow - inflow = supply at
/// every node. Positive supply is a source.
inline TransshipmentResult solve_transshipment(std::size_t n, std::span<const Arc> arcs,
                                               std::span<const double> supply,
                                               double balance_tol = kDefaultBalanceTolerance) {
  if (supply.size() != n) throw std::invalid_argument("solve_transshipment: supply size mismatch");
  double total = 0.0;
  double magnitude = 0.0;
  for (double s : supply) {
    total += s;
    magnitude += std::abs(s);
  }
  if (std::abs(total) > balance_tol) {
    throw UnbalancedSupplies("supplies sum to " + std::to_string(total) + ", expected 0");
  }
  for (const auto& a : arcs) {
    if (a.from >= n || a.to >= n) throw std::invalid_argument("solve_transshipment: arc endpoint out of range");
    if (!(a.cost >= 0.0) || !std::isfinite(a.cost)) {
      throw std::invalid_argument("solve_transshipment: arc costs must be finite and nonnegative");
    }
  }
  const double flow_eps = 1e-14 * std::max(1.0, magnitude) + std::abs(total);

  // Residual arc 2a is the forward copy of arcs[a] (unbounded); 2a+1 is its
  // reverse, with capacity equal to the current flow.
  std::vector<std::vector<std::uint32_t>> out(n);
  for (std::uint32_t a = 0; a < arcs.size(); ++a) {
    out[arcs[a].from].push_back(2 * a);
    out[arcs[a].to].push_back(2 * a + 1);
  }
  auto head = [&](std::uint32_t r) { return (r & 1) ? arcs[r / 2].from : arcs[r / 2].to; };
  auto cost = [&](std::uint32_t r) { return (r & 1) ? -arcs[r / 2].cost : arcs[r / 2].cost; };

  TransshipmentResult res;
  res.arc_flow.assign(arcs.size(), 0.0);
  std::vector<double> excess(supply.begin(), supply.end());
  std::vector<double> pi(n, 0.0);
  std::vector<double> dist(n);
  std::vector<std::uint32_t> pred(n);
  std::vector<bool> done(n);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  using Item = std::pair<double, std::uint32_t>;
  for (std::uint32_t source = 0; source < n;) {
    if (!(excess[source] > flow_eps)) {
      ++source;
      continue;
    }
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), kNone);
    std::fill(done.begin(), done.end(), false);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.push({0.0, source});
    std::uint32_t sink = kNone;
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[u]) continue;
      done[u] = true;
      if (excess[u] < -flow_eps) {
        sink = u;
        break;
      }
      for (auto r : out[u]) {
        if ((r & 1) && !(res.arc_flow[r / 2] > 0.0)) continue;
        const auto v = head(r);
        if (done[v]) continue;
        // Reduced costs are nonnegative up to rounding.
        const double rc = std::max(0.0, cost(r) + pi[u] - pi[v]);
        if (d + rc < dist[v]) {
          dist[v] = d + rc;
          pred[v] = r;
          heap.push({dist[v], v});
        }
      }
    }
    if (sink == kNone) {
      throw InfeasibleFlow("no path from node " + std::to_string(source) +
                           " to any deficit node: imbalance across disconnected components");
    }
    const double dsink = dist[sink];
    for (std::uint32_t v = 0; v < n; ++v) pi[v] += done[v] ? dist[v] : dsink;

    double amount = std::min(excess[source], -excess[sink]);
    for (auto v = sink; v != source;) {
      const auto r = pred[v];
      if (r & 1) amount = std::min(amount, res.arc_flow[r / 2]);
      v = (r & 1) ? arcs[r / 2].to : arcs[r / 2].from;
    }
    for (auto v = sink; v != source;) {
      const auto r = pred[v];
      if (r & 1) {
        res.arc_flow[r / 2] -= amount;
        if (res.arc_flow[r / 2] < 0.0) res.arc_flow[r / 2] = 0.0;
      } else {
        res.arc_flow[r / 2] += amount;
      }
      v = (r & 1) ? arcs[r / 2].to : arcs[r / 2].from;
    }
    excess[source] = amount == excess[source] ? 0.0 : excess[source] - amount;
    excess[sink] = amount == -excess[sink] ? 0.0 : excess[sink] + amount;
    ++res.augmentations;
  }

  res.value = 0.0;
  for (std::size_t a = 0; a < arcs.size(); ++a) res.value += arcs[a].cost * res.arc_flow[a];
  res.potential.resize(n);
  for (std::size_t v = 0; v < n; ++v) res.potential[v] = -pi[v];
  return res;
}

struct FlowProblem {
  NeighborGraph graph;
  std::vector<double> supplies;
};

struct FlowSolution {
  double value = 0.0;
  /// flows[2k] runs edge k from i to j, flows[2k+1] from j to i.
  std::vector<double> flows;
  /// Graph-feasible potentials attaining the restricted dual optimum.
  std::vector<double> potentials;
};

inline std::vector<Arc> undirected_arcs(const NeighborGraph& g) {
  std::vector<Arc> arcs;
  arcs.reserve(2 * g.edge_count());
  for (const auto& e : g.edges()) {
    arcs.push_back({e.i, e.j, e.cost});
    arcs.push_back({e.j, e.i, e.cost});
  }
  return arcs;
}

/// Min-cost flow on an undirected graph; its value equals the maximum of
/// sum_i phi_i s_i over graph-feasible potentials.
inline FlowSolution min_cost_flow(const FlowProblem& p) {
  if (p.supplies.size() != p.graph.node_count()) {
    throw std::invalid_argument("min_cost_flow: supplies do not match node count");
  }
  const auto arcs = undirected_arcs(p.graph);
  auto r = solve_transshipment(p.graph.node_count(), arcs, p.supplies);
  return {r.value, std::move(r.arc_flow), std::move(r.potential)};
}

/// Optimal assignment cost (1/N) min_sigma sum_i c(src_i, dst_sigma(i))
/// between two equal-size point sets.
inline double discrete_ot_cost(std::span<const Point> src, std::span<const Point> dst,
                               const MetricCost& metric) {
  if (src.size() != dst.size()) throw std::invalid_argument("discrete_ot_cost: size mismatch");
  if (src.empty()) throw std::invalid_argument("discrete_ot_cost: empty point sets");
  const std::size_t n = src.size();
  std::vector<Arc> arcs;
  arcs.reserve(n * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      arcs.push_back({i, static_cast<std::uint32_t>(n + j), metric(src[i], dst[j])});
    }
  }
  // Integral supplies keep the assignment exact; scale the value afterwards.
  std::vector<double> supply(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    supply[i] = 1.0;
    supply[n + i] = -1.0;
  }
  const auto r = solve_transshipment(2 * n, arcs, supply);
  return r.value / static_cast<double>(n);
}

}  // namespace swarm_ot

#endif  // SWARM_OT_FLOW_ORACLE_HPP
