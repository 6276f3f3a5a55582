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

#ifndef SWARM_OT_VORONOI_GRAPH_HPP
#define SWARM_OT_VORONOI_GRAPH_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm_ot/geometry.hpp"
#include "swarm_ot/parallel.hpp"
#include "swarm_ot/target_measure.hpp"

namespace swarm_ot {

/// Raster Voronoi partition: each quadrature cell belongs to its nearest site,
/// ties going to the lowest site index.
class Partition {
 public:
  Partition(std::vector<Point> sites, QuadratureGrid grid, std::vector<std::uint32_t> owner)
      : sites_(std::move(sites)), grid_(std::move(grid)), owner_(std::move(owner)) {
    cell_count_.assign(sites_.size(), 0);
    for (auto o : owner_) ++cell_count_[o];
  }

  std::size_t site_count() const { return sites_.size(); }
  const std::vector<Point>& sites() const { return sites_; }
  const QuadratureGrid& grid() const { return grid_; }
  std::span<const std::uint32_t> owner() const { return owner_; }
  std::uint32_t owner(std::size_t cell) const { return owner_[cell]; }
  std::size_t cell_count(std::size_t site) const { return cell_count_[site]; }

 private:
  std::vector<Point> sites_;
  QuadratureGrid grid_;
  std::vector<std::uint32_t> owner_;
  std::vector<std::size_t> cell_count_;
};

/// Tolerance within which out-of-domain sites are clamped back in.
inline constexpr double kSiteClampSlack = 1e-12;

inline Partition build_partition(std::vector<Point> sites, const MetricCost& /*metric*/,
                                 const Domain& domain, const QuadratureGrid& q,
                                 unsigned threads = 1) {
  if (sites.empty()) throw std::invalid_argument("build_partition: need at least one site");
  if (sites.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("build_partition: too many sites");
  }
  for (auto& s : sites) {
    if (!domain.contains(s, kSiteClampSlack)) {
      throw std::domain_error("build_partition: site (" + std::to_string(s.x) + ", " +
                              std::to_string(s.y) + ") lies outside the domain");
    }
    s = domain.clamp(s);
  }
  // Constant-factor metric: nearest in c is nearest in squared Euclidean
  // distance, with identical ties.
  std::vector<std::uint32_t> owner(q.size());
  parallel_for_blocks(q.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Point c = q.center(k);
      std::uint32_t best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::uint32_t i = 0; i < sites.size(); ++i) {
        const double dx = c.x - sites[i].x;
        const double dy = c.y - sites[i].y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
          best_d2 = d2;
          best = i;
        }
      }
      owner[k] = best;
    }
  });
  return Partition(std::move(sites), q, std::move(owner));
}

struct Edge {
  std::uint32_t i = 0;  // i < j
  std::uint32_t j = 0;
  double cost = 0.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected weighted graph with edges sorted by (i, j).
class NeighborGraph {
 public:
  struct Incidence {
    std::uint32_t node;
    std::uint32_t edge;
  };

  NeighborGraph() = default;

  /// Edges may come in any order with either orientation; duplicates are
  /// rejected. Every node is active unless a mask is given.
  NeighborGraph(std::size_t n, std::vector<Edge> edges, std::vector<bool> active = {})
      : n_(n), edges_(std::move(edges)), active_(std::move(active)) {
    if (active_.empty()) active_.assign(n_, true);
    if (active_.size() != n_) throw std::invalid_argument("NeighborGraph: active mask size mismatch");
    for (auto& e : edges_) {
      if (e.i > e.j) std::swap(e.i, e.j);
      if (e.i == e.j || e.j >= n_) throw std::invalid_argument("NeighborGraph: invalid edge endpoints");
      if (!(e.cost > 0.0) || !std::isfinite(e.cost)) {
        throw std::invalid_argument("NeighborGraph: edge costs must be positive");
      }
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
    for (std::size_t k = 1; k < edges_.size(); ++k) {
      if (edges_[k].i == edges_[k - 1].i && edges_[k].j == edges_[k - 1].j) {
        throw std::invalid_argument("NeighborGraph: duplicate edge");
      }
    }
    adjacency_.assign(n_, {});
    for (std::uint32_t k = 0; k < edges_.size(); ++k) {
      adjacency_[edges_[k].i].push_back({edges_[k].j, k});
      adjacency_[edges_[k].j].push_back({edges_[k].i, k});
    }
  }

  std::size_t node_count() const { return n_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t k) const { return edges_[k]; }
  std::span<const Incidence> neighbors(std::size_t i) const { return adjacency_[i]; }
  bool active(std::size_t i) const { return active_[i]; }

  std::optional<std::size_t> find_edge(std::uint32_t a, std::uint32_t b) const {
    if (a > b) std::swap(a, b);
    const auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{a, b, 0.0},
                                     [](const Edge& x, const Edge& y) {
                                       return x.i != y.i ? x.i < y.i : x.j < y.j;
                                     });
    if (it != edges_.end() && it->i == a && it->j == b) {
      return static_cast<std::size_t>(it - edges_.begin());
    }
    return std::nullopt;
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<bool> active_;
  std::vector<std::vector<Incidence>> adjacency_;
};

/// Connects sites whose cells share a side in the quadrature raster. Pairs
/// farther apart than comm_radius (in metric units) are dropped.
inline NeighborGraph neighbor_graph(const Partition& p, const MetricCost& metric,
                                    double comm_radius = std::numeric_limits<double>::infinity()) {
  const auto& q = p.grid();
  const auto owner = p.owner();
  std::vector<std::uint64_t> keys;
  auto note = [&](std::uint32_t a, std::uint32_t b) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    keys.push_back((static_cast<std::uint64_t>(a) << 32) | b);
  };
  for (std::size_t iy = 0; iy < q.ny(); ++iy) {
    for (std::size_t ix = 0; ix < q.nx(); ++ix) {
      const auto here = owner[q.index(ix, iy)];
      if (ix + 1 < q.nx()) note(here, owner[q.index(ix + 1, iy)]);
      if (iy + 1 < q.ny()) note(here, owner[q.index(ix, iy + 1)]);
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  std::vector<Edge> edges;
  edges.reserve(keys.size());
  const auto& sites = p.sites();
  for (auto key : keys) {
    const auto a = static_cast<std::uint32_t>(key >> 32);
    const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
    const double c = metric(sites[a], sites[b]);
    if (c > comm_radius) continue;
    edges.push_back({a, b, c});
  }
  std::vector<bool> active(p.site_count());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = p.cell_count(i) > 0;
  return NeighborGraph(p.site_count(), std::move(edges), std::move(active));
}

/// Breadth-first reachability over the active nodes.
inline bool is_connected(const NeighborGraph& g) {
  const std::size_t n = g.node_count();
  std::size_t start = n;
  std::size_t active = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.active(i)) {
      ++active;
      if (start == n) start = i;
    }
  }
  if (active <= 1) return true;
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> queue{start};
  seen[start] = true;
  std::size_t reached = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    for (const auto& inc : g.neighbors(queue[head])) {
      if (!seen[inc.node] && g.active(inc.node)) {
        seen[inc.node] = true;
        ++reached;
        queue.push_back(inc.node);
      }
    }
  }
  return reached == active;
}

/// Target mass of every cell of the partition, from per-quadrature-cell
/// masses (see discretize). Summed in cell-index order.
inline std::vector<double> cell_masses(std::span<const double> quad_mass, const Partition& p) {
  if (quad_mass.size() != p.grid().size()) {
    throw std::invalid_argument("cell_masses: quadrature mass size does not match the partition grid");
  }
  std::vector<double> m(p.site_count(), 0.0);
  const auto owner = p.owner();
  for (std::size_t k = 0; k < owner.size(); ++k) m[owner[k]] += quad_mass[k];
  return m;
}

/// mu*(V_i) by midpoint quadrature on the partition's grid.
inline double cell_mass(const DensityField& f, const QuadratureGrid& q, const Partition& p,
                        std::size_t i) {
  if (i >= p.site_count()) {
    throw std::domain_error("cell_mass: agent index " + std::to_string(i) + " out of range");
  }
  if (q.nx() != p.grid().nx() || q.ny() != p.grid().ny()) {
    throw std::invalid_argument("cell_mass: partition built on a different quadrature grid");
  }
  double sum = 0.0;
  const auto owner = p.owner();
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] == i) sum += f.density_at(q.center(k));
  }
  return sum * q.cell_area();
}

}  // namespace swarm_ot

#endif  // SWARM_OT_VORONOI_GRAPH_HPP
