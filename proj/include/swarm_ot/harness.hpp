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

// Experiment runner: builds targets and initial states from a config, runs
// the agent or grid dynamics, and writes CSV files. Every number is written
// in shortest round-trip form so equal runs give equal bytes.

#ifndef SWARM_OT_HARNESS_HPP
#define SWARM_OT_HARNESS_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm_ot/agent_transport.hpp"
#include "swarm_ot/config.hpp"
#include "swarm_ot/flow_oracle.hpp"
#include "swarm_ot/grid_pde.hpp"
#include "swarm_ot/kantorovich_pd.hpp"
#include "swarm_ot/rng.hpp"
#include "swarm_ot/target_measure.hpp"
#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {

/// Comma-separated output with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    columns_ = header.size();
    bool first = true;
    for (auto h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... values) {
    static_assert(sizeof...(Ts) > 0);
    if (sizeof...(Ts) != columns_) throw std::logic_error("csv row width does not match header");
    std::size_t k = 0;
    ((out_ << (k++ ? "," : ""), put(values)), ...);
    out_ << '\n';
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

  static std::string format(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  }

 private:
  void put(double v) { out_ << format(v); }
  void put(bool v) { out_ << (v ? 1 : 0); }
  void put(const std::string& v) { out_ << v; }
  void put(const char* v) { out_ << v; }
  template <typename T>
    requires std::is_integral_v<T>
  void put(T v) {
    out_ << v;
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_ = 0;
};

struct RunOptions {
  std::filesystem::path out_dir = "out";
  unsigned threads = 1;
  /// Directory relative target.pgm_path values are resolved against.
  std::filesystem::path config_dir = ".";
};

/// Target density from the config, normalized on the quadrature grid.
inline DensityField build_target(const ExperimentConfig& cfg, const std::filesystem::path& config_dir = ".") {
  const Domain domain = cfg.domain();
  const QuadratureGrid q(domain, cfg.quadrature);
  const auto& t = cfg.target;
  if (t.kind == "pgm") {
    std::filesystem::path p = t.pgm_path;
    if (p.is_relative()) p = config_dir / p;
    return normalize(load_pgm_file(p.string(), domain), q);
  }
  std::vector<Point> means = t.means;
  if (t.random_means) {
    const std::size_t k = std::max<std::size_t>(1, std::max(t.covariances.size(), t.weights.size()));
    auto rng = SplitMix64(cfg.seed).split(streams::kTargetMeans);
    means.clear();
    for (std::size_t i = 0; i < k; ++i) {
      const double x = rng.uniform(domain.lo().x, domain.hi().x);
      const double y = rng.uniform(domain.lo().y, domain.hi().y);
      means.push_back({x, y});
    }
  }
  std::vector<GaussianComponent> comps;
  for (std::size_t i = 0; i < means.size(); ++i) {
    GaussianComponent c;
    c.mean = means[i];
    c.covariance = t.covariances.size() == 1 ? t.covariances[0] : t.covariances[i];
    c.weight = t.weights.size() == 1 ? t.weights[0] : t.weights[i];
    comps.push_back(c);
  }
  return normalize(DensityField::gaussian_mixture(std::move(comps), domain), q);
}

/// Seeded initial agent positions, uniform over the domain or the init box.
inline std::vector<Point> initial_positions(const ExperimentConfig& cfg) {
  const Domain box = cfg.agent_init == "box" && cfg.init_box ? *cfg.init_box : cfg.domain();
  auto rng = SplitMix64(cfg.seed).split(streams::kInitialPositions);
  std::vector<Point> out(cfg.agent_count);
  for (auto& p : out) {
    const double x = rng.uniform(box.lo().x, box.hi().x);
    const double y = rng.uniform(box.lo().y, box.hi().y);
    p = {x, y};
  }
  return out;
}

inline TransportConfig transport_config(const ExperimentConfig& cfg) {
  TransportConfig t = cfg.transport;
  if (cfg.mode != RunMode::kAgentsFixedDual) t.fixed_dual.reset();
  return t;
}

/// Runs the agent experiment for cfg and returns it without writing files.
inline ExperimentResult simulate_agents(const ExperimentConfig& cfg, unsigned threads,
                                        const std::filesystem::path& config_dir = ".") {
  const Domain domain = cfg.domain();
  const QuadratureGrid q(domain, cfg.quadrature);
  const auto target = DiscreteTarget::from(build_target(cfg, config_dir), q);
  return run_experiment(initial_positions(cfg), transport_config(cfg), target, MetricCost(cfg.xi), domain,
                        cfg.seed, threads);
}

inline void write_agent_metrics(const std::filesystem::path& path, const ExperimentResult& r) {
  CsvWriter csv(path, {"round", "mass_variance", "transport_cost", "dual_objective", "feasibility_violation",
                       "connected"});
  for (const auto& m : r.records) {
    csv.row(m.round, m.mass_variance, m.transport_cost, m.dual_objective, m.feasibility_violation, m.connected);
  }
}

inline void write_agent_positions(const std::filesystem::path& path, const ExperimentResult& r) {
  CsvWriter csv(path, {"round", "agent", "x", "y", "cell_mass"});
  for (const auto& s : r.snapshots) {
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
      csv.row(s.round, i, s.positions[i].x, s.positions[i].y, s.cell_mass[i]);
    }
  }
}

/// Initial grid state and per-node target for a pde config.
struct PdeSetup {
  GridState state;
  std::vector<double> rho_star;
};

inline PdeSetup pde_setup(const ExperimentConfig& cfg, const std::filesystem::path& config_dir = ".") {
  const auto rho_star = grid_target(build_target(cfg, config_dir), cfg.grid_nx, cfg.grid_ny);
  std::vector<double> rho0 = cfg.pde_init == "target"
                                 ? rho_star
                                 : random_density(cfg.grid_nx * cfg.grid_ny,
                                                  SplitMix64(cfg.seed).split(streams::kGridInit));
  return {GridState::make(cfg.grid_nx, cfg.grid_ny, std::move(rho0), cfg.pde_dt, cfg.grid_cost, cfg.pde_lambda0),
          rho_star};
}

inline CoupledOptions coupled_options(const ExperimentConfig& cfg, unsigned threads) {
  CoupledOptions o;
  o.mode = cfg.pde_mode;
  o.inner_iters = cfg.pde_inner_iters;
  o.horizon = cfg.pde_horizon;
  o.lam_fixed = cfg.pde_fixed_dual;
  o.steady_tol = cfg.pde_steady_tol;
  o.threads = threads;
  return o;
}

inline void write_density_rows(CsvWriter& csv, std::size_t step, const GridState& s,
                               std::span<const double> rho_star) {
  for (std::size_t k = 0; k < s.size(); ++k) csv.row(step, s.t, k % s.nx, k / s.nx, s.rho[k], rho_star[k]);
}

/// pde mode: metrics.csv every outer step, density.csv at step 0, every
/// snapshot_every steps and the final step.
inline CoupledResult run_pde_to(const ExperimentConfig& cfg, const std::filesystem::path& metrics_path,
                                const std::filesystem::path& density_path, unsigned threads,
                                const std::filesystem::path& config_dir = ".") {
  auto setup = pde_setup(cfg, config_dir);
  const auto opt = coupled_options(cfg, threads);
  const std::size_t steps = outer_step_count(opt.horizon, setup.state.dt);
  CsvWriter metrics(metrics_path, {"t", "V", "E", "kkt_stationarity", "kkt_feasibility", "kkt_slackness",
                                   "mass_error"});
  CsvWriter density(density_path, {"step", "t", "ix", "iy", "rho", "rho_star"});
  const std::vector<double>& rho_star = setup.rho_star;
  auto observer = [&](std::size_t m, const GridState& s, const LyapunovReport& r) {
    metrics.row(r.t, r.V, r.E, r.kkt.stationarity, r.kkt.feasibility, r.kkt.slackness, r.mass_error);
    const bool snap = m == 0 || m == steps || (cfg.snapshot_every > 0 && m % cfg.snapshot_every == 0);
    if (snap) write_density_rows(density, m, s, rho_star);
  };
  return run_coupled(std::move(setup.state), rho_star, opt, observer);
}

struct OracleRow {
  std::uint64_t seed = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t iterations = 0;
  bool converged = false;
  double dual_objective = 0.0;
  double flow_value = 0.0;
  double gap = 0.0;
  double feasibility = 0.0;
  bool passed = false;
};

inline constexpr double kOracleTolerance = 1e-4;

/// Random connected Voronoi graph for one oracle instance: seeded sites,
/// uniform target, redrawn until every site owns a cell and the graph is
/// connected.
struct OracleInstance {
  NeighborGraph graph;
  std::vector<double> b;
};

inline OracleInstance oracle_instance(std::uint64_t seed, std::size_t nodes, const MetricCost& metric,
                                      const Domain& domain, std::size_t resolution) {
  auto rng = SplitMix64(seed).split(streams::kOracleInstances);
  const QuadratureGrid q(domain, resolution);
  const std::vector<double> uniform(q.size(), 1.0 / static_cast<double>(q.size()));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Point> sites(nodes);
    for (auto& p : sites) {
      const double x = rng.uniform(domain.lo().x, domain.hi().x);
      const double y = rng.uniform(domain.lo().y, domain.hi().y);
      p = {x, y};
    }
    const auto part = build_partition(sites, metric, domain, q);
    bool all_own = true;
    for (std::size_t i = 0; i < nodes; ++i) all_own = all_own && part.cell_count(i) > 0;
    if (!all_own) continue;
    auto g = neighbor_graph(part, metric);
    if (!is_connected(g)) continue;
    const auto b = MassImbalance::from_cell_masses(cell_masses(uniform, part));
    return {std::move(g), std::vector<double>(b.values().begin(), b.values().end())};
  }
  throw std::runtime_error("could not draw a connected oracle instance");
}

/// Converges the primal-dual iteration on instance seeds seed, seed + 1, ...
/// and compares against the exact min-cost flow.
inline std::vector<OracleRow> oracle_check(const ExperimentConfig& cfg) {
  const Domain domain = cfg.domain();
  const MetricCost metric(cfg.xi);
  ConvergeOptions opt;
  opt.stationarity_tol = cfg.oracle_stationarity_tol;
  opt.feasibility_tol = cfg.oracle_feasibility_tol;
  opt.max_iters = cfg.oracle_max_iters;
  std::vector<OracleRow> rows;
  for (std::size_t r = 0; r < cfg.oracle_seeds; ++r) {
    OracleRow row;
    row.seed = cfg.seed + r;
    const auto inst = oracle_instance(row.seed, cfg.oracle_nodes, metric, domain, cfg.quadrature);
    const MassImbalance b(inst.b);
    const auto pd = converge_pd(PotentialState::zeros(inst.graph), b, inst.graph, cfg.oracle_tau, opt);
    const auto flow = min_cost_flow({inst.graph, inst.b});
    row.nodes = inst.graph.node_count();
    row.edges = inst.graph.edge_count();
    row.iterations = pd.iterations;
    row.converged = pd.converged;
    row.dual_objective = dual_objective(pd.state.phi, b);
    row.flow_value = flow.value;
    row.gap = std::abs(row.dual_objective - row.flow_value);
    row.feasibility = pd.feasibility;
    row.passed = row.gap <= kOracleTolerance && row.feasibility <= kOracleTolerance;
    rows.push_back(row);
  }
  return rows;
}

inline void write_oracle_rows(const std::filesystem::path& path, const std::vector<OracleRow>& rows) {
  CsvWriter csv(path, {"seed", "nodes", "edges", "iterations", "converged", "dual_objective", "flow_value", "gap",
                       "feasibility"});
  for (const auto& r : rows) {
    csv.row(r.seed, r.nodes, r.edges, r.iterations, r.converged, r.dual_objective, r.flow_value, r.gap,
            r.feasibility);
  }
}

// Figure recipes. Each writes data files only.

inline const std::vector<std::size_t>& figure_inner_iters(int fig) {
  static const std::vector<std::size_t> agents{1, 5, 10};
  static const std::vector<std::size_t> cost{1, 2, 5, 10, 20};
  static const std::vector<std::size_t> pde{1, 2, 5, 10};
  return fig == 2 ? agents : fig == 3 ? cost : pde;
}

// Grid recipes need longer horizons than the pde defaults: with lambda(0) = 0
// the multipliers switch on only once potential differences reach the edge
// cost. Keys set in the config win.
inline void apply_figure_defaults(int fig, ExperimentConfig& cfg) {
  auto fallback = [&](const char* key, double& field, double value) {
    if (!cfg.origin.count(key)) field = value;
  };
  if (fig == 4 || fig == 5) {
    fallback("pde.dt", cfg.pde_dt, 0.05);
    fallback("pde.horizon", cfg.pde_horizon, 1000.0);
    if (fig == 4 && !cfg.origin.count("pde.inner_iters")) cfg.pde_inner_iters = 10;
  } else if (fig == 6) {
    fallback("pde.dt", cfg.pde_dt, 0.01);
    fallback("pde.horizon", cfg.pde_horizon, 50.0);
  }
}

inline void run_figure(int fig, ExperimentConfig cfg, const RunOptions& opt, std::ostream& log) {
  const auto& dir = opt.out_dir;
  switch (fig) {
    case 2:
      cfg.mode = RunMode::kAgents;
      for (auto n : figure_inner_iters(2)) {
        cfg.transport.inner_iters = n;
        const auto r = simulate_agents(cfg, opt.threads, opt.config_dir);
        const auto name = "fig2_n" + std::to_string(n);
        write_agent_metrics(dir / (name + ".csv"), r);
        write_agent_positions(dir / (name + "_positions.csv"), r);
        log << name << ": variance " << CsvWriter::format(r.records.front().mass_variance) << " -> "
            << CsvWriter::format(r.records.back().mass_variance) << '\n';
      }
      return;
    case 3: {
      cfg.mode = RunMode::kAgents;
      CsvWriter csv(dir / "fig3.csv", {"n", "transport_cost", "final_variance"});
      for (auto n : figure_inner_iters(3)) {
        cfg.transport.inner_iters = n;
        const auto r = simulate_agents(cfg, opt.threads, opt.config_dir);
        csv.row(n, r.records.back().transport_cost, r.records.back().mass_variance);
        log << "fig3 n=" << n << ": cost " << CsvWriter::format(r.records.back().transport_cost) << '\n';
      }
      return;
    }
    case 4: {
      cfg.mode = RunMode::kPde;
      cfg.pde_mode = CoupledMode::kOnTheFlyPd;
      apply_figure_defaults(fig, cfg);
      if (cfg.snapshot_every == 0) {
        cfg.snapshot_every = std::max<std::size_t>(1, outer_step_count(cfg.pde_horizon, cfg.pde_dt) / 4);
      }
      const auto r = run_pde_to(cfg, dir / "fig4_metrics.csv", dir / "fig4_density.csv", opt.threads, opt.config_dir);
      log << "fig4: density error " << CsvWriter::format(std::sqrt(2.0 * r.reports.front().V)) << " -> "
          << CsvWriter::format(std::sqrt(2.0 * r.reports.back().V)) << '\n';
      return;
    }
    case 5:
    case 6: {
      cfg.mode = RunMode::kPde;
      cfg.pde_mode = fig == 5 ? CoupledMode::kOnTheFlyPd : CoupledMode::kOnTheFlyFixed;
      apply_figure_defaults(fig, cfg);
      const auto name = "fig" + std::to_string(fig);
      CsvWriter csv(dir / (name + ".csv"), {"n", "t", "density_error"});
      for (auto n : figure_inner_iters(fig)) {
        cfg.pde_inner_iters = n;
        auto setup = pde_setup(cfg, opt.config_dir);
        double last_error = 0.0;
        auto observer = [&](std::size_t, const GridState&, const LyapunovReport& rep) {
          last_error = std::sqrt(2.0 * rep.V);
          csv.row(n, rep.t, last_error);
        };
        log << name << " n=" << n << ": ";
        try {
          run_coupled(std::move(setup.state), setup.rho_star, coupled_options(cfg, opt.threads), observer);
          log << "density error " << CsvWriter::format(last_error) << '\n';
        } catch (const PositivityError& e) {
          // The coupled primal-dual dynamics can overshoot; keep the series
          // up to the failure.
          log << "series stopped, " << e.what() << '\n';
        }
      }
      return;
    }
    default:
      throw std::invalid_argument("unknown figure " + std::to_string(fig) + " (expected 2..6)");
  }
}

enum class Command { kAgents, kPde, kOracleCheck, kFigure };

/// Executes one subcommand, writing into opt.out_dir. Errors go to err as a
/// one-line message and yield exit code 1; a failed oracle check yields 2.
inline int run(Command cmd, const ExperimentConfig& cfg_in, const RunOptions& opt, std::ostream& log,
               std::ostream& err, int figure = 0) {
  try {
    ExperimentConfig cfg = cfg_in;
    if (cmd == Command::kAgents && cfg.mode == RunMode::kPde) {
      throw ConfigError("mode", cfg.origin.count("mode") ? cfg.origin.at("mode") : 0,
                        "the agents subcommand needs mode agents or agents_fixed_dual");
    }
    if (cmd == Command::kPde && cfg.mode && cfg.mode != RunMode::kPde) {
      throw ConfigError("mode", cfg.origin.count("mode") ? cfg.origin.at("mode") : 0,
                        "the pde subcommand needs mode pde");
    }
    if (!cfg.mode) cfg.mode = cmd == Command::kPde ? RunMode::kPde : RunMode::kAgents;
    validate(cfg);
    std::filesystem::create_directories(opt.out_dir);
    switch (cmd) {
      case Command::kAgents: {
        const auto r = simulate_agents(cfg, opt.threads, opt.config_dir);
        write_agent_metrics(opt.out_dir / "metrics.csv", r);
        write_agent_positions(opt.out_dir / "positions.csv", r);
        const auto& last = r.records.back();
        log << "agents: " << r.records.size() - 1 << " rounds, variance "
            << CsvWriter::format(r.records.front().mass_variance) << " -> " << CsvWriter::format(last.mass_variance)
            << ", cost " << CsvWriter::format(last.transport_cost) << (last.connected ? "" : " (graph disconnected)")
            << '\n';
        return 0;
      }
      case Command::kPde: {
        const auto r = run_pde_to(cfg, opt.out_dir / "metrics.csv", opt.out_dir / "density.csv", opt.threads,
                                  opt.config_dir);
        log << "pde: " << r.reports.size() - 1 << " steps, V " << CsvWriter::format(r.reports.front().V) << " -> "
            << CsvWriter::format(r.reports.back().V) << '\n';
        return 0;
      }
      case Command::kOracleCheck: {
        const auto rows = oracle_check(cfg);
        write_oracle_rows(opt.out_dir / "oracle.csv", rows);
        bool ok = true;
        for (const auto& r : rows) {
          ok = ok && r.passed;
          log << "seed " << r.seed << ": gap " << CsvWriter::format(r.gap) << ", feasibility "
              << CsvWriter::format(r.feasibility) << (r.converged ? "" : " (iteration cap reached)")
              << (r.passed ? "" : "  FAILED") << '\n';
        }
        return ok ? 0 : 2;
      }
      case Command::kFigure:
        run_figure(figure, cfg, opt, log);
        return 0;
    }
    return 1;
  } catch (const std::exception& e) {
    err << "swarm-ot: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace swarm_ot

#endif  // SWARM_OT_HARNESS_HPP
