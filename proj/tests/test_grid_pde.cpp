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

#include "swarm_ot/grid_pde.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

namespace swarm_ot {
namespace {

// 2x1 grid: nodes 0 and 1 joined by one unit-cost edge.
GridState pair_state(std::vector<double> rho, double dt) { return GridState::make(2, 1, std::move(rho), dt); }

std::vector<double> smooth_target(std::size_t nx, std::size_t ny) {
  return grid_target(DensityField::gaussian_mixture({{{0.6, 0.4}, {0.05, 0, 0, 0.08}, 1.0}}), nx, ny);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(GridGraph, Structure) {
  const auto g = grid_graph(3, 2);
  EXPECT_EQ(g.node_count(), 6u);
  EXPECT_EQ(g.edge_count(), 7u);  // 2*2 horizontal + 3 vertical
  EXPECT_TRUE(g.find_edge(0, 1).has_value());
  EXPECT_TRUE(g.find_edge(1, 4).has_value());
  EXPECT_FALSE(g.find_edge(2, 3).has_value());  // row wrap
  EXPECT_THROW(grid_graph(1, 1), std::invalid_argument);
}

TEST(GridState, MakeValidates) {
  EXPECT_THROW(GridState::make(2, 1, {0.5, 0.5}, 0.0), std::invalid_argument);
  EXPECT_THROW(GridState::make(2, 1, {1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(GridState::make(2, 1, {1.0}), std::invalid_argument);
  EXPECT_THROW(GridState::make(2, 1, {0.5, 0.5}, 1e-3, 1.0, -1.0), std::invalid_argument);
}

TEST(GridTarget, FloorAndNormalization) {
  const auto t = grid_target(DensityField::raster(2, 1, {0.0, 1.0}), 4, 4);
  EXPECT_NEAR(sum(t), 1.0, 1e-15);
  for (double v : t) EXPECT_GT(v, 0.0);
  EXPECT_THROW(grid_target(DensityField::raster(1, 1, {1.0}), 1, 2), std::invalid_argument);
}

TEST(RandomDensity, PositiveAndNormalized) {
  const auto r = random_density(400, SplitMix64(3));
  EXPECT_NEAR(sum(r), 1.0, 1e-14);
  for (double v : r) EXPECT_GT(v, 0.0);
  EXPECT_EQ(r, random_density(400, SplitMix64(3)));
}

TEST(PdFlowStep, PairExample) {
  GridState s = pair_state({0.5, 0.5}, 0.1);
  s.phi = {1.0, 0.0};
  s.lam = {1.0};
  const auto t = pd_flow_step(s, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(t.phi[0], 0.9, 1e-15);
  EXPECT_NEAR(t.phi[1], 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(t.lam[0], 1.0);
}

TEST(PdFlowStep, ProjectionKeepsZeroMultipliers) {
  GridState s = GridState::make(3, 3, std::vector<double>(9, 1.0 / 9));
  SplitMix64 rng(2);
  for (auto& p : s.phi) p = rng.uniform(0, 0.5);
  const auto t = pd_flow_step(s, s.rho);
  for (double l : t.lam) EXPECT_EQ(l, 0.0);
}

TEST(PdFlowStep, BalancedFlatStateIsStationaryInPhi) {
  GridState s = GridState::make(3, 3, std::vector<double>(9, 1.0 / 9));
  std::fill(s.phi.begin(), s.phi.end(), 0.3);
  std::fill(s.lam.begin(), s.lam.end(), 0.7);
  const auto t = pd_flow_step(s, s.rho);
  EXPECT_EQ(t.phi, s.phi);
  for (double l : t.lam) EXPECT_LT(l, 0.7);
}

TEST(RelaxedPrimal, PairSteadyStateAndLinearity) {
  GridState s = pair_state({0.6, 0.4}, 0.1);
  const std::vector<double> target{0.4, 0.6};
  for (int k = 0; k < 2000; ++k) s = relaxed_primal_step(std::move(s), target, 1.0);
  // Stationarity: lambda (phi_1 - phi_0) + rho_0 - rho*_0 = 0.
  EXPECT_NEAR(s.phi[0] - s.phi[1], 0.2, 1e-12);
  EXPECT_EQ(s.lam[0], 0.0);

  GridState d = pair_state({0.8, 0.2}, 0.1);
  for (int k = 0; k < 2000; ++k) d = relaxed_primal_step(std::move(d), target, 1.0);
  EXPECT_NEAR(d.phi[0] - d.phi[1], 2.0 * (s.phi[0] - s.phi[1]), 1e-12);

  EXPECT_THROW(relaxed_primal_step(s, target, 0.0), std::invalid_argument);
}

TEST(TransportStep, PairExample) {
  GridState s = pair_state({0.5, 0.5}, 0.1);
  s.phi = {1.0, 0.0};
  s.lam = {1.0};
  const auto t = transport_step(s, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(t.rho[0], 0.4, 1e-15);
  EXPECT_NEAR(t.rho[1], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(sum(t.rho), 1.0);
  EXPECT_DOUBLE_EQ(t.t, 0.1);
}

TEST(TransportStep, ZeroFluxCases) {
  GridState s = GridState::make(3, 3, random_density(9, SplitMix64(1)), 0.1);
  SplitMix64 rng(5);
  for (auto& p : s.phi) p = rng.uniform();
  EXPECT_EQ(transport_step(s, s.rho).rho, s.rho);  // lambda = 0
  std::fill(s.phi.begin(), s.phi.end(), 2.0);
  std::fill(s.lam.begin(), s.lam.end(), 3.0);
  EXPECT_EQ(transport_step(s, s.rho).rho, s.rho);  // flat phi
}

TEST(TransportStep, PositivityErrorNamesNode) {
  GridState s = pair_state({0.01, 0.99}, 0.1);
  s.phi = {1.0, 0.0};
  s.lam = {1.0};
  try {
    transport_step(s, std::vector<double>{0.5, 0.5});
    FAIL() << "expected PositivityError";
  } catch (const PositivityError& e) {
    EXPECT_EQ(e.node(), 0u);
    EXPECT_NE(std::string(e.what()).find("reduce dt"), std::string::npos);
  }
}

TEST(Kkt, TrivialOptimizer) {
  GridState s = GridState::make(3, 2, std::vector<double>(6, 1.0 / 6));
  const auto r = kkt_residual(s, s.rho);
  EXPECT_EQ(r.stationarity, 0.0);
  EXPECT_EQ(r.feasibility, 0.0);
  EXPECT_EQ(r.slackness, 0.0);
  EXPECT_EQ(r.dual_feas, 0.0);
}

TEST(Kkt, PairHandSolution) {
  GridState s = pair_state({0.6, 0.4}, 0.1);
  s.phi = {0.5, -0.5};
  s.lam = {0.2};
  const auto r = kkt_residual(s, std::vector<double>{0.4, 0.6});
  EXPECT_NEAR(r.stationarity, 0.0, 1e-15);
  EXPECT_EQ(r.feasibility, 0.0);
  EXPECT_EQ(r.slackness, 0.0);
  EXPECT_DOUBLE_EQ(r.dual_feas, 0.2);
}

TEST(ConvergePdFlow, PairReachesHandSolution) {
  const auto r = converge_pd_flow(pair_state({0.6, 0.4}, 0.05), std::vector<double>{0.4, 0.6}, 1e-9, 1'000'000);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.state.phi[0] - r.state.phi[1], 1.0, 1e-8);
  EXPECT_NEAR(r.state.lam[0], 0.2, 1e-8);
  EXPECT_LE(r.kkt.slackness, 1e-6);
}

TEST(ConvergePdFlow, FrozenRhoSaddleDistanceDecreases) {
  // Reference saddle point from the exact solver, then pd_flow_step from a
  // perturbed start with the same phi mean (the flow conserves it).
  const std::size_t nx = 4, ny = 3;
  const auto target = smooth_target(nx, ny);
  GridState ref = GridState::make(nx, ny, random_density(nx * ny, SplitMix64(8)), 1e-3);
  SteadyStateSolver solver(1e-12);
  solver.solve(ref, target);

  GridState s = ref;
  SplitMix64 rng(4);
  for (auto& p : s.phi) p += rng.uniform(-0.2, 0.2);
  double mean = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) mean += s.phi[i] - ref.phi[i];
  for (auto& p : s.phi) p -= mean / static_cast<double>(s.size());
  for (auto& l : s.lam) l = rng.uniform(0, 0.1);

  auto distance = [&](const GridState& x) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x.phi[i] - ref.phi[i]) * (x.phi[i] - ref.phi[i]);
    for (std::size_t k = 0; k < x.lam.size(); ++k) d += (x.lam[k] - ref.lam[k]) * (x.lam[k] - ref.lam[k]);
    return 0.5 * d;
  };
  double prev = distance(s);
  const double start = prev;
  for (int k = 0; k < 20000; ++k) {
    s = pd_flow_step(std::move(s), target);
    const double now = distance(s);
    ASSERT_LE(now, prev + 1e-8) << "step " << k;
    prev = now;
  }
  EXPECT_LT(prev, start);
}

TEST(SteadyState, SolvesKktAndReusesScaledImbalance) {
  const auto target = smooth_target(6, 5);
  GridState s = GridState::make(6, 5, random_density(30, SplitMix64(2)), 1e-3);
  SteadyStateSolver solver(1e-10);
  solver.solve(s, target);
  const auto r = kkt_residual(s, target);
  EXPECT_LE(r.stationarity, 1e-10);
  EXPECT_LE(r.feasibility, 1e-12);
  EXPECT_LE(r.slackness, 1e-12);
  EXPECT_GE(r.dual_feas, 0.0);
  EXPECT_EQ(solver.solves(), 1u);

  // Halving the imbalance is served from the cache.
  for (std::size_t i = 0; i < s.size(); ++i) s.rho[i] = target[i] + 0.5 * (s.rho[i] - target[i]);
  solver.solve(s, target);
  EXPECT_EQ(solver.solves(), 1u);
  EXPECT_EQ(solver.reuses(), 1u);
  EXPECT_LE(kkt_residual(s, target).stationarity, 1e-10);
}

TEST(SteadyState, TransportMovesRhoTowardTarget) {
  const auto target = smooth_target(5, 5);
  GridState s = GridState::make(5, 5, random_density(25, SplitMix64(6)), 1e-3);
  SteadyStateSolver solver(1e-12);
  solver.solve(s, target);
  const auto before = s.rho;
  s = transport_step(std::move(s), target);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s.rho[i], before[i] + 1e-3 * (target[i] - before[i]), 1e-14);
  }
}

TEST(Coupled, TargetIsFixedPoint) {
  const auto target = smooth_target(6, 6);
  for (auto mode : {CoupledMode::kOnTheFlyPd, CoupledMode::kOnTheFlyFixed, CoupledMode::kInnerSteadyState}) {
    CoupledOptions opt;
    opt.mode = mode;
    opt.horizon = 0.1;
    const auto r = run_coupled(GridState::make(6, 6, target, 1e-2), target, opt);
    ASSERT_EQ(r.reports.size(), 11u);
    for (const auto& rep : r.reports) EXPECT_EQ(rep.V, 0.0);
  }
}

TEST(Coupled, ConservesMassAndPositivity) {
  const auto target = smooth_target(8, 8);
  for (auto mode : {CoupledMode::kOnTheFlyPd, CoupledMode::kOnTheFlyFixed, CoupledMode::kInnerSteadyState}) {
    CoupledOptions opt;
    opt.mode = mode;
    opt.horizon = 1.0;
    opt.inner_iters = 3;
    const auto r = run_coupled(GridState::make(8, 8, random_density(64, SplitMix64(1)), 1e-3), target, opt);
    for (const auto& rep : r.reports) {
      EXPECT_LE(rep.mass_error, 1e-12);
      EXPECT_GT(rep.min_rho, 0.0);
      EXPECT_GE(rep.V, 0.0);
      EXPECT_GE(rep.E, rep.V);
      EXPECT_GE(rep.kkt.dual_feas, 0.0);
    }
    // With lambda starting at 0 the coupled primal-dual mode only moves mass
    // once some potential gap exceeds the edge cost.
    if (mode != CoupledMode::kOnTheFlyPd) {
      EXPECT_LT(r.reports.back().V, r.reports.front().V);
    }
  }
}

TEST(Coupled, FixedDualEnergyNonIncreasing) {
  const auto target = smooth_target(10, 10);
  CoupledOptions opt;
  opt.mode = CoupledMode::kOnTheFlyFixed;
  opt.horizon = 5.0;
  // Start from a bounded perturbation of the target so no node runs dry.
  auto rho = random_density(100, SplitMix64(3));
  double total = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) total += (rho[i] = target[i] * (0.5 + 100.0 * rho[i]));
  for (auto& r : rho) r /= total;
  const auto r = run_coupled(GridState::make(10, 10, rho, 1e-2), target, opt);
  EXPECT_LT(r.reports.back().E, 0.5 * r.reports.front().E);
  for (std::size_t m = 1; m < r.reports.size(); ++m) EXPECT_LE(r.reports[m].E, r.reports[m - 1].E + 1e-10);
}

TEST(Coupled, SteadyStateDecayRate) {
  // V(t) = V(0) exp(-2t) up to O(dt) from explicit Euler.
  const auto target = smooth_target(8, 8);
  CoupledOptions opt;
  opt.mode = CoupledMode::kInnerSteadyState;
  opt.horizon = 1.0;
  const auto r = run_coupled(GridState::make(8, 8, random_density(64, SplitMix64(4)), 1e-3), target, opt);
  EXPECT_NEAR(r.reports.back().V / r.reports.front().V, std::exp(-2.0), 1e-3);
  EXPECT_EQ(r.steady_solves + r.steady_reuses, 1000u);
}

TEST(Coupled, ObserverSeesEveryStep) {
  const auto target = smooth_target(4, 4);
  CoupledOptions opt;
  opt.horizon = 0.05;
  std::vector<double> times;
  run_coupled(GridState::make(4, 4, random_density(16, SplitMix64(0)), 1e-2), target, opt,
              [&](std::size_t m, const GridState& s, const LyapunovReport& rep) {
                EXPECT_EQ(m, times.size());
                EXPECT_EQ(s.t, rep.t);
                times.push_back(rep.t);
              });
  ASSERT_EQ(times.size(), 6u);
  EXPECT_EQ(times.front(), 0.0);
  EXPECT_NEAR(times.back(), 0.05, 1e-15);
}

TEST(Coupled, ThreadCountDoesNotChangeResult) {
  const auto target = smooth_target(70, 70);
  CoupledOptions opt;
  opt.horizon = 0.02;
  opt.inner_iters = 2;
  const GridState s0 = GridState::make(70, 70, random_density(4900, SplitMix64(9)), 1e-3);
  const auto a = run_coupled(s0, target, opt);
  opt.threads = 4;
  const auto b = run_coupled(s0, target, opt);
  EXPECT_EQ(a.final_state.rho, b.final_state.rho);
  EXPECT_EQ(a.final_state.phi, b.final_state.phi);
  EXPECT_EQ(a.final_state.lam, b.final_state.lam);
}

TEST(Coupled, OptionErrors) {
  const auto target = smooth_target(4, 4);
  const GridState s = GridState::make(4, 4, target, 1e-2);
  CoupledOptions opt;
  opt.inner_iters = 0;
  EXPECT_THROW(run_coupled(s, target, opt), std::invalid_argument);
  opt.inner_iters = 1;
  opt.mode = CoupledMode::kOnTheFlyFixed;
  opt.lam_fixed = 0.0;
  EXPECT_THROW(run_coupled(s, target, opt), std::invalid_argument);
  EXPECT_THROW(run_coupled(s, std::vector<double>(3, 0.1), CoupledOptions{}), std::invalid_argument);
  EXPECT_THROW(parse_coupled_mode("implicit"), std::invalid_argument);
  EXPECT_EQ(parse_coupled_mode("inner_steady_state"), CoupledMode::kInnerSteadyState);
}

TEST(OuterSteps, Rounding) {
  EXPECT_EQ(outer_step_count(1.0, 1e-3), 1000u);
  EXPECT_EQ(outer_step_count(50.0, 0.01), 5000u);
  EXPECT_EQ(outer_step_count(0.0, 0.1), 0u);
  EXPECT_EQ(outer_step_count(0.25, 0.1), 3u);
  EXPECT_THROW(outer_step_count(-1.0, 0.1), std::invalid_argument);
}

}  // namespace
}  // namespace swarm_ot
