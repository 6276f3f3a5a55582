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

#include "swarm_ot/target_measure.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "swarm_ot/rng.hpp"
#include "swarm_ot/voronoi_graph.hpp"

namespace swarm_ot {
namespace {

DensityField uniform_raster(double value = 1.0, Domain d = {}) {
  return DensityField::raster(1, 1, {value}, d);
}

DensityField wide_gaussian(Point mean) {
  return DensityField::gaussian_mixture({{mean, {2.0, 0.0, 0.0, 2.0}, 1.0}});
}

TEST(QuadratureGrid, Geometry) {
  const QuadratureGrid q(Domain({0, 0}, {2, 1}), 4, 2);
  EXPECT_EQ(q.size(), 8u);
  EXPECT_DOUBLE_EQ(q.cell_area(), 0.25);
  EXPECT_EQ(q.center(0), (Point{0.25, 0.25}));
  EXPECT_EQ(q.center(7), (Point{1.75, 0.75}));
  EXPECT_THROW(QuadratureGrid(Domain(), 1, 4), std::invalid_argument);
}

TEST(DensityField, UniformRasterIsOneAfterNormalize) {
  const QuadratureGrid q(Domain(), 16);
  const auto f = normalize(uniform_raster(7.0), q);
  EXPECT_DOUBLE_EQ(f.normalizer(), 7.0);
  for (double x : {0.0, 0.3, 0.999, 1.0}) EXPECT_DOUBLE_EQ(f.density_at({x, 0.5}), 1.0);
}

TEST(DensityField, OutsideDomainIsAnError) {
  const auto f = uniform_raster();
  EXPECT_THROW(f.density_at({1.1, 0.5}), std::domain_error);
  EXPECT_THROW(f.density_at({0.5, -0.01}), std::domain_error);
}

TEST(DensityField, GaussianModeAtMean) {
  const Point m{0.4, 0.7};
  const auto f = normalize(wide_gaussian(m), QuadratureGrid(Domain(), 64));
  SplitMix64 rng(1);
  for (int k = 0; k < 500; ++k) {
    EXPECT_LE(f.density_at({rng.uniform(), rng.uniform()}), f.density_at(m));
  }
}

TEST(DensityField, EqualMixtureIsSymmetric) {
  const Point a{0.2, 0.3}, b{0.8, 0.6};
  const auto f = DensityField::gaussian_mixture({{a, {0.05, 0.01, 0.01, 0.03}, 1.0}, {b, {0.05, 0.01, 0.01, 0.03}, 1.0}});
  EXPECT_DOUBLE_EQ(f.density_at(a), f.density_at(b));
}

TEST(DensityField, RejectsBadComponents) {
  EXPECT_THROW(DensityField::gaussian_mixture({}), std::invalid_argument);
  EXPECT_THROW(DensityField::gaussian_mixture({{{0.5, 0.5}, {1, 2, 2, 1}, 1.0}}), std::invalid_argument);
  EXPECT_THROW(DensityField::gaussian_mixture({{{0.5, 0.5}, {1, 0, 0, 1}, 0.0}}), std::invalid_argument);
  EXPECT_THROW(DensityField::raster(2, 1, {1.0, -1.0}), std::invalid_argument);
}

TEST(Normalize, Idempotent) {
  const QuadratureGrid q(Domain(), 128);
  const auto once = normalize(wide_gaussian({0.3, 0.6}), q);
  const auto twice = normalize(once, q);
  EXPECT_NEAR(twice.normalizer() / once.normalizer(), 1.0, 1e-9);
  EXPECT_NEAR(quadrature(twice, q), 1.0, 1e-9);
}

TEST(Normalize, AllZeroIsDegenerate) {
  EXPECT_THROW(normalize(DensityField::raster(2, 2, {0, 0, 0, 0}), QuadratureGrid(Domain(), 8)),
               DegenerateTarget);
}

// The truncated Gaussian integral factorizes into erf differences.
double truncated_gaussian_mass(Point m, double var) {
  const double s = std::sqrt(2.0 * var);
  auto axis = [&](double mu) { return 0.5 * (std::erf((1.0 - mu) / s) - std::erf((0.0 - mu) / s)); };
  return axis(m.x) * axis(m.y);
}

TEST(Normalize, TruncatedGaussianUnitMassAndRefinement) {
  const Point m{0.3, 0.6};
  const QuadratureGrid coarse(Domain(), 256), fine(Domain(), 512);
  const auto f = normalize(wide_gaussian(m), coarse);
  EXPECT_NEAR(quadrature(f, coarse), 1.0, 1e-9);
  // Refining the rule changes the normalizer only at the midpoint-error level.
  const auto g = normalize(wide_gaussian(m), fine);
  EXPECT_NEAR(f.normalizer() / g.normalizer(), 1.0, 1e-5);
  EXPECT_NEAR(f.normalizer(), truncated_gaussian_mass(m, 2.0), 1e-5);
}

TEST(CellMass, SingleAgentOwnsEverything) {
  const QuadratureGrid q(Domain(), 32);
  const auto f = normalize(wide_gaussian({0.5, 0.5}), q);
  const auto p = build_partition({{0.9, 0.1}}, MetricCost(), Domain(), q);
  EXPECT_NEAR(cell_mass(f, q, p, 0), 1.0, 1e-12);
}

TEST(CellMass, BisectorSplit) {
  const QuadratureGrid q(Domain(), 20);
  const auto f = normalize(uniform_raster(), q);
  const auto even = build_partition({{0.25, 0.5}, {0.75, 0.5}}, MetricCost(), Domain(), q);
  EXPECT_NEAR(cell_mass(f, q, even, 0), 0.5, 1e-12);
  EXPECT_NEAR(cell_mass(f, q, even, 1), 0.5, 1e-12);
  // Bisector at x = 0.55 falls on a cell boundary at this resolution.
  const auto skew = build_partition({{0.25, 0.5}, {0.85, 0.5}}, MetricCost(), Domain(), q);
  EXPECT_NEAR(cell_mass(f, q, skew, 0), 0.55, 1e-12);
  EXPECT_NEAR(cell_mass(f, q, skew, 1), 0.45, 1e-12);
  EXPECT_THROW(cell_mass(f, q, skew, 2), std::domain_error);
}

TEST(CellMass, BisectorSplitAtDefaultResolution) {
  const QuadratureGrid q(Domain(), 256);
  const auto f = normalize(uniform_raster(), q);
  const auto p = build_partition({{0.25, 0.5}, {0.85, 0.5}}, MetricCost(), Domain(), q);
  EXPECT_NEAR(cell_mass(f, q, p, 0), 0.55, 1.0 / 256);
}

TEST(CellMass, PartitionOfUnityAndRefinement) {
  SplitMix64 rng(42);
  std::vector<Point> sites(12);
  for (auto& s : sites) s = {rng.uniform(), rng.uniform()};
  const QuadratureGrid q(Domain(), 256), q2(Domain(), 512);
  const auto f = normalize(wide_gaussian({0.2, 0.8}), q);
  const auto f2 = normalize(wide_gaussian({0.2, 0.8}), q2);
  const auto m = cell_masses(discretize(f, q), build_partition(sites, MetricCost(), Domain(), q));
  const auto m2 = cell_masses(discretize(f2, q2), build_partition(sites, MetricCost(), Domain(), q2));
  EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-9);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_LT(std::abs(m[i] - m2[i]) / m2[i], 0.02) << "cell " << i;
    EXPECT_NEAR(m[i], cell_mass(f, q, build_partition(sites, MetricCost(), Domain(), q), i), 1e-15);
  }
}

TEST(Pgm, ConstantDarknessIsUniform) {
  const auto f = load_pgm("P2\n2 2\n255\n0 0\n0 0\n");
  const QuadratureGrid q(Domain(), 8);
  EXPECT_NEAR(quadrature(f, q), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(f.density_at({0.1, 0.9}), 1.0);
}

TEST(Pgm, TwoPixelImage) {
  // Left pixel white (no mass), right pixel black (all mass).
  const auto f = load_pgm("P2 2 1 255 255 0");
  EXPECT_DOUBLE_EQ(f.density_at({0.25, 0.5}), 0.0);
  EXPECT_DOUBLE_EQ(f.density_at({0.75, 0.5}), 2.0);
  const QuadratureGrid q(Domain(), 16);
  const auto p = build_partition({{0.25, 0.5}, {0.75, 0.5}}, MetricCost(), Domain(), q);
  EXPECT_NEAR(cell_mass(f, q, p, 0), 0.0, 1e-12);
  EXPECT_NEAR(cell_mass(f, q, p, 1), 1.0, 1e-12);
}

TEST(Pgm, TopRowMapsToLargeY) {
  const auto f = load_pgm("P2 1 2 10 0 10");  // top row dark, bottom row white
  EXPECT_DOUBLE_EQ(f.density_at({0.5, 0.9}), 2.0);
  EXPECT_DOUBLE_EQ(f.density_at({0.5, 0.1}), 0.0);
}

TEST(Pgm, AsciiAndBinaryAgree) {
  const std::string ascii = "P2\n# comment line\n3 2\n200\n0 50 100\n150 200 7\n";
  std::string binary = "P5\n3 2\n200\n";
  for (int v : {0, 50, 100, 150, 200, 7}) binary.push_back(static_cast<char>(v));
  const auto a = load_pgm(ascii), b = load_pgm(binary);
  SplitMix64 rng(9);
  for (int k = 0; k < 100; ++k) {
    const Point p{rng.uniform(), rng.uniform()};
    EXPECT_EQ(a.density_at(p), b.density_at(p));
  }
}

TEST(Pgm, SixteenBitBigEndian) {
  std::string bytes = "P5 2 1 1000\n";
  for (int v : {0, 1000}) {
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xff));
  }
  const auto img = parse_pgm(bytes);
  EXPECT_EQ(img.pixels, (std::vector<std::uint32_t>{0, 1000}));
}

std::size_t error_offset(const std::string& bytes) {
  try {
    parse_pgm(bytes);
  } catch (const PgmParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no parse error for: " << bytes;
  return 0;
}

TEST(Pgm, MalformedInputsReportOffsets) {
  EXPECT_EQ(error_offset("P6 1 1 255 0"), 0u);
  EXPECT_EQ(error_offset("P2 0 1 255"), 6u);
  EXPECT_EQ(error_offset("P2 1 1 0 0"), 7u);
  EXPECT_EQ(error_offset("P2 2 1 255 3"), 12u);
  EXPECT_EQ(error_offset("P5 2 2 255\n\x01\x02"), 13u);
  EXPECT_EQ(error_offset("P2 1 1 9 12"), 9u);
  EXPECT_EQ(error_offset("P2 x"), 3u);
  EXPECT_THROW(load_pgm("P2 1 1 9 9"), DegenerateTarget);
}

TEST(Pgm, LoadsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "swarm_ot_target_test.pgm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "P2 2 1 255 255 0";
  }
  EXPECT_DOUBLE_EQ(load_pgm_file(path.string()).density_at({0.75, 0.5}), 2.0);
  std::filesystem::remove(path);
  EXPECT_THROW(load_pgm_file(path.string()), std::runtime_error);
}

}  // namespace
}  // namespace swarm_ot
