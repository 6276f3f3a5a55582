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

#ifndef SWARM_OT_RNG_HPP
#define SWARM_OT_RNG_HPP

#include <cstdint>

namespace swarm_ot {

/// SplitMix64 (Steele, Lea, Flood 2014). The full algorithm is the three
/// lines in next(); it is fixed so trajectories are reproducible across
/// platforms and reimplementations.
///
/// Independent streams are derived with split(id): the child state is the
/// mixed value of (state ^ id * golden gamma). Callers use one named stream
/// per purpose so adding draws in one place never shifts another.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += kGamma);
    return mix(z);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; never returns zero.
  double uniform_open0() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  SplitMix64 split(std::uint64_t stream_id) const {
    return SplitMix64(mix(state_ ^ (stream_id * kGamma + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t state() const { return state_; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t state_;
};

/// Stream ids used by the simulation code.
namespace streams {
inline constexpr std::uint64_t kInitialPositions = 1;
inline constexpr std::uint64_t kTargetMeans = 2;
inline constexpr std::uint64_t kDuplicateJitter = 3;
inline constexpr std::uint64_t kGridInit = 4;
inline constexpr std::uint64_t kOracleInstances = 5;
}  // namespace streams

}  // namespace swarm_ot

#endif  // SWARM_OT_RNG_HPP
