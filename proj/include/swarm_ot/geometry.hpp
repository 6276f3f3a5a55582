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

#ifndef SWARM_OT_GEOMETRY_HPP
#define SWARM_OT_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace swarm_ot {

/// A point (or displacement) in the plane.
struct Point {
  double x = 0.0;
  double y = 0.0;

  constexpr Point& operator+=(const Point& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Point& operator-=(const Point& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend constexpr Point operator+(Point a, const Point& b) { return a += b; }
  friend constexpr Point operator-(Point a, const Point& b) { return a -= b; }
  friend constexpr Point operator*(double s, const Point& p) {
    return {s * p.x, s * p.y};
  }
  friend constexpr bool operator==(const Point&, const Point&) = default;
};

using Vec2 = Point;

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }

/// Axis-aligned rectangle [lo, hi]. Defaults to the unit square.
class Domain {
 public:
  Domain() = default;
  Domain(Point lo, Point hi) : lo_(lo), hi_(hi) {
    if (!(hi.x - lo.x > 0.0) || !(hi.y - lo.y > 0.0)) {
      throw std::invalid_argument("Domain: hi must exceed lo in both coordinates");
    }
  }

  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  double width() const { return hi_.x - lo_.x; }
  double height() const { return hi_.y - lo_.y; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }

  bool contains(const Point& p, double slack = 0.0) const {
    return p.x >= lo_.x - slack && p.x <= hi_.x + slack &&
           p.y >= lo_.y - slack && p.y <= hi_.y + slack;
  }

  Point clamp(const Point& p) const {
    return {std::clamp(p.x, lo_.x, hi_.x), std::clamp(p.y, lo_.y, hi_.y)};
  }

 private:
  Point lo_{0.0, 0.0};
  Point hi_{1.0, 1.0};
};

/// Ground cost c(x, y) = xi * |x - y|, a conformal rescaling of the Euclidean
/// metric by a positive constant.
class MetricCost {
 public:
  MetricCost() = default;
  explicit MetricCost(double xi) : xi_(xi) {
    if (!(xi > 0.0) || !std::isfinite(xi)) {
      throw std::invalid_argument("MetricCost: xi must be positive and finite");
    }
  }

  double xi() const { return xi_; }
  double operator()(const Point& a, const Point& b) const { return xi_ * norm(a - b); }

 private:
  double xi_ = 1.0;
};

inline double distance(const MetricCost& c, const Point& a, const Point& b) { return c(a, b); }

/// Point at parameter s along the geodesic from a to b. Geodesics of a
/// constant-factor metric are straight segments.
inline Point geodesic_point(const MetricCost& /*c*/, const Point& a, const Point& b, double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::domain_error("geodesic_point: s must lie in [0, 1], got " + std::to_string(s));
  }
  if (s == 0.0) return a;
  if (s == 1.0) return b;
  return (1.0 - s) * a + s * b;
}

/// Closed ball membership: c(center, z) <= eps.
inline bool ball_contains(const MetricCost& c, const Point& center, double eps, const Point& z) {
  if (!(eps >= 0.0)) {
    throw std::domain_error("ball_contains: eps must be nonnegative");
  }
  return c(center, z) <= eps;
}

}  // namespace swarm_ot

#endif  // SWARM_OT_GEOMETRY_HPP
