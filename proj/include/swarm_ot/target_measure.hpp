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

#ifndef SWARM_OT_TARGET_MEASURE_HPP
#define SWARM_OT_TARGET_MEASURE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "swarm_ot/geometry.hpp"

namespace swarm_ot {

/// Midpoint-rule quadrature on a regular nx-by-ny grid of cells covering the
/// domain. Cell (ix, iy) has flat index iy * nx + ix; iy grows with y.
class QuadratureGrid {
 public:
  QuadratureGrid(Domain domain, std::size_t nx, std::size_t ny)
      : domain_(domain), nx_(nx), ny_(ny) {
    if (nx < 2 || ny < 2) {
      throw std::invalid_argument("QuadratureGrid: resolution must be at least 2x2");
    }
  }
  QuadratureGrid(Domain domain, std::size_t n) : QuadratureGrid(domain, n, n) {}

  const Domain& domain() const { return domain_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  double dx() const { return domain_.width() / static_cast<double>(nx_); }
  double dy() const { return domain_.height() / static_cast<double>(ny_); }
  double cell_area() const { return domain_.area() / static_cast<double>(nx_ * ny_); }

  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }

  Point center(std::size_t ix, std::size_t iy) const {
    return {domain_.lo().x + (static_cast<double>(ix) + 0.5) * dx(),
            domain_.lo().y + (static_cast<double>(iy) + 0.5) * dy()};
  }
  Point center(std::size_t flat) const { return center(flat % nx_, flat / nx_); }

 private:
  Domain domain_;
  std::size_t nx_;
  std::size_t ny_;
};

struct GaussianComponent {
  Point mean;
  /// Row-major 2x2 covariance [a b; b d], symmetric positive definite.
  std::array<double, 4> covariance{1.0, 0.0, 0.0, 1.0};
  double weight = 1.0;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;
};

/// Piecewise-constant image. Row 0 is the top row (largest y).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
};

/// Target density rho*. Stores an unnormalized representation plus the
/// normalizer that makes it integrate to one over the domain.
class DensityField {
 public:
  static DensityField gaussian_mixture(std::vector<GaussianComponent> components,
                                       Domain domain = {}) {
    if (components.empty()) {
      throw std::invalid_argument("gaussian mixture needs at least one component");
    }
    for (const auto& c : components) {
      const auto& s = c.covariance;
      const double det = s[0] * s[3] - s[1] * s[2];
      if (!(s[0] > 0.0) || !(det > 0.0) || std::abs(s[1] - s[2]) > 1e-12 * (1.0 + std::abs(s[1]))) {
        throw std::invalid_argument("gaussian component covariance must be symmetric positive definite");
      }
      if (!(c.weight > 0.0)) {
        throw std::invalid_argument("gaussian component weight must be positive");
      }
    }
    return DensityField(GaussianMixture{std::move(components)}, domain, 1.0);
  }

  static DensityField raster(std::size_t width, std::size_t height, std::vector<double> values,
                             Domain domain = {}) {
    if (width == 0 || height == 0) throw std::invalid_argument("raster has zero dimensions");
    if (values.size() != width * height) {
      throw std::invalid_argument("raster value count does not match dimensions");
    }
    for (double v : values) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("raster values must be finite and nonnegative");
      }
    }
    return DensityField(Raster{width, height, std::move(values)}, domain, 1.0);
  }

  const Domain& domain() const { return domain_; }
  double normalizer() const { return normalizer_; }
  bool is_raster() const { return std::holds_alternative<Raster>(kind_); }
  const std::variant<GaussianMixture, Raster>& kind() const { return kind_; }

  DensityField with_normalizer(double normalizer) const {
    if (!(normalizer > 0.0) || !std::isfinite(normalizer)) {
      throw std::invalid_argument("normalizer must be positive and finite");
    }
    DensityField out = *this;
    out.normalizer_ = normalizer;
    return out;
  }

  /// Unnormalized value; no domain check.
  double raw_at(const Point& p) const {
    if (const auto* mix = std::get_if<GaussianMixture>(&kind_)) {
      double sum = 0.0;
      for (const auto& c : mix->components) {
        const auto& s = c.covariance;
        const double det = s[0] * s[3] - s[1] * s[2];
        const double dx = p.x - c.mean.x;
        const double dy = p.y - c.mean.y;
        // d^T S^{-1} d with S^{-1} = [d -b; -c a] / det
        const double q = (s[3] * dx * dx - (s[1] + s[2]) * dx * dy + s[0] * dy * dy) / det;
        sum += c.weight * std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
      }
      return sum;
    }
    const auto& r = std::get<Raster>(kind_);
    const auto col = bin(p.x - domain_.lo().x, domain_.width(), r.width);
    const auto row = bin(domain_.hi().y - p.y, domain_.height(), r.height);
    return r.values[row * r.width + col];
  }

  /// Normalized density; x must lie in the domain.
  double density_at(const Point& p) const {
    if (!domain_.contains(p, 1e-12)) {
      throw std::domain_error("density_at: point (" + std::to_string(p.x) + ", " +
                              std::to_string(p.y) + ") lies outside the domain");
    }
    return raw_at(p) / normalizer_;
  }

 private:
  DensityField(std::variant<GaussianMixture, Raster> kind, Domain domain, double normalizer)
      : kind_(std::move(kind)), domain_(domain), normalizer_(normalizer) {}

  // Nearest-cell lookup along one axis.
  static std::size_t bin(double offset, double extent, std::size_t cells) {
    const double f = std::floor(offset / extent * static_cast<double>(cells));
    if (!(f > 0.0)) return 0;
    return std::min(cells - 1, static_cast<std::size_t>(f));
  }

  std::variant<GaussianMixture, Raster> kind_;
  Domain domain_;
  double normalizer_ = 1.0;
};

class DegenerateTarget : public std::runtime_error {
 public:
  DegenerateTarget() : std::runtime_error("degenerate target: density integrates to zero") {}
};

/// Midpoint-rule integral of the normalized density.
inline double quadrature(const DensityField& f, const QuadratureGrid& q) {
  double sum = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) sum += f.density_at(q.center(k));
  return sum * q.cell_area();
}

/// Sets the normalizer so the midpoint quadrature over q equals one.
inline DensityField normalize(const DensityField& f, const QuadratureGrid& q) {
  double sum = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) sum += f.raw_at(q.center(k));
  const double integral = sum * q.cell_area();
  if (!(integral > 0.0) || !std::isfinite(integral)) throw DegenerateTarget();
  return f.with_normalizer(integral);
}

/// Per-cell target masses density(center) * area, indexed like q.
inline std::vector<double> discretize(const DensityField& f, const QuadratureGrid& q) {
  std::vector<double> mass(q.size());
  const double area = q.cell_area();
  for (std::size_t k = 0; k < q.size(); ++k) mass[k] = f.density_at(q.center(k)) * area;
  return mass;
}

// ---------------------------------------------------------------------------
// PGM ingestion

class PgmParseError : public std::runtime_error {
 public:
  PgmParseError(const std::string& what, std::size_t offset)
      : std::runtime_error("PGM parse error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 0;
  std::vector<std::uint32_t> pixels;  // row-major, top row first
};

namespace detail {

class PgmReader {
 public:
  explicit PgmReader(std::string_view bytes) : b_(bytes) {}

  PgmImage parse() {
    if (b_.size() < 2 || b_[0] != 'P' || (b_[1] != '2' && b_[1] != '5')) {
      throw PgmParseError("expected magic number P2 or P5", 0);
    }
    const bool binary = b_[1] == '5';
    pos_ = 2;
    PgmImage img;
    if (!at_space()) throw PgmParseError("expected whitespace after magic number", pos_);
    img.width = header_number("width");
    img.height = header_number("height");
    if (img.width == 0 || img.height == 0) {
      throw PgmParseError("zero image dimensions", pos_);
    }
    const std::size_t maxval_at = skip_space_and_comments();
    const std::uint64_t maxval = header_number("maxval");
    if (maxval == 0 || maxval > 65535) throw PgmParseError("maxval must be in 1..65535", maxval_at);
    img.maxval = static_cast<std::uint32_t>(maxval);

    const std::size_t count = img.width * img.height;
    img.pixels.resize(count);
    if (binary) {
      if (!at_space()) throw PgmParseError("expected single whitespace before raster", pos_);
      ++pos_;
      const std::size_t bytes_per = maxval < 256 ? 1 : 2;
      if (b_.size() - pos_ < count * bytes_per) {
        throw PgmParseError("truncated payload: need " + std::to_string(count * bytes_per) +
                                " bytes, have " + std::to_string(b_.size() - pos_),
                            b_.size());
      }
      for (std::size_t k = 0; k < count; ++k) {
        std::uint32_t v = static_cast<unsigned char>(b_[pos_]);
        if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(b_[pos_ + 1]);
        if (v > maxval) throw PgmParseError("pixel exceeds maxval", pos_);
        img.pixels[k] = v;
        pos_ += bytes_per;
      }
    } else {
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t at = skip_space_and_comments();
        if (at >= b_.size()) {
          throw PgmParseError("truncated payload: expected " + std::to_string(count) +
                                  " pixels, found " + std::to_string(k),
                              at);
        }
        const std::uint64_t v = number(at);
        if (v > maxval) throw PgmParseError("pixel exceeds maxval", at);
        img.pixels[k] = static_cast<std::uint32_t>(v);
      }
    }
    return img;
  }

 private:
  bool at_space() const {
    if (pos_ >= b_.size()) return false;
    const char c = b_[pos_];
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }

  std::size_t skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (at_space()) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    return pos_;
  }

  std::uint64_t header_number(const char* field) {
    const std::size_t at = skip_space_and_comments();
    if (at >= b_.size()) throw PgmParseError(std::string("missing ") + field, at);
    return number(at);
  }

  std::uint64_t number(std::size_t at) {
    std::uint64_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(b_[pos_] - '0');
      if (v > 0xffffffffULL) throw PgmParseError("number too large", at);
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw PgmParseError("expected decimal number", at);
    return v;
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline PgmImage parse_pgm(std::string_view bytes) { return detail::PgmReader(bytes).parse(); }

/// Reads a P2/P5 image as a target density: darker pixels carry more mass
/// (value maxval - pixel). The result is normalized by the exact integral of
/// the piecewise-constant image.
inline DensityField load_pgm(std::string_view bytes, Domain domain = {}) {
  const PgmImage img = parse_pgm(bytes);
  std::vector<double> darkness(img.pixels.size());
  double total = 0.0;
  for (std::size_t k = 0; k < img.pixels.size(); ++k) {
    darkness[k] = static_cast<double>(img.maxval - img.pixels[k]);
    total += darkness[k];
  }
  if (!(total > 0.0)) throw DegenerateTarget();
  const double pixel_area = domain.area() / static_cast<double>(img.width * img.height);
  return DensityField::raster(img.width, img.height, std::move(darkness), domain)
      .with_normalizer(total * pixel_area);
}

inline DensityField load_pgm_file(const std::string& path, Domain domain = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open PGM file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_pgm(bytes, domain);
}

}  // namespace swarm_ot

#endif  // SWARM_OT_TARGET_MEASURE_HPP
