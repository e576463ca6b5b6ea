#pragma once
// Truncated box [-L, L]^N sampled with M points per axis, complex grid fields and
// the basic reductions shared by every other module.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "magnls/dual.hpp"

namespace magnls {

using Complex = std::complex<double>;

// Compensated (Neumaier) summation; energies are compared across line-search
// trials at the 1e-14 level, so plain accumulation is not good enough.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

class GridSpec {
 public:
  static constexpr std::size_t kMaxNodes = std::size_t{1} << 28;

  GridSpec(int dimension, double half_width, int points)
      : dimension_(dimension), half_width_(half_width), points_(points) {
    if (dimension != 2 && dimension != 3) {
      throw std::invalid_argument("grid dimension must be 2 or 3, got " + std::to_string(dimension));
    }
    if (points < 3 || points % 2 == 0) {
      throw std::invalid_argument("points per axis must be odd and >= 3, got " + std::to_string(points));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
      throw std::invalid_argument("half-width must be positive and finite");
    }
    std::size_t n = 1;
    for (int d = 0; d < dimension; ++d) {
      if (n > kMaxNodes / static_cast<std::size_t>(points)) {
        throw std::invalid_argument("grid with " + std::to_string(points) + "^" + std::to_string(dimension) +
                                    " nodes exceeds the addressable node budget");
      }
      n *= static_cast<std::size_t>(points);
    }
    size_ = n;
    spacing_ = 2.0 * half_width / static_cast<double>(points - 1);
    std::size_t s = 1;
    for (int d = dimension - 1; d >= 0; --d) {
      stride_[d] = s;
      s *= static_cast<std::size_t>(points);
    }
  }

  int dimension() const { return dimension_; }
  double half_width() const { return half_width_; }
  int points() const { return points_; }
  double spacing() const { return spacing_; }
  std::size_t size() const { return size_; }
  double cell_volume() const { return std::pow(spacing_, dimension_); }
  std::size_t stride(int axis) const { return stride_[axis]; }
  int center_index() const { return (points_ - 1) / 2; }

  double coordinate(int i) const { return spacing_ * static_cast<double>(i - center_index()); }

  Vec<int> index_of(std::size_t linear) const {
    Vec<int> idx{0, 0, 0};
    for (int d = 0; d < dimension_; ++d) {
      idx[d] = static_cast<int>((linear / stride_[d]) % static_cast<std::size_t>(points_));
    }
    return idx;
  }
  std::size_t linear(const Vec<int>& idx) const {
    std::size_t k = 0;
    for (int d = 0; d < dimension_; ++d) k += static_cast<std::size_t>(idx[d]) * stride_[d];
    return k;
  }
  Vec<double> position(std::size_t linear) const {
    const Vec<int> idx = index_of(linear);
    Vec<double> x{0.0, 0.0, 0.0};
    for (int d = 0; d < dimension_; ++d) x[d] = coordinate(idx[d]);
    return x;
  }
  bool on_boundary(std::size_t linear) const {
    const Vec<int> idx = index_of(linear);
    for (int d = 0; d < dimension_; ++d) {
      if (idx[d] == 0 || idx[d] == points_ - 1) return true;
    }
    return false;
  }
  // Nearest node index along one axis (may fall outside [0, M)).
  long nearest_index(double x) const { return std::lround(x / spacing_) + center_index(); }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.dimension_ == b.dimension_ && a.points_ == b.points_ && a.half_width_ == b.half_width_;
  }

 private:
  int dimension_;
  double half_width_;
  int points_;
  double spacing_ = 0.0;
  std::size_t size_ = 0;
  std::array<std::size_t, kMaxDim> stride_{1, 1, 1};
};

// Calls f(first_node, neighbour_node) for every edge along `axis` with both
// endpoints in the box.
template <class F>
inline void for_each_edge(const GridSpec& g, int axis, F&& f) {
  const std::size_t s = g.stride(axis);
  const std::size_t m = static_cast<std::size_t>(g.points());
  const std::size_t block = m * s;
  const std::size_t outer = g.size() / block;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * block;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      const std::size_t row = base + i * s;
      for (std::size_t k = 0; k < s; ++k) f(row + k, row + k + s);
    }
  }
}

// Calls f(node) for every node on the last slab along `axis` (no forward neighbour).
template <class F>
inline void for_each_last_slab(const GridSpec& g, int axis, F&& f) {
  const std::size_t s = g.stride(axis);
  const std::size_t m = static_cast<std::size_t>(g.points());
  const std::size_t block = m * s;
  const std::size_t outer = g.size() / block;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t row = o * block + (m - 1) * s;
    for (std::size_t k = 0; k < s; ++k) f(row + k);
  }
}

class ComplexField {
 public:
  explicit ComplexField(const GridSpec& grid) : grid_(grid), values_(grid.size(), Complex(0.0, 0.0)) {}

  ComplexField(const GridSpec& grid, std::vector<Complex> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw std::invalid_argument("field has " + std::to_string(values_.size()) + " values, grid needs " +
                                  std::to_string(grid_.size()));
    }
    if (!all_finite()) throw std::invalid_argument("field contains non-finite values");
  }

  template <class F>
  static ComplexField sample(const GridSpec& grid, F&& f) {
    std::vector<Complex> v(grid.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = Complex(f(grid.position(k)));
    return ComplexField(grid, std::move(v));
  }

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const Complex> values() const { return values_; }
  std::span<Complex> values() { return values_; }
  const Complex& operator[](std::size_t k) const { return values_[k]; }
  Complex& operator[](std::size_t k) { return values_[k]; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
  }

  ComplexField& operator+=(const ComplexField& o) {
    check_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ComplexField& operator-=(const ComplexField& o) {
    check_same_grid(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ComplexField& operator*=(Complex c) {
    for (auto& z : values_) z *= c;
    return *this;
  }
  friend ComplexField operator+(ComplexField a, const ComplexField& b) { return a += b; }
  friend ComplexField operator-(ComplexField a, const ComplexField& b) { return a -= b; }
  friend ComplexField operator*(Complex c, ComplexField a) { return a *= c; }
  friend ComplexField operator*(ComplexField a, Complex c) { return a *= c; }

  friend bool operator==(const ComplexField& a, const ComplexField& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

 private:
  void check_same_grid(const ComplexField& o) const {
    if (!(o.grid_ == grid_)) throw std::invalid_argument("fields live on different grids");
  }

  GridSpec grid_;
  std::vector<Complex> values_;
};

inline void require_finite(const ComplexField& u) {
  if (!u.all_finite()) throw std::invalid_argument("field contains non-finite values");
}

// h^N * sum |u|^p
inline double lp_mass(const ComplexField& u, double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("L^p exponent must be finite and >= 1");
  require_finite(u);
  CompensatedSum s;
  if (p == 2.0) {
    for (const Complex& z : u.values()) s.add(std::norm(z));
  } else {
    for (const Complex& z : u.values()) s.add(std::pow(std::abs(z), p));
  }
  return s.value() * u.grid().cell_volume();
}

inline double lp_norm(const ComplexField& u, double p) { return std::pow(lp_mass(u, p), 1.0 / p); }

inline double l2_inner_real(const ComplexField& a, const ComplexField& b) {
  CompensatedSum s;
  for (std::size_t k = 0; k < a.size(); ++k) s.add((std::conj(a[k]) * b[k]).real());
  return s.value() * a.grid().cell_volume();
}

// h^N * sum over nodes with |x - center| <= radius of |u|^p.
inline double window_mass(const ComplexField& u, const Vec<double>& center, double radius, double p) {
  const GridSpec& g = u.grid();
  const int n = g.dimension();
  const double h = g.spacing();
  Vec<int> lo{0, 0, 0};
  Vec<int> hi{0, 0, 0};
  for (int d = 0; d < n; ++d) {
    lo[d] = static_cast<int>(std::max<long>(0, static_cast<long>(std::floor((center[d] - radius + g.half_width()) / h))));
    hi[d] = static_cast<int>(
        std::min<long>(g.points() - 1, static_cast<long>(std::ceil((center[d] + radius + g.half_width()) / h))));
    if (lo[d] > hi[d]) return 0.0;
  }
  const double r2 = radius * radius;
  CompensatedSum s;
  Vec<int> idx{0, 0, 0};
  const int k_lo = n == 3 ? lo[2] : 0;
  const int k_hi = n == 3 ? hi[2] : 0;
  for (idx[0] = lo[0]; idx[0] <= hi[0]; ++idx[0]) {
    for (idx[1] = lo[1]; idx[1] <= hi[1]; ++idx[1]) {
      for (int k = k_lo; k <= k_hi; ++k) {
        idx[2] = k;
        double d2 = 0.0;
        for (int d = 0; d < n; ++d) {
          const double dx = g.coordinate(idx[d]) - center[d];
          d2 += dx * dx;
        }
        if (d2 > r2) continue;
        const double a = std::abs(u[g.linear(idx)]);
        s.add(p == 2.0 ? a * a : std::pow(a, p));
      }
    }
  }
  return s.value() * g.cell_volume();
}

using NodeShift = Vec<long>;

// Converts a displacement to whole node offsets; rejects anything off the lattice hZ^N.
inline NodeShift to_node_shift(const GridSpec& g, const Vec<double>& y) {
  NodeShift s{0, 0, 0};
  for (int d = 0; d < g.dimension(); ++d) {
    const double q = y[d] / g.spacing();
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-9 * std::max(1.0, std::abs(q))) {
      throw std::invalid_argument("shift component " + std::to_string(y[d]) + " is not a multiple of h = " +
                                  std::to_string(g.spacing()));
    }
    s[d] = static_cast<long>(r);
  }
  return s;
}

// v(x) = u(x - y) inside the box, zero where x - y leaves it.
inline ComplexField translate(const ComplexField& u, const NodeShift& shift) {
  const GridSpec& g = u.grid();
  ComplexField v(g);
  const long m = g.points();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<int> idx = g.index_of(k);
    Vec<int> src{0, 0, 0};
    bool inside = true;
    for (int d = 0; d < g.dimension(); ++d) {
      const long s = idx[d] - shift[d];
      if (s < 0 || s >= m) {
        inside = false;
        break;
      }
      src[d] = static_cast<int>(s);
    }
    if (inside) v[k] = u[g.linear(src)];
  }
  return v;
}

inline ComplexField translate(const ComplexField& u, const Vec<double>& y) {
  return translate(u, to_node_shift(u.grid(), y));
}

// Lattice Xi = s Z^N with covering radius rho.
class DiscretizationSpec {
 public:
  DiscretizationSpec(int dimension, double step, double covering_radius)
      : dimension_(dimension), step_(step), radius_(covering_radius) {
    if (dimension != 2 && dimension != 3) throw std::invalid_argument("lattice dimension must be 2 or 3");
    if (!(step > 0.0)) throw std::invalid_argument("lattice step must be positive");
    if (covering_radius < minimal_radius(dimension, step) * (1.0 - 1e-12)) {
      throw std::invalid_argument("balls of radius " + std::to_string(covering_radius) +
                                  " do not cover R^N for lattice step " + std::to_string(step));
    }
  }
  static DiscretizationSpec integer_lattice(int dimension, double step) {
    return DiscretizationSpec(dimension, step, minimal_radius(dimension, step));
  }
  static double minimal_radius(int dimension, double step) { return 0.5 * step * std::sqrt(double(dimension)); }

  int dimension() const { return dimension_; }
  double step() const { return step_; }
  double covering_radius() const { return radius_; }

  Vec<double> point(const Vec<long>& k) const {
    Vec<double> x{0.0, 0.0, 0.0};
    for (int d = 0; d < dimension_; ++d) x[d] = step_ * static_cast<double>(k[d]);
    return x;
  }
  Vec<double> nearest(const Vec<double>& x) const {
    Vec<long> k{0, 0, 0};
    for (int d = 0; d < dimension_; ++d) k[d] = std::lround(x[d] / step_);
    return point(k);
  }
  bool compatible_with(const GridSpec& g) const {
    const double q = step_ / g.spacing();
    return std::abs(q - std::round(q)) < 1e-9 * q && std::round(q) >= 1.0;
  }

  // Lattice points whose covering ball meets the box.
  std::vector<Vec<double>> points_covering(const GridSpec& g) const {
    const long kmax = static_cast<long>(std::floor((g.half_width() + radius_) / step_));
    std::vector<Vec<double>> pts;
    Vec<long> k{0, 0, 0};
    const long k2max = dimension_ == 3 ? kmax : 0;
    for (k[0] = -kmax; k[0] <= kmax; ++k[0]) {
      for (k[1] = -kmax; k[1] <= kmax; ++k[1]) {
        for (k[2] = -k2max; k[2] <= k2max; ++k[2]) pts.push_back(point(k));
      }
    }
    return pts;
  }

  // Largest number of covering balls containing a single grid node.
  int multiplicity(const GridSpec& g) const {
    int worst = 0;
    const long reach = static_cast<long>(std::ceil(radius_ / step_)) + 1;
    for (std::size_t n = 0; n < g.size(); ++n) {
      const Vec<double> x = g.position(n);
      Vec<long> base{0, 0, 0};
      for (int d = 0; d < dimension_; ++d) base[d] = std::lround(x[d] / step_);
      int count = 0;
      Vec<long> o{0, 0, 0};
      const long r2 = dimension_ == 3 ? reach : 0;
      for (o[0] = -reach; o[0] <= reach; ++o[0]) {
        for (o[1] = -reach; o[1] <= reach; ++o[1]) {
          for (o[2] = -r2; o[2] <= r2; ++o[2]) {
            double d2 = 0.0;
            for (int d = 0; d < dimension_; ++d) {
              const double dx = x[d] - step_ * static_cast<double>(base[d] + o[d]);
              d2 += dx * dx;
            }
            if (d2 <= radius_ * radius_) ++count;
          }
        }
      }
      worst = std::max(worst, count);
    }
    return worst;
  }

 private:
  int dimension_;
  double step_;
  double radius_;
};

}  // namespace magnls
