#pragma once
// Field strengths, Poincare-gauge rephasing and magnetic shifts.

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "magnls/grid.hpp"
#include "magnls/potential.hpp"
#include "magnls/quadrature.hpp"

namespace magnls {

inline constexpr int kDefaultQuadratureOrder = 16;

// B_mn = d_m A_n - d_n A_m at one point; empty on the singular set.
inline std::optional<Matrix3> curl(const MagneticPotential& a, const Vec<double>& x) {
  if (a.is_singular_at(x)) return std::nullopt;
  const ValueJacobian<double> vj = eval_with_jacobian(a, x);
  Matrix3 b{};
  const int n = a.dimension();
  for (int m = 0; m < n; ++m) {
    for (int k = m + 1; k < n; ++k) {
      b[m][k] = vj.jacobian[k][m] - vj.jacobian[m][k];
      b[k][m] = -b[m][k];
    }
  }
  for (int m = 0; m < kMaxDim; ++m) {
    for (int k = 0; k < kMaxDim; ++k) {
      if (!std::isfinite(b[m][k])) return std::nullopt;
    }
  }
  return b;
}

// Field strength sampled on every grid node; singular nodes are marked invalid.
struct FieldStrengthSample {
  GridSpec grid;
  std::vector<Matrix3> values;
  std::vector<char> valid;
};

inline FieldStrengthSample sample_curl(const MagneticPotential& a, const GridSpec& g) {
  if (a.dimension() != g.dimension()) throw std::invalid_argument("potential and grid dimensions differ");
  FieldStrengthSample s{g, std::vector<Matrix3>(g.size()), std::vector<char>(g.size(), 0)};
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (auto b = curl(a, g.position(k))) {
      s.values[k] = *b;
      s.valid[k] = 1;
    }
  }
  return s;
}

// sqrt(sum_{m<n} (max |B_mn|)^2) over the valid samples.
inline double b_sup_norm(const FieldStrengthSample& s) {
  const int n = s.grid.dimension();
  Matrix3 sup{};
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    if (!s.valid[k]) continue;
    for (int m = 0; m < n; ++m) {
      for (int j = m + 1; j < n; ++j) sup[m][j] = std::max(sup[m][j], std::abs(s.values[k][m][j]));
    }
  }
  double acc = 0.0;
  for (int m = 0; m < n; ++m) {
    for (int j = m + 1; j < n; ++j) acc += sup[m][j] * sup[m][j];
  }
  return std::sqrt(acc);
}

inline double b_sup_norm(const MagneticPotential& a, const GridSpec& box) { return b_sup_norm(sample_curl(a, box)); }

inline double b_sup_norm(const Matrix3& b, int dimension) {
  double acc = 0.0;
  for (int m = 0; m < dimension; ++m) {
    for (int j = m + 1; j < dimension; ++j) acc += b[m][j] * b[m][j];
  }
  return std::sqrt(acc);
}

// phi_y(x) = -int_0^1 A(y + t (x - y)) . (x - y) dt with Gauss-Legendre of order q.
class GaugePhase {
 public:
  GaugePhase(const MagneticPotential& a, const Vec<double>& center, int order)
      : a_(std::make_shared<const MagneticPotential>(a)),
        center_(center),
        rule_(gauss_legendre_unit(order)),
        check_rule_(gauss_legendre_unit(2 * order)) {
    if (a.has_singular_set()) {
      throw GaugeError("Poincare phase is unavailable for " + a.describe() +
                       ": segments from the centre may cross the singular set");
    }
    trivial_ = a.radial_gauge_at_origin() && center == Vec<double>{0.0, 0.0, 0.0};
  }

  const Vec<double>& center() const { return center_; }
  int order() const { return rule_.order(); }
  const QuadratureRule& rule() const { return rule_; }
  const MagneticPotential& potential() const { return *a_; }
  // True when the phase is identically zero (radial-gauge potential centred at 0).
  bool trivial() const { return trivial_; }

  double operator()(const Vec<double>& x) const {
    if (trivial_) return 0.0;
    return integrate(rule_, x);
  }

  // |Q_q - Q_2q| at x.
  double error_estimate(const Vec<double>& x) const {
    if (trivial_) return 0.0;
    return std::abs(integrate(rule_, x) - integrate(check_rule_, x));
  }

  // Phase sampled on every node; the grid cache is built once per call site.
  std::vector<double> sample(const GridSpec& g) const {
    std::vector<double> v(g.size(), 0.0);
    if (trivial_) return v;
    for (std::size_t k = 0; k < g.size(); ++k) v[k] = (*this)(g.position(k));
    return v;
  }

 private:
  double integrate(const QuadratureRule& rule, const Vec<double>& x) const {
    const int n = a_->dimension();
    Vec<double> z{0.0, 0.0, 0.0};
    for (int m = 0; m < n; ++m) z[m] = x[m] - center_[m];
    CompensatedSum s;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      Vec<double> p{0.0, 0.0, 0.0};
      for (int m = 0; m < n; ++m) p[m] = center_[m] + rule.nodes[i] * z[m];
      const Vec<double> av = a_->eval<double>(p);
      double dot = 0.0;
      for (int m = 0; m < n; ++m) dot += av[m] * z[m];
      s.add(rule.weights[i] * dot);
    }
    return -s.value();
  }

  std::shared_ptr<const MagneticPotential> a_;
  Vec<double> center_;
  QuadratureRule rule_;
  QuadratureRule check_rule_;
  bool trivial_ = false;
};

inline GaugePhase poincare_phase(const MagneticPotential& a, const Vec<double>& y,
                                 int order = kDefaultQuadratureOrder) {
  return GaugePhase(a, y, order);
}

// A_y = A + grad phi_y, with the gradient of the quadrature formula taken analytically.
// With `evaluate_at_offset` the result is x -> A_y(x + y).
inline MagneticPotential corrected_potential(const GaugePhase& phase, bool evaluate_at_offset = false) {
  const MagneticPotential& a = phase.potential();
  const Vec<double> zero{0.0, 0.0, 0.0};
  if (phase.trivial() && !evaluate_at_offset) return a;
  CorrectedPotential c{std::make_shared<const MagneticPotential>(a), phase.center(),
                       evaluate_at_offset ? phase.center() : zero, phase.rule()};
  return MagneticPotential(a.dimension(), std::move(c));
}

// Declared quadrature bound for A_y on the grid: 4 max |A_y^(q) - A_y^(2q)|.
inline double corrected_potential_error_bound(const GaugePhase& phase, const GridSpec& g) {
  if (phase.trivial()) return 0.0;
  const MagneticPotential fine = corrected_potential(GaugePhase(phase.potential(), phase.center(), 2 * phase.order()));
  const MagneticPotential coarse = corrected_potential(phase);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    const Vec<double> a = coarse(x);
    const Vec<double> b = fine(x);
    double d2 = 0.0;
    for (int m = 0; m < g.dimension(); ++m) d2 += (a[m] - b[m]) * (a[m] - b[m]);
    worst = std::max(worst, std::sqrt(d2));
  }
  return 4.0 * worst;
}

// Replaces A by its radial-gauge representative centred at 0, so that phi_0 == 0.
// Singular families are returned unchanged (no magnetic shifts are built for them).
inline MagneticPotential pregauge(const MagneticPotential& a, int order = kDefaultQuadratureOrder) {
  if (a.has_singular_set() || a.radial_gauge_at_origin()) return a;
  return corrected_potential(GaugePhase(a, {0.0, 0.0, 0.0}, order));
}

namespace detail {

inline void require_phase_center(const GridSpec& g, const Vec<double>& y, const GaugePhase& phase) {
  for (int m = 0; m < g.dimension(); ++m) {
    if (std::abs(phase.center()[m] - y[m]) > 1e-12 * std::max(1.0, std::abs(y[m]))) {
      throw GaugeError("gauge phase is centred elsewhere than the shift vector");
    }
  }
}

}  // namespace detail

// (g_y u)(x) = exp(i phi_y(x)) u(x - y); zero where x - y leaves the box.
inline ComplexField magnetic_shift(const ComplexField& u, const Vec<double>& y, const GaugePhase& phase) {
  const GridSpec& g = u.grid();
  detail::require_phase_center(g, y, phase);
  ComplexField v = translate(u, y);
  if (phase.trivial()) return v;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (v[k] == Complex(0.0, 0.0)) continue;
    v[k] *= std::polar(1.0, phase(g.position(k)));
  }
  return v;
}

// v -> exp(-i phi_y(x + y)) v(x + y)
inline ComplexField inverse_shift(const ComplexField& v, const Vec<double>& y, const GaugePhase& phase) {
  const GridSpec& g = v.grid();
  detail::require_phase_center(g, y, phase);
  const NodeShift s = to_node_shift(g, y);
  ComplexField u(g);
  const long m = g.points();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<int> idx = g.index_of(k);
    Vec<int> src{0, 0, 0};
    bool inside = true;
    for (int d = 0; d < g.dimension(); ++d) {
      const long j = idx[d] + s[d];
      if (j < 0 || j >= m) {
        inside = false;
        break;
      }
      src[d] = static_cast<int>(j);
    }
    if (!inside) continue;
    const std::size_t from = g.linear(src);
    if (v[from] == Complex(0.0, 0.0) || phase.trivial()) {
      u[k] = v[from];
    } else {
      u[k] = v[from] * std::conj(std::polar(1.0, phase(g.position(from))));
    }
  }
  return u;
}

}  // namespace magnls
