#pragma once
// Magnetic potentials A (closed-form covector fields) and electric potentials V.
//
// Every magnetic family evaluates through one templated entry point, so the same
// code gives A(x), its Jacobian (Dual) and second derivatives (Dual<Dual>).

#include <array>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "magnls/dual.hpp"
#include "magnls/expression.hpp"
#include "magnls/quadrature.hpp"

namespace magnls {

using Matrix3 = std::array<std::array<double, kMaxDim>, kMaxDim>;

class GaugeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nesting limit for derivative evaluation through gauge-corrected potentials.
inline constexpr int kMaxDualDepth = 3;

class MagneticPotential;

struct ZeroPotential {};

// A_m(x) = -1/2 sum_n F_mn x_n, so that dA has components F_mn = d_m A_n - d_n A_m.
struct ConstantFieldPotential {
  Matrix3 field{};
};

enum class AharonovBohmForm {
  Printed,     // lambda (x1, -x2, 0, ...) / (x1^2 + x2^2)
  Rotational,  // lambda (-x2, x1, 0, ...) / (x1^2 + x2^2)
};

struct AharonovBohmPotential {
  double lambda = 0.0;
  AharonovBohmForm form = AharonovBohmForm::Printed;
};

struct CustomPotential {
  std::vector<Expression> components;
};

// base + chi(|x - c|^2 / R^2) * delta(x) with chi(s) = (1 - s)^3 on s < 1, 0 beyond.
struct PerturbedPotential {
  std::shared_ptr<const MagneticPotential> base;
  std::vector<Expression> delta;
  Vec<double> center{0.0, 0.0, 0.0};
  double radius = 1.0;
};

// base + grad psi
struct GaugeShiftedPotential {
  std::shared_ptr<const MagneticPotential> base;
  Expression psi;
};

// x -> A_y(x + offset) with A_y = A + grad phi_y and
// phi_y(x) = -int_0^1 A(y + t (x - y)) . (x - y) dt  (Gauss-Legendre on [0, 1]).
struct CorrectedPotential {
  std::shared_ptr<const MagneticPotential> base;
  Vec<double> center{0.0, 0.0, 0.0};
  Vec<double> offset{0.0, 0.0, 0.0};
  QuadratureRule rule;
};

// x -> 2^{-j} A(2^{-j} x + y)
struct RescaledPotential {
  std::shared_ptr<const MagneticPotential> base;
  int scale = 0;
  Vec<double> shift{0.0, 0.0, 0.0};
};

class MagneticPotential {
 public:
  using Node = std::variant<ZeroPotential, ConstantFieldPotential, AharonovBohmPotential, CustomPotential,
                            PerturbedPotential, GaugeShiftedPotential, CorrectedPotential, RescaledPotential>;

  MagneticPotential(int dimension, Node node)
      : dimension_(dimension), node_(std::make_shared<const Node>(std::move(node))) {
    if (dimension != 2 && dimension != 3) throw std::invalid_argument("potential dimension must be 2 or 3");
  }

  static MagneticPotential zero(int dimension) { return {dimension, ZeroPotential{}}; }

  static MagneticPotential constant_field(int dimension, const Matrix3& field) {
    for (int m = 0; m < kMaxDim; ++m) {
      for (int n = 0; n < kMaxDim; ++n) {
        if (field[m][n] != -field[n][m]) throw std::invalid_argument("constant field matrix must be antisymmetric");
        if ((m >= dimension || n >= dimension) && field[m][n] != 0.0) {
          throw std::invalid_argument("constant field has components outside the dimension");
        }
      }
    }
    return {dimension, ConstantFieldPotential{field}};
  }

  // Planar field of strength b: A = b/2 (-x2, x1, 0).
  static MagneticPotential constant_field_planar(int dimension, double b) {
    Matrix3 f{};
    f[0][1] = b;
    f[1][0] = -b;
    return constant_field(dimension, f);
  }

  static MagneticPotential aharonov_bohm(int dimension, double lambda,
                                         AharonovBohmForm form = AharonovBohmForm::Printed) {
    return {dimension, AharonovBohmPotential{lambda, form}};
  }

  static MagneticPotential custom(int dimension, const std::vector<std::string>& components) {
    if (static_cast<int>(components.size()) != dimension) {
      throw std::invalid_argument("custom potential needs exactly " + std::to_string(dimension) + " components");
    }
    CustomPotential c;
    for (const auto& s : components) c.components.push_back(Expression::parse(s, dimension));
    return {dimension, std::move(c)};
  }

  static MagneticPotential perturbed(const MagneticPotential& base, const std::vector<std::string>& delta,
                                     const Vec<double>& center, double radius) {
    const int n = base.dimension();
    if (static_cast<int>(delta.size()) != n) {
      throw std::invalid_argument("perturbation needs exactly " + std::to_string(n) + " components");
    }
    if (!(radius > 0.0)) throw std::invalid_argument("perturbation radius must be positive");
    PerturbedPotential p;
    p.base = std::make_shared<const MagneticPotential>(base);
    for (const auto& s : delta) p.delta.push_back(Expression::parse(s, n));
    p.center = center;
    p.radius = radius;
    return {n, std::move(p)};
  }

  static MagneticPotential gauge_shifted(const MagneticPotential& base, const std::string& psi) {
    return {base.dimension(),
            GaugeShiftedPotential{std::make_shared<const MagneticPotential>(base),
                                  Expression::parse(psi, base.dimension())}};
  }

  int dimension() const { return dimension_; }
  const Node& node() const { return *node_; }

  // A(x); zero on the singular set of Aharonov-Bohm families.
  template <class T>
  Vec<T> eval(const Vec<T>& x) const;

  Vec<double> operator()(const Vec<double>& x) const { return eval<double>(x); }

  bool has_singular_set() const;
  bool is_singular_at(const Vec<double>& x) const;

  // True when x . A(x) == 0 identically, i.e. A is its own radial gauge at 0.
  bool radial_gauge_at_origin() const;

  std::string describe() const;

 private:
  int dimension_;
  std::shared_ptr<const Node> node_;
};

template <class T>
struct ValueJacobian {
  Vec<T> value{};
  // jacobian[m][n] = d_n A_m
  std::array<Vec<T>, kMaxDim> jacobian{};
};

template <class T>
inline ValueJacobian<T> eval_with_jacobian(const MagneticPotential& a, const Vec<T>& x) {
  if constexpr (dual_depth_v<T> >= kMaxDualDepth) {
    throw std::logic_error("derivative nesting exceeds the supported depth");
  } else {
    const Vec<Dual<T>> r = a.eval<Dual<T>>(seed(x));
    ValueJacobian<T> out;
    for (int m = 0; m < kMaxDim; ++m) {
      out.value[m] = r[m].v;
      for (int n = 0; n < kMaxDim; ++n) out.jacobian[m][n] = r[m].d[n];
    }
    return out;
  }
}

namespace detail {

template <class T>
inline Vec<T> zero_vec() {
  return Vec<T>{T(0.0), T(0.0), T(0.0)};
}

template <class T>
inline T cutoff(const T& s) {
  if (value_of(s) >= 1.0) return T(0.0);
  const T one_minus = T(1.0) - s;
  return one_minus * one_minus * one_minus;
}

}  // namespace detail

template <class T>
Vec<T> MagneticPotential::eval(const Vec<T>& x) const {
  const int n = dimension_;
  return std::visit(
      [&](const auto& node) -> Vec<T> {
        using N = std::decay_t<decltype(node)>;
        Vec<T> a = detail::zero_vec<T>();
        if constexpr (std::is_same_v<N, ZeroPotential>) {
          return a;
        } else if constexpr (std::is_same_v<N, ConstantFieldPotential>) {
          for (int m = 0; m < n; ++m) {
            for (int k = 0; k < n; ++k) {
              if (node.field[m][k] != 0.0) a[m] = a[m] - (0.5 * node.field[m][k]) * x[k];
            }
          }
          return a;
        } else if constexpr (std::is_same_v<N, AharonovBohmPotential>) {
          const T r2 = x[0] * x[0] + x[1] * x[1];
          if (value_of(r2) == 0.0) return a;
          if (node.form == AharonovBohmForm::Printed) {
            a[0] = node.lambda * x[0] / r2;
            a[1] = -node.lambda * x[1] / r2;
          } else {
            a[0] = -node.lambda * x[1] / r2;
            a[1] = node.lambda * x[0] / r2;
          }
          return a;
        } else if constexpr (std::is_same_v<N, CustomPotential>) {
          for (int m = 0; m < n; ++m) a[m] = node.components[m].template eval<T>(x);
          return a;
        } else if constexpr (std::is_same_v<N, PerturbedPotential>) {
          a = node.base->template eval<T>(x);
          T s(0.0);
          for (int m = 0; m < n; ++m) {
            const T d = x[m] - node.center[m];
            s = s + d * d;
          }
          s = s / (node.radius * node.radius);
          const T chi = detail::cutoff(s);
          if (value_of(chi) == 0.0 && value_of(s) >= 1.0) return a;
          for (int m = 0; m < n; ++m) a[m] = a[m] + chi * node.delta[m].template eval<T>(x);
          return a;
        } else if constexpr (std::is_same_v<N, GaugeShiftedPotential>) {
          if constexpr (dual_depth_v<T> >= kMaxDualDepth) {
            throw std::logic_error("derivative nesting exceeds the supported depth");
          } else {
            a = node.base->template eval<T>(x);
            const Dual<T> psi = node.psi.template eval<Dual<T>>(seed(x));
            for (int m = 0; m < n; ++m) a[m] = a[m] + psi.d[m];
            return a;
          }
        } else if constexpr (std::is_same_v<N, CorrectedPotential>) {
          if constexpr (dual_depth_v<T> >= kMaxDualDepth) {
            throw std::logic_error("derivative nesting exceeds the supported depth");
          } else {
            Vec<T> p = detail::zero_vec<T>();
            Vec<T> z = detail::zero_vec<T>();
            for (int m = 0; m < n; ++m) {
              p[m] = x[m] + node.offset[m];
              z[m] = p[m] - node.center[m];
            }
            // A(p) + grad phi(p), grad phi = -sum_i w_i [A(w_i) + t_i J(w_i)^T z]
            a = node.base->template eval<T>(p);
            for (std::size_t i = 0; i < node.rule.nodes.size(); ++i) {
              const double t = node.rule.nodes[i];
              const double w = node.rule.weights[i];
              Vec<T> pt = detail::zero_vec<T>();
              for (int m = 0; m < n; ++m) pt[m] = node.center[m] + t * z[m];
              const ValueJacobian<T> vj = eval_with_jacobian(*node.base, pt);
              for (int m = 0; m < n; ++m) {
                T jt(0.0);
                for (int k = 0; k < n; ++k) jt = jt + vj.jacobian[k][m] * z[k];
                a[m] = a[m] - w * (vj.value[m] + t * jt);
              }
            }
            return a;
          }
        } else if constexpr (std::is_same_v<N, RescaledPotential>) {
          const double f = std::ldexp(1.0, -node.scale);
          Vec<T> p = detail::zero_vec<T>();
          for (int m = 0; m < n; ++m) p[m] = f * x[m] + node.shift[m];
          Vec<T> b = node.base->template eval<T>(p);
          for (int m = 0; m < n; ++m) a[m] = f * b[m];
          return a;
        }
      },
      *node_);
}

inline bool MagneticPotential::has_singular_set() const {
  return std::visit(
      [](const auto& node) -> bool {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, AharonovBohmPotential>) {
          return true;
        } else if constexpr (std::is_same_v<N, ZeroPotential> || std::is_same_v<N, ConstantFieldPotential> ||
                             std::is_same_v<N, CustomPotential>) {
          return false;
        } else {
          return node.base->has_singular_set();
        }
      },
      *node_);
}

inline bool MagneticPotential::is_singular_at(const Vec<double>& x) const {
  return std::visit(
      [&](const auto& node) -> bool {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, AharonovBohmPotential>) {
          return x[0] == 0.0 && x[1] == 0.0;
        } else if constexpr (std::is_same_v<N, ZeroPotential> || std::is_same_v<N, ConstantFieldPotential> ||
                             std::is_same_v<N, CustomPotential>) {
          return false;
        } else if constexpr (std::is_same_v<N, RescaledPotential>) {
          const double f = std::ldexp(1.0, -node.scale);
          Vec<double> p{0.0, 0.0, 0.0};
          for (int m = 0; m < kMaxDim; ++m) p[m] = f * x[m] + node.shift[m];
          return node.base->is_singular_at(p);
        } else if constexpr (std::is_same_v<N, CorrectedPotential>) {
          // Any segment from the centre may cross the singular set; the gauge
          // module refuses to build these for singular bases.
          return node.base->has_singular_set();
        } else {
          return node.base->is_singular_at(x);
        }
      },
      *node_);
}

inline bool MagneticPotential::radial_gauge_at_origin() const {
  return std::visit(
      [](const auto& node) -> bool {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, ZeroPotential> || std::is_same_v<N, ConstantFieldPotential>) {
          return true;
        } else if constexpr (std::is_same_v<N, CorrectedPotential>) {
          return node.center == Vec<double>{0.0, 0.0, 0.0} && node.offset == Vec<double>{0.0, 0.0, 0.0};
        } else if constexpr (std::is_same_v<N, AharonovBohmPotential>) {
          return node.form == AharonovBohmForm::Rotational;
        } else {
          return false;
        }
      },
      *node_);
}

inline std::string MagneticPotential::describe() const {
  return std::visit(
      [&](const auto& node) -> std::string {
        using N = std::decay_t<decltype(node)>;
        std::ostringstream os;
        if constexpr (std::is_same_v<N, ZeroPotential>) {
          os << "zero";
        } else if constexpr (std::is_same_v<N, ConstantFieldPotential>) {
          os << "constant_field";
        } else if constexpr (std::is_same_v<N, AharonovBohmPotential>) {
          os << "aharonov_bohm(" << node.lambda << (node.form == AharonovBohmForm::Printed ? ",printed)" : ",rotational)");
        } else if constexpr (std::is_same_v<N, CustomPotential>) {
          os << "custom";
        } else if constexpr (std::is_same_v<N, PerturbedPotential>) {
          os << "perturbed(" << node.base->describe() << ")";
        } else if constexpr (std::is_same_v<N, GaugeShiftedPotential>) {
          os << "gauge_shifted(" << node.base->describe() << ")";
        } else if constexpr (std::is_same_v<N, CorrectedPotential>) {
          os << "corrected(" << node.base->describe() << ")";
        } else {
          os << "rescaled(" << node.base->describe() << "," << node.scale << ")";
        }
        return os.str();
      },
      *node_);
}

// ---------------------------------------------------------------------------
// Electric potentials

struct ConstantElectric {
  double value = 0.0;
};

// base - depth * exp(-|x - c|^2 / width^2); negative depth gives a bump.
struct WellElectric {
  double base = 1.0;
  double depth = 0.5;
  double width = 1.0;
  Vec<double> center{0.0, 0.0, 0.0};
};

// -mu / sum_{a in axes} x_a^2, zero weight on the singular set.
struct HardyElectric {
  double mu = 0.0;
  std::vector<int> axes{0};
};

struct CustomElectric {
  Expression expression;
};

class ElectricPotential;

// x -> V(x - y)
struct TranslatedElectric {
  std::shared_ptr<const ElectricPotential> base;
  Vec<double> shift{0.0, 0.0, 0.0};
};

// x -> 2^{-2j} V(2^{-j} x + y)
struct RescaledElectric {
  std::shared_ptr<const ElectricPotential> base;
  int scale = 0;
  Vec<double> shift{0.0, 0.0, 0.0};
};

class ElectricPotential {
 public:
  using Node = std::variant<ConstantElectric, WellElectric, HardyElectric, CustomElectric, TranslatedElectric,
                            RescaledElectric>;

  ElectricPotential(int dimension, Node node)
      : dimension_(dimension), node_(std::make_shared<const Node>(std::move(node))) {
    if (dimension != 2 && dimension != 3) throw std::invalid_argument("potential dimension must be 2 or 3");
    if (auto* h = std::get_if<HardyElectric>(node_.get())) {
      if (h->axes.empty()) throw std::invalid_argument("Hardy potential needs at least one axis");
      for (int a : h->axes) {
        if (a < 0 || a >= dimension) throw std::invalid_argument("Hardy axis outside the dimension");
      }
    }
  }

  static ElectricPotential constant(int dimension, double c) { return {dimension, ConstantElectric{c}}; }
  static ElectricPotential well(int dimension, double base, double depth, double width,
                                const Vec<double>& center = {0.0, 0.0, 0.0}) {
    if (!(width > 0.0)) throw std::invalid_argument("well width must be positive");
    return {dimension, WellElectric{base, depth, width, center}};
  }
  static ElectricPotential hardy(int dimension, double mu, std::vector<int> axes = {0}) {
    return {dimension, HardyElectric{mu, std::move(axes)}};
  }
  static ElectricPotential custom(int dimension, const std::string& text) {
    return {dimension, CustomElectric{Expression::parse(text, dimension)}};
  }
  static ElectricPotential translated(const ElectricPotential& base, const Vec<double>& y) {
    return {base.dimension(), TranslatedElectric{std::make_shared<const ElectricPotential>(base), y}};
  }

  int dimension() const { return dimension_; }
  const Node& node() const { return *node_; }

  double operator()(const Vec<double>& x) const {
    return std::visit(
        [&](const auto& node) -> double {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, ConstantElectric>) {
            return node.value;
          } else if constexpr (std::is_same_v<N, WellElectric>) {
            double r2 = 0.0;
            for (int m = 0; m < dimension_; ++m) r2 += (x[m] - node.center[m]) * (x[m] - node.center[m]);
            return node.base - node.depth * std::exp(-r2 / (node.width * node.width));
          } else if constexpr (std::is_same_v<N, HardyElectric>) {
            double s = 0.0;
            for (int a : node.axes) s += x[a] * x[a];
            if (s == 0.0) return 0.0;
            return -node.mu / s;
          } else if constexpr (std::is_same_v<N, CustomElectric>) {
            return node.expression.template eval<double>(x);
          } else if constexpr (std::is_same_v<N, TranslatedElectric>) {
            Vec<double> p{0.0, 0.0, 0.0};
            for (int m = 0; m < dimension_; ++m) p[m] = x[m] - node.shift[m];
            return (*node.base)(p);
          } else {
            const double f = std::ldexp(1.0, -node.scale);
            Vec<double> p{0.0, 0.0, 0.0};
            for (int m = 0; m < dimension_; ++m) p[m] = f * x[m] + node.shift[m];
            return f * f * (*node.base)(p);
          }
        },
        *node_);
  }

  bool is_singular_at(const Vec<double>& x) const {
    return std::visit(
        [&](const auto& node) -> bool {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, HardyElectric>) {
            double s = 0.0;
            for (int a : node.axes) s += x[a] * x[a];
            return s == 0.0;
          } else if constexpr (std::is_same_v<N, TranslatedElectric>) {
            Vec<double> p{0.0, 0.0, 0.0};
            for (int m = 0; m < dimension_; ++m) p[m] = x[m] - node.shift[m];
            return node.base->is_singular_at(p);
          } else if constexpr (std::is_same_v<N, RescaledElectric>) {
            const double f = std::ldexp(1.0, -node.scale);
            Vec<double> p{0.0, 0.0, 0.0};
            for (int m = 0; m < dimension_; ++m) p[m] = f * x[m] + node.shift[m];
            return node.base->is_singular_at(p);
          } else {
            return false;
          }
        },
        *node_);
  }

  bool has_singular_set() const {
    return std::visit(
        [](const auto& node) -> bool {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, HardyElectric>) {
            return true;
          } else if constexpr (std::is_same_v<N, TranslatedElectric> || std::is_same_v<N, RescaledElectric>) {
            return node.base->has_singular_set();
          } else {
            return false;
          }
        },
        *node_);
  }

 private:
  int dimension_;
  std::shared_ptr<const Node> node_;
};

}  // namespace magnls
