#pragma once
// Forward-mode dual numbers with three partials, nestable for higher derivatives.

#include <array>
#include <cmath>
#include <type_traits>

namespace magnls {

inline constexpr int kMaxDim = 3;

template <class T>
using Vec = std::array<T, kMaxDim>;

template <class S>
struct Dual {
  S v{};
  std::array<S, kMaxDim> d{};

  Dual() = default;
  Dual(double c) : v(c) {}  // NOLINT: implicit lift of constants is intended
  template <class U, std::enable_if_t<std::is_same_v<U, S> && !std::is_same_v<S, double>, int> = 0>
  Dual(const U& c) : v(c) {}  // NOLINT
};

template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class S>
struct dual_depth<Dual<S>> : std::integral_constant<int, 1 + dual_depth<S>::value> {};
template <class T>
inline constexpr int dual_depth_v = dual_depth<T>::value;

template <class T>
inline double value_of(const T& x) {
  if constexpr (std::is_same_v<T, double>) {
    return x;
  } else {
    return value_of(x.v);
  }
}

// Lifts each coordinate to a dual variable seeded along its own axis.
template <class S>
inline Vec<Dual<S>> seed(const Vec<S>& x) {
  Vec<Dual<S>> out{};
  for (int i = 0; i < kMaxDim; ++i) {
    out[i].v = x[i];
    for (int j = 0; j < kMaxDim; ++j) out[i].d[j] = S(i == j ? 1.0 : 0.0);
  }
  return out;
}

template <class S>
inline Dual<S> operator+(const Dual<S>& a, const Dual<S>& b) {
  Dual<S> r;
  r.v = a.v + b.v;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <class S>
inline Dual<S> operator-(const Dual<S>& a, const Dual<S>& b) {
  Dual<S> r;
  r.v = a.v - b.v;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <class S>
inline Dual<S> operator-(const Dual<S>& a) {
  Dual<S> r;
  r.v = -a.v;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = -a.d[i];
  return r;
}
template <class S>
inline Dual<S> operator*(const Dual<S>& a, const Dual<S>& b) {
  Dual<S> r;
  r.v = a.v * b.v;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <class S>
inline Dual<S> operator/(const Dual<S>& a, const Dual<S>& b) {
  Dual<S> r;
  r.v = a.v / b.v;
  const S inv2 = S(1.0) / (b.v * b.v);
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return r;
}

template <class S>
inline Dual<S> operator+(const Dual<S>& a, double c) { return a + Dual<S>(c); }
template <class S>
inline Dual<S> operator+(double c, const Dual<S>& a) { return Dual<S>(c) + a; }
template <class S>
inline Dual<S> operator-(const Dual<S>& a, double c) { return a - Dual<S>(c); }
template <class S>
inline Dual<S> operator-(double c, const Dual<S>& a) { return Dual<S>(c) - a; }
template <class S>
inline Dual<S> operator*(const Dual<S>& a, double c) {
  Dual<S> r;
  r.v = a.v * c;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = a.d[i] * c;
  return r;
}
template <class S>
inline Dual<S> operator*(double c, const Dual<S>& a) { return a * c; }
template <class S>
inline Dual<S> operator/(const Dual<S>& a, double c) { return a * (1.0 / c); }
template <class S>
inline Dual<S> operator/(double c, const Dual<S>& a) { return Dual<S>(c) / a; }

template <class S>
inline Dual<S>& operator+=(Dual<S>& a, const Dual<S>& b) { return a = a + b; }
template <class S>
inline Dual<S>& operator-=(Dual<S>& a, const Dual<S>& b) { return a = a - b; }
template <class S>
inline Dual<S>& operator*=(Dual<S>& a, const Dual<S>& b) { return a = a * b; }

// Chain rule helper: f(a) with f(a.v) = fv and f'(a.v) = fp.
template <class S>
inline Dual<S> chain(const Dual<S>& a, const S& fv, const S& fp) {
  Dual<S> r;
  r.v = fv;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = fp * a.d[i];
  return r;
}

template <class S>
inline Dual<S> exp(const Dual<S>& a) {
  using std::exp;
  const S e = exp(a.v);
  return chain(a, e, e);
}
template <class S>
inline Dual<S> sin(const Dual<S>& a) {
  using std::cos;
  using std::sin;
  return chain(a, sin(a.v), cos(a.v));
}
template <class S>
inline Dual<S> cos(const Dual<S>& a) {
  using std::cos;
  using std::sin;
  return chain(a, cos(a.v), -sin(a.v));
}
template <class S>
inline Dual<S> log(const Dual<S>& a) {
  using std::log;
  return chain(a, log(a.v), S(1.0) / a.v);
}
template <class S>
inline Dual<S> sqrt(const Dual<S>& a) {
  using std::sqrt;
  const S s = sqrt(a.v);
  return chain(a, s, S(0.5) / s);
}

// Real power with a constant exponent; exact for integer exponents at negative bases.
template <class S>
inline Dual<S> pow(const Dual<S>& a, double e) {
  using std::pow;
  if (e == 0.0) return Dual<S>(1.0);
  const S pv = pow(a.v, e);
  const S dp = e * pow(a.v, e - 1.0);
  return chain(a, pv, dp);
}

template <class T>
inline bool is_zero(const T& x);

template <class T>
inline bool is_constant(const T& x) {
  if constexpr (std::is_same_v<T, double>) {
    return true;
  } else {
    for (int i = 0; i < kMaxDim; ++i) {
      if (!is_zero(x.d[i])) return false;
    }
    return is_constant(x.v);
  }
}

template <class T>
inline bool is_zero(const T& x) {
  if constexpr (std::is_same_v<T, double>) {
    return x == 0.0;
  } else {
    if (!is_zero(x.v)) return false;
    for (int i = 0; i < kMaxDim; ++i) {
      if (!is_zero(x.d[i])) return false;
    }
    return true;
  }
}

template <class S>
inline Dual<S> pow(const Dual<S>& a, const Dual<S>& b) {
  // Constant exponent keeps negative bases legal.
  if (is_constant(b)) return pow(a, value_of(b));
  return exp(b * log(a));
}

inline double pow(double a, double b) { return std::pow(a, b); }

}  // namespace magnls
