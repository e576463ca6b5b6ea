#pragma once
// Imaginary-time oracle for A = 0, V = const on a 2D Dirichlet box.
//
// Backward-Euler normalized gradient flow for E(phi) = 1/2 <H phi, phi> - beta/p int |phi|^p
// on the L^2 sphere, with the chemical potential mu(beta) = <H phi, phi> - beta int |phi|^p
// driven to zero by a secant iteration on beta. At mu = 0 the flow limit solves
// H phi = beta |phi|^{p-2} phi, so its quotient <H phi, phi> / ||phi||_p^2 is the
// constrained infimum. Interior unknowns only; the 5-point Laplacian is written out here.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

struct ImaginaryTimeResult {
  double kappa = 0.0;
  double beta = 0.0;
  double mu = 0.0;
  int flow_steps = 0;
  int secant_iterations = 0;
};

class DirichletBox2D {
 public:
  DirichletBox2D(int points, double half_width, double v)
      : n_(points - 2), h_(2.0 * half_width / (points - 1)), v_(v) {}

  int side() const { return n_; }
  double spacing() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_; }

  void apply_h(const std::vector<double>& x, std::vector<double>& y) const {
    const double c = 1.0 / (h_ * h_);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n_ + j;
        double s = 4.0 * x[k];
        if (i > 0) s -= x[k - n_];
        if (i + 1 < n_) s -= x[k + n_];
        if (j > 0) s -= x[k - 1];
        if (j + 1 < n_) s -= x[k + 1];
        y[k] = c * s + v_ * x[k];
      }
    }
  }

  double dot(const std::vector<double>& a, const std::vector<double>& b) const {
    long double s = 0.0L;
    for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<long double>(a[k]) * b[k];
    return static_cast<double>(s) * h_ * h_;
  }

  double pmass(const std::vector<double>& a, double p) const {
    long double s = 0.0L;
    for (double x : a) s += std::pow(std::abs(x), p);
    return static_cast<double>(s) * h_ * h_;
  }

 private:
  int n_;
  double h_;
  double v_;
};

// Conjugate gradients for (I + dt (H - beta w)) x = b with w >= 0 a diagonal weight.
inline void solve_shifted(const DirichletBox2D& box, double dt, double beta, const std::vector<double>& w,
                          const std::vector<double>& b, std::vector<double>& x) {
  const std::size_t n = b.size();
  std::vector<double> r(n), p(n), ap(n), hx(n);
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    box.apply_h(in, hx);
    for (std::size_t k = 0; k < n; ++k) out[k] = in[k] + dt * (hx[k] - beta * w[k] * in[k]);
  };
  apply(x, ap);
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
  p = r;
  double rr = box.dot(r, r);
  const double bb = box.dot(b, b);
  for (int it = 0; it < 5000 && rr > 1e-30 * bb; ++it) {
    apply(p, ap);
    const double pap = box.dot(p, ap);
    if (!(pap > 0.0)) throw std::runtime_error("imaginary-time step lost positivity; reduce dt");
    const double alpha = rr / pap;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    const double rr_new = box.dot(r, r);
    const double beta_cg = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta_cg * p[k];
  }
}

// Runs the flow at fixed beta from phi (L^2-normalized in place) to a fixed point.
inline double flow_to_fixed_point(const DirichletBox2D& box, double beta, double p, double dt,
                                  std::vector<double>& phi, int& steps) {
  const std::size_t n = phi.size();
  std::vector<double> w(n), next(n), hphi(n);
  double mu = 0.0;
  for (int it = 0; it < 20000; ++it) {
    for (std::size_t k = 0; k < n; ++k) w[k] = std::pow(std::abs(phi[k]), p - 2.0);
    next = phi;
    solve_shifted(box, dt, beta, w, phi, next);
    const double norm = std::sqrt(box.dot(next, next));
    double change = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      next[k] /= norm;
      change = std::max(change, std::abs(next[k] - phi[k]));
    }
    phi.swap(next);
    ++steps;
    box.apply_h(phi, hphi);
    mu = box.dot(hphi, phi) - beta * box.pmass(phi, p);
    if (change < 1e-13) break;
  }
  return mu;
}

inline ImaginaryTimeResult imaginary_time_ground_state(int points, double half_width, double v, double p,
                                                       double beta0 = 5.0, double beta1 = 10.0, double dt = 0.1) {
  const DirichletBox2D box(points, half_width, v);
  const int m = box.side();
  const double h = box.spacing();
  std::vector<double> phi(box.size());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double x = -half_width + h * (i + 1);
      const double y = -half_width + h * (j + 1);
      phi[static_cast<std::size_t>(i) * m + j] = std::exp(-(x * x + y * y) / 2.0);
    }
  }
  const double n0 = std::sqrt(box.dot(phi, phi));
  for (double& x : phi) x /= n0;

  ImaginaryTimeResult res;
  double b0 = beta0;
  double b1 = beta1;
  double m0 = flow_to_fixed_point(box, b0, p, dt, phi, res.flow_steps);
  double m1 = flow_to_fixed_point(box, b1, p, dt, phi, res.flow_steps);
  for (int it = 0; it < 60 && std::abs(m1) > 1e-11; ++it) {
    double b2 = b1 - m1 * (b1 - b0) / (m1 - m0);
    if (!(b2 > 0.0)) b2 = 0.5 * b1;
    b0 = b1;
    m0 = m1;
    b1 = b2;
    m1 = flow_to_fixed_point(box, b1, p, dt, phi, res.flow_steps);
    ++res.secant_iterations;
  }
  std::vector<double> hphi(phi.size());
  box.apply_h(phi, hphi);
  res.beta = b1;
  res.mu = m1;
  res.kappa = box.dot(hphi, phi) / std::pow(box.pmass(phi, p), 2.0 / p);
  return res;
}

}  // namespace oracle
