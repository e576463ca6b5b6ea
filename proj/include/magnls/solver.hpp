#pragma once
// Ground states: minimize J_{A,V}(u) = E_A(u) + int V |u|^2 over int |u|^p = 1.
//
// The iteration is a projected gradient flow on the L^p sphere. At a normalized u
// the tangent gradient is g = 2 (H u - J(u) |u|^{p-2} u); a step u - tau g is pulled
// back onto the sphere and accepted under an Armijo test, so the energy history
// is nonincreasing by construction. Barzilai-Borwein steps set the trial tau.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "json.hpp"
#include "magnls/energy.hpp"
#include "magnls/grid.hpp"
#include "magnls/potential.hpp"

namespace magnls {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InitialGuess { Gaussian, Loaded, Random };

inline InitialGuess initial_guess_from_string(const std::string& s) {
  if (s == "gaussian") return InitialGuess::Gaussian;
  if (s == "loaded") return InitialGuess::Loaded;
  if (s == "random") return InitialGuess::Random;
  throw std::invalid_argument("unknown initial guess '" + s + "' (expected gaussian, loaded or random)");
}

struct SolveOptions {
  double p = 3.0;
  InitialGuess initial = InitialGuess::Gaussian;
  std::optional<Vec<double>> center;  // gaussian centre; default: minimum of V
  double width = 0.0;                 // gaussian width; 0 means L/8
  std::optional<ComplexField> loaded;
  double tau0 = 0.05;
  double backtrack = 0.5;
  double armijo = 1e-4;
  int max_backtracks = 60;
  double tolerance = 1e-9;  // on the Euler-Lagrange residual
  int max_iterations = 20000;
  int restarts = 5;
  std::uint64_t seed = 1;
  // Check J_{A,V}(u) >= J_{0,V}(|u|) every this many iterations (0 disables).
  int diamagnetic_interval = 1;

  void validate(int dimension) const {
    if (!(p > 2.0)) throw std::invalid_argument("exponent p must exceed 2");
    if (dimension >= 3 && p > 2.0 * dimension / (dimension - 2.0) + 1e-12) {
      throw std::invalid_argument("exponent p exceeds the critical exponent 2N/(N-2)");
    }
    if (!(tau0 > 0.0)) throw std::invalid_argument("initial step tau0 must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw std::invalid_argument("backtracking factor must lie in (0, 1)");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
    if (restarts < 1) throw std::invalid_argument("restarts must be at least 1");
    if (initial == InitialGuess::Loaded && !loaded) throw std::invalid_argument("loaded initial guess needs a field");
  }
};

// Discretized minimization problem: links, sampled V and the free (unpinned) nodes.
struct Problem {
  LinkPhases links;
  PotentialSample potential;
  std::vector<char> free;
  std::optional<Vec<double>> well_center;

  const GridSpec& grid() const { return links.grid(); }
};

// Nodes on the box boundary and on the singular set of V are pinned to zero.
inline Problem make_problem(const MagneticPotential& a, const ElectricPotential& v, const GridSpec& g,
                            LinkRule rule = LinkRule::Midpoint) {
  Problem pr{LinkPhases::build(a, g, rule), sample_electric(v, g), interior_mask(g), std::nullopt};
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (pr.free[k] && v.is_singular_at(g.position(k))) pr.free[k] = 0;
  }
  return pr;
}

struct TraceRow {
  int iteration = 0;
  double energy = 0.0;
  double residual = 0.0;
  double step = 0.0;
};

struct GroundStateResult {
  explicit GroundStateResult(ComplexField field) : u(std::move(field)) {}

  ComplexField u;
  double p = 0.0;
  double kappa = 0.0;
  double lambda = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::string status;
  std::vector<double> history;
  std::vector<TraceRow> trace;
  std::vector<double> start_kappas;
  int best_start = 0;
  std::size_t diamagnetic_violations = 0;
  double normalization_error = 0.0;

  double kappa_spread() const {
    if (start_kappas.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(start_kappas.begin(), start_kappas.end());
    return *hi - *lo;
  }
  bool history_monotone() const {
    for (std::size_t i = 1; i < history.size(); ++i) {
      if (history[i] > history[i - 1]) return false;
    }
    return true;
  }
  // Factor c with c u solving H w = |w|^{p-2} w.
  double rescale_factor() const { return std::pow(lambda, 1.0 / (p - 2.0)); }

  nlohmann::json to_json() const {
    const GridSpec& g = u.grid();
    return {{"kappa", kappa},
            {"lambda", lambda},
            {"residual", residual},
            {"iterations", iterations},
            {"status", status},
            {"p", p},
            {"energy_initial", history.empty() ? 0.0 : history.front()},
            {"energy_final", history.empty() ? 0.0 : history.back()},
            {"history_monotone", history_monotone()},
            {"normalization_error", normalization_error},
            {"rescale_factor", lambda > 0.0 ? rescale_factor() : 0.0},
            {"start_kappas", start_kappas},
            {"best_start", best_start},
            {"kappa_spread", kappa_spread()},
            {"diamagnetic_violations", diamagnetic_violations},
            {"grid", {{"dimension", g.dimension()}, {"M", g.points()}, {"L", g.half_width()}, {"h", g.spacing()}}}};
  }
};

namespace detail {

inline void normalize_lp(ComplexField& u, double p) {
  const double n = lp_norm(u, p);
  if (!(n > 0.0) || !std::isfinite(n)) throw SolverError("cannot normalize a vanishing or non-finite field");
  u *= Complex(1.0 / n, 0.0);
}

inline double rayleigh(const ComplexField& u, const ComplexField& hu) {
  CompensatedSum s;
  for (std::size_t k = 0; k < u.size(); ++k) s.add((std::conj(u[k]) * hu[k]).real());
  return s.value() * u.grid().cell_volume();
}

inline Vec<double> default_center(const Problem& pr) {
  if (pr.well_center) return *pr.well_center;
  const GridSpec& g = pr.grid();
  double best = std::numeric_limits<double>::infinity();
  double best_r = std::numeric_limits<double>::infinity();
  Vec<double> c{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!pr.free[k]) continue;
    const Vec<double> x = g.position(k);
    double r = 0.0;
    for (int d = 0; d < g.dimension(); ++d) r += x[d] * x[d];
    const double v = pr.potential.values[k];
    if (v < best - 1e-14 * std::abs(best) || (std::abs(v - best) <= 1e-14 * std::abs(best) && r < best_r)) {
      best = v;
      best_r = r;
      c = x;
    }
  }
  return c;
}

inline ComplexField gaussian(const GridSpec& g, const Vec<double>& c, double width) {
  return ComplexField::sample(g, [&](const Vec<double>& x) {
    double r2 = 0.0;
    for (int d = 0; d < g.dimension(); ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
    return std::exp(-r2 / (2.0 * width * width));
  });
}

inline ComplexField initial_field(const Problem& pr, const SolveOptions& opt, int start) {
  const GridSpec& g = pr.grid();
  const double width = opt.width > 0.0 ? opt.width : g.half_width() / 8.0;
  const Vec<double> c0 = opt.center ? *opt.center : default_center(pr);
  ComplexField u(g);
  if (start == 0 && opt.initial == InitialGuess::Loaded) {
    if (!(opt.loaded->grid() == g)) throw std::invalid_argument("loaded initial field is on a different grid");
    u = *opt.loaded;
  } else if (start == 0 && opt.initial == InitialGuess::Gaussian) {
    u = gaussian(g, c0, width);
  } else {
    // Seeded perturbation of a gaussian: random centre near c0, random width and phase texture.
    std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(start + 1));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Vec<double> c = c0;
    for (int d = 0; d < g.dimension(); ++d) c[d] += 0.5 * width * unit(rng);
    const double w = width * (1.0 + 0.25 * unit(rng));
    Vec<double> k{0.0, 0.0, 0.0};
    for (int d = 0; d < g.dimension(); ++d) k[d] = unit(rng) / width;
    u = gaussian(g, c, w);
    for (std::size_t n = 0; n < g.size(); ++n) {
      const Vec<double> x = g.position(n);
      double phase = 0.0;
      for (int d = 0; d < g.dimension(); ++d) phase += k[d] * x[d];
      u[n] *= std::polar(1.0 + 0.2 * unit(rng), phase);
    }
  }
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (!pr.free[n]) u[n] = Complex(0.0, 0.0);
  }
  normalize_lp(u, opt.p);
  return u;
}

inline double modulus_energy(const ComplexField& u, const PotentialSample& v) {
  const GridSpec& g = u.grid();
  CompensatedSum s;
  for (int j = 0; j < g.dimension(); ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
      const double d = std::abs(u[b]) - std::abs(u[a]);
      s.add(d * d);
    });
    for_each_last_slab(g, j, [&](std::size_t a) { s.add(std::norm(u[a])); });
  }
  const double h = g.spacing();
  return s.value() * g.cell_volume() / (h * h) + electric_energy(u, v);
}

struct Iterate {
  ComplexField u;
  ComplexField hu;
  double e = 0.0;  // <H u, u>
  double m = 0.0;  // int |u|^p
  double j = 0.0;  // energy chain; starts at e / m^{2/p}
};

inline Iterate make_iterate(const Problem& pr, ComplexField u, double p) {
  ComplexField hu(u.grid());
  apply_hamiltonian(u, pr.links, pr.potential, hu);
  const double e = rayleigh(u, hu);
  const double m = lp_mass(u, p);
  if (!std::isfinite(e) || !std::isfinite(m)) throw SolverError("energy became non-finite");
  return Iterate{std::move(u), std::move(hu), e, m, e / std::pow(m, 2.0 / p)};
}

// |z + d|^p - |z|^p without cancellation against |z|^p.
inline double pmass_increment(const Complex& z, const Complex& d, double p) {
  const double a = std::norm(z);
  const double delta = 2.0 * (std::conj(z) * d).real() + std::norm(d);
  if (a == 0.0) return std::pow(std::norm(d), 0.5 * p);
  return std::pow(a, 0.5 * p) * std::expm1(0.5 * p * std::log1p(std::max(delta / a, -1.0)));
}

inline GroundStateResult minimize_single(const Problem& pr, const SolveOptions& opt, int start) {
  const GridSpec& g = pr.grid();
  const double p = opt.p;
  const double vol = g.cell_volume();
  GroundStateResult res(initial_field(pr, opt, start));
  res.p = p;
  Iterate cur = make_iterate(pr, res.u, p);
  res.history.push_back(cur.j);

  ComplexField grad(g);
  ComplexField hgrad(g);
  ComplexField prev_u(g);
  ComplexField prev_grad(g);
  bool have_prev = false;
  double tau = opt.tau0;
  double last_step = 0.0;
  res.status = "max-iterations";

  auto diamagnetic = [&](const Iterate& it) {
    const double q = it.e / std::pow(it.m, 2.0 / p);
    const double lower = modulus_energy(it.u, pr.potential) / std::pow(it.m, 2.0 / p);
    if (q < lower - 1e-12 * std::max(1.0, std::abs(lower))) ++res.diamagnetic_violations;
  };
  if (opt.diamagnetic_interval > 0) diamagnetic(cur);

  int it = 0;
  for (;; ++it) {
    // Tangent gradient, least-squares multiplier and residual at the current iterate.
    const double q = cur.e / std::pow(cur.m, 2.0 / p);
    CompensatedSum num;
    CompensatedSum den;
    CompensatedSum gnorm;
    CompensatedSum unorm;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!pr.free[k]) {
        grad[k] = Complex(0.0, 0.0);
        continue;
      }
      const Complex f = nonlinearity(cur.u[k], p);
      grad[k] = 2.0 * (cur.hu[k] - q * f);
      num.add((std::conj(f) * cur.hu[k]).real());
      den.add(std::norm(f));
      gnorm.add(std::norm(grad[k]));
      unorm.add(std::norm(cur.u[k]));
    }
    const double lambda = num.value() / den.value();
    CompensatedSum rr;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (pr.free[k]) rr.add(std::norm(cur.hu[k] - lambda * nonlinearity(cur.u[k], p)));
    }
    res.lambda = lambda;
    res.residual = std::sqrt(rr.value() / unorm.value());
    res.trace.push_back({it, cur.j, res.residual, last_step});
    if (res.residual < opt.tolerance) {
      res.status = "converged";
      break;
    }
    if (it >= opt.max_iterations) break;

    if (have_prev) {
      CompensatedSum ss;
      CompensatedSum sy;
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!pr.free[k]) continue;
        const Complex s = cur.u[k] - prev_u[k];
        const Complex y = grad[k] - prev_grad[k];
        ss.add(std::norm(s));
        sy.add((std::conj(s) * y).real());
      }
      if (sy.value() > 0.0) tau = ss.value() / sy.value();
      tau = std::clamp(tau, 1e-14, 1e6);
    }
    const double slope = gnorm.value() * vol;

    // The change of the quotient along u - tau grad is assembled from
    // <H u, grad>, <H grad, grad> and pointwise p-mass increments, so the
    // Armijo test stays meaningful once J itself is converged to rounding.
    apply_hamiltonian(grad, pr.links, pr.potential, hgrad);
    const double a1 = rayleigh(grad, cur.hu);
    const double a2 = rayleigh(grad, hgrad);
    bool accepted = false;
    double dq = 0.0;
    for (int b = 0; b <= opt.max_backtracks; ++b) {
      CompensatedSum dm;
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (pr.free[k]) dm.add(pmass_increment(cur.u[k], -tau * grad[k], p));
      }
      const double dmass = dm.value() * vol;
      const double de = -2.0 * tau * a1 + tau * tau * a2;
      const double mv = cur.m + dmass;
      if (mv > 0.0) {
        dq = (de - cur.e * std::expm1(2.0 / p * std::log1p(dmass / cur.m))) / std::pow(mv, 2.0 / p);
        if (std::isfinite(dq) && dq <= -opt.armijo * tau * slope) {
          accepted = true;
          break;
        }
      }
      tau *= opt.backtrack;
    }
    if (!accepted) {
      res.status = "stalled";
      break;
    }
    ComplexField w = cur.u;
    for (std::size_t k = 0; k < g.size(); ++k) w[k] -= tau * grad[k];
    normalize_lp(w, p);
    prev_u = cur.u;
    prev_grad = grad;
    have_prev = true;
    last_step = tau;
    const double chain = cur.j + dq;
    cur = make_iterate(pr, std::move(w), p);
    cur.j = chain;
    res.history.push_back(cur.j);
    if (opt.diamagnetic_interval > 0 && (it + 1) % opt.diamagnetic_interval == 0) diamagnetic(cur);
  }
  res.iterations = it;
  res.kappa = cur.e / std::pow(cur.m, 2.0 / p);
  res.normalization_error = std::abs(lp_norm(cur.u, p) - 1.0);
  res.u = std::move(cur.u);
  return res;
}

}  // namespace detail

inline GroundStateResult minimize_ground_state(const Problem& pr, const SolveOptions& opt) {
  opt.validate(pr.grid().dimension());
  std::optional<GroundStateResult> best;
  std::vector<double> kappas;
  for (int s = 0; s < opt.restarts; ++s) {
    GroundStateResult r = detail::minimize_single(pr, opt, s);
    kappas.push_back(r.kappa);
    if (!best || r.kappa < best->kappa) {
      r.best_start = s;
      best = std::move(r);
    }
  }
  best->start_kappas = std::move(kappas);
  return std::move(*best);
}

inline GroundStateResult minimize_ground_state(const MagneticPotential& a, const ElectricPotential& v,
                                               const GridSpec& g, const SolveOptions& opt,
                                               LinkRule rule = LinkRule::Midpoint) {
  return minimize_ground_state(make_problem(a, v, g, rule), opt);
}

// lambda^{1/(p-2)} u, which solves H w = |w|^{p-2} w when H u = lambda |u|^{p-2} u.
inline ComplexField rescale_to_equation(const GroundStateResult& r) {
  if (!(r.lambda > 0.0)) throw std::invalid_argument("rescaling needs a positive multiplier");
  return Complex(r.rescale_factor(), 0.0) * r.u;
}

// ---------------------------------------------------------------------------
// Critical problem: AB potential, Hardy term -mu/x1^2, p = 2N/(N-2).

struct CriticalOptions {
  AharonovBohmForm form = AharonovBohmForm::Printed;
  std::vector<int> hardy_axes{0};
  LinkRule links = LinkRule::Midpoint;
};

struct CriticalResult {
  explicit CriticalResult(GroundStateResult g) : ground(std::move(g)) {}

  GroundStateResult ground;
  double lambda_ab = 0.0;
  double mu = 0.0;
  double boundary_mass = 0.0;  // p-mass within 2 cells of the box boundary
  bool boundary_dominated = false;
  bool positive = false;
  Vec<double> center_of_mass{0.0, 0.0, 0.0};  // |u|^p-weighted
  double width = 0.0;                          // |u|^p-weighted RMS radius
  bool lattice_concentrated = false;           // width below two cells
};

inline double critical_exponent(int n) { return 2.0 * n / (n - 2.0); }

inline Problem make_critical_problem(double lambda_ab, double mu, const GridSpec& g, const CriticalOptions& co) {
  const int n = g.dimension();
  const MagneticPotential a = MagneticPotential::aharonov_bohm(n, lambda_ab, co.form);
  const ElectricPotential v = ElectricPotential::hardy(n, mu, co.hardy_axes);
  Problem pr = make_problem(a, v, g, co.links);
  // The singular set of the Hardy term is pinned even when mu = 0, so the
  // comparison across mu is made on one function space.
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    double s = 0.0;
    for (int ax : co.hardy_axes) s += x[ax] * x[ax];
    if (s == 0.0) pr.free[k] = 0;
  }
  Vec<double> c{0.0, 0.0, 0.0};
  c[co.hardy_axes.front()] = g.half_width() / 4.0;
  pr.well_center = c;
  return pr;
}

inline CriticalResult solve_critical(double lambda_ab, double mu, const GridSpec& g, SolveOptions opt,
                                     const CriticalOptions& co = {}) {
  if (g.dimension() < 3) throw std::invalid_argument("critical mode needs N >= 3");
  if (!(lambda_ab * lambda_ab <= mu && mu < 0.25)) {
    throw std::invalid_argument("critical mode needs lambda^2 <= mu < 1/4");
  }
  opt.p = critical_exponent(g.dimension());
  CriticalResult out(minimize_ground_state(make_critical_problem(lambda_ab, mu, g, co), opt));
  out.lambda_ab = lambda_ab;
  out.mu = mu;
  const ComplexField& u = out.ground.u;
  const double h = g.spacing();
  CompensatedSum edge;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<int> idx = g.index_of(k);
    bool near = false;
    for (int d = 0; d < g.dimension(); ++d) near = near || idx[d] <= 2 || idx[d] >= g.points() - 3;
    if (near) edge.add(std::pow(std::abs(u[k]), out.ground.p));
  }
  out.boundary_mass = edge.value() * std::pow(h, g.dimension());
  double total = 0.0;
  Vec<double> com{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double w = std::pow(std::abs(u[k]), out.ground.p);
    const Vec<double> x = g.position(k);
    total += w;
    for (int d = 0; d < g.dimension(); ++d) com[d] += w * x[d];
  }
  double spread = 0.0;
  if (total > 0.0) {
    for (int d = 0; d < g.dimension(); ++d) com[d] /= total;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double w = std::pow(std::abs(u[k]), out.ground.p);
      const Vec<double> x = g.position(k);
      for (int d = 0; d < g.dimension(); ++d) spread += w * (x[d] - com[d]) * (x[d] - com[d]);
    }
    spread /= total;
  }
  out.center_of_mass = com;
  out.width = std::sqrt(spread);
  out.lattice_concentrated = out.width < 2.0 * h;
  out.boundary_dominated = out.boundary_mass > 0.01;
  out.positive = out.ground.kappa > 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Sobolev reference: quotient of v = (1 + |x|^2)^{-(N-2)/2}.

struct SobolevEstimate {
  double ball_quotient = 0.0;    // grid quotient inside |x| <= L
  double estimate = 0.0;         // with the exact radial tails beyond L added
  double truncation_error = 0.0; // |estimate - ball_quotient|
  double radius = 0.0;
};

inline SobolevEstimate talenti_sobolev_oracle(int n, const GridSpec& g, double amplitude = 1.0) {
  if (n < 3 || n != g.dimension()) throw std::invalid_argument("Sobolev oracle needs N >= 3 matching the grid");
  const double ps = critical_exponent(n);
  const double radius = g.half_width();
  std::vector<double> v(g.size());
  std::vector<char> in(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) r2 += x[d] * x[d];
    v[k] = amplitude * std::pow(1.0 + r2, -(n - 2.0) / 2.0);
    in[k] = r2 <= radius * radius;
  }
  const double h = g.spacing();
  const double vol = g.cell_volume();
  CompensatedSum grad;
  CompensatedSum mass;
  for (int j = 0; j < n; ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
      if (in[a] && in[b]) grad.add((v[b] - v[a]) * (v[b] - v[a]));
    });
  }
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (in[k]) mass.add(std::pow(std::abs(v[k]), ps));
  }
  const double gb = grad.value() * vol / (h * h);
  const double mb = mass.value() * vol;

  // Tails over |x| > L of |grad v|^2 and v^{2*}, in radial form, written in
  // powers of r that stay finite for large r.
  const double sphere = 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
  const double a2 = amplitude * amplitude;
  boost::math::quadrature::exp_sinh<double> integrator;
  const double gt = integrator.integrate([&](double t) {
    const double r = radius + t;
    const double q = std::pow(1.0 / (1.0 + 1.0 / (r * r)), n);
    return sphere * a2 * (n - 2.0) * (n - 2.0) * std::pow(r, 1.0 - n) * q;
  });
  const double mt = integrator.integrate([&](double t) {
    const double r = radius + t;
    const double q = std::pow(1.0 / (1.0 + 1.0 / (r * r)), n);
    return sphere * std::pow(amplitude, ps) * std::pow(r, -1.0 - n) * q;
  });
  SobolevEstimate est;
  est.radius = radius;
  est.ball_quotient = gb / std::pow(mb, 2.0 / ps);
  est.estimate = (gb + gt) / std::pow(mb + mt, 2.0 / ps);
  est.truncation_error = std::abs(est.estimate - est.ball_quotient);
  return est;
}

}  // namespace magnls
