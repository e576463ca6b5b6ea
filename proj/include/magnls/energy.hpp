#pragma once
// Link-phase discretization of the magnetic gradient and the energies built on it.
//
// Along every edge (x, x + h e_j) the link U_j(x) = exp(i theta_j(x)) carries the
// line integral theta_j(x) ~ int_x^{x+h e_j} A_j. The discrete covariant gradient is
//   D_j u(x) = (U_j(x) u(x + h e_j) - u(x)) / h,   u = 0 outside the box,
// which is consistent with (d_j + i A_j) u. The magnetic Laplacian is the exact
// adjoint D*D of this map, so <D*D u, u> = E_A(u) holds to round-off.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "magnls/grid.hpp"
#include "magnls/potential.hpp"
#include "magnls/quadrature.hpp"

namespace magnls {

enum class LinkRule {
  Midpoint,  // theta = h A_j(x + h/2 e_j)
  Exact,     // Gauss-Legendre line integral along the edge (exact for affine A)
};

inline std::string to_string(LinkRule r) { return r == LinkRule::Midpoint ? "midpoint" : "exact"; }

inline LinkRule link_rule_from_string(const std::string& s) {
  if (s == "midpoint") return LinkRule::Midpoint;
  if (s == "exact") return LinkRule::Exact;
  throw std::invalid_argument("unknown link rule '" + s + "' (expected midpoint or exact)");
}

class LinkPhases {
 public:
  // Trivial links (A = 0).
  explicit LinkPhases(const GridSpec& g) : grid_(g) {
    for (int j = 0; j < g.dimension(); ++j) {
      theta_[j].assign(g.size(), 0.0);
      link_[j].assign(g.size(), Complex(1.0, 0.0));
    }
  }

  static LinkPhases build(const MagneticPotential& a, const GridSpec& g, LinkRule rule = LinkRule::Midpoint,
                          int exact_order = 8) {
    if (a.dimension() != g.dimension()) throw std::invalid_argument("potential and grid dimensions differ");
    LinkPhases lp(g);
    lp.rule_ = rule;
    const double h = g.spacing();
    const QuadratureRule q = rule == LinkRule::Exact ? gauss_legendre_unit(exact_order) : QuadratureRule{{0.5}, {1.0}};
    for (int j = 0; j < g.dimension(); ++j) {
      for_each_edge(g, j, [&](std::size_t from, std::size_t) {
        const Vec<double> x = g.position(from);
        double s = 0.0;
        for (std::size_t i = 0; i < q.nodes.size(); ++i) {
          Vec<double> p = x;
          p[j] += q.nodes[i] * h;
          s += q.weights[i] * a.eval<double>(p)[j];
        }
        lp.set(j, from, h * s);
      });
    }
    return lp;
  }

  const GridSpec& grid() const { return grid_; }
  LinkRule rule() const { return rule_; }
  double phase(int axis, std::size_t node) const { return theta_[axis][node]; }
  const Complex& link(int axis, std::size_t node) const { return link_[axis][node]; }

  void set(int axis, std::size_t node, double theta) {
    if (!std::isfinite(theta)) throw std::invalid_argument("non-finite link phase");
    theta_[axis][node] = theta;
    link_[axis][node] = std::polar(1.0, theta);
  }

 private:
  GridSpec grid_;
  LinkRule rule_ = LinkRule::Midpoint;
  std::array<std::vector<double>, kMaxDim> theta_;
  std::array<std::vector<Complex>, kMaxDim> link_;
};

// Electric potential sampled on the nodes; singular nodes get weight zero.
struct PotentialSample {
  GridSpec grid;
  std::vector<double> values;

  double infimum() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values) m = std::min(m, v);
    return m;
  }
};

inline PotentialSample sample_electric(const ElectricPotential& v, const GridSpec& g) {
  if (v.dimension() != g.dimension()) throw std::invalid_argument("potential and grid dimensions differ");
  PotentialSample s{g, std::vector<double>(g.size(), 0.0)};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    if (v.is_singular_at(x)) continue;
    s.values[k] = v(x);
    if (!std::isfinite(s.values[k])) throw std::invalid_argument("electric potential is not finite at a node");
  }
  return s;
}

inline PotentialSample constant_potential(const GridSpec& g, double c) {
  return PotentialSample{g, std::vector<double>(g.size(), c)};
}

namespace detail {

inline void require_grid(const ComplexField& u, const GridSpec& g) {
  if (!(u.grid() == g)) throw std::invalid_argument("field and links live on different grids");
}

}  // namespace detail

inline std::vector<ComplexField> covariant_gradient(const ComplexField& u, const LinkPhases& links) {
  const GridSpec& g = u.grid();
  detail::require_grid(u, links.grid());
  const double inv_h = 1.0 / g.spacing();
  std::vector<ComplexField> out;
  for (int j = 0; j < g.dimension(); ++j) {
    ComplexField d(g);
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) { d[a] = (links.link(j, a) * u[b] - u[a]) * inv_h; });
    for_each_last_slab(g, j, [&](std::size_t a) { d[a] = -u[a] * inv_h; });
    out.push_back(std::move(d));
  }
  return out;
}

// h^N sum_{x, j} |D_j u(x)|^2
inline double energy_EA(const ComplexField& u, const LinkPhases& links) {
  const GridSpec& g = u.grid();
  detail::require_grid(u, links.grid());
  CompensatedSum s;
  for (int j = 0; j < g.dimension(); ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) { s.add(std::norm(links.link(j, a) * u[b] - u[a])); });
    for_each_last_slab(g, j, [&](std::size_t a) { s.add(std::norm(u[a])); });
  }
  const double h = g.spacing();
  return s.value() * g.cell_volume() / (h * h);
}

// D*D u, the adjoint pairing of energy_EA.
inline void magnetic_laplacian(const ComplexField& u, const LinkPhases& links, ComplexField& out) {
  const GridSpec& g = u.grid();
  detail::require_grid(u, links.grid());
  detail::require_grid(out, g);
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  std::fill(out.values().begin(), out.values().end(), Complex(0.0, 0.0));
  for (int j = 0; j < g.dimension(); ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
      const Complex& w = links.link(j, a);
      const Complex r = w * u[b] - u[a];
      out[a] -= r * inv_h2;
      out[b] += std::conj(w) * r * inv_h2;
    });
    for_each_last_slab(g, j, [&](std::size_t a) { out[a] += u[a] * inv_h2; });
  }
}

inline ComplexField magnetic_laplacian(const ComplexField& u, const LinkPhases& links) {
  ComplexField out(u.grid());
  magnetic_laplacian(u, links, out);
  return out;
}

// H u = D*D u + V u
inline void apply_hamiltonian(const ComplexField& u, const LinkPhases& links, const PotentialSample& v,
                              ComplexField& out) {
  magnetic_laplacian(u, links, out);
  for (std::size_t k = 0; k < u.size(); ++k) out[k] += v.values[k] * u[k];
}

inline double electric_energy(const ComplexField& u, const PotentialSample& v) {
  detail::require_grid(u, v.grid);
  CompensatedSum s;
  for (std::size_t k = 0; k < u.size(); ++k) s.add(v.values[k] * std::norm(u[k]));
  return s.value() * u.grid().cell_volume();
}

struct EnergyReport {
  double e_a = 0.0;
  double j_av = 0.0;
  double kinetic = 0.0;
  double electric = 0.0;
  double h = 0.0;
  double L = 0.0;
  int M = 0;
  // Set when a run requires inf V > 0 and the sampled potential violates it.
  bool nonpositive_potential = false;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"e_a", e_a}, {"j_av", j_av}, {"kinetic", kinetic}, {"electric", electric},
                        {"h", h},     {"L", L},       {"M", M}};
    if (nonpositive_potential) j["nonpositive_potential"] = true;
    return j;
  }
};

inline EnergyReport functional_J(const ComplexField& u, const LinkPhases& links, const PotentialSample& v,
                                 bool require_positive_potential = false) {
  EnergyReport r;
  r.e_a = energy_EA(u, links);
  r.kinetic = r.e_a;
  r.electric = electric_energy(u, v);
  r.j_av = r.kinetic + r.electric;
  r.h = u.grid().spacing();
  r.L = u.grid().half_width();
  r.M = u.grid().points();
  r.nonpositive_potential = require_positive_potential && !(v.infimum() > 0.0);
  return r;
}

struct DiamagneticReport {
  std::size_t links_checked = 0;
  std::size_t violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  double e_a = 0.0;
  double e0_modulus = 0.0;  // E_0(|u|)
  bool holds = true;
};

// Per link |U u(x + h e_j) - u(x)| >= ||u(x + h e_j)| - |u(x)||; a link only counts
// as violated beyond the rounding of the two sides, 4 eps (|u(x)| + |u(x+he_j)|).
inline DiamagneticReport diamagnetic_check(const ComplexField& u, const LinkPhases& links) {
  const GridSpec& g = u.grid();
  detail::require_grid(u, links.grid());
  DiamagneticReport rep;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  CompensatedSum e0;
  auto visit = [&](const Complex& lhs_vec, double ua, double ub) {
    const double lhs = std::abs(lhs_vec);
    const double rhs = std::abs(ub - ua);
    const double slack = lhs - rhs;
    ++rep.links_checked;
    rep.min_slack = std::min(rep.min_slack, slack);
    if (slack < -4.0 * eps * (ua + ub)) ++rep.violations;
    e0.add(rhs * rhs);
  };
  for (int j = 0; j < g.dimension(); ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
      visit(links.link(j, a) * u[b] - u[a], std::abs(u[a]), std::abs(u[b]));
    });
    for_each_last_slab(g, j, [&](std::size_t a) { visit(-u[a], std::abs(u[a]), 0.0); });
  }
  const double h = g.spacing();
  rep.e0_modulus = e0.value() * g.cell_volume() / (h * h);
  rep.e_a = energy_EA(u, links);
  rep.holds = rep.violations == 0 && rep.e_a >= rep.e0_modulus * (1.0 - 64.0 * eps);
  return rep;
}

// Forward-difference gradient with A sampled at the nodes: (u(x+he_j) - u(x))/h + i A_j(x) u(x).
inline std::vector<ComplexField> direct_covariant_gradient(const ComplexField& u, const MagneticPotential& a) {
  const GridSpec& g = u.grid();
  const double inv_h = 1.0 / g.spacing();
  std::vector<ComplexField> out;
  std::vector<Vec<double>> av(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) av[k] = a(g.position(k));
  for (int j = 0; j < g.dimension(); ++j) {
    ComplexField d(g);
    for_each_edge(g, j, [&](std::size_t p, std::size_t q) {
      d[p] = (u[q] - u[p]) * inv_h + Complex(0.0, av[p][j]) * u[p];
    });
    for_each_last_slab(g, j, [&](std::size_t p) { d[p] = -u[p] * inv_h + Complex(0.0, av[p][j]) * u[p]; });
    out.push_back(std::move(d));
  }
  return out;
}

inline double energy_direct(const ComplexField& u, const MagneticPotential& a) {
  CompensatedSum s;
  for (const ComplexField& d : direct_covariant_gradient(u, a)) {
    for (const Complex& z : d.values()) s.add(std::norm(z));
  }
  return s.value() * u.grid().cell_volume();
}

struct PointwiseBoundsReport {
  // max over nodes of (1/2|grad u|^2 - 8|A|^2|u|^2) - |grad_A u|^2
  double lower_violation = -std::numeric_limits<double>::infinity();
  // max over nodes of |grad_A u|^2 - (2|grad u|^2 + 16|A|^2|u|^2)
  double upper_violation = -std::numeric_limits<double>::infinity();
  double max_violation = -std::numeric_limits<double>::infinity();
  // max over nodes and axes of |D_j u - (d_j u + i A_j u)| (link versus direct stencil)
  double consistency_defect = 0.0;
  std::size_t nodes = 0;
};

inline PointwiseBoundsReport pointwise_bounds_check(const ComplexField& u, const MagneticPotential& a,
                                                    const LinkPhases& links) {
  const GridSpec& g = u.grid();
  detail::require_grid(u, links.grid());
  const std::vector<ComplexField> dl = covariant_gradient(u, links);
  const std::vector<ComplexField> d0 = covariant_gradient(u, LinkPhases(g));
  const std::vector<ComplexField> dd = direct_covariant_gradient(u, a);
  PointwiseBoundsReport rep;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> av = a(g.position(k));
    double a2 = 0.0;
    double ga = 0.0;
    double g0 = 0.0;
    for (int j = 0; j < g.dimension(); ++j) {
      a2 += av[j] * av[j];
      ga += std::norm(dl[j][k]);
      g0 += std::norm(d0[j][k]);
      rep.consistency_defect = std::max(rep.consistency_defect, std::abs(dl[j][k] - dd[j][k]));
    }
    const double u2 = std::norm(u[k]);
    rep.lower_violation = std::max(rep.lower_violation, 0.5 * g0 - 8.0 * a2 * u2 - ga);
    rep.upper_violation = std::max(rep.upper_violation, ga - 2.0 * g0 - 16.0 * a2 * u2);
    ++rep.nodes;
  }
  rep.max_violation = std::max(rep.lower_violation, rep.upper_violation);
  return rep;
}

inline PointwiseBoundsReport pointwise_bounds_check(const ComplexField& u, const MagneticPotential& a) {
  return pointwise_bounds_check(u, a, LinkPhases::build(a, u.grid()));
}

// Nodes where the Euler-Lagrange equation is posed: everything off the box boundary.
inline std::vector<char> interior_mask(const GridSpec& g) {
  std::vector<char> m(g.size(), 1);
  for (std::size_t k = 0; k < g.size(); ++k) m[k] = g.on_boundary(k) ? 0 : 1;
  return m;
}

namespace detail {

inline Complex nonlinearity(const Complex& z, double p) {
  if (p == 2.0) return z;
  const double a = std::abs(z);
  if (a == 0.0) return Complex(0.0, 0.0);
  if (p == 4.0) return a * a * z;
  if (p == 3.0) return a * z;
  return std::pow(a, p - 2.0) * z;
}

}  // namespace detail

// Least-squares multiplier of H u = lambda |u|^{p-2} u on the masked nodes.
inline double el_multiplier(const ComplexField& u, const LinkPhases& links, const PotentialSample& v, double p,
                            const std::vector<char>& mask) {
  ComplexField hu(u.grid());
  apply_hamiltonian(u, links, v, hu);
  CompensatedSum num;
  CompensatedSum den;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!mask[k]) continue;
    const Complex f = detail::nonlinearity(u[k], p);
    num.add((std::conj(f) * hu[k]).real());
    den.add(std::norm(f));
  }
  if (den.value() == 0.0) throw std::invalid_argument("multiplier undefined for a vanishing field");
  return num.value() / den.value();
}

// ||H u - lambda |u|^{p-2} u||_2 / ||u||_2 over the masked nodes.
inline double el_residual(const ComplexField& u, const LinkPhases& links, const PotentialSample& v, double lambda,
                          double p, const std::vector<char>& mask) {
  ComplexField hu(u.grid());
  apply_hamiltonian(u, links, v, hu);
  CompensatedSum r;
  CompensatedSum n;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!mask[k]) continue;
    r.add(std::norm(hu[k] - lambda * detail::nonlinearity(u[k], p)));
    n.add(std::norm(u[k]));
  }
  if (n.value() == 0.0) throw std::invalid_argument("residual undefined for a vanishing field");
  return std::sqrt(r.value() / n.value());
}

inline double el_residual(const ComplexField& u, const LinkPhases& links, const PotentialSample& v, double lambda,
                          double p) {
  return el_residual(u, links, v, lambda, p, interior_mask(u.grid()));
}

}  // namespace magnls
