#pragma once
// Limit problems along divergent lattice sequences and the penalty comparison
// kappa_inf > kappa that rules out loss of mass at infinity.
//
// Only finitely many lattice rays can be probed, so a passing report is a
// surrogate for the condition over every divergent sequence, never a proof.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "magnls/energy.hpp"
#include "magnls/gauge.hpp"
#include "magnls/grid.hpp"
#include "magnls/potential.hpp"
#include "magnls/solver.hpp"

namespace magnls {

using LatticeDirection = Vec<long>;

class ShiftSequence {
 public:
  ShiftSequence(const DiscretizationSpec& xi, std::vector<Vec<double>> points, double horizon)
      : points_(std::move(points)), horizon_(horizon) {
    if (points_.size() < 2) throw std::invalid_argument("a shift sequence needs at least two points");
    const int n = xi.dimension();
    double prev = -1.0;
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Vec<double>& y = points_[k];
      for (int d = 0; d < n; ++d) {
        const double q = y[d] / xi.step();
        if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, std::abs(q))) {
          throw std::invalid_argument("shift point is not on the lattice");
        }
      }
      const double r = norm(y, n);
      if (r < prev) throw std::invalid_argument("shift points must have nondecreasing norm");
      prev = r;
      for (std::size_t m = 0; m < k; ++m) {
        if (points_[m] == y) throw std::invalid_argument("shift points must be pairwise distinct");
      }
    }
    if (prev < horizon) throw std::invalid_argument("last shift point does not reach the declared horizon");
    dimension_ = n;
  }

  // K points s m_k d along an integer direction d, evenly spread up to the horizon.
  static ShiftSequence ray(const DiscretizationSpec& xi, const LatticeDirection& d, int count, double horizon) {
    if (count < 2) throw std::invalid_argument("a ray needs at least two points");
    double len = 0.0;
    for (int i = 0; i < xi.dimension(); ++i) len += static_cast<double>(d[i] * d[i]);
    len = std::sqrt(len);
    if (len == 0.0) throw std::invalid_argument("ray direction must be nonzero");
    const double unit = xi.step() * len;
    std::vector<Vec<double>> pts;
    long last = 0;
    for (int k = 0; k < count; ++k) {
      long m = static_cast<long>(std::ceil(horizon * (k + 1) / (count * unit) - 1e-12));
      m = std::max(m, last + 1);
      last = m;
      Vec<long> idx{0, 0, 0};
      for (int i = 0; i < xi.dimension(); ++i) idx[i] = m * d[i];
      pts.push_back(xi.point(idx));
    }
    return ShiftSequence(xi, std::move(pts), horizon);
  }

  const std::vector<Vec<double>>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double horizon() const { return horizon_; }
  int dimension() const { return dimension_; }

  static double norm(const Vec<double>& y, int n) {
    double s = 0.0;
    for (int d = 0; d < n; ++d) s += y[d] * y[d];
    return std::sqrt(s);
  }

 private:
  std::vector<Vec<double>> points_;
  double horizon_;
  int dimension_ = 0;
};

// Default rays: +-e_i and all (+-1, ..., +-1).
inline std::vector<LatticeDirection> default_rays(int n) {
  std::vector<LatticeDirection> rays;
  for (int i = 0; i < n; ++i) {
    for (long s : {1L, -1L}) {
      LatticeDirection d{0, 0, 0};
      d[i] = s;
      rays.push_back(d);
    }
  }
  for (int mask = 0; mask < (1 << n); ++mask) {
    LatticeDirection d{0, 0, 0};
    for (int i = 0; i < n; ++i) d[i] = (mask >> i) & 1 ? -1 : 1;
    rays.push_back(d);
  }
  return rays;
}

struct ElectricLimit {
  PotentialSample values;
  double oscillation = 0.0;  // max over nodes of (max - min) over the tail
  std::size_t tail_start = 0;
};

// liminf_k V(x + y_k), realized as the minimum over k >= tail_start (default K/2).
inline ElectricLimit limit_electric(const ElectricPotential& v, const ShiftSequence& ys, const GridSpec& window,
                                    std::optional<std::size_t> tail_start = std::nullopt) {
  const std::size_t start = tail_start.value_or(ys.size() / 2);
  if (start >= ys.size()) throw std::invalid_argument("tail start beyond the sequence");
  ElectricLimit out{PotentialSample{window, std::vector<double>(window.size(), 0.0)}, 0.0, start};
  const int n = window.dimension();
  for (std::size_t k = 0; k < window.size(); ++k) {
    const Vec<double> x = window.position(k);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = start; i < ys.size(); ++i) {
      Vec<double> p = x;
      for (int d = 0; d < n; ++d) p[d] += ys.points()[i][d];
      const double val = v.is_singular_at(p) ? 0.0 : v(p);
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    out.values.values[k] = lo;
    out.oscillation = std::max(out.oscillation, hi - lo);
  }
  return out;
}

struct LimitProblem {
  GridSpec window;
  MagneticPotential a_inf;          // closed form x -> A_{y_last}(x + y_last)
  std::vector<Vec<double>> a_samples;
  std::optional<ElectricLimit> v_inf;
  std::vector<double> defects;      // sup distance between consecutive iterates
  double defect = 0.0;
  std::size_t run_length = 0;       // length of the final nonincreasing defect run
  bool non_cauchy = false;
  double b_sup = 0.0;
  std::optional<double> kappa_inf;
  std::optional<GroundStateResult> ground;
};

inline std::vector<Vec<double>> sample_potential(const MagneticPotential& a, const GridSpec& g) {
  std::vector<Vec<double>> s(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) s[k] = a(g.position(k));
  return s;
}

// A_{y_k}(. + y_k) on the window for every k; a Cauchy tail of at least `min_run`
// nonincreasing defects is required, otherwise the problem is flagged.
inline LimitProblem limit_potential(const MagneticPotential& a, const ShiftSequence& ys, const GridSpec& window,
                                    int order = kDefaultQuadratureOrder, std::size_t min_run = 3) {
  if (a.has_singular_set()) throw GaugeError("limit potentials need a potential without singular set");
  std::vector<Vec<double>> prev;
  std::optional<MagneticPotential> last;
  LimitProblem lp{window, MagneticPotential::zero(window.dimension()), {}, std::nullopt, {}, 0.0, 0, false, 0.0,
                  std::nullopt, std::nullopt};
  const int n = window.dimension();
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const MagneticPotential ak = corrected_potential(GaugePhase(a, ys.points()[k], order), true);
    std::vector<Vec<double>> cur = sample_potential(ak, window);
    if (!prev.empty()) {
      double d = 0.0;
      for (std::size_t i = 0; i < cur.size(); ++i) {
        double s = 0.0;
        for (int m = 0; m < n; ++m) s += (cur[i][m] - prev[i][m]) * (cur[i][m] - prev[i][m]);
        d = std::max(d, std::sqrt(s));
      }
      lp.defects.push_back(d);
    }
    prev = std::move(cur);
    last = ak;
  }
  lp.a_inf = *last;
  lp.a_samples = std::move(prev);
  lp.defect = lp.defects.back();
  // Nonincreasing run ending at the last defect; equality within round-off counts.
  std::size_t run = 1;
  for (std::size_t i = lp.defects.size() - 1; i > 0; --i) {
    const double tol = 1e-12 * std::max(1.0, lp.defects[i - 1]);
    if (lp.defects[i] <= lp.defects[i - 1] + tol) {
      ++run;
    } else {
      break;
    }
  }
  lp.run_length = run;
  lp.non_cauchy = run < std::min(min_run, lp.defects.size());
  lp.b_sup = b_sup_norm(a, window);
  return lp;
}

// Largest difference quotient |A(x) - A(x')| / |x - x'| over grid edges and a
// seeded sample of node pairs.
inline double lipschitz_estimate(const std::vector<Vec<double>>& samples, const GridSpec& g, std::size_t pairs = 20000,
                                 std::uint64_t seed = 7) {
  const int n = g.dimension();
  auto quotient = [&](std::size_t a, std::size_t b) {
    const Vec<double> xa = g.position(a);
    const Vec<double> xb = g.position(b);
    double num = 0.0;
    double den = 0.0;
    for (int m = 0; m < n; ++m) {
      num += (samples[a][m] - samples[b][m]) * (samples[a][m] - samples[b][m]);
      den += (xa[m] - xb[m]) * (xa[m] - xb[m]);
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
  };
  double worst = 0.0;
  for (int j = 0; j < n; ++j) for_each_edge(g, j, [&](std::size_t a, std::size_t b) { worst = std::max(worst, quotient(a, b)); });
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  for (std::size_t i = 0; i < pairs; ++i) worst = std::max(worst, quotient(pick(rng), pick(rng)));
  return worst;
}

inline Problem make_limit_problem(const LimitProblem& lp, LinkRule rule = LinkRule::Midpoint) {
  if (!lp.v_inf) throw std::invalid_argument("limit problem has no electric limit");
  return Problem{LinkPhases::build(lp.a_inf, lp.window, rule), lp.v_inf->values, interior_mask(lp.window),
                 std::nullopt};
}

inline double kappa_infinity(LimitProblem& lp, const SolveOptions& opt, LinkRule rule = LinkRule::Midpoint) {
  GroundStateResult r = minimize_ground_state(make_limit_problem(lp, rule), opt);
  lp.kappa_inf = r.kappa;
  lp.ground = std::move(r);
  return *lp.kappa_inf;
}

struct PenaltyOptions {
  std::vector<LatticeDirection> rays;  // empty: default_rays
  int count = 8;                       // K points per ray
  double horizon = 0.0;                // 0: 0.8 L * scale_out
  double scale_out = 8.0;
  double check_radius = 0.0;           // 0: L/2; pointwise conditions use |x| <= radius
  double cutoff = 1e-6;                // relative cutoff for {v != 0}
  double phase_tolerance = 1e-8;
  double equality_tolerance = 1e-4;
  int order = kDefaultQuadratureOrder;
  LinkRule links = LinkRule::Midpoint;
  SolveOptions solve;
};

struct RayReport {
  LatticeDirection direction{0, 0, 0};
  double defect = 0.0;
  bool non_cauchy = false;
  double kappa_inf = 0.0;
  double gap = 0.0;
  double cond_ii_margin = 0.0;
  double cond_B_margin = 0.0;
  double rostock_margin = 0.0;
  bool positive_ground_state = false;
  double v_inf_oscillation = 0.0;
  std::string solve_status;
  bool failed = false;
  std::string error;
};

struct PenaltyReport {
  double kappa = 0.0;
  double mass_inside = 0.0;  // fraction of the p-mass of the minimizer in |x| <= check radius
  double check_radius = 0.0;
  double horizon = 0.0;
  std::vector<RayReport> rays;
  std::optional<GroundStateResult> ground;

  bool penalty_holds() const {
    if (rays.empty()) return false;
    for (const RayReport& r : rays) {
      if (r.failed || !(r.gap > 0.0) || !(r.cond_ii_margin > 0.0)) return false;
    }
    return true;
  }
  bool equality_everywhere(double tol) const {
    if (rays.empty()) return false;
    for (const RayReport& r : rays) {
      if (r.failed || !(std::abs(r.gap) < tol)) return false;
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const RayReport& r : rays) {
      nlohmann::json dir = nlohmann::json::array();
      const int n = ground ? ground->u.grid().dimension() : kMaxDim;
      for (int d = 0; d < n; ++d) dir.push_back(r.direction[d]);
      nlohmann::json j = {{"direction", dir},
                          {"defect", r.defect},
                          {"non_cauchy", r.non_cauchy},
                          {"kappa_inf", r.kappa_inf},
                          {"gap", r.gap},
                          {"cond_ii_margin", r.cond_ii_margin},
                          {"cond_B_margin", r.cond_B_margin},
                          {"rostock_margin", r.rostock_margin},
                          {"positive_ground_state", r.positive_ground_state},
                          {"v_inf_oscillation", r.v_inf_oscillation},
                          {"solve_status", r.solve_status}};
      if (r.failed) {
        j["failed"] = true;
        j["error"] = r.error;
      }
      rs.push_back(std::move(j));
    }
    return {{"kappa", kappa},
            {"mass_inside", mass_inside},
            {"check_radius", check_radius},
            {"horizon", horizon},
            {"penalty_holds", penalty_holds()},
            {"rays", rs}};
  }
};

namespace detail {

// Im(grad v / v) by forward differences; zero outside the support cut.
inline std::vector<Vec<double>> phase_gradient(const ComplexField& v, const std::vector<char>& support) {
  const GridSpec& g = v.grid();
  const double inv_h = 1.0 / g.spacing();
  std::vector<Vec<double>> out(g.size(), Vec<double>{0.0, 0.0, 0.0});
  for (int j = 0; j < g.dimension(); ++j) {
    for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
      if (support[a]) out[a][j] = (std::conj(v[a]) * (v[b] - v[a]) * inv_h).imag() / std::norm(v[a]);
    });
    for_each_last_slab(g, j, [&](std::size_t a) {
      if (support[a]) out[a][j] = (std::conj(v[a]) * (-v[a]) * inv_h).imag() / std::norm(v[a]);
    });
  }
  return out;
}

inline double dot(const Vec<double>& a, const Vec<double>& b, int n) {
  double s = 0.0;
  for (int d = 0; d < n; ++d) s += a[d] * b[d];
  return s;
}

}  // namespace detail

inline PenaltyReport penalty_report(const MagneticPotential& a_input, const ElectricPotential& v,
                                    const DiscretizationSpec& xi, const GridSpec& g, PenaltyOptions opt) {
  const int n = g.dimension();
  if (xi.dimension() != n) throw std::invalid_argument("lattice and grid dimensions differ");
  const MagneticPotential a = pregauge(a_input, opt.order);
  if (opt.rays.empty()) opt.rays = default_rays(n);
  const double horizon = opt.horizon > 0.0 ? opt.horizon : 0.8 * g.half_width() * opt.scale_out;
  const double radius = opt.check_radius > 0.0 ? opt.check_radius : 0.5 * g.half_width();

  PenaltyReport rep;
  rep.horizon = horizon;
  rep.check_radius = radius;
  GroundStateResult main = minimize_ground_state(make_problem(a, v, g, opt.links), opt.solve);
  rep.kappa = main.kappa;
  {
    CompensatedSum inside;
    CompensatedSum total;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec<double> x = g.position(k);
      const double m = std::pow(std::abs(main.u[k]), opt.solve.p);
      total.add(m);
      if (detail::dot(x, x, n) <= radius * radius) inside.add(m);
    }
    rep.mass_inside = inside.value() / total.value();
  }

  const std::vector<Vec<double>> a_here = sample_potential(a, g);
  const PotentialSample v_here = sample_electric(v, g);
  std::vector<char> ball(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    ball[k] = detail::dot(x, x, n) <= radius * radius && !v.is_singular_at(x);
  }

  for (const LatticeDirection& dir : opt.rays) {
    RayReport rr;
    rr.direction = dir;
    try {
      const ShiftSequence ys = ShiftSequence::ray(xi, dir, opt.count, horizon);
      LimitProblem lp = limit_potential(a, ys, g, opt.order);
      lp.v_inf = limit_electric(v, ys, g);
      rr.defect = lp.defect;
      rr.non_cauchy = lp.non_cauchy;
      rr.v_inf_oscillation = lp.v_inf->oscillation;
      rr.kappa_inf = kappa_infinity(lp, opt.solve, opt.links);
      rr.gap = rr.kappa_inf - rep.kappa;
      rr.solve_status = lp.ground->status;

      const ComplexField& w = lp.ground->u;
      double vmax = 0.0;
      std::size_t kmax = 0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (std::abs(w[k]) > vmax) {
          vmax = std::abs(w[k]);
          kmax = k;
        }
      }
      std::vector<char> support(g.size(), 0);
      for (std::size_t k = 0; k < g.size(); ++k) support[k] = std::abs(w[k]) > opt.cutoff * vmax;
      const std::vector<Vec<double>> im = detail::phase_gradient(w, support);
      const Complex ref = std::conj(w[kmax]) / vmax;
      double phase_var = 0.0;
      double v_inf_const = lp.v_inf->values.infimum();

      double cond_ii = std::numeric_limits<double>::infinity();
      double cond_b = std::numeric_limits<double>::infinity();
      double rostock = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (support[k]) phase_var = std::max(phase_var, std::abs(std::arg(w[k] * ref)));
        if (!ball[k]) continue;
        const double lhs = detail::dot(a_here[k], a_here[k], n) + v_here.values[k];
        const double rhs = detail::dot(lp.a_samples[k], lp.a_samples[k], n) + lp.v_inf->values.values[k];
        cond_ii = std::min(cond_ii, rhs - lhs);
        rostock = std::min(rostock, v_inf_const - lhs);
        if (support[k]) {
          const double lb = lhs + 2.0 * detail::dot(a_here[k], im[k], n);
          const double rb = rhs + 2.0 * detail::dot(lp.a_samples[k], im[k], n);
          cond_b = std::min(cond_b, rb - lb);
        }
      }
      rr.cond_ii_margin = cond_ii;
      rr.cond_B_margin = cond_b;
      rr.rostock_margin = rostock;
      rr.positive_ground_state = phase_var < opt.phase_tolerance;
    } catch (const std::exception& e) {
      rr.failed = true;
      rr.error = e.what();
    }
    rep.rays.push_back(std::move(rr));
  }
  rep.ground = std::move(main);
  return rep;
}

}  // namespace magnls
