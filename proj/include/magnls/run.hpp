#pragma once
// Mode executors behind the `magnls` command line.
//
// Every mode returns a result document and an exit status; the caller writes
// result.json. Diagnostics go to the event stream as one JSON object per line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "magnls/config.hpp"
#include "magnls/energy.hpp"
#include "magnls/field_io.hpp"
#include "magnls/gauge.hpp"
#include "magnls/infinity.hpp"
#include "magnls/profiles.hpp"
#include "magnls/random_fields.hpp"
#include "magnls/solver.hpp"

namespace magnls {

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInvalid = 2, kExitNotConverged = 3 };

class EventLog {
 public:
  explicit EventLog(std::ostream* os) : os_(os), start_(std::chrono::steady_clock::now()) {}

  void emit(const std::string& event, json fields = json::object()) const {
    if (!os_) return;
    fields["event"] = event;
    fields["elapsed_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    (*os_) << fields.dump() << '\n';
    os_->flush();
  }

 private:
  std::ostream* os_;
  std::chrono::steady_clock::time_point start_;
};

struct RunOutcome {
  int exit_code = kExitOk;
  json result;
};

// True when every number in the document is finite.
inline bool all_finite(const json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_array() || j.is_object()) {
    for (const json& e : j) {
      if (!all_finite(e)) return false;
    }
  }
  return true;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "iter,energy,residual,step\n";
  char buf[128];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iteration, r.energy, r.residual, r.step);
    os << buf;
  }
}

namespace detail {

inline json vec_json(const Vec<double>& v, int n) {
  json a = json::array();
  for (int d = 0; d < n; ++d) a.push_back(v[d]);
  return a;
}

inline json grid_json(const GridSpec& g) {
  return {{"N", g.dimension()}, {"L", g.half_width()}, {"M", g.points()}, {"h", g.spacing()}};
}

inline std::string indexed(const std::string& stem, std::size_t k) {
  std::ostringstream ss;
  ss << stem << '_' << std::setw(3) << std::setfill('0') << k << ".field";
  return ss.str();
}

inline double lattice_step_of(const json& block, const GridSpec& g, const std::string& where) {
  const double step = finite_number(block, "lattice_step", g.spacing(), where);
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(g.dimension(), step);
  if (!xi.compatible_with(g)) throw ConfigError(where + ".lattice_step must be a multiple of the grid spacing");
  return step;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// solve

inline RunOutcome run_solve(const RunConfig& c, const EventLog& log) {
  const Problem pr = make_problem(*c.a, *c.v, c.grid, c.links);
  log.emit("solve_start", {{"A", c.a->describe()}, {"p", c.solve.p}, {"restarts", c.solve.restarts}});
  const GroundStateResult r = minimize_ground_state(pr, c.solve);
  log.emit("solve_done", {{"kappa", r.kappa}, {"residual", r.residual}, {"status", r.status}});

  RunOutcome out;
  out.result = {{"mode", "solve"}, {"config", c.raw}, {"ground_state", r.to_json()}};
  out.result["energy"] = functional_J(r.u, pr.links, pr.potential, true).to_json();
  if (!c.output_dir.empty()) {
    write_trace_csv(c.output_dir / "trace.csv", r.trace);
    if (c.dump_fields) {
      save_field(c.output_dir / "minimizer.field", r.u, "minimizer");
      if (r.lambda > 0.0) save_field(c.output_dir / "solution.field", rescale_to_equation(r), "solution");
    }
  }
  if (r.diamagnetic_violations > 0 || !r.history_monotone()) {
    log.emit("invariant_failure", {{"diamagnetic_violations", r.diamagnetic_violations},
                                   {"history_monotone", r.history_monotone()}});
    out.exit_code = kExitInternal;
  } else if (r.status != "converged") {
    out.exit_code = kExitNotConverged;
  }
  return out;
}

// ---------------------------------------------------------------------------
// penalty

inline PenaltyOptions parse_penalty(const RunConfig& c) {
  const std::string w = "penalty";
  const json j = c.raw.value("penalty", json::object());
  detail::allow_keys(j, w,
                     {"rays", "count", "horizon", "scale_out", "check_radius", "cutoff", "lattice_step",
                      "equality_tolerance", "phase_tolerance"});
  const int n = c.dimension();
  PenaltyOptions o;
  if (j.contains("rays")) {
    if (!j.at("rays").is_array() || j.at("rays").empty()) throw ConfigError("penalty.rays must be a nonempty array");
    for (const json& r : j.at("rays")) {
      if (!r.is_array() || static_cast<int>(r.size()) != n) {
        throw ConfigError("each penalty ray must be an array of " + std::to_string(n) + " integers");
      }
      LatticeDirection d{0, 0, 0};
      bool nonzero = false;
      for (int i = 0; i < n; ++i) {
        if (!r[i].is_number_integer()) throw ConfigError("penalty rays hold integer lattice directions");
        d[i] = r[i].get<long>();
        nonzero = nonzero || d[i] != 0;
      }
      if (!nonzero) throw ConfigError("penalty rays must be nonzero");
      o.rays.push_back(d);
    }
  }
  o.count = detail::get_or<int>(j, "count", o.count, w);
  if (o.count < 2) throw ConfigError("penalty.count must be at least 2");
  o.horizon = detail::finite_number(j, "horizon", o.horizon, w);
  o.scale_out = detail::finite_number(j, "scale_out", o.scale_out, w);
  o.check_radius = detail::finite_number(j, "check_radius", o.check_radius, w);
  o.cutoff = detail::finite_number(j, "cutoff", o.cutoff, w);
  o.equality_tolerance = detail::finite_number(j, "equality_tolerance", o.equality_tolerance, w);
  o.phase_tolerance = detail::finite_number(j, "phase_tolerance", o.phase_tolerance, w);
  if (o.horizon < 0.0 || !(o.scale_out > 0.0) || o.check_radius < 0.0 || !(o.cutoff > 0.0)) {
    throw ConfigError("penalty: horizon, scale_out, check_radius and cutoff must be positive");
  }
  o.order = c.quadrature_order;
  o.links = c.links;
  o.solve = c.solve;
  return o;
}

inline RunOutcome run_penalty(const RunConfig& c, const EventLog& log) {
  const PenaltyOptions opt = parse_penalty(c);
  const json block = c.raw.value("penalty", json::object());
  const double step = detail::lattice_step_of(block, c.grid, "penalty");
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(c.dimension(), step);
  log.emit("penalty_start", {{"rays", opt.rays.empty() ? default_rays(c.dimension()).size() : opt.rays.size()}});
  const PenaltyReport rep = penalty_report(*c.a, *c.v, xi, c.grid, opt);
  log.emit("penalty_done", {{"kappa", rep.kappa}, {"penalty_holds", rep.penalty_holds()}});

  RunOutcome out;
  out.result = {{"mode", "penalty"}, {"config", c.raw}, {"report", rep.to_json()}};
  out.result["report"]["equality_everywhere"] = rep.equality_everywhere(opt.equality_tolerance);
  out.result["report"]["surrogate"] = "finite set of lattice rays; not a proof for every divergent sequence";
  out.result["ground_state"] = rep.ground->to_json();
  if (!c.output_dir.empty()) {
    write_trace_csv(c.output_dir / "trace.csv", rep.ground->trace);
    if (c.dump_fields) save_field(c.output_dir / "minimizer.field", rep.ground->u, "minimizer");
  }
  bool solved = rep.ground->status == "converged";
  for (const RayReport& r : rep.rays) {
    if (r.failed || r.solve_status != "converged") {
      log.emit("ray_flagged", {{"error", r.error}, {"status", r.solve_status}});
      solved = false;
    }
  }
  if (!solved) out.exit_code = kExitNotConverged;
  return out;
}

// ---------------------------------------------------------------------------
// critical

struct CriticalConfig {
  double lambda_ab = 0.0;
  double mu = 0.0;
  CriticalOptions options;
  bool reference = true;
};

inline CriticalConfig parse_critical(const RunConfig& c) {
  const std::string w = "critical";
  const json j = c.raw.value("critical", json::object());
  detail::allow_keys(j, w, {"lambda_ab", "mu", "form", "hardy_axes", "reference"});
  if (c.dimension() < 3) throw ConfigError("critical mode needs grid.N = 3");
  CriticalConfig cc;
  cc.lambda_ab = detail::finite_number(j, "lambda_ab", 0.0, w);
  cc.mu = detail::finite_number(j, "mu", 0.0, w);
  if (!(cc.lambda_ab * cc.lambda_ab <= cc.mu && cc.mu < 0.25)) {
    std::ostringstream ss;
    ss << "critical mode needs lambda_ab^2 <= mu < 1/4; got lambda_ab^2 = " << cc.lambda_ab * cc.lambda_ab
       << ", mu = " << cc.mu;
    throw ConfigError(ss.str());
  }
  const std::string form = detail::get_or<std::string>(j, "form", "printed", w);
  if (form != "printed" && form != "rotational") throw ConfigError("critical.form must be printed or rotational");
  cc.options.form = form == "printed" ? AharonovBohmForm::Printed : AharonovBohmForm::Rotational;
  if (j.contains("hardy_axes")) {
    cc.options.hardy_axes.clear();
    for (const json& a : j.at("hardy_axes")) {
      if (!a.is_number_integer() || a.get<int>() < 1 || a.get<int>() > c.dimension()) {
        throw ConfigError("critical.hardy_axes must hold 1-based axis numbers");
      }
      cc.options.hardy_axes.push_back(a.get<int>() - 1);
    }
    if (cc.options.hardy_axes.empty()) throw ConfigError("critical.hardy_axes must be nonempty");
  }
  cc.options.links = c.links;
  cc.reference = detail::get_or<bool>(j, "reference", true, w);
  return cc;
}

inline RunOutcome run_critical(const RunConfig& c, const EventLog& log) {
  const CriticalConfig cc = parse_critical(c);
  log.emit("critical_start", {{"lambda_ab", cc.lambda_ab}, {"mu", cc.mu}, {"p", critical_exponent(c.dimension())}});
  const CriticalResult r = solve_critical(cc.lambda_ab, cc.mu, c.grid, c.solve, cc.options);
  log.emit("critical_done", {{"kappa", r.ground.kappa}, {"status", r.ground.status}, {"width", r.width}});

  RunOutcome out;
  const int n = c.dimension();
  json res = {{"lambda_ab", r.lambda_ab},
              {"mu", r.mu},
              {"kappa", r.ground.kappa},
              {"positive", r.positive},
              {"boundary_mass", r.boundary_mass},
              {"boundary_dominated", r.boundary_dominated},
              {"center_of_mass", detail::vec_json(r.center_of_mass, n)},
              {"width", r.width},
              {"lattice_concentrated", r.lattice_concentrated}};
  if (cc.reference) {
    const SobolevEstimate s = talenti_sobolev_oracle(n, c.grid);
    res["sobolev"] = {{"ball_quotient", s.ball_quotient},
                      {"estimate", s.estimate},
                      {"truncation_error", s.truncation_error},
                      {"radius", s.radius}};
    res["margin"] = s.estimate - r.ground.kappa;
    res["below_sobolev"] = r.ground.kappa < s.estimate;
  }
  out.result = {{"mode", "critical"}, {"config", c.raw}, {"critical", res}, {"ground_state", r.ground.to_json()}};
  if (!c.output_dir.empty()) {
    write_trace_csv(c.output_dir / "trace.csv", r.ground.trace);
    if (c.dump_fields) save_field(c.output_dir / "minimizer.field", r.ground.u, "minimizer");
  }
  if (r.boundary_dominated) log.emit("boundary_dominated", {{"boundary_mass", r.boundary_mass}});
  if (!r.positive || r.ground.diamagnetic_violations > 0 || !r.ground.history_monotone()) {
    out.exit_code = kExitInternal;
  } else if (r.ground.status != "converged") {
    out.exit_code = kExitNotConverged;
  }
  return out;
}

// ---------------------------------------------------------------------------
// gauge-check

struct GaugeCheckOptions {
  int fields = 20;
  int shifts = 10;
  int centers = 16;
  std::uint64_t seed = 7;
  double width = 0.0;        // 0: L/10
  double shift_radius = 0.0; // 0: L/4
  double lattice_step = 0.0;
  double covariance_tolerance = 1e-12;
  bool refine = false;
};

struct GaugeCheckReport {
  double covariance_defect = 0.0;  // max relative |E_A(g_y u) - E_{A_y(.+y)}(u)| / E_A(u)
  std::size_t covariance_pairs = 0;
  std::size_t diamagnetic_links = 0;
  std::size_t diamagnetic_violations = 0;
  double diamagnetic_min_slack = std::numeric_limits<double>::infinity();
  bool diamagnetic_energy_holds = true;
  double b_sup = 0.0;
  double poincare_margin = std::numeric_limits<double>::infinity();  // min of bound - |A_y(x)|
  double poincare_slack = 0.0;                                       // largest slack used
  std::size_t poincare_samples = 0;
  std::size_t poincare_violations = 0;
  double pointwise_max_violation = -std::numeric_limits<double>::infinity();
  double pointwise_consistency = 0.0;
  std::optional<double> refined_defect;

  bool exact_invariants_hold(bool exact_links, double tol) const {
    return diamagnetic_violations == 0 && diamagnetic_energy_holds && poincare_violations == 0 &&
           (!exact_links || covariance_defect <= tol);
  }

  json to_json() const {
    json j = {{"covariance_defect", covariance_defect},
              {"covariance_pairs", covariance_pairs},
              {"diamagnetic_links", diamagnetic_links},
              {"diamagnetic_violations", diamagnetic_violations},
              {"diamagnetic_min_slack", std::isfinite(diamagnetic_min_slack) ? diamagnetic_min_slack : 0.0},
              {"diamagnetic_energy_holds", diamagnetic_energy_holds},
              {"b_sup", b_sup},
              {"poincare_margin", std::isfinite(poincare_margin) ? poincare_margin : 0.0},
              {"poincare_slack", poincare_slack},
              {"poincare_samples", poincare_samples},
              {"poincare_violations", poincare_violations},
              {"pointwise_max_violation", std::isfinite(pointwise_max_violation) ? pointwise_max_violation : 0.0},
              {"pointwise_consistency_defect", pointwise_consistency}};
    if (refined_defect) {
      j["refined_covariance_defect"] = *refined_defect;
      j["refinement_ratio"] = *refined_defect > 0.0 ? covariance_defect / *refined_defect : 0.0;
    }
    return j;
  }
};

namespace detail {

inline Vec<double> random_lattice_point(std::mt19937_64& rng, const DiscretizationSpec& xi, double radius, int n) {
  const long kmax = static_cast<long>(std::floor(radius / xi.step()));
  std::uniform_int_distribution<long> pick(-kmax, kmax);
  Vec<long> k{0, 0, 0};
  for (int d = 0; d < n; ++d) k[d] = pick(rng);
  return xi.point(k);
}

// Worst relative covariance defect over random fields and lattice shifts on g.
inline double covariance_defect(const MagneticPotential& a, const GridSpec& g, LinkRule rule, int order,
                                const GaugeCheckOptions& o, std::size_t* pairs = nullptr) {
  const int n = g.dimension();
  const double step = o.lattice_step > 0.0 ? o.lattice_step : g.spacing();
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(n, step);
  const double width = o.width > 0.0 ? o.width : g.half_width() / 10.0;
  const double reach = o.shift_radius > 0.0 ? o.shift_radius : g.half_width() / 4.0;
  std::mt19937_64 rng(o.seed);
  std::vector<Vec<double>> ys;
  for (int s = 0; s < o.shifts; ++s) ys.push_back(random_lattice_point(rng, xi, reach, n));
  const LinkPhases base = LinkPhases::build(a, g, rule);
  std::vector<LinkPhases> moved;
  std::vector<GaugePhase> phases;
  for (const Vec<double>& y : ys) {
    phases.emplace_back(a, y, order);
    moved.push_back(LinkPhases::build(corrected_potential(phases.back(), true), g, rule));
  }
  double worst = 0.0;
  for (int f = 0; f < o.fields; ++f) {
    const ComplexField u = localized_random_field(g, rng, {0.0, 0.0, 0.0}, width);
    const double e = energy_EA(u, base);
    for (std::size_t s = 0; s < ys.size(); ++s) {
      const double lhs = energy_EA(magnetic_shift(u, ys[s], phases[s]), base);
      const double rhs = energy_EA(u, moved[s]);
      worst = std::max(worst, std::abs(lhs - rhs) / e);
      if (pairs) ++*pairs;
    }
  }
  return worst;
}

}  // namespace detail

inline GaugeCheckOptions parse_gauge_check(const RunConfig& c) {
  const std::string w = "gauge_check";
  const json j = c.raw.value("gauge_check", json::object());
  detail::allow_keys(j, w,
                     {"fields", "shifts", "centers", "seed", "width", "shift_radius", "lattice_step",
                      "covariance_tolerance", "refine"});
  GaugeCheckOptions o;
  o.fields = detail::get_or<int>(j, "fields", o.fields, w);
  o.shifts = detail::get_or<int>(j, "shifts", o.shifts, w);
  o.centers = detail::get_or<int>(j, "centers", o.centers, w);
  o.seed = detail::get_or<std::uint64_t>(j, "seed", o.seed, w);
  o.width = detail::finite_number(j, "width", o.width, w);
  o.shift_radius = detail::finite_number(j, "shift_radius", o.shift_radius, w);
  o.lattice_step = detail::lattice_step_of(j, c.grid, w);
  o.covariance_tolerance = detail::finite_number(j, "covariance_tolerance", o.covariance_tolerance, w);
  o.refine = detail::get_or<bool>(j, "refine", o.refine, w);
  if (o.fields < 1 || o.shifts < 1 || o.centers < 1) throw ConfigError("gauge_check counts must be positive");
  if (o.width < 0.0 || o.shift_radius < 0.0) throw ConfigError("gauge_check.width and shift_radius must be >= 0");
  return o;
}

// Covariance, diamagnetic, Poincare-bound and pointwise-bound suites on seeded random fields.
inline GaugeCheckReport gauge_check(const MagneticPotential& a, const GridSpec& g, LinkRule rule, int order,
                                    const GaugeCheckOptions& o) {
  GaugeCheckReport rep;
  const int n = g.dimension();
  rep.covariance_defect = detail::covariance_defect(a, g, rule, order, o, &rep.covariance_pairs);
  if (o.refine) {
    const GridSpec fine(n, g.half_width(), 2 * g.points() - 1);
    rep.refined_defect = detail::covariance_defect(a, fine, rule, order, o);
  }

  const LinkPhases links = LinkPhases::build(a, g, rule);
  std::mt19937_64 rng(o.seed + 1);
  const double width = o.width > 0.0 ? o.width : g.half_width() / 10.0;
  for (int f = 0; f < o.fields; ++f) {
    const ComplexField u = f % 2 == 0 ? localized_random_field(g, rng, {0.0, 0.0, 0.0}, width)
                                      : white_noise_field(g, rng);
    const DiamagneticReport d = diamagnetic_check(u, links);
    rep.diamagnetic_links += d.links_checked;
    rep.diamagnetic_violations += d.violations;
    rep.diamagnetic_min_slack = std::min(rep.diamagnetic_min_slack, d.min_slack);
    rep.diamagnetic_energy_holds = rep.diamagnetic_energy_holds && d.holds;
    if (f % 2 == 0) {
      const PointwiseBoundsReport pb = pointwise_bounds_check(u, a);
      rep.pointwise_max_violation = std::max(rep.pointwise_max_violation, pb.max_violation);
      rep.pointwise_consistency = std::max(rep.pointwise_consistency, pb.consistency_defect);
    }
  }

  rep.b_sup = b_sup_norm(a, g);
  const double step = o.lattice_step > 0.0 ? o.lattice_step : g.spacing();
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(n, step);
  for (int s = 0; s < o.centers; ++s) {
    const Vec<double> y = detail::random_lattice_point(rng, xi, g.half_width(), n);
    const GaugePhase phase(a, y, order);
    const MagneticPotential ay = corrected_potential(phase);
    const double slack = std::max(1e-8, corrected_potential_error_bound(phase, g));
    rep.poincare_slack = std::max(rep.poincare_slack, slack);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec<double> x = g.position(k);
      const Vec<double> av = ay(x);
      double a2 = 0.0;
      double r2 = 0.0;
      for (int d = 0; d < n; ++d) {
        a2 += av[d] * av[d];
        r2 += (x[d] - y[d]) * (x[d] - y[d]);
      }
      const double margin = rep.b_sup * std::sqrt(r2) + slack - std::sqrt(a2);
      rep.poincare_margin = std::min(rep.poincare_margin, margin);
      if (margin < 0.0) ++rep.poincare_violations;
      ++rep.poincare_samples;
    }
  }
  return rep;
}

inline RunOutcome run_gauge_check(const RunConfig& c, const EventLog& log) {
  const GaugeCheckOptions o = parse_gauge_check(c);
  log.emit("gauge_check_start", {{"A", c.a->describe()}, {"links", to_string(c.links)}});
  const GaugeCheckReport rep = gauge_check(*c.a, c.grid, c.links, c.quadrature_order, o);
  const bool exact = c.links == LinkRule::Exact;
  const bool ok = rep.exact_invariants_hold(exact, o.covariance_tolerance);
  log.emit("gauge_check_done", {{"covariance_defect", rep.covariance_defect}, {"ok", ok}});
  RunOutcome out;
  out.result = {{"mode", "gauge-check"}, {"config", c.raw}, {"report", rep.to_json()}, {"exact_invariants_hold", ok}};
  if (!ok) out.exit_code = kExitInternal;
  return out;
}

// ---------------------------------------------------------------------------
// profiles

struct PlantedProfile {
  std::string shape = "bump";
  Vec<double> center{0.0, 0.0, 0.0};
  double size = 1.0;  // bump radius or gaussian width
  double amplitude = 1.0;
  Vec<double> wave{0.0, 0.0, 0.0};
  Vec<double> start{0.0, 0.0, 0.0};
  Vec<double> step{0.0, 0.0, 0.0};
  int scale_start = 0;
  int scale_step = 0;
};

struct ProfilesConfig {
  std::string action = "verify";
  std::size_t count = 12;
  double delta = 1e-3;
  double p = 3.0;
  double lattice_step = 1.0;
  bool dyadic = false;
  NoiseOptions noise;
  ExtractOptions extract;
  std::vector<PlantedProfile> planted;
  std::filesystem::path input;
};

inline ProfilesConfig parse_profiles(const RunConfig& c) {
  const std::string w = "profiles";
  const json j = c.raw.value("profiles", json::object());
  detail::allow_keys(j, w,
                     {"action", "K", "delta", "p", "lattice_step", "dyadic", "noise", "noise_seed", "noise_vanishing",
                      "planted", "input", "tail", "profile_radius", "window_radius", "max_profiles"});
  const int n = c.dimension();
  ProfilesConfig pc;
  pc.action = detail::get_or<std::string>(j, "action", pc.action, w);
  if (pc.action != "synth" && pc.action != "extract" && pc.action != "verify") {
    throw ConfigError("profiles.action must be synth, extract or verify");
  }
  const int k = detail::get_or<int>(j, "K", static_cast<int>(pc.count), w);
  if (k < 2) throw ConfigError("profiles.K must be at least 2");
  pc.count = static_cast<std::size_t>(k);
  pc.delta = detail::finite_number(j, "delta", pc.delta, w);
  if (!(pc.delta > 0.0)) throw ConfigError("profiles.delta must be positive");
  pc.dyadic = detail::get_or<bool>(j, "dyadic", false, w);
  pc.p = detail::finite_number(j, "p", pc.dyadic && n >= 3 ? critical_exponent(n) : c.solve.p, w);
  if (!(pc.p >= 2.0)) throw ConfigError("profiles.p must be at least 2");
  if (pc.dyadic && n < 3) throw ConfigError("dyadic profiles need grid.N = 3");
  pc.lattice_step = detail::lattice_step_of(j, c.grid, w);
  pc.noise.amplitude = detail::finite_number(j, "noise", 0.0, w);
  if (pc.noise.amplitude < 0.0) throw ConfigError("profiles.noise must be nonnegative");
  pc.noise.seed = detail::get_or<std::uint64_t>(j, "noise_seed", pc.noise.seed, w);
  pc.noise.vanishing = detail::get_or<bool>(j, "noise_vanishing", true, w);
  pc.noise.p = pc.p;
  pc.extract.p = pc.p;
  pc.extract.order = c.quadrature_order;
  pc.extract.tail = static_cast<std::size_t>(detail::get_or<int>(j, "tail", 0, w));
  pc.extract.profile_radius = detail::finite_number(j, "profile_radius", 0.0, w);
  pc.extract.window_radius = detail::finite_number(j, "window_radius", 0.0, w);
  pc.extract.max_profiles = detail::get_or<int>(j, "max_profiles", pc.extract.max_profiles, w);
  pc.input = detail::get_or<std::string>(j, "input", "", w);
  if (pc.action == "extract" && pc.input.empty()) throw ConfigError("profiles.input is required for extract");

  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(n, pc.lattice_step);
  if (pc.action != "extract") {
    if (!j.contains("planted") || !j.at("planted").is_array() || j.at("planted").empty()) {
      throw ConfigError("profiles.planted must list at least one profile");
    }
    for (const json& e : j.at("planted")) {
      const std::string pw = "profiles.planted[]";
      detail::allow_keys(e, pw,
                         {"shape", "center", "radius", "width", "amplitude", "wave", "start", "step", "scale_start",
                          "scale_step"});
      PlantedProfile pp;
      pp.shape = detail::get_or<std::string>(e, "shape", pp.shape, pw);
      if (pp.shape != "bump" && pp.shape != "gaussian") throw ConfigError("planted shape must be bump or gaussian");
      if (e.contains("center")) pp.center = detail::point(e.at("center"), n, pw + ".center");
      pp.size = detail::finite_number(e, pp.shape == "bump" ? "radius" : "width", 1.0, pw);
      if (!(pp.size > 0.0)) throw ConfigError("planted radius or width must be positive");
      pp.amplitude = detail::finite_number(e, "amplitude", 1.0, pw);
      if (e.contains("wave")) pp.wave = detail::point(e.at("wave"), n, pw + ".wave");
      if (e.contains("start")) pp.start = detail::point(e.at("start"), n, pw + ".start");
      if (e.contains("step")) pp.step = detail::point(e.at("step"), n, pw + ".step");
      for (const Vec<double>* v : {&pp.start, &pp.step}) {
        const Vec<double> snapped = xi.nearest(*v);
        for (int d = 0; d < n; ++d) {
          if (std::abs(snapped[d] - (*v)[d]) > 1e-9 * std::max(1.0, std::abs((*v)[d]))) {
            throw ConfigError("planted start and step must be lattice points");
          }
        }
      }
      pp.start = xi.nearest(pp.start);
      pp.step = xi.nearest(pp.step);
      pp.scale_start = detail::get_or<int>(e, "scale_start", 0, pw);
      pp.scale_step = detail::get_or<int>(e, "scale_step", 0, pw);
      if (!pc.dyadic && (pp.scale_start != 0 || pp.scale_step != 0)) {
        throw ConfigError("scales are only allowed in dyadic profiles");
      }
      pc.planted.push_back(pp);
    }
  }
  return pc;
}

inline ComplexField planted_field(const PlantedProfile& pp, const GridSpec& g) {
  return pp.shape == "bump" ? bump_profile(g, pp.center, pp.size, pp.amplitude, pp.wave)
                            : gaussian_profile(g, pp.center, pp.size, pp.amplitude, pp.wave);
}

inline ShiftFrame planted_frame(const PlantedProfile& pp, std::size_t count, int n, double step, bool dyadic) {
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(n, step);
  ShiftFrame f;
  for (std::size_t k = 0; k < count; ++k) {
    Vec<double> y{0.0, 0.0, 0.0};
    for (int d = 0; d < n; ++d) y[d] = pp.start[d] + static_cast<double>(k) * pp.step[d];
    f.shifts.push_back(xi.nearest(y));
    if (dyadic) f.scales.push_back(pp.scale_start + static_cast<int>(k) * pp.scale_step);
  }
  return f;
}

namespace detail {

inline json frame_json(const ShiftFrame& f, int n) {
  json shifts = json::array();
  for (const Vec<double>& y : f.shifts) shifts.push_back(vec_json(y, n));
  json j = {{"shifts", shifts}, {"stationary", f.stationary()}};
  if (!f.scales.empty()) j["scales"] = f.scales;
  return j;
}

inline bool same_frame(const ShiftFrame& a, const ShiftFrame& b) {
  return a.shifts == b.shifts && (a.scales.empty() || b.scales.empty() || a.scales == b.scales);
}

inline double relative_l2(const ComplexField& u, const ComplexField& ref) {
  ComplexField d = u;
  d -= ref;
  return std::sqrt(lp_mass(d, 2.0) / lp_mass(ref, 2.0));
}

inline std::vector<ComplexField> read_sequence(const std::filesystem::path& dir) {
  const json manifest = load_config_json(dir / "manifest.json");
  if (!manifest.contains("sequence")) throw ConfigError("manifest in " + dir.string() + " lists no sequence");
  std::vector<ComplexField> seq;
  for (const json& f : manifest.at("sequence")) seq.push_back(load_field(dir / f.get<std::string>()).field);
  return seq;
}

}  // namespace detail

// Round trip of the planted model: frames matched exactly, profiles compared in L^2.
struct RoundTripReport {
  std::size_t planted = 0;
  std::size_t recovered = 0;
  bool shifts_exact = false;
  double worst_profile_error = 0.0;
  std::vector<double> profile_errors;

  json to_json() const {
    return {{"planted", planted},
            {"recovered", recovered},
            {"shifts_exact", shifts_exact},
            {"worst_profile_error", worst_profile_error},
            {"profile_errors", profile_errors}};
  }
};

inline RoundTripReport compare_round_trip(const std::vector<ComplexField>& profiles,
                                          const std::vector<ShiftFrame>& frames, const ProfileDecomposition& dec) {
  RoundTripReport rep;
  rep.planted = profiles.size();
  rep.recovered = dec.profiles.size();
  rep.shifts_exact = rep.planted == rep.recovered;
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < dec.profiles.size(); ++n) {
      if (detail::same_frame(frames[m], dec.frames[n])) err = detail::relative_l2(dec.profiles[n], profiles[m]);
    }
    if (!std::isfinite(err)) {
      rep.shifts_exact = false;
      err = 1.0;
    }
    rep.profile_errors.push_back(err);
    rep.worst_profile_error = std::max(rep.worst_profile_error, err);
  }
  return rep;
}

inline RunOutcome run_profiles(const RunConfig& c, const EventLog& log) {
  const ProfilesConfig pc = parse_profiles(c);
  const GridSpec& g = c.grid;
  const int n = g.dimension();
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(n, pc.lattice_step);
  const std::filesystem::path dir = c.output_dir;
  RunOutcome out;
  out.result = {{"mode", "profiles"}, {"config", c.raw}, {"action", pc.action}};

  std::vector<ComplexField> profiles;
  std::vector<ShiftFrame> frames;
  std::vector<ComplexField> seq;
  if (pc.action == "extract") {
    seq = detail::read_sequence(pc.input);
    for (const ComplexField& u : seq) {
      if (!(u.grid() == g)) throw ConfigError("input sequence lives on a different grid than grid block");
    }
  } else {
    for (const PlantedProfile& pp : pc.planted) {
      profiles.push_back(planted_field(pp, g));
      frames.push_back(planted_frame(pp, pc.count, n, pc.lattice_step, pc.dyadic));
    }
    try {
      seq = pc.dyadic ? synthesize_dyadic_sequence(profiles, frames, pc.count)
                      : synthesize_sequence(profiles, frames, *c.a, pc.count, pc.noise, c.quadrature_order);
    } catch (const ProfileError& e) {
      throw ConfigError(std::string("planted frames: ") + e.what());
    }
    log.emit("synthesized", {{"K", pc.count}, {"profiles", profiles.size()}, {"dyadic", pc.dyadic}});
    json fr = json::array();
    for (const ShiftFrame& f : frames) fr.push_back(detail::frame_json(f, n));
    out.result["planted_frames"] = fr;
  }

  if (pc.action == "synth") {
    json files = json::array();
    for (std::size_t k = 0; k < seq.size(); ++k) {
      const std::string name = detail::indexed("seq", k);
      if (!dir.empty()) save_field(dir / name, seq[k], name);
      files.push_back(name);
    }
    json masses = json::array();
    for (const ComplexField& u : seq) masses.push_back(lp_mass(u, pc.p));
    out.result["sequence"] = files;
    out.result["pmasses"] = masses;
    if (!dir.empty()) write_json_file(dir / "manifest.json", out.result);
    return out;
  }

  if (pc.dyadic) {
    // Dyadic frames are verified against the planted decomposition.
    ProfileDecomposition dec{profiles, frames, {seq.back()}, {}, 0.0, pc.delta};
    const BrezisLiebReport bl = brezis_lieb_check(seq, dec, *c.v);
    out.result["brezis_lieb"] = bl.to_json();
    json inv = json::array();
    for (std::size_t m = 0; m < profiles.size(); ++m) {
      const int j = frames[m].scales.back();
      const RescaledField r = dyadic_rescale(profiles[m], j, frames[m].shifts.back(), pc.planted[m].size);
      const double ps = critical_exponent(n);
      inv.push_back({{"scale", j},
                     {"norm_defect", std::abs(lp_norm(r.field, ps) / lp_norm(profiles[m], ps) - 1.0)},
                     {"resolution_loss", r.resolution_loss}});
    }
    out.result["critical_norm_invariance"] = inv;
    log.emit("brezis_lieb", {{"mass_defect", bl.mass_defect}});
    return out;
  }

  ProfileDecomposition dec = extract_profiles(seq, xi, pc.delta, *c.a, pc.extract);
  log.emit("extracted", {{"profiles", dec.profiles.size()}, {"final_window_mass", dec.final_window_mass}});
  json fr = json::array();
  json files = json::array();
  for (std::size_t m = 0; m < dec.profiles.size(); ++m) {
    fr.push_back(detail::frame_json(dec.frames[m], n));
    const std::string name = detail::indexed("profile", m);
    if (!dir.empty()) save_field(dir / name, dec.profiles[m], name);
    files.push_back(name);
  }
  out.result["frames"] = fr;
  out.result["profiles"] = files;
  out.result["extraction_masses"] = dec.extraction_masses;
  out.result["final_window_mass"] = dec.final_window_mass;
  out.result["saturation_mass"] = saturation_mass(dec, xi, pc.p);
  out.result["splitting"] = verify_splitting(dec, seq, *c.a, pc.p, c.links, c.quadrature_order).to_json();
  if (pc.action == "verify") out.result["round_trip"] = compare_round_trip(profiles, frames, dec).to_json();
  if (!dir.empty()) write_json_file(dir / "manifest.json", out.result);
  return out;
}

// ---------------------------------------------------------------------------

// Parses, validates and executes one run. Output files go to `out_dir` when it is
// nonempty (created if needed); result.json is always written there.
inline int run(json raw, const std::vector<std::string>& overrides, const std::filesystem::path& out_dir,
               std::ostream* events, const std::string& mode_override = "") {
  const EventLog log(events);
  RunConfig c;
  try {
    if (!mode_override.empty()) raw["mode"] = mode_override;
    for (const std::string& o : overrides) apply_override(raw, o);
    c = parse_config(raw);
    if (!out_dir.empty()) c.output_dir = out_dir;
    if (!c.output_dir.empty()) std::filesystem::create_directories(c.output_dir);
    switch (c.mode) {
      case Mode::Penalty: parse_penalty(c); break;
      case Mode::Critical: parse_critical(c); break;
      case Mode::GaugeCheck: parse_gauge_check(c); break;
      case Mode::Profiles: parse_profiles(c); break;
      case Mode::Solve: break;
    }
  } catch (const ConfigError& e) {
    log.emit("validation_failed", {{"message", e.what()}});
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    log.emit("validation_failed", {{"message", e.what()}});
    return kExitInvalid;
  }
  try {
    RunOutcome out;
    switch (c.mode) {
      case Mode::Solve: out = run_solve(c, log); break;
      case Mode::Penalty: out = run_penalty(c, log); break;
      case Mode::Critical: out = run_critical(c, log); break;
      case Mode::GaugeCheck: out = run_gauge_check(c, log); break;
      case Mode::Profiles: out = run_profiles(c, log); break;
    }
    out.result["exit_code"] = out.exit_code;
    if (!all_finite(out.result)) {
      log.emit("nonfinite_result", {});
      out.exit_code = kExitInternal;
    }
    if (!c.output_dir.empty()) write_json_file(c.output_dir / "result.json", out.result);
    log.emit("finished", {{"exit_code", out.exit_code}});
    return out.exit_code;
  } catch (const ConfigError& e) {
    log.emit("validation_failed", {{"message", e.what()}});
    return kExitInvalid;
  } catch (const SolverError& e) {
    log.emit("solver_failed", {{"message", e.what()}});
    return kExitNotConverged;
  } catch (const std::exception& e) {
    log.emit("internal_error", {{"message", e.what()}});
    return kExitInternal;
  }
}

}  // namespace magnls
