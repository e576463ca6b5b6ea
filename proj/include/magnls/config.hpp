#pragma once
// Run configuration: JSON document, dotted-path overrides, validation into typed blocks.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "magnls/energy.hpp"
#include "magnls/field_io.hpp"
#include "magnls/gauge.hpp"
#include "magnls/grid.hpp"
#include "magnls/infinity.hpp"
#include "magnls/potential.hpp"
#include "magnls/solver.hpp"

namespace magnls {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { Solve, Penalty, Profiles, Critical, GaugeCheck };

inline Mode mode_from_string(const std::string& s) {
  if (s == "solve") return Mode::Solve;
  if (s == "penalty") return Mode::Penalty;
  if (s == "profiles") return Mode::Profiles;
  if (s == "critical") return Mode::Critical;
  if (s == "gauge-check") return Mode::GaugeCheck;
  throw ConfigError("unknown mode '" + s + "' (expected solve, penalty, profiles, critical or gauge-check)");
}

namespace detail {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline double finite_number(const json& j, const char* key, double fallback, const std::string& where) {
  const double v = get_or<double>(j, key, fallback, where);
  if (!std::isfinite(v)) throw ConfigError(where + "." + key + " must be finite");
  return v;
}

inline Vec<double> point(const json& j, int n, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw ConfigError(where + " must be an array of " + std::to_string(n) + " numbers");
  }
  Vec<double> p{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) {
    if (!j[d].is_number()) throw ConfigError(where + " must contain numbers");
    p[d] = j[d].get<double>();
  }
  return p;
}

inline std::vector<std::string> strings(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (const json& e : j) {
    if (!e.is_string()) throw ConfigError(where + " must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline MagneticPotential parse_magnetic(const json& j, int n, const std::string& where = "potential.A") {
  detail::allow_keys(j, where,
                     {"type", "b", "field", "lambda", "form", "components", "base", "delta", "center", "radius", "psi"});
  const std::string type = detail::get_or<std::string>(j, "type", "zero", where);
  try {
    if (type == "zero") return MagneticPotential::zero(n);
    if (type == "constant_field") {
      if (j.contains("field")) {
        const json& f = j.at("field");
        if (!f.is_array() || static_cast<int>(f.size()) != n) throw ConfigError(where + ".field must be N x N");
        Matrix3 m{};
        for (int a = 0; a < n; ++a) {
          const Vec<double> row = detail::point(f[a], n, where + ".field");
          for (int b = 0; b < n; ++b) m[a][b] = row[b];
        }
        return MagneticPotential::constant_field(n, m);
      }
      return MagneticPotential::constant_field_planar(n, detail::finite_number(j, "b", 0.0, where));
    }
    if (type == "aharonov_bohm") {
      const std::string form = detail::get_or<std::string>(j, "form", "printed", where);
      if (form != "printed" && form != "rotational") throw ConfigError(where + ".form must be printed or rotational");
      return MagneticPotential::aharonov_bohm(n, detail::finite_number(j, "lambda", 0.0, where),
                                              form == "printed" ? AharonovBohmForm::Printed
                                                                : AharonovBohmForm::Rotational);
    }
    if (type == "custom") {
      if (!j.contains("components")) throw ConfigError(where + ".components is required for custom potentials");
      return MagneticPotential::custom(n, detail::strings(j.at("components"), where + ".components"));
    }
    if (type == "perturbed") {
      const MagneticPotential base =
          j.contains("base") ? parse_magnetic(j.at("base"), n, where + ".base") : MagneticPotential::zero(n);
      if (!j.contains("delta")) throw ConfigError(where + ".delta is required for perturbed potentials");
      const Vec<double> c = j.contains("center") ? detail::point(j.at("center"), n, where + ".center")
                                                 : Vec<double>{0.0, 0.0, 0.0};
      return MagneticPotential::perturbed(base, detail::strings(j.at("delta"), where + ".delta"), c,
                                          detail::finite_number(j, "radius", 1.0, where));
    }
    if (type == "gauge_shifted") {
      const MagneticPotential base =
          j.contains("base") ? parse_magnetic(j.at("base"), n, where + ".base") : MagneticPotential::zero(n);
      return MagneticPotential::gauge_shifted(base, detail::get_or<std::string>(j, "psi", "0", where));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError("unknown magnetic potential type '" + type + "'");
}

inline ElectricPotential parse_electric(const json& j, int n, const std::string& where = "potential.V") {
  detail::allow_keys(j, where, {"type", "value", "base", "depth", "width", "center", "mu", "axes", "expression"});
  const std::string type = detail::get_or<std::string>(j, "type", "constant", where);
  try {
    if (type == "constant") return ElectricPotential::constant(n, detail::finite_number(j, "value", 1.0, where));
    if (type == "well" || type == "bump") {
      const Vec<double> c = j.contains("center") ? detail::point(j.at("center"), n, where + ".center")
                                                 : Vec<double>{0.0, 0.0, 0.0};
      double depth = detail::finite_number(j, "depth", 0.5, where);
      if (type == "bump") depth = -depth;
      return ElectricPotential::well(n, detail::finite_number(j, "base", 1.0, where), depth,
                                     detail::finite_number(j, "width", 1.0, where), c);
    }
    if (type == "hardy") {
      std::vector<int> axes{0};
      if (j.contains("axes")) {
        axes.clear();
        for (const json& a : j.at("axes")) {
          if (!a.is_number_integer()) throw ConfigError(where + ".axes must hold 1-based axis numbers");
          axes.push_back(a.get<int>() - 1);
        }
      }
      return ElectricPotential::hardy(n, detail::finite_number(j, "mu", 0.0, where), axes);
    }
    if (type == "custom") {
      return ElectricPotential::custom(n, detail::get_or<std::string>(j, "expression", "", where));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError("unknown electric potential type '" + type + "'");
}

struct RunConfig {
  Mode mode = Mode::Solve;
  json raw;
  GridSpec grid{2, 10.0, 129};
  std::optional<MagneticPotential> a;
  std::optional<ElectricPotential> v;
  LinkRule links = LinkRule::Midpoint;
  int quadrature_order = kDefaultQuadratureOrder;
  SolveOptions solve;
  std::string initial_field_path;
  std::filesystem::path output_dir;
  bool dump_fields = false;

  int dimension() const { return grid.dimension(); }
};

// Sets raw[dotted.path] = value; value is parsed as JSON when possible, else kept as a string.
inline void apply_override(json& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &raw;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override key '" + key + "' walks through a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override key '" + key + "' walks through a non-object");
  (*node)[parts.back()] = value;
}

inline json load_config_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline SolveOptions parse_solver(const json& j, int n) {
  const std::string w = "solver";
  detail::allow_keys(j, w,
                     {"p", "tau0", "tolerance", "max_iterations", "restarts", "seed", "initial", "center", "width",
                      "initial_field", "backtrack", "armijo", "diamagnetic_interval"});
  SolveOptions o;
  o.p = detail::finite_number(j, "p", o.p, w);
  o.tau0 = detail::finite_number(j, "tau0", o.tau0, w);
  o.tolerance = detail::finite_number(j, "tolerance", o.tolerance, w);
  o.max_iterations = detail::get_or<int>(j, "max_iterations", o.max_iterations, w);
  o.restarts = detail::get_or<int>(j, "restarts", o.restarts, w);
  o.seed = detail::get_or<std::uint64_t>(j, "seed", o.seed, w);
  o.initial = initial_guess_from_string(detail::get_or<std::string>(j, "initial", "gaussian", w));
  if (j.contains("center")) o.center = detail::point(j.at("center"), n, w + ".center");
  o.width = detail::finite_number(j, "width", o.width, w);
  o.backtrack = detail::finite_number(j, "backtrack", o.backtrack, w);
  o.armijo = detail::finite_number(j, "armijo", o.armijo, w);
  o.diamagnetic_interval = detail::get_or<int>(j, "diamagnetic_interval", o.diamagnetic_interval, w);
  return o;
}

// Validates the whole document and builds the typed blocks shared by every mode.
inline RunConfig parse_config(const json& raw) {
  RunConfig c;
  c.raw = raw;
  detail::allow_keys(raw, "config",
                     {"mode", "grid", "potential", "solver", "penalty", "profiles", "critical", "gauge_check", "output"});
  c.mode = mode_from_string(detail::get_or<std::string>(raw, "mode", "solve", "config"));
  const json grid = raw.value("grid", json::object());
  detail::allow_keys(grid, "grid", {"N", "L", "M"});
  try {
    c.grid = GridSpec(detail::get_or<int>(grid, "N", 2, "grid"), detail::finite_number(grid, "L", 10.0, "grid"),
                      detail::get_or<int>(grid, "M", 129, "grid"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  const int n = c.grid.dimension();

  const json pot = raw.value("potential", json::object());
  detail::allow_keys(pot, "potential", {"A", "V", "links", "quadrature_order"});
  c.links = link_rule_from_string(detail::get_or<std::string>(pot, "links", "midpoint", "potential"));
  c.quadrature_order = detail::get_or<int>(pot, "quadrature_order", kDefaultQuadratureOrder, "potential");
  if (c.quadrature_order < 1 || c.quadrature_order > 100) throw ConfigError("potential.quadrature_order out of range");
  if (c.mode != Mode::Critical) {
    c.a = parse_magnetic(pot.value("A", json::object()), n);
    c.v = parse_electric(pot.value("V", json::object()), n);
  }

  c.solve = parse_solver(raw.value("solver", json::object()), n);
  if (raw.contains("solver") && raw.at("solver").contains("initial_field")) {
    c.initial_field_path = detail::get_or<std::string>(raw.at("solver"), "initial_field", "", "solver");
    try {
      NamedField f = load_field(c.initial_field_path);
      if (!(f.field.grid() == c.grid)) throw ConfigError("solver.initial_field lives on a different grid");
      c.solve.loaded = std::move(f.field);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("solver.initial_field: ") + e.what());
    }
    if (!raw.at("solver").contains("initial")) c.solve.initial = InitialGuess::Loaded;
  }
  if (c.mode == Mode::Critical) {
    c.solve.p = critical_exponent(n);
  } else if (c.mode == Mode::Solve || c.mode == Mode::Penalty) {
    const double crit = n >= 3 ? critical_exponent(n) : std::numeric_limits<double>::infinity();
    if (!(c.solve.p > 2.0 && c.solve.p < crit)) {
      throw ConfigError("solver.p = " + std::to_string(c.solve.p) + " violates 2 < p < 2* = " +
                        (n >= 3 ? std::to_string(crit) : std::string("inf")));
    }
    if (!(c.v->has_singular_set() == false)) throw ConfigError("singular electric potentials belong to critical mode");
    const PotentialSample vs = sample_electric(*c.v, c.grid);
    if (!(vs.infimum() > 0.0)) throw ConfigError("potential.V must satisfy inf V > 0 on the grid in this mode");
  }
  try {
    c.solve.validate(n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  if (c.mode == Mode::GaugeCheck && c.a->has_singular_set()) {
    throw ConfigError("gauge-check needs a potential without singular set");
  }

  const json out = raw.value("output", json::object());
  detail::allow_keys(out, "output", {"directory", "dump_fields"});
  c.output_dir = detail::get_or<std::string>(out, "directory", "", "output");
  c.dump_fields = detail::get_or<bool>(out, "dump_fields", false, "output");
  return c;
}

}  // namespace magnls
