#pragma once
// Concentrating sequences built from shifted profiles, and their recovery.
//
// Subcritical frames move profiles by magnetic shifts g_y; critical frames act by
// dyadic rescaling 2^{(N-2)j/2} u(2^j (x - y)). Extraction realizes the weak
// limit of inverse-shifted remainders as a tail average on a fixed window.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "magnls/energy.hpp"
#include "magnls/gauge.hpp"
#include "magnls/grid.hpp"
#include "magnls/infinity.hpp"
#include "magnls/potential.hpp"

namespace magnls {

class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// y_k (and j_k for dyadic frames), k = 0..K-1.
struct ShiftFrame {
  std::vector<Vec<double>> shifts;
  std::vector<int> scales;  // empty for magnetic-shift frames

  std::size_t size() const { return shifts.size(); }
  bool stationary() const {
    for (std::size_t k = 0; k < shifts.size(); ++k) {
      if (shifts[k] != Vec<double>{0.0, 0.0, 0.0}) return false;
      if (!scales.empty() && scales[k] != 0) return false;
    }
    return true;
  }

  static ShiftFrame fixed(std::size_t count, const Vec<double>& y = {0.0, 0.0, 0.0}) {
    return ShiftFrame{std::vector<Vec<double>>(count, y), {}};
  }
};

// Test profiles. The bump amplitude (1 - |x - c|^2/R^2)^3 is compactly supported,
// so magnetic shifts of it are exact on the grid; `wave` adds a phase e^{i wave.x}.
inline ComplexField bump_profile(const GridSpec& g, const Vec<double>& c, double radius, double amplitude,
                                 const Vec<double>& wave = {0.0, 0.0, 0.0}) {
  if (!(radius > 0.0)) throw std::invalid_argument("bump radius must be positive");
  return ComplexField::sample(g, [&](const Vec<double>& x) {
    double r2 = 0.0;
    double phase = 0.0;
    for (int d = 0; d < g.dimension(); ++d) {
      r2 += (x[d] - c[d]) * (x[d] - c[d]);
      phase += wave[d] * x[d];
    }
    const double s = r2 / (radius * radius);
    if (s >= 1.0) return Complex(0.0, 0.0);
    return std::polar(amplitude * (1.0 - s) * (1.0 - s) * (1.0 - s), phase);
  });
}

inline ComplexField gaussian_profile(const GridSpec& g, const Vec<double>& c, double width, double amplitude,
                                     const Vec<double>& wave = {0.0, 0.0, 0.0}) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian width must be positive");
  return ComplexField::sample(g, [&](const Vec<double>& x) {
    double r2 = 0.0;
    double phase = 0.0;
    for (int d = 0; d < g.dimension(); ++d) {
      r2 += (x[d] - c[d]) * (x[d] - c[d]);
      phase += wave[d] * x[d];
    }
    return std::polar(amplitude * std::exp(-r2 / (2.0 * width * width)), phase);
  });
}

struct NoiseOptions {
  double amplitude = 0.0;   // L^p amplitude at k = 0
  bool vanishing = true;    // amplitude (1 - k/K) when true, constant otherwise
  int smoothing = 2;        // neighbour-averaging passes
  std::uint64_t seed = 11;
  double p = 2.0;           // exponent in which the amplitude is measured
};

namespace detail {

inline std::vector<char> support_of(const ComplexField& u) {
  std::vector<char> s(u.size(), 0);
  for (std::size_t k = 0; k < u.size(); ++k) s[k] = u[k] != Complex(0.0, 0.0);
  return s;
}

inline std::size_t count_support(const ComplexField& u) {
  std::size_t c = 0;
  for (const Complex& z : u.values()) c += z != Complex(0.0, 0.0);
  return c;
}

// Smooth seeded noise with unit L^p norm, vanishing on `excluded` and on the box boundary.
inline ComplexField noise_field(const GridSpec& g, std::uint64_t seed, int smoothing, double p,
                                const std::vector<char>& excluded) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> v(g.size());
  for (Complex& z : v) {
    const double re = normal(rng);
    const double im = normal(rng);
    z = Complex(re, im);
  }
  for (int pass = 0; pass < smoothing; ++pass) {
    std::vector<Complex> w = v;
    for (int j = 0; j < g.dimension(); ++j) {
      for_each_edge(g, j, [&](std::size_t a, std::size_t b) {
        w[a] += v[b];
        w[b] += v[a];
      });
    }
    v = std::move(w);
  }
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (excluded[k] || g.on_boundary(k)) v[k] = Complex(0.0, 0.0);
  }
  ComplexField f(g, std::move(v));
  const double n = lp_norm(f, p);
  if (n > 0.0) f *= Complex(1.0 / n, 0.0);
  return f;
}

}  // namespace detail

// u_k = sum_n g_k^(n) v^(n) + rho_k with magnetic shifts built from Poincare phases of A.
inline std::vector<ComplexField> synthesize_sequence(const std::vector<ComplexField>& profiles,
                                                     const std::vector<ShiftFrame>& frames, const MagneticPotential& a,
                                                     std::size_t count, const NoiseOptions& noise = {},
                                                     int order = kDefaultQuadratureOrder) {
  if (profiles.empty() || profiles.size() != frames.size()) {
    throw std::invalid_argument("need one frame per profile");
  }
  const GridSpec& g = profiles.front().grid();
  for (const ShiftFrame& f : frames) {
    if (f.size() != count) throw std::invalid_argument("every frame needs exactly K shifts");
    if (!f.scales.empty()) throw std::invalid_argument("dyadic frames belong to synthesize_dyadic_sequence");
  }
  if (noise.amplitude < 0.0) throw std::invalid_argument("noise amplitude must be nonnegative");
  std::vector<ComplexField> seq;
  for (std::size_t k = 0; k < count; ++k) {
    ComplexField u(g);
    std::vector<char> occupied(g.size(), 0);
    for (std::size_t n = 0; n < profiles.size(); ++n) {
      if (!(profiles[n].grid() == g)) throw std::invalid_argument("profiles live on different grids");
      const Vec<double>& y = frames[n].shifts[k];
      const ComplexField s = magnetic_shift(profiles[n], y, GaugePhase(a, y, order));
      if (detail::count_support(s) != detail::count_support(profiles[n])) {
        throw ProfileError("profile " + std::to_string(n) + " leaves the box at k = " + std::to_string(k));
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (s[i] == Complex(0.0, 0.0)) continue;
        if (occupied[i] && k + 1 == count) {
          throw ProfileError("profile supports collide at the final index");
        }
        occupied[i] = 1;
      }
      u += s;
    }
    if (noise.amplitude > 0.0) {
      const double level =
          noise.vanishing ? noise.amplitude * (1.0 - static_cast<double>(k) / static_cast<double>(count))
                          : noise.amplitude;
      ComplexField rho = detail::noise_field(g, noise.seed + k, noise.smoothing, noise.p, occupied);
      rho *= Complex(level, 0.0);
      u += rho;
    }
    seq.push_back(std::move(u));
  }
  return seq;
}

struct ExtractOptions {
  double p = 2.0;
  double window_radius = 0.0;   // 0: covering radius of the lattice
  double profile_radius = 0.0;  // 0: L/4
  std::size_t tail = 0;         // 0: K/4 (at least 1)
  int max_profiles = 8;
  int order = kDefaultQuadratureOrder;
};

struct ProfileDecomposition {
  std::vector<ComplexField> profiles;
  std::vector<ShiftFrame> frames;
  std::vector<ComplexField> remainders;
  std::vector<double> extraction_masses;  // max window mass before each extraction
  double final_window_mass = 0.0;
  double threshold = 0.0;
};

namespace detail {

inline void keep_ball(ComplexField& u, double radius) {
  const GridSpec& g = u.grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    double r2 = 0.0;
    for (int d = 0; d < g.dimension(); ++d) r2 += x[d] * x[d];
    if (r2 > radius * radius) u[k] = Complex(0.0, 0.0);
  }
}

struct WindowMax {
  Vec<double> point{0.0, 0.0, 0.0};
  double mass = 0.0;
};

// Lattice point of largest window mass; ties go to the point nearest `prefer`.
inline WindowMax max_window(const ComplexField& u, const std::vector<Vec<double>>& pts, double radius, double p,
                            const Vec<double>& prefer) {
  WindowMax best;
  double best_d = 0.0;
  bool first = true;
  const int n = u.grid().dimension();
  for (const Vec<double>& y : pts) {
    const double m = window_mass(u, y, radius, p);
    double d = 0.0;
    for (int i = 0; i < n; ++i) d += (y[i] - prefer[i]) * (y[i] - prefer[i]);
    const double tol = 1e-12 * std::max(best.mass, 1e-300);
    if (first || m > best.mass + tol || (std::abs(m - best.mass) <= tol && d < best_d)) {
      best = {y, m};
      best_d = d;
      first = false;
    }
  }
  return best;
}

}  // namespace detail

inline ProfileDecomposition extract_profiles(const std::vector<ComplexField>& seq, const DiscretizationSpec& xi,
                                             double delta, const MagneticPotential& a, ExtractOptions opt = {}) {
  if (seq.size() < 2) throw std::invalid_argument("extraction needs at least two sequence elements");
  const GridSpec& g = seq.front().grid();
  for (const ComplexField& u : seq) {
    if (!(u.grid() == g)) throw std::invalid_argument("sequence elements live on different grids");
  }
  if (!xi.compatible_with(g)) throw std::invalid_argument("lattice step is not a multiple of the grid spacing");
  if (!(delta > 0.0)) throw std::invalid_argument("threshold delta must be positive");
  const std::size_t count = seq.size();
  const double radius = opt.window_radius > 0.0 ? opt.window_radius : xi.covering_radius();
  const double prof_radius = opt.profile_radius > 0.0 ? opt.profile_radius : 0.25 * g.half_width();
  const std::size_t tail = opt.tail > 0 ? std::min(opt.tail, count) : std::max<std::size_t>(1, count / 4);
  const std::vector<Vec<double>> pts = xi.points_covering(g);

  ProfileDecomposition dec{{}, {}, seq, {}, 0.0, delta};
  double previous = std::numeric_limits<double>::infinity();
  for (int n = 0;; ++n) {
    const detail::WindowMax top = detail::max_window(dec.remainders.back(), pts, radius, opt.p, {0.0, 0.0, 0.0});
    dec.final_window_mass = top.mass;
    if (top.mass < delta) break;
    if (!(top.mass < previous)) throw ProfileError("remainder window mass did not decrease; profile model violated");
    if (n >= opt.max_profiles) break;
    previous = top.mass;
    dec.extraction_masses.push_back(top.mass);

    // Frame: per-index maximizer, tracked backwards from the final index.
    ShiftFrame frame{std::vector<Vec<double>>(count), {}};
    frame.shifts[count - 1] = top.point;
    for (std::size_t k = count - 1; k-- > 0;) {
      frame.shifts[k] = detail::max_window(dec.remainders[k], pts, radius, opt.p, frame.shifts[k + 1]).point;
    }
    // Tail average of inverse-shifted remainders on a fixed window.
    ComplexField v(g);
    for (std::size_t k = count - tail; k < count; ++k) {
      const Vec<double>& y = frame.shifts[k];
      v += inverse_shift(dec.remainders[k], y, GaugePhase(a, y, opt.order));
    }
    v *= Complex(1.0 / static_cast<double>(tail), 0.0);
    detail::keep_ball(v, prof_radius);
    for (std::size_t k = 0; k < count; ++k) {
      const Vec<double>& y = frame.shifts[k];
      dec.remainders[k] -= magnetic_shift(v, y, GaugePhase(a, y, opt.order));
    }
    dec.profiles.push_back(std::move(v));
    dec.frames.push_back(std::move(frame));
  }
  // The stationary frame, if any, is labelled n = 0.
  for (std::size_t n = 1; n < dec.frames.size(); ++n) {
    if (dec.frames[n].stationary() && !dec.frames[0].stationary()) {
      std::swap(dec.frames[0], dec.frames[n]);
      std::swap(dec.profiles[0], dec.profiles[n]);
      std::swap(dec.extraction_masses[0], dec.extraction_masses[n]);
      break;
    }
  }
  return dec;
}

// Largest window mass of the final remainder over every lattice point.
inline double saturation_mass(const ProfileDecomposition& dec, const DiscretizationSpec& xi, double p,
                              double radius = 0.0) {
  const ComplexField& r = dec.remainders.back();
  const double rad = radius > 0.0 ? radius : xi.covering_radius();
  double worst = 0.0;
  for (const Vec<double>& y : xi.points_covering(r.grid())) worst = std::max(worst, window_mass(r, y, rad, p));
  return worst;
}

struct SplittingReport {
  double pmass_sequence = 0.0;     // ||u_K||_p^p
  double pmass_profiles = 0.0;     // sum_n ||v^(n)||_p^p
  double pmass_defect = 0.0;       // |difference| / ||u_K||_p^p
  double l2_margin = 0.0;          // ||u_K||_2^2 - sum ||v||_2^2
  double energy_sequence = 0.0;    // E_A(u_K)
  double energy_profiles = 0.0;    // sum E_{A_inf^(n)}(v^(n))
  double energy_margin = 0.0;      // (E_A(u_K) - sum) / max(E_A(u_K), 1)
  std::vector<double> frame_defects;

  nlohmann::json to_json() const {
    return {{"pmass_sequence", pmass_sequence}, {"pmass_profiles", pmass_profiles}, {"pmass_defect", pmass_defect},
            {"l2_margin", l2_margin},           {"energy_sequence", energy_sequence},
            {"energy_profiles", energy_profiles}, {"energy_margin", energy_margin},
            {"frame_defects", frame_defects}};
  }
};

inline SplittingReport verify_splitting(const ProfileDecomposition& dec, const std::vector<ComplexField>& seq,
                                        const MagneticPotential& a, double p, LinkRule rule = LinkRule::Midpoint,
                                        int order = kDefaultQuadratureOrder) {
  if (seq.empty()) throw std::invalid_argument("empty sequence");
  const ComplexField& uk = seq.back();
  const GridSpec& g = uk.grid();
  SplittingReport rep;
  rep.pmass_sequence = lp_mass(uk, p);
  double l2 = 0.0;
  for (const ComplexField& v : dec.profiles) {
    rep.pmass_profiles += lp_mass(v, p);
    l2 += lp_mass(v, 2.0);
  }
  rep.pmass_defect = std::abs(rep.pmass_sequence - rep.pmass_profiles) / rep.pmass_sequence;
  rep.l2_margin = lp_mass(uk, 2.0) - l2;
  rep.energy_sequence = energy_EA(uk, LinkPhases::build(a, g, rule));
  for (std::size_t n = 0; n < dec.profiles.size(); ++n) {
    const ShiftFrame& f = dec.frames[n];
    MagneticPotential a_inf = a;
    double defect = 0.0;
    if (!f.stationary()) {
      // Distinct points of the frame, in order, form the sequence Y^(n).
      std::vector<Vec<double>> pts;
      for (const Vec<double>& y : f.shifts) {
        if (pts.empty() || pts.back() != y) pts.push_back(y);
      }
      if (pts.size() >= 2) {
        const DiscretizationSpec unit = DiscretizationSpec::integer_lattice(g.dimension(), g.spacing());
        const ShiftSequence ys(unit, pts, ShiftSequence::norm(pts.back(), g.dimension()));
        const LimitProblem lp = limit_potential(a, ys, g, order);
        a_inf = lp.a_inf;
        defect = lp.defect;
      } else {
        a_inf = corrected_potential(GaugePhase(a, pts.front(), order), true);
      }
    }
    rep.frame_defects.push_back(defect);
    rep.energy_profiles += energy_EA(dec.profiles[n], LinkPhases::build(a_inf, g, rule));
  }
  rep.energy_margin = (rep.energy_sequence - rep.energy_profiles) / std::max(rep.energy_sequence, 1.0);
  return rep;
}

// ---------------------------------------------------------------------------
// Dyadic (critical) frames.

struct RescaledField {
  ComplexField field;
  bool resolution_loss = false;
};

namespace detail {

// Multilinear interpolation of u at x; zero outside the box.
inline Complex interpolate(const ComplexField& u, const Vec<double>& x) {
  const GridSpec& g = u.grid();
  const int n = g.dimension();
  const double h = g.spacing();
  Vec<int> base{0, 0, 0};
  Vec<double> frac{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) {
    const double s = x[d] / h + g.center_index();
    if (s < 0.0 || s > g.points() - 1) return Complex(0.0, 0.0);
    const double r = std::round(s);
    if (std::abs(s - r) < 1e-9) {
      base[d] = static_cast<int>(r);
      frac[d] = 0.0;
    } else {
      base[d] = static_cast<int>(std::floor(s));
      frac[d] = s - base[d];
    }
  }
  Complex acc(0.0, 0.0);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    Vec<int> idx = base;
    bool skip = false;
    for (int d = 0; d < n; ++d) {
      const bool up = (corner >> d) & 1;
      if (up) {
        if (frac[d] == 0.0) {
          skip = true;
          break;
        }
        idx[d] += 1;
        w *= frac[d];
      } else {
        w *= 1.0 - frac[d];
      }
    }
    if (skip || w == 0.0) continue;
    acc += w * u[g.linear(idx)];
  }
  return acc;
}

}  // namespace detail

// 2^{(N-2)j/2} u(2^j (x - y)) by resampling; resolution loss is flagged when 2^j h
// exceeds the declared feature size of u.
inline RescaledField dyadic_rescale(const ComplexField& u, int j, const Vec<double>& y, double feature_size = 0.0) {
  const GridSpec& g = u.grid();
  const int n = g.dimension();
  if (std::abs(j) > 30) throw std::invalid_argument("dyadic scale out of range");
  const double s = std::ldexp(1.0, j);
  const double amp = std::pow(2.0, (n - 2.0) * j / 2.0);
  RescaledField out{ComplexField(g), false};
  if (j == 0 && y == Vec<double>{0.0, 0.0, 0.0}) {
    out.field = u;
  } else {
    for (std::size_t k = 0; k < g.size(); ++k) {
      Vec<double> x = g.position(k);
      for (int d = 0; d < n; ++d) x[d] = s * (x[d] - y[d]);
      out.field[k] = amp * detail::interpolate(u, x);
    }
  }
  out.resolution_loss = feature_size > 0.0 && s * g.spacing() > feature_size;
  bool any = false;
  for (const Complex& z : out.field.values()) any = any || z != Complex(0.0, 0.0);
  if (!any && detail::count_support(u) > 0) throw ProfileError("rescaled support misses the box");
  return out;
}

struct RescaledPotentials {
  MagneticPotential a;
  ElectricPotential v;
};

// Potentials seen by a profile in the frame (j, y): 2^{-j} A(2^{-j} x + y), 2^{-2j} V(2^{-j} x + y).
inline RescaledPotentials potential_rescale(const MagneticPotential& a, const ElectricPotential& v, int j,
                                            const Vec<double>& y) {
  const int n = a.dimension();
  return {MagneticPotential(n, RescaledPotential{std::make_shared<const MagneticPotential>(a), j, y}),
          ElectricPotential(n, RescaledElectric{std::make_shared<const ElectricPotential>(v), j, y})};
}

inline std::vector<ComplexField> synthesize_dyadic_sequence(const std::vector<ComplexField>& profiles,
                                                            const std::vector<ShiftFrame>& frames,
                                                            std::size_t count) {
  if (profiles.empty() || profiles.size() != frames.size()) {
    throw std::invalid_argument("need one frame per profile");
  }
  const GridSpec& g = profiles.front().grid();
  if (g.dimension() < 3) throw std::invalid_argument("dyadic frames need N >= 3");
  for (const ShiftFrame& f : frames) {
    if (f.size() != count || (f.scales.size() != count)) {
      throw std::invalid_argument("every dyadic frame needs K shifts and K scales");
    }
  }
  std::vector<ComplexField> seq;
  for (std::size_t k = 0; k < count; ++k) {
    ComplexField u(g);
    for (std::size_t n = 0; n < profiles.size(); ++n) {
      u += dyadic_rescale(profiles[n], frames[n].scales[k], frames[n].shifts[k]).field;
    }
    seq.push_back(std::move(u));
  }
  return seq;
}

struct BrezisLiebReport {
  double mass_sequence = 0.0;   // int |u_K|^{2*}
  double mass_profiles = 0.0;   // sum_n int |w^(n)|^{2*}
  double mass_defect = 0.0;     // relative
  double electric_sequence = 0.0;
  double electric_profiles = 0.0;
  double electric_defect = 0.0; // relative to max(|electric_sequence|, tiny), 0 when both vanish

  nlohmann::json to_json() const {
    return {{"mass_sequence", mass_sequence},         {"mass_profiles", mass_profiles},
            {"mass_defect", mass_defect},             {"electric_sequence", electric_sequence},
            {"electric_profiles", electric_profiles}, {"electric_defect", electric_defect}};
  }
};

// Compares the final sequence element with the profiles w^(n) and the potentials
// V^(n) = 2^{-2j} V(2^{-j} . + y) taken at the final frame index.
inline BrezisLiebReport brezis_lieb_check(const std::vector<ComplexField>& seq, const ProfileDecomposition& dec,
                                          const ElectricPotential& v) {
  if (seq.empty()) throw std::invalid_argument("empty sequence");
  const ComplexField& uk = seq.back();
  const GridSpec& g = uk.grid();
  const double ps = critical_exponent(g.dimension());
  BrezisLiebReport rep;
  rep.mass_sequence = lp_mass(uk, ps);
  rep.electric_sequence = electric_energy(uk, sample_electric(v, g));
  const MagneticPotential zero = MagneticPotential::zero(g.dimension());
  for (std::size_t n = 0; n < dec.profiles.size(); ++n) {
    const ShiftFrame& f = dec.frames[n];
    const int j = f.scales.empty() ? 0 : f.scales.back();
    rep.mass_profiles += lp_mass(dec.profiles[n], ps);
    const RescaledPotentials rp = potential_rescale(zero, v, j, f.shifts.back());
    rep.electric_profiles += electric_energy(dec.profiles[n], sample_electric(rp.v, g));
  }
  rep.mass_defect = std::abs(rep.mass_sequence - rep.mass_profiles) / rep.mass_sequence;
  const double scale = std::max(std::abs(rep.electric_sequence), std::abs(rep.electric_profiles));
  rep.electric_defect = scale > 0.0 ? std::abs(rep.electric_sequence - rep.electric_profiles) / scale : 0.0;
  return rep;
}

}  // namespace magnls
