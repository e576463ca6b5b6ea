#include <cmath>

#include <gtest/gtest.h>

#include "magnls/profiles.hpp"

using namespace magnls;

namespace {

double l2_distance(const ComplexField& a, const ComplexField& b) {
  ComplexField d = a;
  d -= b;
  return lp_norm(d, 2.0);
}

ShiftFrame moving(std::size_t count, double start, double step) {
  ShiftFrame f;
  for (std::size_t k = 0; k < count; ++k) f.shifts.push_back({start + step * static_cast<double>(k), 0.0, 0.0});
  return f;
}

struct Planted {
  GridSpec grid;
  std::vector<ComplexField> profiles;
  std::vector<ShiftFrame> frames;
  MagneticPotential a;
};

Planted two_profiles(std::size_t count) {
  const GridSpec g(2, 8.0, 65);
  return {g,
          {bump_profile(g, {0.0, 0.0, 0.0}, 1.5, 1.0), bump_profile(g, {0.0, 0.0, 0.0}, 1.5, 0.8, {0.5, 0.0, 0.0})},
          {ShiftFrame::fixed(count), moving(count, 3.0, 1.0)},
          MagneticPotential::constant_field_planar(2, 0.5)};
}

}  // namespace

TEST(Profiles, BumpAndGaussianShapes) {
  const GridSpec g(2, 4.0, 41);
  const ComplexField b = bump_profile(g, {1.0, 0.0, 0.0}, 1.0, 2.0, {0.0, 3.0, 0.0});
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    const double s = ((x[0] - 1.0) * (x[0] - 1.0) + x[1] * x[1]);
    if (s >= 1.0) {
      EXPECT_EQ(b[k], Complex(0.0, 0.0));
    } else {
      EXPECT_NEAR(std::abs(b[k]), 2.0 * std::pow(1.0 - s, 3), 1e-14);
    }
  }
  EXPECT_NEAR(std::abs(b[g.linear({25, 20, 0})]), 2.0, 1e-14);
  const ComplexField gs = gaussian_profile(g, {0.0, 0.0, 0.0}, 0.5, 1.5);
  EXPECT_NEAR(gs[g.linear({20, 20, 0})].real(), 1.5, 1e-15);
  EXPECT_NEAR(gs[g.linear({25, 20, 0})].real(), 1.5 * std::exp(-2.0), 1e-14);
  EXPECT_THROW(bump_profile(g, {0.0, 0.0, 0.0}, 0.0, 1.0), std::invalid_argument);
}

TEST(Synthesis, StationaryAndMovingProfiles) {
  const Planted pl = two_profiles(4);
  const std::vector<ComplexField> seq = synthesize_sequence(pl.profiles, pl.frames, pl.a, 4);
  ASSERT_EQ(seq.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec<double> y = pl.frames[1].shifts[k];
    ComplexField expected = pl.profiles[0];
    expected += magnetic_shift(pl.profiles[1], y, GaugePhase(pl.a, y, kDefaultQuadratureOrder));
    EXPECT_EQ(seq[k], expected);
    // Disjoint supports: p-masses add.
    EXPECT_NEAR(lp_mass(seq[k], 3.0), lp_mass(pl.profiles[0], 3.0) + lp_mass(pl.profiles[1], 3.0), 1e-12);
  }
}

TEST(Synthesis, EnergyCovarianceForMovingProfile) {
  // E_A(g_k v) = E_{A_k}(v) with A_k = A_{y_k}(. + y_k); exact links make it an identity.
  const GridSpec g(2, 8.0, 65);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 0.5);
  const ComplexField v = bump_profile(g, {0.0, 0.0, 0.0}, 1.5, 1.0, {0.3, -0.2, 0.0});
  const ShiftFrame f = moving(4, 2.0, 1.0);
  const std::vector<ComplexField> seq = synthesize_sequence({v}, {f}, a, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    const Vec<double>& y = f.shifts[k];
    const MagneticPotential ak = corrected_potential(GaugePhase(a, y, kDefaultQuadratureOrder), true);
    const double lhs = energy_EA(seq[k], LinkPhases::build(a, g, LinkRule::Exact));
    const double rhs = energy_EA(v, LinkPhases::build(ak, g, LinkRule::Exact));
    EXPECT_NEAR(lhs, rhs, 1e-12 * lhs);
  }
}

TEST(Synthesis, Rejections) {
  const Planted pl = two_profiles(4);
  EXPECT_THROW(synthesize_sequence(pl.profiles, {pl.frames[0]}, pl.a, 4), std::invalid_argument);
  EXPECT_THROW(synthesize_sequence(pl.profiles, pl.frames, pl.a, 5), std::invalid_argument);
  EXPECT_THROW(synthesize_sequence(pl.profiles, {pl.frames[0], moving(4, 3.0, 2.0)}, pl.a, 4), ProfileError);
  EXPECT_THROW(synthesize_sequence(pl.profiles, {pl.frames[0], moving(4, 0.0, 0.0)}, pl.a, 4), ProfileError);
  NoiseOptions bad;
  bad.amplitude = -1.0;
  EXPECT_THROW(synthesize_sequence(pl.profiles, pl.frames, pl.a, 4, bad), std::invalid_argument);
}

TEST(Synthesis, NoiseLevelAndSupport) {
  const Planted pl = two_profiles(4);
  NoiseOptions noise;
  noise.amplitude = 0.1;
  noise.p = 3.0;
  const std::vector<ComplexField> clean = synthesize_sequence(pl.profiles, pl.frames, pl.a, 4);
  const std::vector<ComplexField> noisy = synthesize_sequence(pl.profiles, pl.frames, pl.a, 4, noise);
  for (std::size_t k = 0; k < 4; ++k) {
    ComplexField rho = noisy[k];
    rho -= clean[k];
    EXPECT_NEAR(lp_norm(rho, 3.0), 0.1 * (1.0 - k / 4.0), 1e-12);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      if (clean[k][i] != Complex(0.0, 0.0)) EXPECT_EQ(rho[i], Complex(0.0, 0.0));
    }
  }
  EXPECT_EQ(synthesize_sequence(pl.profiles, pl.frames, pl.a, 4, noise)[2], noisy[2]);
}

TEST(Extraction, RoundTripTwoProfiles) {
  const Planted pl = two_profiles(4);
  const std::vector<ComplexField> seq = synthesize_sequence(pl.profiles, pl.frames, pl.a, 4);
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(2, 1.0);
  ExtractOptions o;
  o.p = 3.0;
  o.profile_radius = 1.75;
  const ProfileDecomposition dec = extract_profiles(seq, xi, 1e-3, pl.a, o);
  ASSERT_EQ(dec.profiles.size(), 2u);
  EXPECT_TRUE(dec.frames[0].stationary());
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(dec.frames[n].shifts[k], pl.frames[n].shifts[k]);
    EXPECT_LT(l2_distance(dec.profiles[n], pl.profiles[n]), 1e-12 * lp_norm(pl.profiles[n], 2.0));
  }
  EXPECT_LT(dec.final_window_mass, 1e-3);
  EXPECT_LT(saturation_mass(dec, xi, 3.0), 1e-3);
  for (std::size_t i = 1; i < dec.extraction_masses.size(); ++i) {
    EXPECT_LE(dec.extraction_masses[i], dec.extraction_masses[i - 1]);
  }

  const SplittingReport rep = verify_splitting(dec, seq, pl.a, 3.0);
  EXPECT_LT(rep.pmass_defect, 1e-10);
  EXPECT_GT(rep.l2_margin, -1e-10);
  EXPECT_GT(rep.energy_margin, -1e-3);
  EXPECT_EQ(rep.frame_defects.size(), 2u);
  EXPECT_LT(rep.frame_defects[1], 1e-10);
}

TEST(Extraction, SingleStationaryProfileIsExact) {
  const GridSpec g(2, 4.0, 33);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 1.0);
  const ComplexField v = bump_profile(g, {0.0, 0.0, 0.0}, 1.0, 1.0);
  const std::vector<ComplexField> seq(4, v);
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(2, 0.5);
  const ProfileDecomposition dec = extract_profiles(seq, xi, 1e-6, a);
  ASSERT_EQ(dec.profiles.size(), 1u);
  EXPECT_EQ(dec.profiles[0], v);
  const SplittingReport rep = verify_splitting(dec, seq, a, 2.0);
  EXPECT_LT(rep.pmass_defect, 1e-14);
  EXPECT_NEAR(rep.l2_margin, 0.0, 1e-14);
  EXPECT_NEAR(rep.energy_margin, 0.0, 1e-14);
}

TEST(Extraction, VanishingSequenceHasNoProfiles) {
  const GridSpec g(2, 4.0, 33);
  const std::vector<ComplexField> seq(3, ComplexField(g));
  const DiscretizationSpec xi = DiscretizationSpec::integer_lattice(2, 1.0);
  const ProfileDecomposition dec = extract_profiles(seq, xi, 1e-3, MagneticPotential::zero(2));
  EXPECT_TRUE(dec.profiles.empty());
  EXPECT_EQ(dec.final_window_mass, 0.0);
  EXPECT_THROW(extract_profiles({ComplexField(g)}, xi, 1e-3, MagneticPotential::zero(2)), std::invalid_argument);
  EXPECT_THROW(extract_profiles(seq, xi, 0.0, MagneticPotential::zero(2)), std::invalid_argument);
  EXPECT_THROW(extract_profiles(seq, DiscretizationSpec::integer_lattice(2, 0.3), 1e-3, MagneticPotential::zero(2)),
               std::invalid_argument);
}

TEST(Dyadic, IdentityAndCriticalNormInvariance) {
  const GridSpec g(3, 4.0, 65);
  const ComplexField w = gaussian_profile(g, {0.0, 0.0, 0.0}, 1.0, 1.0);
  EXPECT_EQ(dyadic_rescale(w, 0, {0.0, 0.0, 0.0}).field, w);
  const double m = lp_mass(w, 6.0);
  // Node shift by y with j = 0 is exact away from the boundary.
  const RescaledField moved = dyadic_rescale(w, 0, {0.5, 0.0, 0.0});
  EXPECT_NEAR(lp_mass(moved.field, 6.0), m, 1e-10 * m);
  // Concentration by 2 with a resolved profile keeps the critical norm to interpolation accuracy.
  const RescaledField conc = dyadic_rescale(w, 1, {0.0, 0.0, 0.0}, 1.0);
  EXPECT_FALSE(conc.resolution_loss);
  EXPECT_NEAR(lp_mass(conc.field, 6.0), m, 0.02 * m);
  EXPECT_TRUE(dyadic_rescale(w, 4, {0.0, 0.0, 0.0}, 0.5).resolution_loss);
  EXPECT_THROW(dyadic_rescale(w, 0, {20.0, 0.0, 0.0}), ProfileError);
  EXPECT_THROW(dyadic_rescale(w, 40, {0.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(Dyadic, AmplitudeFactor) {
  const GridSpec g(3, 2.0, 17);
  const ComplexField ones = ComplexField::sample(g, [](const Vec<double>&) { return Complex(1.0, 0.0); });
  const RescaledField r = dyadic_rescale(ones, 2, {0.0, 0.0, 0.0});
  EXPECT_NEAR(r.field[g.linear({8, 8, 8})].real(), 2.0, 1e-15);  // 2^{(3-2) 2/2}
}

TEST(Dyadic, ScaleInvariantPotentialsAreFixed) {
  const MagneticPotential ab = MagneticPotential::aharonov_bohm(3, 0.3);
  const ElectricPotential hardy = ElectricPotential::hardy(3, 0.2);
  for (int j : {-2, 1, 3}) {
    const RescaledPotentials rp = potential_rescale(ab, hardy, j, {0.0, 0.0, 0.0});
    for (const Vec<double>& x : {Vec<double>{0.4, 1.1, -0.3}, Vec<double>{-2.0, 0.5, 1.0}}) {
      const Vec<double> lhs = rp.a(x);
      const Vec<double> rhs = ab(x);
      for (int d = 0; d < 3; ++d) EXPECT_NEAR(lhs[d], rhs[d], 1e-13);
      EXPECT_NEAR(rp.v(x), hardy(x), 1e-12);
    }
  }
  // A translated frame is not fixed.
  const RescaledPotentials moved = potential_rescale(ab, hardy, 0, {1.0, 0.0, 0.0});
  EXPECT_NEAR(moved.v({0.5, 0.0, 0.0}), hardy({1.5, 0.0, 0.0}), 1e-14);
}

TEST(Dyadic, ElectricChangeOfVariables) {
  // int V |g w|^2 = int V^(n) |w|^2 with V^(n) = 2^{-2j} V(2^{-j} . + y).
  const GridSpec g(3, 6.0, 97);
  const ElectricPotential v = ElectricPotential::custom(3, "1/(1 + x1^2 + x2^2 + x3^2)");
  const ComplexField w = gaussian_profile(g, {0.0, 0.0, 0.0}, 0.8, 1.0);
  const int j = 1;
  const Vec<double> y{1.0, 0.0, 0.0};
  const ComplexField gw = dyadic_rescale(w, j, y).field;
  const double lhs = electric_energy(gw, sample_electric(v, g));
  const RescaledPotentials rp = potential_rescale(MagneticPotential::zero(3), v, j, y);
  const double rhs = electric_energy(w, sample_electric(rp.v, g));
  EXPECT_NEAR(lhs, rhs, 0.01 * rhs);
}

TEST(BrezisLieb, SingleProfileAndTwoScales) {
  const GridSpec g(3, 8.0, 97);
  const ElectricPotential v = ElectricPotential::custom(3, "exp(-(x1^2 + x2^2 + x3^2)/8)");
  const ComplexField w0 = gaussian_profile(g, {0.0, 0.0, 0.0}, 1.0, 1.0);
  const ComplexField w1 = gaussian_profile(g, {0.0, 0.0, 0.0}, 2.0, 1.0);
  const std::size_t count = 4;
  ShiftFrame f0{std::vector<Vec<double>>(count, Vec<double>{0.0, 0.0, 0.0}), std::vector<int>(count, 0)};
  ShiftFrame f1{std::vector<Vec<double>>(count, Vec<double>{4.0, 0.0, 0.0}), {0, 1, 2, 3}};

  const std::vector<ComplexField> single = synthesize_dyadic_sequence({w0}, {f0}, count);
  const ProfileDecomposition d0{{w0}, {f0}, {}, {}, 0.0, 0.0};
  const BrezisLiebReport r0 = brezis_lieb_check(single, d0, v);
  EXPECT_LT(r0.mass_defect, 1e-14);
  EXPECT_LT(r0.electric_defect, 1e-14);

  const std::vector<ComplexField> two = synthesize_dyadic_sequence({w0, w1}, {f0, f1}, count);
  const ProfileDecomposition d2{{w0, w1}, {f0, f1}, {}, {}, 0.0, 0.0};
  const BrezisLiebReport r2 = brezis_lieb_check(two, d2, v);
  EXPECT_LT(r2.mass_defect, 0.02);
  EXPECT_LT(r2.electric_defect, 0.02);
  EXPECT_THROW(synthesize_dyadic_sequence({w0}, {ShiftFrame::fixed(count)}, count), std::invalid_argument);
  EXPECT_THROW(synthesize_dyadic_sequence({gaussian_profile(GridSpec(2, 1.0, 9), {0.0, 0.0, 0.0}, 1.0, 1.0)},
                                          {f0}, count),
               std::invalid_argument);
}
