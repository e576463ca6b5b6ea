#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fd_oracle.hpp"
#include "imaginary_time.hpp"
#include "magnls/random_fields.hpp"
#include "magnls/solver.hpp"
#include "radial_sobolev.hpp"

using namespace magnls;

namespace {

SolveOptions quick(double p = 3.0) {
  SolveOptions o;
  o.p = p;
  o.restarts = 1;
  o.tolerance = 1e-9;
  return o;
}

ElectricPotential dip() { return ElectricPotential::well(2, 1.0, 0.5, 1.0); }

}  // namespace

TEST(SolveOptions, Validation) {
  SolveOptions o;
  EXPECT_NO_THROW(o.validate(2));
  o.p = 2.0;
  EXPECT_THROW(o.validate(2), std::invalid_argument);
  o.p = 6.0;
  EXPECT_NO_THROW(o.validate(3));
  o.p = 6.01;
  EXPECT_THROW(o.validate(3), std::invalid_argument);
  EXPECT_NO_THROW(o.validate(2));
  o = SolveOptions{};
  o.tau0 = 0.0;
  EXPECT_THROW(o.validate(2), std::invalid_argument);
  o = SolveOptions{};
  o.tolerance = -1.0;
  EXPECT_THROW(o.validate(2), std::invalid_argument);
  o = SolveOptions{};
  o.restarts = 0;
  EXPECT_THROW(o.validate(2), std::invalid_argument);
  o = SolveOptions{};
  o.initial = InitialGuess::Loaded;
  EXPECT_THROW(o.validate(2), std::invalid_argument);
  EXPECT_THROW(initial_guess_from_string("flat"), std::invalid_argument);
}

TEST(GroundState, MatchesImaginaryTimeOracle) {
  const oracle::ImaginaryTimeResult ref = oracle::imaginary_time_ground_state(33, 4.0, 1.0, 3.0);
  ASSERT_LT(std::abs(ref.mu), 1e-10);
  const GroundStateResult r =
      minimize_ground_state(MagneticPotential::zero(2), ElectricPotential::constant(2, 1.0), GridSpec(2, 4.0, 33), quick());
  EXPECT_EQ(r.status, "converged");
  EXPECT_NEAR(r.kappa, ref.kappa, 1e-9 * ref.kappa);
  EXPECT_LT(r.residual, 1e-9);
  EXPECT_NEAR(r.lambda, r.kappa, 1e-8);
  EXPECT_TRUE(r.history_monotone());
  EXPECT_LT(r.normalization_error, 1e-12);
  EXPECT_NEAR(r.history.back(), r.kappa, 1e-12 * r.kappa);
}

TEST(GroundState, StationaryByFiniteDifferences) {
  const GridSpec g(2, 4.0, 41);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 1.0);
  const GroundStateResult r = minimize_ground_state(a, dip(), g, quick());
  ASSERT_EQ(r.status, "converged");
  const LinkPhases links = LinkPhases::build(a, g);
  const PotentialSample v = sample_electric(dip(), g);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 4; ++i) {
    const ComplexField dir = localized_random_field(g, rng, {0.3 * i - 0.5, 0.2, 0.0}, 0.6);
    const double scale = std::sqrt(oracle::j_value(dir, links, v));
    EXPECT_LT(std::abs(oracle::fd_tangent_derivative(r.u, dir, links, v, 3.0)), 1e-6 * scale);
    EXPECT_NEAR(oracle::fd_multiplier(r.u, dir, links, v, 3.0), r.lambda, 1e-6 * r.lambda);
  }
  EXPECT_NEAR(r.lambda, r.kappa, 1e-7 * r.kappa);
}

TEST(GroundState, RescaledFieldSolvesUnitEquation) {
  const GridSpec g(2, 4.0, 33);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 0.7);
  for (double p : {3.0, 4.0}) {
    const GroundStateResult r = minimize_ground_state(a, dip(), g, quick(p));
    const ComplexField w = rescale_to_equation(r);
    EXPECT_NEAR(lp_norm(w, p), r.rescale_factor(), 1e-11 * r.rescale_factor());
    const double res = el_residual(w, LinkPhases::build(a, g), sample_electric(dip(), g), 1.0, p);
    EXPECT_LT(res, 1e-8);
  }
}

TEST(GroundState, RescaleFactorExamples) {
  GroundStateResult r(ComplexField(GridSpec(2, 1.0, 5)));
  r.lambda = 4.0;
  r.p = 3.0;
  EXPECT_DOUBLE_EQ(r.rescale_factor(), 4.0);
  r.p = 4.0;
  EXPECT_DOUBLE_EQ(r.rescale_factor(), 2.0);
  r.lambda = 0.0;
  EXPECT_THROW(rescale_to_equation(r), std::invalid_argument);
}

TEST(GroundState, DiamagneticComparison) {
  const GridSpec g(2, 4.0, 33);
  const double k0 = minimize_ground_state(MagneticPotential::zero(2), dip(), g, quick()).kappa;
  for (double b : {0.5, 1.5}) {
    const GroundStateResult r = minimize_ground_state(MagneticPotential::constant_field_planar(2, b), dip(), g, quick());
    EXPECT_GE(r.kappa, k0 * (1.0 - 1e-12));
    EXPECT_EQ(r.diamagnetic_violations, 0u);
  }
}

TEST(GroundState, GaugeOrbitInvariance) {
  const GridSpec g(2, 4.0, 33);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 1.0);
  const MagneticPotential b = MagneticPotential::gauge_shifted(a, "0.5*x1^2 - x1*x2");
  const Problem pa = make_problem(a, dip(), g, LinkRule::Exact);
  const Problem pb = make_problem(b, dip(), g, LinkRule::Exact);
  const GroundStateResult ra = minimize_ground_state(pa, quick());
  const GroundStateResult rb = minimize_ground_state(pb, quick());
  EXPECT_NEAR(ra.kappa, rb.kappa, 1e-9 * ra.kappa);
  // u_b = e^{-i psi} u_a up to one global phase.
  Complex ref(0.0, 0.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    const double psi = 0.5 * x[0] * x[0] - x[0] * x[1];
    const Complex z = rb.u[k] * std::polar(1.0, psi) * std::conj(ra.u[k]);
    if (std::abs(ra.u[k]) > 1e-3) {
      if (ref == Complex(0.0, 0.0)) ref = z / std::abs(z);
      worst = std::max(worst, std::abs(z / std::abs(z) - ref));
    }
    EXPECT_NEAR(std::abs(rb.u[k]), std::abs(ra.u[k]), 1e-6);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(GroundState, MonotoneInPotential) {
  const GridSpec g(2, 4.0, 33);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 0.5);
  const double k1 = minimize_ground_state(a, ElectricPotential::constant(2, 1.0), g, quick()).kappa;
  const double k2 = minimize_ground_state(a, ElectricPotential::constant(2, 1.5), g, quick()).kappa;
  const double kw = minimize_ground_state(a, dip(), g, quick()).kappa;
  EXPECT_GT(k2, k1);
  EXPECT_LT(kw, k1);
}

TEST(GroundState, DeterministicForSeed) {
  const GridSpec g(2, 3.0, 25);
  SolveOptions o = quick();
  o.initial = InitialGuess::Random;
  o.restarts = 3;
  o.seed = 42;
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 1.0);
  const GroundStateResult r1 = minimize_ground_state(a, dip(), g, o);
  const GroundStateResult r2 = minimize_ground_state(a, dip(), g, o);
  EXPECT_EQ(r1.to_json().dump(), r2.to_json().dump());
  EXPECT_EQ(r1.u, r2.u);
  EXPECT_EQ(r1.start_kappas.size(), 3u);
  EXPECT_LT(r1.kappa_spread(), 1e-8 * r1.kappa);
  EXPECT_EQ(r1.kappa, *std::min_element(r1.start_kappas.begin(), r1.start_kappas.end()));
}

TEST(GroundState, LoadedMinimizerRestartsConverged) {
  const GridSpec g(2, 3.0, 25);
  const MagneticPotential a = MagneticPotential::constant_field_planar(2, 1.0);
  const GroundStateResult r = minimize_ground_state(a, dip(), g, quick());
  SolveOptions o = quick();
  o.initial = InitialGuess::Loaded;
  o.loaded = r.u;
  const GroundStateResult again = minimize_ground_state(a, dip(), g, o);
  EXPECT_EQ(again.status, "converged");
  EXPECT_LE(again.iterations, 2);
  EXPECT_NEAR(again.kappa, r.kappa, 1e-12 * r.kappa);
}

TEST(GroundState, IterationCapGivesPartialResult) {
  SolveOptions o = quick();
  o.max_iterations = 3;
  const GroundStateResult r =
      minimize_ground_state(MagneticPotential::zero(2), dip(), GridSpec(2, 4.0, 33), o);
  EXPECT_EQ(r.status, "max-iterations");
  EXPECT_EQ(r.iterations, 3);
  EXPECT_EQ(r.history.size(), 4u);
  EXPECT_TRUE(r.history_monotone());
  EXPECT_EQ(r.trace.size(), 4u);
  EXPECT_GT(r.residual, o.tolerance);
}

TEST(GroundState, JsonFields) {
  const GroundStateResult r =
      minimize_ground_state(MagneticPotential::zero(2), dip(), GridSpec(2, 3.0, 17), quick());
  const nlohmann::json j = r.to_json();
  for (const char* key : {"kappa", "lambda", "residual", "iterations", "status", "history_monotone",
                          "normalization_error", "rescale_factor", "start_kappas", "grid"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.at("grid").at("M"), 17);
}

TEST(Critical, RejectsOutsideHypotheses) {
  SolveOptions o = quick();
  EXPECT_THROW(solve_critical(0.0, 0.0, GridSpec(2, 2.0, 9), o), std::invalid_argument);
  EXPECT_THROW(solve_critical(0.6, 0.3, GridSpec(3, 2.0, 9), o), std::invalid_argument);
  EXPECT_THROW(solve_critical(0.1, 0.25, GridSpec(3, 2.0, 9), o), std::invalid_argument);
  EXPECT_DOUBLE_EQ(critical_exponent(3), 6.0);
}

TEST(Critical, SmallRunIsPositiveWithPinnedPlane) {
  const GridSpec g(3, 4.0, 21);
  SolveOptions o = quick();
  o.max_iterations = 3000;
  const CriticalResult r = solve_critical(0.3, 0.2, g, o);
  EXPECT_TRUE(r.positive);
  EXPECT_GT(r.ground.kappa, 0.0);
  EXPECT_DOUBLE_EQ(r.ground.p, 6.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.position(k)[0] == 0.0) EXPECT_EQ(r.ground.u[k], Complex(0.0, 0.0));
  }
  EXPECT_EQ(r.lattice_concentrated, r.width < 2.0 * g.spacing());
  EXPECT_TRUE(r.ground.history_monotone());
}

TEST(SobolevOracles, ClosedFormAndRadialQuadrature) {
  const double s3 = 3.0 * std::pow(std::numbers::pi / 2.0, 4.0 / 3.0);
  EXPECT_NEAR(oracle::sobolev_constant(3), s3, 1e-12);
  EXPECT_NEAR(oracle::radial_sobolev_quotient(3).quotient, s3, 1e-8 * s3);
  EXPECT_NEAR(oracle::radial_sobolev_quotient(4).quotient, oracle::sobolev_constant(4), 1e-8 * s3);
}

TEST(SobolevOracles, TalentiEstimateApproachesConstant) {
  const double s3 = oracle::sobolev_constant(3);
  const SobolevEstimate coarse = talenti_sobolev_oracle(3, GridSpec(3, 6.0, 37));
  const SobolevEstimate fine = talenti_sobolev_oracle(3, GridSpec(3, 8.0, 65));
  EXPECT_LT(std::abs(fine.estimate - s3), std::abs(coarse.estimate - s3));
  EXPECT_LT(std::abs(fine.estimate - s3), 0.03 * s3);
  EXPECT_GE(fine.estimate, fine.ball_quotient - 1e-12);
  EXPECT_THROW(talenti_sobolev_oracle(2, GridSpec(2, 1.0, 9)), std::invalid_argument);
  // Amplitude cancels in the quotient.
  EXPECT_NEAR(talenti_sobolev_oracle(3, GridSpec(3, 6.0, 37), 3.0).estimate, coarse.estimate, 1e-12 * s3);
}
