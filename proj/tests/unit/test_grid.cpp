#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "magnls/field_io.hpp"
#include "magnls/grid.hpp"
#include "magnls/random_fields.hpp"

using namespace magnls;

namespace {

ComplexField spike(const GridSpec& g, const Vec<double>& at, Complex value = {1.0, 0.0}) {
  ComplexField u(g);
  Vec<int> idx{0, 0, 0};
  for (int d = 0; d < g.dimension(); ++d) idx[d] = static_cast<int>(g.nearest_index(at[d]));
  u[g.linear(idx)] = value;
  return u;
}

}  // namespace

TEST(GridSpec, SpacingAndCentreNode) {
  const GridSpec g(2, 8.0, 129);
  EXPECT_DOUBLE_EQ(g.spacing(), 16.0 / 128.0);
  EXPECT_EQ(g.size(), 129u * 129u);
  EXPECT_EQ(g.coordinate(g.center_index()), 0.0);
  EXPECT_DOUBLE_EQ(g.coordinate(0), -8.0);
  EXPECT_DOUBLE_EQ(g.coordinate(128), 8.0);
}

TEST(GridSpec, RejectsInvalidShapes) {
  EXPECT_THROW(GridSpec(2, 1.0, 128), std::invalid_argument);
  EXPECT_THROW(GridSpec(2, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(GridSpec(4, 1.0, 9), std::invalid_argument);
  EXPECT_THROW(GridSpec(3, -1.0, 9), std::invalid_argument);
  EXPECT_THROW(GridSpec(3, 1.0, 1 << 20), std::invalid_argument);
}

TEST(GridSpec, LinearIndexRoundTrip) {
  const GridSpec g(3, 2.0, 9);
  for (std::size_t k = 0; k < g.size(); k += 7) EXPECT_EQ(g.linear(g.index_of(k)), k);
}

TEST(ComplexField, RejectsNonFiniteValues) {
  const GridSpec g(2, 1.0, 5);
  std::vector<Complex> v(g.size());
  v[3] = Complex(std::nan(""), 0.0);
  EXPECT_THROW(ComplexField(g, v), std::invalid_argument);
  EXPECT_THROW(ComplexField(g, std::vector<Complex>(3)), std::invalid_argument);
}

TEST(LpNorm, ZeroField) { EXPECT_EQ(lp_norm(ComplexField(GridSpec(2, 3.0, 11)), 3.0), 0.0); }

TEST(LpNorm, ConstantFieldUsesNodeSum) {
  const GridSpec g(2, 2.0, 41);
  const Complex c(0.6, -0.8);
  const ComplexField u = ComplexField::sample(g, [&](const Vec<double>&) { return c; });
  // Plain node sum: M^N h^N |c|^2, which is (2L)^N |c|^2 up to O(h).
  const double node_sum = std::sqrt(static_cast<double>(g.size()) * g.cell_volume()) * std::abs(c);
  EXPECT_NEAR(lp_norm(u, 2.0), node_sum, 1e-13);
  EXPECT_NEAR(lp_norm(u, 2.0), 4.0, 4.0 * g.spacing());
}

TEST(LpNorm, SingleSpike) {
  const GridSpec g(3, 2.0, 21);
  const double h = g.spacing();
  EXPECT_NEAR(lp_norm(spike(g, {0.0, 0.0, 0.0}), 3.0), std::pow(h * h * h, 1.0 / 3.0), 1e-15);
}

TEST(LpNorm, RejectsBadExponent) {
  const ComplexField u(GridSpec(2, 1.0, 5));
  EXPECT_THROW(lp_norm(u, 0.5), std::invalid_argument);
  EXPECT_THROW(lp_norm(u, std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST(LpNorm, Homogeneity) {
  const GridSpec g(2, 4.0, 33);
  std::mt19937_64 rng(3);
  const ComplexField u = white_noise_field(g, rng);
  for (double p : {1.0, 2.0, 3.0, 5.5}) {
    const Complex c(-1.7, 2.3);
    EXPECT_NEAR(lp_norm(c * u, p), std::abs(c) * lp_norm(u, p), 1e-13 * lp_norm(c * u, p));
  }
}

TEST(WindowMass, SpikesAndMonotonicity) {
  const GridSpec g(2, 8.0, 81);
  const double h = g.spacing();
  EXPECT_EQ(window_mass(ComplexField(g), {0.0, 0.0, 0.0}, 2.0, 2.0), 0.0);
  const ComplexField one = spike(g, {0.0, 0.0, 0.0});
  EXPECT_NEAR(window_mass(one, {0.0, 0.0, 0.0}, h, 2.0), h * h, 1e-15);
  ComplexField two = one;
  two += spike(g, {6.0, 0.0, 0.0});
  EXPECT_NEAR(window_mass(two, {0.0, 0.0, 0.0}, 1.0, 2.0), h * h, 1e-15);

  std::mt19937_64 rng(5);
  const ComplexField u = white_noise_field(g, rng);
  double prev = 0.0;
  for (double r = 0.0; r < 12.0; r += 0.37) {
    const double m = window_mass(u, {1.0, -2.0, 0.0}, r, 3.0);
    EXPECT_GE(m, prev);
    prev = m;
  }
  EXPECT_NEAR(window_mass(u, {0.0, 0.0, 0.0}, 100.0, 3.0), lp_mass(u, 3.0), 1e-12 * lp_mass(u, 3.0));
}

TEST(Translate, IdentitySpikeAndInverse) {
  const GridSpec g(2, 5.0, 51);
  std::mt19937_64 rng(9);
  const ComplexField u = localized_random_field(g, rng, {0.0, 0.0, 0.0}, 0.5);
  EXPECT_EQ(translate(u, Vec<double>{0.0, 0.0, 0.0}), u);
  const Vec<double> y{1.2, -0.6, 0.0};
  EXPECT_EQ(translate(spike(g, {0.0, 0.0, 0.0}), y), spike(g, y));
  // Round trip is exact on nodes whose image stays in the box; the rest is Dirichlet filled.
  const ComplexField back = translate(translate(u, y), Vec<double>{-y[0], -y[1], 0.0});
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec<double> x = g.position(k);
    const bool kept = std::abs(x[0] + y[0]) <= 5.0 + 1e-9 && std::abs(x[1] + y[1]) <= 5.0 + 1e-9;
    EXPECT_EQ(back[k], kept ? u[k] : Complex(0.0, 0.0));
  }
}

TEST(Translate, DirichletFillAndRejection) {
  const GridSpec g(2, 1.0, 11);
  const ComplexField ones = ComplexField::sample(g, [](const Vec<double>&) { return Complex(1.0, 0.0); });
  const ComplexField moved = translate(ones, Vec<double>{0.2, 0.0, 0.0});
  EXPECT_EQ(moved[g.linear({0, 5, 0})], Complex(0.0, 0.0));
  EXPECT_EQ(moved[g.linear({1, 5, 0})], Complex(1.0, 0.0));
  EXPECT_THROW(translate(ones, Vec<double>{0.15, 0.0, 0.0}), std::invalid_argument);
}

TEST(Discretization, CoverAndMultiplicity) {
  const GridSpec g(2, 4.0, 41);
  EXPECT_THROW(DiscretizationSpec(2, 1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(DiscretizationSpec(2, 0.0, 1.0), std::invalid_argument);
  const DiscretizationSpec xi(2, 1.0, 0.75);
  EXPECT_TRUE(xi.compatible_with(g));
  EXPECT_FALSE(DiscretizationSpec::integer_lattice(2, 0.25).compatible_with(GridSpec(2, 4.0, 21)));
  const std::vector<Vec<double>> pts = xi.points_covering(g);
  EXPECT_NE(std::find(pts.begin(), pts.end(), Vec<double>{0.0, 0.0, 0.0}), pts.end());
  const int mult = xi.multiplicity(g);
  std::mt19937_64 rng(1);
  const ComplexField u = white_noise_field(g, rng);
  double cover = 0.0;
  for (const Vec<double>& y : pts) cover += window_mass(u, y, xi.covering_radius(), 2.5);
  const double total = lp_mass(u, 2.5);
  EXPECT_GE(cover, total * (1.0 - 1e-12));
  EXPECT_LE(cover, mult * total * (1.0 + 1e-12));
}

TEST(FieldDump, BitExactRoundTrip) {
  const GridSpec g(3, 1.5, 9);
  std::mt19937_64 rng(4);
  ComplexField u = white_noise_field(g, rng);
  u[0] = Complex(-0.0, 5e-324);
  u[1] = Complex(std::numeric_limits<double>::max(), -std::numeric_limits<double>::min());
  std::stringstream ss;
  write_field(ss, u, "noise");
  const NamedField back = read_field(ss);
  EXPECT_EQ(back.name, "noise");
  ASSERT_EQ(back.field.size(), u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.field[k].real()), std::bit_cast<std::uint64_t>(u[k].real()));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.field[k].imag()), std::bit_cast<std::uint64_t>(u[k].imag()));
  }
}

TEST(FieldDump, HeaderAndTruncation) {
  const GridSpec g(2, 2.0, 5);
  std::stringstream ss;
  write_field(ss, ComplexField(g), "zero");
  std::string line;
  std::getline(ss, line);
  const nlohmann::json header = nlohmann::json::parse(line);
  EXPECT_EQ(header.at("dimension"), 2);
  EXPECT_EQ(header.at("M"), 5);
  EXPECT_EQ(header.at("L"), 2.0);
  EXPECT_EQ(header.at("h"), 1.0);
  std::stringstream cut;
  write_field(cut, ComplexField(g), "zero");
  std::string s = cut.str();
  s.resize(s.size() - 3);
  std::stringstream broken(s);
  EXPECT_THROW(read_field(broken), std::runtime_error);
}
