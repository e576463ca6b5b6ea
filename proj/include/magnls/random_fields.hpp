#pragma once
// Seeded random test fields.

#include <cmath>
#include <random>

#include "magnls/grid.hpp"

namespace magnls {

// Gaussian envelope of width `width` around `center` carrying a random smooth phase
// and a random low-order amplitude modulation. Values below 1e-300 are flushed to 0
// so the support is compact in floating point.
inline ComplexField localized_random_field(const GridSpec& g, std::mt19937_64& rng, const Vec<double>& center,
                                           double width) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int n = g.dimension();
  Vec<double> k{0.0, 0.0, 0.0};
  Vec<double> q{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) {
    k[d] = 2.0 * unit(rng) / width;
    q[d] = unit(rng) / width;
  }
  const double phase0 = 3.0 * unit(rng);
  const double curv = unit(rng) / (width * width);
  const double amp = 1.0 + 0.5 * unit(rng);
  return ComplexField::sample(g, [&](const Vec<double>& x) {
    double r2 = 0.0;
    double phase = phase0;
    double mod = 1.0;
    for (int d = 0; d < n; ++d) {
      const double z = x[d] - center[d];
      r2 += z * z;
      phase += k[d] * z;
      mod += 0.3 * q[d] * z;
    }
    phase += curv * r2;
    const double env = amp * mod * std::exp(-r2 / (2.0 * width * width));
    if (std::abs(env) < 1e-300) return Complex(0.0, 0.0);
    return std::polar(env, phase);
  });
}

// Independent complex gaussian values at every node.
inline ComplexField white_noise_field(const GridSpec& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> v(g.size());
  for (Complex& z : v) {
    const double re = normal(rng);
    const double im = normal(rng);
    z = Complex(re, im);
  }
  return ComplexField(g, std::move(v));
}

}  // namespace magnls
