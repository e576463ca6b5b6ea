#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

namespace magnls {

// Gauss-Legendre rule mapped to [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int order() const { return static_cast<int>(nodes.size()); }
};

inline QuadratureRule gauss_legendre_unit(int order) {
  if (order < 1 || order > 200) throw std::invalid_argument("quadrature order must be in [1, 200]");
  // boost returns the non-negative zeros of P_order in ascending order.
  const std::vector<double> zeros = boost::math::legendre_p_zeros<double>(order);
  std::vector<double> x;
  for (auto it = zeros.rbegin(); it != zeros.rend(); ++it) {
    if (*it != 0.0) x.push_back(-*it);
  }
  for (double z : zeros) x.push_back(z);
  QuadratureRule rule;
  for (double xi : x) {
    const double dp = boost::math::legendre_p_prime(order, xi);
    const double w = 2.0 / ((1.0 - xi * xi) * dp * dp);
    rule.nodes.push_back(0.5 * (1.0 + xi));
    rule.weights.push_back(0.5 * w);
  }
  return rule;
}

}  // namespace magnls
