#pragma once

#include <Eigen/Dense>
#include <string>

#include "tom/common.hpp"

namespace tom {

enum class DivergenceKind { kChiSquared, kKl };

// An f-divergence D_f(p||q) = E_q[f(p/q)] together with its convex
// conjugate f* and the conjugate derivative f*'. The conjugate is taken
// over x >= 0 (density ratios), so for chi-squared f*'(y) clamps at zero.
struct FDivergence {
  DivergenceKind kind = DivergenceKind::kChiSquared;

  static FDivergence chi_squared() { return {DivergenceKind::kChiSquared}; }
  static FDivergence kl() { return {DivergenceKind::kKl}; }
  static FDivergence from_name(const std::string& name);
  const char* name() const;

  double f(double x) const;                // x >= 0; f(1) = 0
  double conjugate(double y) const;        // f*(y) = sup_{x>=0} (x y - f(x))
  double conjugate_prime(double y) const;  // the maximizing x; >= 0
};

// Sum_i base_weights_i * f(ratios_i); base_weights is a distribution.
double divergence_from_ratios(const FDivergence& div, const Eigen::VectorXd& ratios,
                              const Eigen::VectorXd& base_weights);

}  // namespace tom
