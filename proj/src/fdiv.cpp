#include "tom/fdiv.hpp"

#include <cmath>

namespace tom {

FDivergence FDivergence::from_name(const std::string& name) {
  if (name == "chi_squared") return chi_squared();
  if (name == "kl") return kl();
  throw std::invalid_argument("unknown divergence: " + name);
}

const char* FDivergence::name() const {
  return kind == DivergenceKind::kChiSquared ? "chi_squared" : "kl";
}

double FDivergence::f(double x) const {
  require(x >= 0.0, "FDivergence::f: x must be >= 0");
  switch (kind) {
    case DivergenceKind::kChiSquared:
      return (x - 1.0) * (x - 1.0);
    case DivergenceKind::kKl:
      return x == 0.0 ? 0.0 : x * std::log(x);
  }
  return 0.0;
}

double FDivergence::conjugate(double y) const {
  switch (kind) {
    case DivergenceKind::kChiSquared:
      // Maximizer x = 1 + y/2 while nonnegative; below y = -2 the optimum
      // pins at x = 0 with value -f(0) = -1.
      return y >= -2.0 ? 0.25 * y * y + y : -1.0;
    case DivergenceKind::kKl:
      return std::exp(y - 1.0);
  }
  return 0.0;
}

double FDivergence::conjugate_prime(double y) const {
  switch (kind) {
    case DivergenceKind::kChiSquared:
      return std::max(0.0, 1.0 + 0.5 * y);
    case DivergenceKind::kKl:
      return std::exp(y - 1.0);
  }
  return 0.0;
}

double divergence_from_ratios(const FDivergence& div, const Eigen::VectorXd& ratios,
                              const Eigen::VectorXd& base_weights) {
  require(ratios.size() == base_weights.size(), "divergence_from_ratios: length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < ratios.size(); ++i) {
    total += base_weights[i] * div.f(ratios[i]);
  }
  return total;
}

}  // namespace tom
