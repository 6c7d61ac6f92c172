#include <doctest.h>

#include <cmath>

#include "tom/fdiv.hpp"
#include "tom/rng.hpp"

using namespace tom;

namespace {

// Brute-force conjugate: grid search of x*y - f(x) over x >= 0.
double conjugate_by_grid(const FDivergence& div, double y) {
  double best = -1e300;
  for (double x = 0.0; x <= 50.0; x += 1e-4) {
    best = std::max(best, x * y - div.f(x));
  }
  return best;
}

double kl_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) out += p[i] * std::log(p[i] / q[i]);
  }
  return out;
}

Eigen::VectorXd random_distribution(int n, Rng& rng) {
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p[i] = -std::log(1.0 - rng.uniform());
  return p / p.sum();
}

}  // namespace

TEST_CASE("f values at the reference points") {
  const FDivergence chi = FDivergence::chi_squared();
  const FDivergence kl = FDivergence::kl();
  CHECK(chi.f(1.0) == 0.0);
  CHECK(chi.f(3.0) == doctest::Approx(4.0));
  CHECK(kl.f(1.0) == 0.0);
  CHECK(kl.f(0.0) == 0.0);  // 0 log 0 := 0
  CHECK_THROWS_AS(chi.f(-0.1), std::invalid_argument);
}

TEST_CASE("conjugate closed forms match a grid-search oracle") {
  const FDivergence chi = FDivergence::chi_squared();
  const FDivergence kl = FDivergence::kl();
  CHECK(chi.conjugate(0.0) == doctest::Approx(conjugate_by_grid(chi, 0.0)).epsilon(1e-6));
  CHECK(chi.conjugate(0.0) == doctest::Approx(0.0));
  CHECK(chi.conjugate(2.0) == doctest::Approx(conjugate_by_grid(chi, 2.0)).epsilon(1e-6));
  CHECK(chi.conjugate(2.0) == doctest::Approx(3.0));
  CHECK(chi.conjugate(-3.0) == doctest::Approx(-1.0));  // pinned at x = 0
  CHECK(kl.conjugate(1.0) == doctest::Approx(conjugate_by_grid(kl, 1.0)).epsilon(1e-5));
  CHECK(kl.conjugate(1.0) == doctest::Approx(1.0));
}

TEST_CASE("conjugate_prime values and finite-difference consistency") {
  const FDivergence chi = FDivergence::chi_squared();
  const FDivergence kl = FDivergence::kl();
  CHECK(chi.conjugate_prime(0.0) == doctest::Approx(1.0));
  CHECK(chi.conjugate_prime(-4.0) == 0.0);

  Rng rng(4);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const double y = rng.uniform(-8.0, 8.0);
    for (const auto& div : {chi, kl}) {
      if (div.kind == DivergenceKind::kChiSquared && std::abs(y + 2.0) < 1e-3) continue;
      const double fd = (div.conjugate(y + h) - div.conjugate(y - h)) / (2.0 * h);
      CHECK(std::abs(fd - div.conjugate_prime(y)) < 1e-6);
    }
  }
}

TEST_CASE("conjugate_prime is the argmax of the conjugate") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double y = rng.uniform(-10.0, 10.0);
    for (const auto& div : {FDivergence::chi_squared(), FDivergence::kl()}) {
      const double xstar = div.conjugate_prime(y);
      CHECK(xstar >= 0.0);
      CHECK(std::abs(xstar * y - div.f(xstar) - div.conjugate(y)) < 1e-9);
    }
  }
}

TEST_CASE("divergence_from_ratios reference values") {
  const FDivergence chi = FDivergence::chi_squared();
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd q = Eigen::VectorXd::Constant(4, 0.25);
  CHECK(divergence_from_ratios(chi, ones, q) == doctest::Approx(0.0));

  Eigen::VectorXd ratios(2), base(2);
  ratios << 1.5, 0.5;  // p = (0.75, 0.25) against q = (0.5, 0.5)
  base << 0.5, 0.5;
  CHECK(divergence_from_ratios(chi, ratios, base) == doctest::Approx(0.25));
  CHECK_THROWS_AS(divergence_from_ratios(chi, ratios, Eigen::VectorXd::Ones(3)),
                  std::invalid_argument);
}

TEST_CASE("scaling p away from q never decreases the divergence") {
  Rng rng(21);
  for (const auto& div : {FDivergence::chi_squared(), FDivergence::kl()}) {
    for (int rep = 0; rep < 50; ++rep) {
      const Eigen::VectorXd q = random_distribution(5, rng);
      const Eigen::VectorXd p = random_distribution(5, rng);
      double prev = 0.0;
      for (double t = 0.0; t <= 1.0001; t += 0.1) {
        const Eigen::VectorXd pt = q + t * (p - q);
        const Eigen::VectorXd ratios = pt.cwiseQuotient(q);
        const double val = divergence_from_ratios(div, ratios, q);
        CHECK(val >= prev - 1e-12);
        prev = val;
      }
    }
  }
}

TEST_CASE("Fenchel-Young inequality over 1e4 random pairs") {
  Rng rng(33);
  for (const auto& div : {FDivergence::chi_squared(), FDivergence::kl()}) {
    double worst = -1e300;
    for (int i = 0; i < 10000; ++i) {
      const double x = rng.uniform(0.0, 10.0);
      const double y = rng.uniform(-10.0, 10.0);
      worst = std::max(worst, x * y - div.f(x) - div.conjugate(y));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("f and its conjugate satisfy the midpoint convexity inequality") {
  Rng rng(55);
  for (const auto& div : {FDivergence::chi_squared(), FDivergence::kl()}) {
    for (int i = 0; i < 2000; ++i) {
      const double a = rng.uniform(0.0, 10.0), b = rng.uniform(0.0, 10.0);
      CHECK(div.f(0.5 * (a + b)) <= 0.5 * (div.f(a) + div.f(b)) + 1e-12);
      const double ya = rng.uniform(-6.0, 6.0), yb = rng.uniform(-6.0, 6.0);
      CHECK(div.conjugate(0.5 * (ya + yb)) <=
            0.5 * (div.conjugate(ya) + div.conjugate(yb)) + 1e-12);
    }
  }
}

TEST_CASE("chi-squared dominates KL on random distribution pairs") {
  Rng rng(77);
  const FDivergence chi = FDivergence::chi_squared();
  for (int i = 0; i < 2000; ++i) {
    const int n = 2 + static_cast<int>(rng.uniform_int(6));
    const Eigen::VectorXd q = random_distribution(n, rng);
    const Eigen::VectorXd p = random_distribution(n, rng);
    const double chi2 = divergence_from_ratios(chi, p.cwiseQuotient(q), q);
    CHECK(chi2 + 1e-12 >= kl_discrete(p, q));
  }
}
