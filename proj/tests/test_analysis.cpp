#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bdc/analysis.hpp"
#include "bdc/rng.hpp"

using namespace bdc;

namespace {

// Quadrature oracle: erf(x) = 2/sqrt(pi) * int_0^x e^(-t^2) dt via Simpson.
double erf_quadrature(double x) {
  const int n = 20000;  // even
  const double h = x / n;
  double acc = 1.0 + std::exp(-x * x);
  for (int i = 1; i < n; ++i) {
    const double t = h * i;
    acc += (i % 2 == 1 ? 4.0 : 2.0) * std::exp(-t * t);
  }
  return 2.0 / std::sqrt(3.14159265358979323846) * acc * h / 3.0;
}

}  // namespace

TEST_CASE("erf64 against quadrature and the standard library") {
  for (double x : {0.01, 0.1, 0.5, 1.0 / std::sqrt(2.0), 1.0, 1.7, 1.99, 2.0, 2.5, 3.5, 5.0}) {
    CHECK(std::abs(erf64(x) - erf_quadrature(x)) < 1e-12);
    CHECK(std::abs(erf64(x) - std::erf(x)) < 1e-14);
    CHECK(erf64(-x) == -erf64(x));
  }
  CHECK(erf64(0.0) == 0.0);
  // cross-check erf(1/sqrt 2) = Phi(1) - Phi(-1) = 0.682689 within 1e-6
  CHECK(std::abs(erf64(1.0 / std::sqrt(2.0)) - 0.682689) < 1e-6);
}

TEST_CASE("analytic constant and its intermediates") {
  const double c = analytic_abs_error_constant();
  CHECK(std::abs(c - 0.5354) < 5e-5);
  const double term = 2.0 / std::sqrt(2.0 * 3.14159265358979323846 * 2.71828182845904523536);
  CHECK(std::abs(term - 0.483941) < 1e-6);
}

TEST_CASE("monte carlo agrees with the analytic constant within 3 stderr, 10 seeds") {
  const double analytic = analytic_abs_error_constant();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MonteCarloResult mc = monte_carlo_abs_error(1000000, seed);
    CHECK(std::abs(mc.mean - analytic) <= 3.0 * mc.stderr_of_mean);
  }
}

TEST_CASE("monte carlo single-sample value is exact") {
  MonteCarloResult mc = monte_carlo_abs_error(1, 42);
  Rng rng(derive_seed(42, 0));
  const double x = rng.normal();
  CHECK(mc.mean == std::abs(x - (x > 0.0 ? 1.0 : -1.0)));
  CHECK(mc.stderr_of_mean == 0.0);
}

TEST_CASE("monte carlo is deterministic per seed") {
  MonteCarloResult a = monte_carlo_abs_error(10000, 7);
  MonteCarloResult b = monte_carlo_abs_error(10000, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_of_mean == b.stderr_of_mean);
  MonteCarloResult c = monte_carlo_abs_error(10000, 8);
  CHECK(a.mean != c.mean);
}

TEST_CASE("gradient error: k=1 empirical matches the factorized prediction") {
  GradErrorReport r = gradient_error_experiment(1, 4, 120, 5);
  CHECK(r.samples == 120);
  CHECK(r.empirical_eae > 0.0);
  CHECK(r.relative_deviation < 0.1);
}

TEST_CASE("gradient error: exact +-1 inputs give zero EAE") {
  GradErrorOptions opt;
  opt.binary_inputs = true;
  GradErrorReport r = gradient_error_experiment(1, 4, 20, 6, opt);
  CHECK(r.empirical_eae == 0.0);
}

TEST_CASE("gradient error is linear in the injected error magnitude") {
  GradErrorOptions opt;
  GradErrorReport base = gradient_error_experiment(1, 4, 40, 7, opt);
  opt.epsilon_scale = 2.0;
  GradErrorReport doubled = gradient_error_experiment(1, 4, 40, 7, opt);
  CHECK(std::abs(doubled.empirical_eae / base.empirical_eae - 2.0) < 0.05 * 2.0);
}

TEST_CASE("gradient error: k=3 over k=1 ratio lands near the k^2 term count") {
  GradErrorReport r1 = gradient_error_experiment(1, 4, 120, 9);
  GradErrorReport r3 = gradient_error_experiment(3, 4, 120, 9);
  const double ratio = r3.empirical_eae / r1.empirical_eae;
  CHECK(ratio >= 5.0);
  CHECK(ratio <= 13.0);
}

TEST_CASE("gradient error rejects bad kernels") {
  CHECK_THROWS_AS(gradient_error_experiment(2, 4, 10, 1), Error);
}

TEST_CASE("cost of a full-precision layer") {
  ConvGeometry g{64, 64, 3, 1, 1, 32, 32};
  CostReport r = cost_of_layer(g, false);
  CHECK(r.ops_f == 75497472ull);
  CHECK(r.params_f == 36864ull);
  CHECK(r.ops_b_x64 == 0);
  CHECK(r.params_b_x32 == 0);
}

TEST_CASE("cost of a binarized layer divides by 64 and 32 exactly") {
  ConvGeometry g{64, 64, 3, 1, 1, 32, 32};
  CostReport r = cost_of_layer(g, true);
  CHECK(r.ops_f == 0);
  CHECK(r.params_f == 0);
  CHECK(r.ops_b_x64 == 75497472ull);
  CHECK(r.ops_b() == 1179648.0);
  CHECK(r.params_b_x32 == 36864ull);
  CHECK(r.params_b() == 1152.0);
  // exact integer identity on the pre-division counts
  CHECK(static_cast<std::uint64_t>(r.ops_b() * 64.0) == r.ops_b_x64);
  CHECK(static_cast<std::uint64_t>(r.params_b() * 32.0) == r.params_b_x32);
}

TEST_CASE("cost unit case and additivity") {
  ConvGeometry g{1, 1, 1, 1, 0, 1, 1};
  CostReport r = cost_of_layer(g, false);
  CHECK(r.ops_f == 2);
  CHECK(r.params_f == 1);

  ConvGeometry g2{8, 16, 3, 1, 1, 10, 10};
  CostReport a = cost_of_layer(g2, true);
  CostReport sum = a;
  sum += cost_of_layer(g2, true);
  CHECK(sum.ops_b_x64 == 2 * a.ops_b_x64);
  CHECK(sum.params_b_x32 == 2 * a.params_b_x32);
  CHECK(sum.ops_total() == doctest::Approx(2 * a.ops_total()));
}
