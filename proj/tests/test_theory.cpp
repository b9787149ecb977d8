#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mesa/rng.hpp"
#include "mesa/theory.hpp"
#include "mesa/training.hpp"
#include "quadrature.hpp"

using namespace mesa;
using namespace mesa::theory;

namespace {

ar::Moments gaussian(double sigma, std::size_t d = 5) {
  return ar::closed_form_moments(ar::InitialDistribution::gaussian(d, sigma));
}
ar::Moments sparse(double c, std::size_t d = 5) {
  return ar::closed_form_moments(ar::InitialDistribution::sparse_uniform(d, c));
}

double harmonic(int n) {
  double h = 0.0;
  for (int k = 1; k <= n; ++k) h += 1.0 / k;
  return h;
}

}  // namespace

TEST_CASE("flow coefficients") {
  CHECK_THROWS_AS(flow_coefficients(gaussian(1.0), 2), std::invalid_argument);
  CHECK(harmonic_sum(3) == 1.0);
  CHECK(harmonic_sum(100) == doctest::Approx(harmonic(98)));

  const auto s = flow_coefficients(sparse(1.0), 50);
  CHECK(s.fixed_point() == doctest::Approx(1.0));

  const auto g = flow_coefficients(gaussian(1.0), 100);
  CHECK(g.fixed_point() == doctest::Approx(3.0 / (15.0 + 12.0 * harmonic(98) / 98.0)));

  const auto m = gaussian(0.7);
  const auto t3 = flow_coefficients(m, 3);
  CHECK(t3.c1 == doctest::Approx(m.kappa2 + m.kappa3));
  CHECK(t3.c2 == doctest::Approx(m.kappa1));
}

TEST_CASE("fixed points") {
  for (std::size_t T : {3u, 10u, 100u}) CHECK(fixed_point_ab(sparse(0.5), T) == doctest::Approx(4.0));
  CHECK(fixed_point_ab(gaussian(0.5), 1000000) == doctest::Approx(0.8).epsilon(1e-3));
  double prev = 0.0;
  for (std::size_t T : {5u, 20u, 100u, 1000u}) {
    const double v = fixed_point_ab(gaussian(1.0), T);
    CHECK(v < 0.2);
    CHECK(v > prev);
    prev = v;
  }

  CHECK(fixed_point_ab_ones(1, 17) == 1.0);
  CHECK(fixed_point_ab_ones(5, 5) == doctest::Approx(1.0 / (1.0 + 22.0 / 9.0)));
  CHECK(fixed_point_ab_ones(5, 10000000) > 0.9999);
  // same value through the generic flow with synthetic moments
  CHECK(fixed_point_ab(ones_moments(5), 20) == doctest::Approx(fixed_point_ab_ones(5, 20)));
}

TEST_CASE("flow field, surrogate and PL") {
  const auto k = flow_coefficients(gaussian(0.5), 100);
  const auto zero = ode_rhs(0.0, 0.0, k);
  CHECK(zero.da == 0.0);
  CHECK(zero.db == 0.0);
  const double a = 0.7, b = k.fixed_point() / 0.7;
  CHECK(std::abs(ode_rhs(a, b, k).da) < 1e-12);
  CHECK(std::abs(ode_rhs(a, b, k).db) < 1e-12);
  CHECK(surrogate_loss(a, b, k) < 1e-24);
  CHECK(surrogate_loss(0.0, 0.0, k) == doctest::Approx(k.c2 * k.c2 / (2 * k.c1)));

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform() * 4 - 2, y = rng.uniform() * 4 - 2;
    const auto f = ode_rhs(x, y, k);
    const double h = 1e-6;
    const double ga = (surrogate_loss(x + h, y, k) - surrogate_loss(x - h, y, k)) / (2 * h);
    const double gb = (surrogate_loss(x, y + h, k) - surrogate_loss(x, y - h, k)) / (2 * h);
    const double scale = 1.0 + std::abs(f.da) + std::abs(f.db);
    CHECK(std::abs(ga + f.da) / scale < 1e-6);
    CHECK(std::abs(gb + f.db) / scale < 1e-6);
    const auto pl = pl_check(x, y, k);
    CHECK(pl.holds);
    CHECK(std::abs(pl.lhs - pl.rhs) <= 1e-12 * pl.lhs);
  }
  const auto origin = pl_check(0.0, 0.0, k);
  CHECK(origin.lhs == 0.0);
  CHECK(origin.rhs == 0.0);
  CHECK(origin.holds);
}

TEST_CASE("flow integration") {
  const auto k = flow_coefficients(sparse(1.0), 100);
  const auto r1 = integrate_flow(0.1, 0.1, k, {.tol = 1e-6});
  CHECK(r1.converged);
  CHECK(std::abs(r1.final().ab() - 1.0) < 1e-6);
  const auto r2 = integrate_flow(2.0, 2.0, k);
  CHECK(r2.converged);
  CHECK(std::abs(r2.final().ab() - r1.final().ab()) < 2e-6);

  const auto still = integrate_flow(0.0, 0.0, k, {.max_steps = 1000});
  CHECK_FALSE(still.converged);
  CHECK(still.stationary);

  const auto capped = integrate_flow(0.01, 0.02, k, {.max_steps = 3});
  CHECK_FALSE(capped.converged);
  CHECK(capped.steps == 3);

  // a^2 - b^2 drift: RK4 at dt = 1e-3 against a halved step
  const auto g = flow_coefficients(gaussian(1.0), 100);
  const auto coarse = integrate_flow(0.5, 1.5, g, {.dt = 1e-3 / g.c1});
  const auto fine = integrate_flow(0.5, 1.5, g, {.dt = 0.5e-3 / g.c1});
  CHECK(coarse.conservation_drift < 1e-8);
  CHECK(fine.conservation_drift < 1e-8);
  CHECK(std::abs(coarse.final().a - fine.final().a) < 1e-5);

  std::ostringstream csv;
  write_flow_csv(csv, coarse, g);
  CHECK(csv.str().rfind("tau,a,b,ab,surrogate_loss\n", 0) == 0);
}

TEST_CASE("random positive inits share the limit") {
  const auto k = flow_coefficients(gaussian(1.0), 20);
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const double a0 = 0.05 + 1.95 * rng.uniform(), b0 = 0.05 + 1.95 * rng.uniform();
    const auto r = integrate_flow(a0, b0, k);
    CHECK(r.converged);
    CHECK(std::abs(r.final().ab() - k.fixed_point()) < 1e-6);
    CHECK(r.final().ab() > 0.0);
  }
}

TEST_CASE("Gaussian ratio prediction") {
  CHECK(gaussian_ratio_asymptote(0.5) == doctest::Approx(0.2));
  CHECK(gaussian_ratio_asymptote(2.0) == doctest::Approx(0.2));
  CHECK(gaussian_ratio_prediction(0.5, 100) == doctest::Approx(gaussian_ratio_prediction(2.0, 100)));
  CHECK(gaussian_ratio_prediction(1.0, 100) == doctest::Approx(3.0 / (15.0 + 12.0 * harmonic(98) / 98.0)));
  CHECK(gaussian_ratio_prediction(1.0, 100) < 0.2);
  CHECK(gaussian_ratio_prediction(1.0, 100) == doctest::Approx(0.1919).epsilon(1e-3));
  CHECK(gaussian_ratio_prediction(1.0, 10000000) == doctest::Approx(0.2).epsilon(1e-5));
}

TEST_CASE("all-ones gradient probe matches the exact population gradient") {
  for (std::size_t d : {1u, 2u, 3u}) {
    const std::size_t T = d == 3 ? 5 : 6;
    const auto set = quad::build(quad::ones_support(d), d, T);
    for (const auto& [a, b] : {std::pair{0.2, 0.3}, std::pair{0.9, -0.4}}) {
      const auto probe = ones_gradient_probe(a, b, d, T);
      const auto g = quad::population(attention::AttentionParams::from_diagonal({a, b}, d), set).grad;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          CHECK(g.kq32(i, j) == doctest::Approx(probe.kq32(i, j)).epsilon(1e-10));
          CHECK(g.pv12(i, j) == doctest::Approx(probe.pv12(i, j)).epsilon(1e-10));
        }
      if (d == 1) {
        const auto f = ode_rhs(a, b, flow_coefficients({1.0, 1.0, 0.0, 1, false}, T));
        CHECK(probe.kq32(0, 0) == doctest::Approx(-f.da));
      }
    }
  }
}

TEST_CASE("all-ones probe at the masked fixed point") {
  const std::size_t d = 5, T = 100;
  const double ab = fixed_point_ab_ones(d, T);
  const auto g = ones_gradient_probe(std::sqrt(ab), std::sqrt(ab), d, T);
  CHECK(std::abs(g.kq32(0, 0)) < 1e-12);
  CHECK(std::abs(g.pv12(1, 1)) < 1e-12);
  CHECK(std::abs(g.kq32(0, 1)) > 1e-3);
  CHECK(std::abs(g.pv12(2, 0)) > 1e-3);
  // masked dynamics: the diagonal follows the generic flow with synthetic moments
  const auto k = flow_coefficients(ones_moments(d), T);
  const auto p = ones_gradient_probe(0.3, 0.8, d, T);
  CHECK(p.kq32(2, 2) == doctest::Approx(-ode_rhs(0.3, 0.8, k).da));
  CHECK(p.pv12(2, 2) == doctest::Approx(-ode_rhs(0.3, 0.8, k).db));
}

TEST_CASE("all-ones probe against Monte Carlo") {
  const std::size_t d = 5, T = 10;
  const auto data = ar::generate_dataset(ar::InitialDistribution::fixed_ones(d), 20000, T, 8);
  const double a = 0.4, b = 0.6;
  const auto probe = ones_gradient_probe(a, b, d, T);
  const auto st = training::Objective(data).gradient_stats(attention::AttentionParams::from_diagonal({a, b}, d));
  int outside = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      outside += std::abs(st.mean.kq32(i, j) - probe.kq32(i, j)) > 3 * st.std_error.kq32(i, j);
      outside += std::abs(st.mean.pv12(i, j) - probe.pv12(i, j)) > 3 * st.std_error.pv12(i, j);
    }
  // 50 entries at 3 sigma: allow the odd chance exceedance
  CHECK(outside <= 2);
}
