#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "mesa/ar_data.hpp"
#include "mesa/rng.hpp"

using namespace mesa;
using namespace mesa::ar;

TEST_CASE("spectrum sampling") {
  CHECK_THROWS_AS(sample_spectrum(0, 1), std::invalid_argument);
  const auto one = sample_spectrum(1, 42);
  REQUIRE(one.dim() == 1);
  CHECK(std::abs(std::abs(one[0]) - 1.0) < 1e-12);

  const auto a = sample_spectrum(5, 7), b = sample_spectrum(5, 7);
  CHECK(a.lambdas() == b.lambdas());

  // E[lambda] = 0 for a uniform phase
  cplx mean[2] = {};
  const int n = 100000;
  for (int s = 0; s < n; ++s) {
    const auto sp = sample_spectrum(2, derive_seed(99, s));
    mean[0] += sp[0];
    mean[1] += sp[1];
  }
  CHECK(std::abs(mean[0] / double(n)) < 0.02);
  CHECK(std::abs(mean[1] / double(n)) < 0.02);

  CHECK_THROWS_AS(TransitionSpectrum({cplx(1.0, 1e-5)}), std::invalid_argument);
  CHECK_THROWS_AS(TransitionSpectrum(std::vector<cplx>{}), std::invalid_argument);
}

TEST_CASE("initial token distributions") {
  CHECK(sample_initial(InitialDistribution::fixed_ones(3), 1) == std::vector<double>{1, 1, 1});

  for (int s = 0; s < 50; ++s) {
    const auto x = sample_initial(InitialDistribution::sparse_uniform(5, 0.5), s);
    int nz = 0;
    for (double v : x)
      if (v != 0.0) {
        ++nz;
        CHECK(std::abs(v) == 0.5);
      }
    CHECK(nz == 1);
  }

  // every signed basis vector shows up
  std::vector<int> seen(10, 0);
  for (int s = 0; s < 2000; ++s) {
    const auto x = sample_initial(InitialDistribution::sparse_uniform(5, 1.0), s);
    for (int i = 0; i < 5; ++i)
      if (x[i] != 0.0) ++seen[2 * i + (x[i] < 0)];
  }
  for (int c : seen) CHECK(c > 100);

  Rng rng(3);
  const auto g = InitialDistribution::gaussian(5, 1.0);
  double s2[5] = {};
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto x = sample_initial(g, rng);
    for (int i = 0; i < 5; ++i) s2[i] += x[i] * x[i];
  }
  for (double v : s2) CHECK(std::abs(v / n - 1.0) < 0.02);

  CHECK_THROWS_AS(InitialDistribution::gaussian(3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(InitialDistribution::gaussian(0, 1.0), std::invalid_argument);
  CHECK_NOTHROW(InitialDistribution::sparse_uniform(3, -2.0));
}

TEST_CASE("sequence generation") {
  SUBCASE("identity transition") {
    const TransitionSpectrum id({1.0, 1.0, 1.0});
    const std::vector<double> x1(3, 1.0);
    const auto seq = generate_sequence(id, x1, 4);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < 3; ++i) CHECK(seq.at(k, i) == cplx(1.0, 0.0));
  }
  SUBCASE("period two") {
    const TransitionSpectrum sp({-1.0});
    const std::vector<double> x1{2.5};
    const auto seq = generate_sequence(sp, x1, 3);
    CHECK(std::abs(seq.at(1, 0) - cplx(-2.5)) < 1e-15);
    CHECK(std::abs(seq.at(2, 0) - cplx(2.5)) < 1e-15);
  }
  SUBCASE("closed form matches recurrence and keeps norms") {
    for (int s = 0; s < 20; ++s) {
      const auto sp = sample_spectrum(4, s);
      const auto x1 = sample_initial(InitialDistribution::gaussian(4, 1.3), 100 + s);
      const auto a = generate_sequence(sp, x1, 50);
      const auto b = generate_sequence_recurrence(sp, x1, 50);
      double n1 = 0.0;
      for (double v : x1) n1 += v * v;
      for (std::size_t k = 0; k < 50; ++k) {
        double nk = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
          const double scale = std::max(std::abs(b.at(k, i)), 1e-300);
          CHECK(std::abs(a.at(k, i) - b.at(k, i)) / scale < 1e-12);
          CHECK(std::abs(std::abs(a.at(k, i)) - std::abs(x1[i])) < 1e-12);
          nk += std::norm(a.at(k, i));
        }
        CHECK(std::abs(std::sqrt(nk) - std::sqrt(n1)) < 1e-10);
      }
    }
  }
  SUBCASE("errors") {
    const auto sp = sample_spectrum(3, 1);
    const std::vector<double> bad(2, 1.0), ok(3, 1.0);
    CHECK_THROWS_AS(generate_sequence(sp, bad, 5), std::invalid_argument);
    CHECK_THROWS_AS(generate_sequence(sp, ok, 1), std::invalid_argument);
  }
}

TEST_CASE("closed-form moments") {
  const auto s = closed_form_moments(InitialDistribution::sparse_uniform(5, 1.0));
  CHECK(s.kappa1 == doctest::Approx(0.2));
  CHECK(s.kappa2 == doctest::Approx(0.2));
  CHECK(s.kappa3 == 0.0);

  const auto g = closed_form_moments(InitialDistribution::gaussian(5, 1.0));
  CHECK(g.kappa1 == doctest::Approx(3.0));
  CHECK(g.kappa2 == doctest::Approx(15.0));
  CHECK(g.kappa3 == doctest::Approx(12.0));
  CHECK(g.kappa1 / g.kappa2 == doctest::Approx(0.2));

  CHECK_THROWS_WITH_AS(closed_form_moments(InitialDistribution::fixed_ones(5)),
                       "moments undefined for deterministic token", std::domain_error);
}

TEST_CASE("empirical moments agree with closed form") {
  {
    const auto d = InitialDistribution::sparse_uniform(4, 2.0);
    const auto e = empirical_moments(d, 100000, 5);
    CHECK(std::abs(e.kappa1 / 4.0 - 1.0) < 0.03);
    CHECK(e.kappa3 == 0.0);
  }
  {
    const auto d = InitialDistribution::gaussian(5, 0.5);
    const auto e = empirical_moments(d, 1000000, 6);
    CHECK(std::abs(e.kappa2 / (15.0 * std::pow(0.5, 6)) - 1.0) < 0.03);
  }
  {
    const auto d = InitialDistribution::gaussian(5, 1.0);
    const auto e = empirical_moments(d, 1000000, 8);
    CHECK(std::abs(e.kappa3 / 12.0 - 1.0) < 0.02);
  }
  {
    const auto e = empirical_moments(InitialDistribution::fixed_ones(5), 10, 1);
    CHECK(e.kappa1 == 1.0);
    CHECK(e.kappa2 == 1.0);
    CHECK(e.kappa3 == 4.0);
    CHECK_FALSE(e.satisfies_moment_condition);
  }
}

TEST_CASE("odd mixed moments vanish") {
  // E[x_i x_j^r ...] over distinct indices is zero; check a few monomials at 3 sigma
  for (const auto& dist : {InitialDistribution::gaussian(4, 1.0), InitialDistribution::sparse_uniform(4, 1.0)}) {
    Rng rng(11);
    const int n = 200000;
    double m[3] = {}, m2[3] = {};
    for (int k = 0; k < n; ++k) {
      const auto x = sample_initial(dist, rng);
      const double v[3] = {x[0] * x[1] * x[1], x[0] * x[1] * x[1] * x[2] * x[2],
                           x[2] * x[0] * x[0] * x[0] * x[0]};
      for (int j = 0; j < 3; ++j) {
        m[j] += v[j];
        m2[j] += v[j] * v[j];
      }
    }
    for (int j = 0; j < 3; ++j) {
      const double mean = m[j] / n;
      const double se = std::sqrt(std::max(m2[j] / n - mean * mean, 0.0) / n);
      CHECK(std::abs(mean) <= 3.0 * se + 1e-15);
    }
  }
}

TEST_CASE("dataset determinism and JSONL round trip") {
  const auto dist = InitialDistribution::gaussian(3, 0.7);
  const auto a = generate_dataset(dist, 25, 8, 1234, 1);
  const auto b = generate_dataset(dist, 25, 8, 1234, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data() == b[i].data());

  std::stringstream ss;
  write_dataset(ss, a);
  const auto text = ss.str();
  const auto back = read_dataset(ss);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].seed() == a[i].seed());
    CHECK(back[i].x1() == a[i].x1());
    CHECK(back[i].spectrum().lambdas() == a[i].spectrum().lambdas());
    CHECK(back[i].data() == a[i].data());
  }
  std::stringstream again;
  write_dataset(again, back);
  CHECK(again.str() == text);

  std::stringstream one;
  write_dataset(one, std::span(a.data(), 1));
  CHECK(read_dataset(one).size() == 1);

  std::stringstream broken("{\"seed\": 1}\n");
  CHECK_THROWS(read_dataset(broken));
}
