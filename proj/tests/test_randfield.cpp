#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stochlod/randfield.hpp"
#include "stochlod/rng.hpp"

using namespace stochlod;

TEST_CASE("bessel_k1 against the integral-representation oracle") {
  for (double x : {0.01, 0.05, 0.2, 0.5, 1.0, 1.5, 1.999, 2.0, 2.001, 3.0, 5.0,
                   10.0, 30.0, 100.0, 400.0, 700.0}) {
    const double ref = oracles::bessel_k(1.0, x);
    CHECK(std::abs(bessel_k1(x) - ref) <= 1e-12 * ref);
  }
  CHECK_THROWS_AS(bessel_k1(0.0), Error);
  CHECK_THROWS_AS(bessel_k1(-1.0), Error);
}

TEST_CASE("bessel_k_nu: closed form at nu = 1/2 and oracle at general nu") {
  for (double x : {0.1, 0.7, 2.0, 5.0, 20.0}) {
    const double exact = std::sqrt(M_PI / (2.0 * x)) * std::exp(-x);
    CHECK(bessel_k_nu(0.5, x) == doctest::Approx(exact).epsilon(1e-12));
  }
  for (double nu : {0.75, 1.0, 1.5, 2.5}) {
    for (double x : {0.3, 1.1, 4.0}) {
      const double ref = oracles::bessel_k(nu, x);
      CHECK(bessel_k_nu(nu, x) == doctest::Approx(ref).epsilon(1e-11));
    }
  }
}

TEST_CASE("matern_cov basics") {
  const MaternParams p{1.0, 1.0, 0.015625};  // sigma2 = 1, nu = 1, kappa = 2^-6
  CHECK(matern_cov(p, 0.0) == 1.0);
  // c(kappa) = sqrt(2) K_1(sqrt(2)); frozen from a 50-digit reference.
  CHECK(matern_cov(p, p.kappa) ==
        doctest::Approx(0.44434252363223604).epsilon(1e-12));
  CHECK(matern_cov(p, p.kappa) ==
        doctest::Approx(std::sqrt(2.0) * oracles::bessel_k(1.0, std::sqrt(2.0)))
            .epsilon(1e-12));
  CHECK_THROWS_AS(matern_cov(p, -1e-9), Error);

  const MaternParams bad{0.0, 1.0, 1.0};
  CHECK_THROWS_AS(matern_cov(bad, 0.5), Error);
}

TEST_CASE("matern_cov decreases along a log-spaced ladder and stays below sigma2") {
  const MaternParams p{2.0, 1.0, 0.03125};
  double prev = matern_cov(p, 0.0);
  CHECK(prev == 2.0);
  for (double r = 1e-4; r < 1.5; r *= 1.7) {
    const double c = matern_cov(p, r);
    CHECK(c < prev);
    CHECK(c < p.sigma2);
    prev = c;
  }
  // Same monotonicity for a rough and a smooth field via the quadrature path.
  for (double nu : {0.5, 2.0}) {
    const MaternParams q{1.0, nu, 0.1};
    double last = matern_cov(q, 0.0);
    for (double r = 0.01; r < 0.8; r *= 2.0) {
      const double c = matern_cov(q, r);
      CHECK(c < last);
      last = c;
    }
  }
}

TEST_CASE("sampler determinism and sigma-linearity") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 8);  // 32x32 cells
  const MaternParams p{1.0, 1.0, 0.03125};
  const CirculantSampler s1(p, grid);
  const CirculantSampler s2(p, grid);
  const FieldRealization a = s1.sample(42);
  const FieldRealization b = s2.sample(42);
  CHECK(a.values == b.values);  // bit-identical

  // sigma -> 2 sigma scales every value by exactly 2 (power-of-two scaling
  // commutes with the embedding arithmetic).
  const MaternParams p4{4.0, 1.0, 0.03125};
  const CirculantSampler s4(p4, grid);
  const FieldRealization c = s4.sample(42);
  REQUIRE(c.values.size() == a.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(c.values[i] == 2.0 * a.values[i]);
}

TEST_CASE("sample pair halves are distinct realizations") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  const CirculantSampler s({1.0, 1.0, 0.0625}, grid);
  const auto [z1, z2] = s.sample_pair(7);
  CHECK(z1.values != z2.values);
  CHECK(z1.values == s.sample(7).values);
}

TEST_CASE("Monte Carlo mean and covariance at fixed midpoints") {
  // Small-grid version of the covariance fidelity check (the acceptance suite
  // runs the full-size one).
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 8);  // eps = 2^-5
  const MaternParams p{1.0, 1.0, 0.0625};
  const CirculantSampler s(p, grid);
  const int n_pairs = 1500;
  const int n = 2 * n_pairs;

  const auto idx_a = grid.cell_index(10, 13);
  const auto idx_b = grid.cell_index(12, 13);  // distance 2 * 2^-5 = kappa
  double mean_a = 0.0, cov_ab = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    const auto [z1, z2] = s.sample_pair(static_cast<std::uint64_t>(k));
    for (const FieldRealization* z : {&z1, &z2}) {
      mean_a += z->values[static_cast<std::size_t>(idx_a)];
      cov_ab += z->values[static_cast<std::size_t>(idx_a)] *
                z->values[static_cast<std::size_t>(idx_b)];
    }
  }
  mean_a /= n;
  cov_ab /= n;
  const double se_mean = 1.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean_a) <= 4.0 * se_mean);

  const double expect = matern_cov(p, 0.0625);
  const double var_prod = 1.0 + expect * expect;  // Isserlis for a Gaussian pair
  const double se_cov = std::sqrt(var_prod / n);
  CHECK(std::abs(cov_ab - expect) <= 4.0 * se_cov);
}

TEST_CASE("stationarity: equal separations give compatible covariances") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 8);
  const MaternParams p{1.0, 1.0, 0.0625};
  const CirculantSampler s(p, grid);
  const int n = 4000;
  const auto a1 = grid.cell_index(4, 4), b1 = grid.cell_index(7, 4);
  const auto a2 = grid.cell_index(20, 25), b2 = grid.cell_index(23, 25);
  double c1 = 0.0, c2 = 0.0;
  for (int k = 0; k < n / 2; ++k) {
    const auto [z1, z2] = s.sample_pair(1000 + static_cast<std::uint64_t>(k));
    for (const FieldRealization* z : {&z1, &z2}) {
      c1 += z->values[static_cast<std::size_t>(a1)] * z->values[static_cast<std::size_t>(b1)];
      c2 += z->values[static_cast<std::size_t>(a2)] * z->values[static_cast<std::size_t>(b2)];
    }
  }
  c1 /= n;
  c2 /= n;
  const double expect = matern_cov(p, 3.0 / 32.0);
  const double se = std::sqrt((1.0 + expect * expect) / n);
  CHECK(std::abs(c1 - c2) <= 6.0 * se);
}

TEST_CASE("embedding failure reports the most negative eigenvalue") {
  // A very smooth kernel with a correlation length on the domain scale does
  // not embed even at 4x padding.
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  const MaternParams p{1.0, 8.0, 0.5};
  try {
    CirculantSampler s(p, grid);
    FAIL("expected EmbeddingError");
  } catch (const EmbeddingError& e) {
    CHECK(std::string(e.what()).find("embedding failed") != std::string::npos);
    CHECK(e.min_eigenvalue < 0.0);
  }
}

TEST_CASE("to_lognormal") {
  FieldRealization z;
  z.grid = refine(build_coarse_grid(0.5, 2), 2);
  z.kind = FieldKind::gaussian;
  z.values = {0.0, 1.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  const FieldRealization a = to_lognormal(z);
  CHECK(a.kind == FieldKind::lognormal);
  for (std::size_t i = 0; i < z.values.size(); ++i)
    CHECK(a.values[i] == std::exp(z.values[i]));

  FieldRealization zeros = z;
  std::fill(zeros.values.begin(), zeros.values.end(), 0.0);
  for (double v : to_lognormal(zeros).values) CHECK(v == 1.0);

  CHECK_THROWS_AS(to_lognormal(a), Error);

  const double mx = *std::max_element(z.values.begin(), z.values.end());
  const double mn = *std::min_element(z.values.begin(), z.values.end());
  CHECK(contrast(a) == doctest::Approx(std::exp(mx - mn)).epsilon(1e-14));
}

TEST_CASE("contrast") {
  FieldRealization a;
  a.grid = refine(build_coarse_grid(0.5, 2), 1);
  a.kind = FieldKind::lognormal;
  a.values = {1.0, 1.0, 1.0, 1.0};
  CHECK(contrast(a) == 1.0);
  a.values = {1.0, 10.0, 2.0, 5.0};
  CHECK(contrast(a) == 10.0);
  a.values = {1.0, -1.0, 2.0, 5.0};
  CHECK_THROWS_AS(contrast(a), Error);
  a.kind = FieldKind::gaussian;
  a.values = {1.0, 2.0, 3.0, 4.0};
  CHECK_THROWS_AS(contrast(a), Error);
}

TEST_CASE("hierarchical sampling: degenerate bounds reduce to the fixed kappa") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  HierarchicalParams hp;
  hp.sigma2 = 1.0;
  hp.nu = 1.0;
  hp.kappa_low = hp.kappa_high = 0.0625;
  const HierarchicalSample s = sample_hierarchical(hp, grid, 123);
  CHECK(s.kappa == 0.0625);
  const FieldRealization direct = to_lognormal(
      sample_gaussian({1.0, 1.0, 0.0625}, grid, derive_stream(123, 1)));
  CHECK(s.field.values == direct.values);
  CHECK(s.field.kind == FieldKind::lognormal);
}

TEST_CASE("hierarchical kappa stays inside its bounds") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  HierarchicalParams hp;
  hp.kappa_low = 0.015625;
  hp.kappa_high = 0.125;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const HierarchicalSample s = sample_hierarchical(hp, grid, seed);
    CHECK(s.kappa >= hp.kappa_low);
    CHECK(s.kappa <= hp.kappa_high);
    CHECK(contrast(s.field) >= 1.0);
  }
}
