#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stochlod/fem.hpp"
#include "stochlod/rng.hpp"

using namespace stochlod;

namespace {

FieldRealization constant_field(const FineGrid& grid, double value) {
  FieldRealization a;
  a.grid = grid;
  a.kind = FieldKind::lognormal;
  a.values.assign(static_cast<std::size_t>(grid.num_cells()), value);
  return a;
}

FieldRealization random_positive_field(const FineGrid& grid, std::uint64_t seed) {
  FieldRealization a;
  a.grid = grid;
  a.kind = FieldKind::lognormal;
  a.values.resize(static_cast<std::size_t>(grid.num_cells()));
  CounterRng rng(seed);
  for (auto& v : a.values) v = std::exp(rng.gaussian());
  return a;
}

}  // namespace

TEST_CASE("unit-coefficient stiffness: zero row sums on full stencils") {
  const FineGrid grid = refine(build_coarse_grid(0.0625, 2), 1);
  const SpMat K = fem::assemble_stiffness(grid, constant_field(grid, 1.0));
  const int nc = grid.cells_per_axis();
  const Vec ones = Vec::Ones(K.cols());
  const Vec sums = K * ones;
  for (int vy = 2; vy <= nc - 2; ++vy)
    for (int vx = 2; vx <= nc - 2; ++vx)
      CHECK(std::abs(sums[grid.interior_node_index(vx, vy)]) <= 1e-14);
}

TEST_CASE("stiffness is linear in the coefficient") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  const FieldRealization a = random_positive_field(grid, 5);
  FieldRealization a2 = a;
  for (auto& v : a2.values) v *= 2.0;
  const SpMat K1 = fem::assemble_stiffness(grid, a);
  const SpMat K2 = fem::assemble_stiffness(grid, a2);
  const SpMat diff = K2 - 2.0 * K1;
  CHECK(diff.coeffs().cwiseAbs().maxCoeff() <= 1e-14 * K1.coeffs().cwiseAbs().maxCoeff());
}

TEST_CASE("2x2 grid: single interior node has diagonal 8/3") {
  const FineGrid grid = refine(build_coarse_grid(0.5, 2), 1);
  const SpMat K = fem::assemble_stiffness(grid, constant_field(grid, 1.0));
  REQUIRE(K.rows() == 1);
  CHECK(K.coeff(0, 0) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("stiffness rejects non-positive coefficients") {
  const FineGrid grid = refine(build_coarse_grid(0.5, 2), 1);
  FieldRealization a = constant_field(grid, 1.0);
  a.values[2] = 0.0;
  CHECK_THROWS_AS(fem::assemble_stiffness(grid, a), Error);
}

TEST_CASE("coefficient prolongation injects piecewise constants") {
  const CoarseGrid coarse = build_coarse_grid(0.25, 2);
  const FineGrid eps = refine(coarse, 2);
  const FineGrid h = refine(coarse, 8);
  FieldRealization a;
  a.grid = eps;
  a.kind = FieldKind::lognormal;
  a.values.resize(64);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = 1.0 + static_cast<double>(i);
  const std::vector<double> fine_vals = fem::prolong_coefficient(h, a);
  const int q = 4;
  for (int cy = 0; cy < 32; ++cy)
    for (int cx = 0; cx < 32; ++cx)
      CHECK(fine_vals[static_cast<std::size_t>(cy) * 32 + cx] ==
            a.values[static_cast<std::size_t>(cy / q) * 8 + cx / q]);
}

TEST_CASE("load vector") {
  const FineGrid grid = refine(build_coarse_grid(0.125, 2), 2);
  const double h = grid.h();
  const Vec b1 = fem::assemble_load(grid, 1.0);
  for (Eigen::Index i = 0; i < b1.size(); ++i)
    CHECK(b1[i] == doctest::Approx(h * h).epsilon(1e-14));

  const Vec b0 = fem::assemble_load(grid, 0.0);
  CHECK(b0.isZero(0.0));

  std::vector<double> f1(static_cast<std::size_t>(grid.num_cells()));
  std::vector<double> f2(f1.size());
  CounterRng rng(3);
  for (auto& v : f1) v = rng.gaussian();
  for (auto& v : f2) v = rng.gaussian();
  std::vector<double> fsum(f1.size());
  for (std::size_t i = 0; i < f1.size(); ++i) fsum[i] = f1[i] + f2[i];
  const Vec lhs = fem::assemble_load(grid, fsum);
  const Vec rhs = fem::assemble_load(grid, f1) + fem::assemble_load(grid, f2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("zero right-hand side solves to the zero solution") {
  const FineGrid grid = refine(build_coarse_grid(0.125, 2), 4);
  const SpMat K = fem::assemble_stiffness(grid, constant_field(grid, 1.0));
  const fem::FemSolution sol = fem::solve_dirichlet(grid, K, Vec::Zero(K.rows()));
  CHECK(sol.values.isZero(0.0));
}

TEST_CASE("Poisson center value matches the series oracle to three digits") {
  const FineGrid grid = refine(build_coarse_grid(0.125, 2), 16);  // h = 2^-7
  const SpMat K = fem::assemble_stiffness(grid, constant_field(grid, 1.0));
  const Vec b = fem::assemble_load(grid, 1.0);
  const fem::FemSolution sol = fem::solve_dirichlet(grid, K, b, 1e-12);
  const int mid = grid.cells_per_axis() / 2;
  const double center = sol.values[grid.node_index(mid, mid)];
  // u(1/2, 1/2) = 0.0736713512666705... from the double sine series.
  CHECK(std::abs(center - 0.0736713512666705) <= 5e-5);
  // Residual contract after the solve.
  Vec interior(K.rows());
  for (int vy = 1; vy <= grid.cells_per_axis() - 1; ++vy)
    for (int vx = 1; vx <= grid.cells_per_axis() - 1; ++vx)
      interior[grid.interior_node_index(vx, vy)] = sol.values[grid.node_index(vx, vy)];
  CHECK((K * interior - b).norm() <= 1e-12 * b.norm());
}

TEST_CASE("discrete maximum principle holds up to solver tolerance") {
  const FineGrid grid = refine(build_coarse_grid(0.125, 2), 4);
  const FieldRealization a = random_positive_field(grid, 11);
  const SpMat K = fem::assemble_stiffness(grid, a);
  const Vec b = fem::assemble_load(grid, 1.0);
  const fem::FemSolution sol = fem::solve_dirichlet(grid, K, b, 1e-12);
  CHECK(sol.values.minCoeff() >= -10.0 * 1e-12);
}

TEST_CASE("assembly locality: one perturbed cell touches only its node block") {
  const FineGrid grid = refine(build_coarse_grid(0.125, 2), 2);
  const FieldRealization a = random_positive_field(grid, 13);
  FieldRealization b = a;
  const int cx = 5, cy = 9;
  b.values[static_cast<std::size_t>(grid.cell_index(cx, cy))] *= 3.0;
  const SpMat Ka = fem::assemble_stiffness(grid, a);
  const SpMat Kb = fem::assemble_stiffness(grid, b);
  const SpMat diff = Kb - Ka;
  std::vector<std::int64_t> allowed = {
      grid.interior_node_index(cx, cy), grid.interior_node_index(cx + 1, cy),
      grid.interior_node_index(cx, cy + 1), grid.interior_node_index(cx + 1, cy + 1)};
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SpMat::InnerIterator it(diff, k); it; ++it) {
      if (it.value() == 0.0) continue;
      const bool row_ok = std::count(allowed.begin(), allowed.end(), it.row()) > 0;
      const bool col_ok = std::count(allowed.begin(), allowed.end(), it.col()) > 0;
      CHECK(row_ok);
      CHECK(col_ok);
    }
}

TEST_CASE("solutions carry exact zeros on the boundary") {
  const FineGrid grid = refine(build_coarse_grid(0.25, 2), 4);
  const SpMat K = fem::assemble_stiffness(grid, constant_field(grid, 2.0));
  const fem::FemSolution sol =
      fem::solve_dirichlet(grid, K, fem::assemble_load(grid, 1.0));
  const int nc = grid.cells_per_axis();
  for (int v = 0; v <= nc; ++v) {
    CHECK(sol.values[grid.node_index(v, 0)] == 0.0);
    CHECK(sol.values[grid.node_index(v, nc)] == 0.0);
    CHECK(sol.values[grid.node_index(0, v)] == 0.0);
    CHECK(sol.values[grid.node_index(nc, v)] == 0.0);
  }
}
