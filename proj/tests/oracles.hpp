// Test-only reference computations, kept independent of the library paths
// they are used to check.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "stochlod/fem.hpp"
#include "stochlod/grid.hpp"
#include "stochlod/lod.hpp"

namespace oracles {

// Modified Bessel K_nu via the representation
//   K_nu(x) = sqrt(pi) (x/2)^nu / Gamma(nu+1/2) * int_1^inf e^{-xt}(t^2-1)^{nu-1/2} dt,
// substituted t = 1 + u^2 to remove the endpoint singularity, then composite
// Simpson with a fixed fine subdivision. Distinct from the production series /
// Chebyshev / cosh-quadrature paths.
inline double bessel_k(double nu, double x) {
  const double upper = std::sqrt(770.0 / x) + 2.0;
  const long n = 400000;  // even
  const double step = upper / static_cast<double>(n);
  auto integrand = [&](double u) {
    // with t = 1 + u^2: (t^2 - 1)^(nu - 1/2) dt = (u sqrt(u^2+2))^(2nu-1) 2u du
    const double base = u * std::sqrt(u * u + 2.0);
    return 2.0 * u * std::pow(base, 2.0 * nu - 1.0) * std::exp(-x * u * u);
  };
  double acc = integrand(0.0) + integrand(upper);
  for (long i = 1; i < n; ++i)
    acc += (i % 2 ? 4.0 : 2.0) * integrand(static_cast<double>(i) * step);
  const double integral = acc * step / 3.0;
  return std::sqrt(M_PI) * std::pow(0.5 * x, nu) / std::tgamma(nu + 0.5) *
         std::exp(-x) * integral;
}

// Double sine series for -lap u = 1 on the unit square, evaluated on a tensor
// grid of x- and y-coordinates. terms = number of odd frequencies per axis.
inline Eigen::MatrixXd poisson_series_on_grid(const std::vector<double>& xs,
                                              const std::vector<double>& ys,
                                              int terms = 400) {
  const double pi = M_PI;
  Eigen::MatrixXd coeff(terms, terms);
  for (int a = 0; a < terms; ++a) {
    const double m = 2.0 * a + 1.0;
    for (int b = 0; b < terms; ++b) {
      const double n = 2.0 * b + 1.0;
      coeff(a, b) = 16.0 / (pi * pi * pi * pi * m * n * (m * m + n * n));
    }
  }
  Eigen::MatrixXd sx(terms, static_cast<Eigen::Index>(xs.size()));
  Eigen::MatrixXd sy(terms, static_cast<Eigen::Index>(ys.size()));
  for (int a = 0; a < terms; ++a) {
    const double m = 2.0 * a + 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) sx(a, static_cast<Eigen::Index>(i)) = std::sin(m * pi * xs[i]);
    for (std::size_t i = 0; i < ys.size(); ++i) sy(a, static_cast<Eigen::Index>(i)) = std::sin(m * pi * ys[i]);
  }
  return sx.transpose() * coeff * sy;  // (len(xs) x len(ys))
}

// L2(D) error of a Q1 fine solution against the series solution, with 3x3
// Gauss quadrature per cell (exact enough that the FEM error dominates).
inline double poisson_l2_error(const stochlod::fem::FemSolution& sol) {
  const auto& grid = sol.grid;
  const int nc = grid.cells_per_axis();
  const double h = grid.h();
  const double offsets[3] = {0.5 * (1.0 - std::sqrt(3.0 / 5.0)), 0.5,
                             0.5 * (1.0 + std::sqrt(3.0 / 5.0))};
  const double weights[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

  std::vector<double> coords(static_cast<std::size_t>(nc) * 3);
  for (int c = 0; c < nc; ++c)
    for (int g = 0; g < 3; ++g)
      coords[static_cast<std::size_t>(c) * 3 + g] = (c + offsets[g]) * h;
  const Eigen::MatrixXd exact = poisson_series_on_grid(coords, coords);

  double err2 = 0.0;
  for (int cy = 0; cy < nc; ++cy)
    for (int cx = 0; cx < nc; ++cx) {
      const double v00 = sol.values[grid.node_index(cx, cy)];
      const double v10 = sol.values[grid.node_index(cx + 1, cy)];
      const double v01 = sol.values[grid.node_index(cx, cy + 1)];
      const double v11 = sol.values[grid.node_index(cx + 1, cy + 1)];
      for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
          const double s = offsets[gx], t = offsets[gy];
          const double uh = v00 * (1 - s) * (1 - t) + v10 * s * (1 - t) +
                            v01 * (1 - s) * t + v11 * s * t;
          const double ue = exact(cx * 3 + gx, cy * 3 + gy);
          err2 += weights[gx] * weights[gy] * h * h * (uh - ue) * (uh - ue);
        }
    }
  return std::sqrt(err2);
}

// Direct quadrature of int_T A grad(Lambda_j) . grad(Lambda_i) over the
// center element, 2x2 Gauss per fine cell with analytic bilinear gradients.
// Matches the zero-corrector-forced local surrogate.
inline Eigen::MatrixXd quadrature_local_matrix(const stochlod::PatchIndex& p,
                                               const stochlod::FineGrid& fine,
                                               const stochlod::FieldRealization& a) {
  using namespace stochlod;
  const std::vector<double> coeff = fem::prolong_coefficient(fine, a);
  const int r = fine.refinement;
  const double h = fine.h();
  const int slots = p.num_node_slots();
  const int tx = p.center % p.n, ty = p.center / p.n;
  const double H = p.H;

  auto hat_grad = [&](double x, double y, int nx, int ny, double& gx, double& gy) {
    const double tx1 = x / H - nx, ty1 = y / H - ny;
    const double sx = std::max(0.0, 1.0 - std::abs(tx1));
    const double sy = std::max(0.0, 1.0 - std::abs(ty1));
    const double dsx = (std::abs(tx1) < 1.0) ? (tx1 > 0 ? -1.0 : 1.0) / H : 0.0;
    const double dsy = (std::abs(ty1) < 1.0) ? (ty1 > 0 ? -1.0 : 1.0) / H : 0.0;
    gx = dsx * sy;
    gy = sx * dsy;
  };

  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(slots, 4);
  const int corner_x[4] = {tx, tx + 1, tx, tx + 1};
  const int corner_y[4] = {ty, ty, ty + 1, ty + 1};
  const int nf = fine.cells_per_axis();
  for (int cy = ty * r; cy < (ty + 1) * r; ++cy)
    for (int cx = tx * r; cx < (tx + 1) * r; ++cx) {
      const double ac = coeff[static_cast<std::size_t>(cy) * nf + cx];
      for (int gy = 0; gy < 2; ++gy)
        for (int gx2 = 0; gx2 < 2; ++gx2) {
          const double x = (cx + gp[gx2]) * h;
          const double y = (cy + gp[gy]) * h;
          const double w = 0.25 * h * h;
          for (int s = 0; s < slots; ++s) {
            auto [nx, ny] = p.node_slot_global(s);
            if (!p.node_closure[static_cast<std::size_t>(s)]) continue;
            double gi_x, gi_y;
            hat_grad(x, y, nx, ny, gi_x, gi_y);
            if (gi_x == 0.0 && gi_y == 0.0) continue;
            for (int j = 0; j < 4; ++j) {
              double gj_x, gj_y;
              hat_grad(x, y, corner_x[j], corner_y[j], gj_x, gj_y);
              out(s, j) += w * ac * (gi_x * gj_x + gi_y * gj_y);
            }
          }
        }
    }
  return out;
}

// Global PG-LOD matrix assembled without the local-matrix / Phi_T route:
// column j is a_A((id - Q) Lambda_j, Lambda_i) computed from global fine-grid
// stiffness applications. Shares only the corrector solves.
inline stochlod::SpMat direct_global_pglod(const stochlod::CoarseGrid& coarse,
                                           const stochlod::FineGrid& fine,
                                           const stochlod::lod::Interpolator& interp,
                                           const stochlod::FieldRealization& a,
                                           int ell) {
  using namespace stochlod;
  const int n_coarse = coarse.num_interior_nodes();
  const auto n_fine = fine.num_interior_nodes();
  const SpMat K = fem::assemble_stiffness(fine, a);
  const SpMat P = lod::prolongation(coarse, fine);

  // Interior-node slice of the Q1 injection of the coarse basis.
  Eigen::MatrixXd P_int = Eigen::MatrixXd::Zero(n_fine, n_coarse);
  for (int j = 0; j < n_coarse; ++j)
    for (SpMat::InnerIterator it(P, j); it; ++it) {
      const auto vy = it.row() / fine.nodes_per_axis();
      const auto vx = it.row() % fine.nodes_per_axis();
      const auto ri =
          fine.interior_node_index(static_cast<int>(vx), static_cast<int>(vy));
      if (ri >= 0) P_int(ri, j) += it.value();
    }

  // Corrected trial functions g_j = Lambda_j - sum_T Q_T Lambda_j.
  Eigen::MatrixXd G = P_int;
  for (int t = 0; t < coarse.num_elements(); ++t) {
    const PatchIndex p = patch(coarse, t, ell);
    const lod::CorrectorSet cs = lod::solve_correctors(p, interp, a, fine);
    const auto [tx, ty] = coarse.element_coords(t);
    const int corner_x[4] = {tx, tx + 1, tx, tx + 1};
    const int corner_y[4] = {ty, ty, ty + 1, ty + 1};
    for (int j = 0; j < 4; ++j) {
      const int col = coarse.interior_node_index(corner_x[j], corner_y[j]);
      if (col < 0) continue;
      const auto& m = cs.mesh;
      for (int ly = 0; ly < m.nny; ++ly)
        for (int lx = 0; lx < m.nnx; ++lx) {
          const auto gi = fine.interior_node_index(m.x0 + lx, m.y0 + ly);
          if (gi >= 0)
            G(gi, col) -= cs.q[static_cast<std::size_t>(j)][m.node(lx, ly)];
        }
    }
  }

  const Eigen::MatrixXd S = P_int.transpose() * (K * G);
  return stochlod::SpMat(S.sparseView(0.0, -1.0));
}

// Kolmogorov-Smirnov statistic against Unif[lo, hi].
inline double ks_statistic_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace oracles
