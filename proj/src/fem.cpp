#include "stochlod/fem.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace stochlod {
namespace fem {

std::vector<double> prolong_coefficient(const FineGrid& target,
                                        const FieldRealization& a) {
  const int nc = a.grid.cells_per_axis();
  const int nt = target.cells_per_axis();
  if (a.grid.parent.n != target.parent.n || nt % nc != 0)
    throw GridError("coefficient mesh does not underlie the assembly mesh");
  std::vector<double> out(static_cast<std::size_t>(target.num_cells()));
  const int q = nt / nc;
  for (int cy = 0; cy < nt; ++cy) {
    const std::size_t src_row = static_cast<std::size_t>(cy / q) * nc;
    for (int cx = 0; cx < nt; ++cx)
      out[static_cast<std::size_t>(cy) * nt + cx] = a.values[src_row + cx / q];
  }
  return out;
}

SpMat assemble_stiffness(const FineGrid& grid, const FieldRealization& a) {
  const std::vector<double> coeff = prolong_coefficient(grid, a);
  const int nc = grid.cells_per_axis();
  const std::int64_t n_int = grid.num_interior_nodes();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(grid.num_cells()) * 16);
  for (int cy = 0; cy < nc; ++cy)
    for (int cx = 0; cx < nc; ++cx) {
      const double ac = coeff[static_cast<std::size_t>(cy) * nc + cx];
      if (!(ac > 0.0))
        throw Error("non-positive coefficient value in cell (" +
                    std::to_string(cx) + "," + std::to_string(cy) + ")");
      const std::int64_t idx[4] = {
          grid.interior_node_index(cx, cy), grid.interior_node_index(cx + 1, cy),
          grid.interior_node_index(cx, cy + 1),
          grid.interior_node_index(cx + 1, cy + 1)};
      for (int i = 0; i < 4; ++i) {
        if (idx[i] < 0) continue;
        for (int j = 0; j < 4; ++j) {
          if (idx[j] < 0) continue;
          trips.emplace_back(static_cast<int>(idx[i]), static_cast<int>(idx[j]),
                             ac * kQ1Stiffness[i][j]);
        }
      }
    }
  SpMat K(n_int, n_int);
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();
  return K;
}

Vec assemble_load(const FineGrid& grid, double f) {
  const std::vector<double> cells(static_cast<std::size_t>(grid.num_cells()), f);
  return assemble_load(grid, cells);
}

Vec assemble_load(const FineGrid& grid, std::span<const double> cellwise_f) {
  if (cellwise_f.size() != static_cast<std::size_t>(grid.num_cells()))
    throw GridError("load: cellwise f has wrong length");
  const int nc = grid.cells_per_axis();
  const double quarter_mass = 0.25 * grid.h() * grid.h();
  Vec b = Vec::Zero(grid.num_interior_nodes());
  for (int cy = 0; cy < nc; ++cy)
    for (int cx = 0; cx < nc; ++cx) {
      const double w = quarter_mass * cellwise_f[static_cast<std::size_t>(cy) * nc + cx];
      const std::int64_t idx[4] = {
          grid.interior_node_index(cx, cy), grid.interior_node_index(cx + 1, cy),
          grid.interior_node_index(cx, cy + 1),
          grid.interior_node_index(cx + 1, cy + 1)};
      for (int i = 0; i < 4; ++i)
        if (idx[i] >= 0) b[idx[i]] += w;
    }
  return b;
}

SpMat assemble_mass(const FineGrid& grid) {
  const int nc = grid.cells_per_axis();
  const double h2 = grid.h() * grid.h();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(grid.num_cells()) * 16);
  for (int cy = 0; cy < nc; ++cy)
    for (int cx = 0; cx < nc; ++cx) {
      const std::int64_t idx[4] = {
          grid.interior_node_index(cx, cy), grid.interior_node_index(cx + 1, cy),
          grid.interior_node_index(cx, cy + 1),
          grid.interior_node_index(cx + 1, cy + 1)};
      for (int i = 0; i < 4; ++i) {
        if (idx[i] < 0) continue;
        for (int j = 0; j < 4; ++j)
          if (idx[j] >= 0)
            trips.emplace_back(static_cast<int>(idx[i]), static_cast<int>(idx[j]),
                               h2 * kQ1MassUnit[i][j]);
      }
    }
  SpMat M(grid.num_interior_nodes(), grid.num_interior_nodes());
  M.setFromTriplets(trips.begin(), trips.end());
  M.makeCompressed();
  return M;
}

Vec inflate_interior(const FineGrid& grid, const Vec& interior) {
  if (interior.size() != grid.num_interior_nodes())
    throw GridError("inflate_interior: size mismatch");
  Vec full = Vec::Zero(grid.num_nodes());
  const int nc = grid.cells_per_axis();
  for (int vy = 1; vy <= nc - 1; ++vy)
    for (int vx = 1; vx <= nc - 1; ++vx)
      full[grid.node_index(vx, vy)] = interior[grid.interior_node_index(vx, vy)];
  return full;
}

FemSolution solve_dirichlet(const FineGrid& grid, const SpMat& K, const Vec& b,
                            double tol) {
  if (K.rows() != grid.num_interior_nodes() || b.size() != K.rows())
    throw GridError("solve_dirichlet: dimension mismatch");
  Vec x;
  if (b.isZero(0.0)) {
    x = Vec::Zero(b.size());
  } else {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(0.1 * tol);
    cg.setMaxIterations(20 * K.rows() + 1000);
    cg.compute(K);
    x = cg.solve(b);
    // Defect correction: CG's internal estimate can stall a little above the
    // contract; refine against the explicitly computed residual.
    const double bnorm = b.norm();
    double rel_res = (K * x - b).norm() / bnorm;
    for (int sweep = 0; sweep < 3 && !(rel_res <= tol); ++sweep) {
      const Vec r = b - K * x;
      x += cg.solve(r);
      rel_res = (K * x - b).norm() / bnorm;
    }
    if (!(rel_res <= tol)) {
      std::ostringstream msg;
      msg << "CG did not reach the residual contract (tol " << tol
          << "); achieved " << rel_res;
      throw SolveError(msg.str(), rel_res);
    }
  }
  FemSolution sol;
  sol.grid = grid;
  sol.values = inflate_interior(grid, x);
  return sol;
}

}  // namespace fem
}  // namespace stochlod
