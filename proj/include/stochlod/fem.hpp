#pragma once

#include <Eigen/Sparse>

#include <array>
#include <span>

#include "stochlod/grid.hpp"
#include "stochlod/randfield.hpp"

namespace stochlod {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

namespace fem {

// Q1 element stiffness on a square cell for unit coefficient; independent of
// the cell size in 2D. Corner order SW, SE, NW, NE.
inline constexpr std::array<std::array<double, 4>, 4> kQ1Stiffness = {{
    {2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0},
    {-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0},
    {-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0},
    {-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0},
}};

// Q1 element mass on a square cell of size h, divided by h^2.
inline constexpr std::array<std::array<double, 4>, 4> kQ1MassUnit = {{
    {4.0 / 36.0, 2.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0},
    {2.0 / 36.0, 4.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0},
    {2.0 / 36.0, 1.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0},
    {1.0 / 36.0, 2.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0},
}};

/// Cellwise coefficient values of `a` prolonged onto `target` by
/// piecewise-constant injection. `a` must live on `target` or on a coarser
/// mesh that `target` refines.
std::vector<double> prolong_coefficient(const FineGrid& target,
                                        const FieldRealization& a);

/// Stiffness matrix over the interior nodes of the fine grid; SPD for
/// positive coefficients. One coefficient value per cell (midpoint rule).
SpMat assemble_stiffness(const FineGrid& grid, const FieldRealization& a);

/// Q1 load vector over interior nodes for constant or cellwise-constant f.
Vec assemble_load(const FineGrid& grid, double f);
Vec assemble_load(const FineGrid& grid, std::span<const double> cellwise_f);

/// Q1 mass matrix over interior nodes (exact for functions vanishing on the
/// boundary).
SpMat assemble_mass(const FineGrid& grid);

struct FemSolution {
  FineGrid grid;
  Vec values;  // all nodes, exactly zero on the boundary
};

/// Diagonal-preconditioned CG solve of the SPD system to relative residual
/// <= tol; throws SolveError with the achieved residual on stagnation.
FemSolution solve_dirichlet(const FineGrid& grid, const SpMat& K, const Vec& b,
                            double tol = 1e-12);

/// Interior-node vector -> all-node vector with zero boundary values.
Vec inflate_interior(const FineGrid& grid, const Vec& interior);

}  // namespace fem
}  // namespace stochlod
