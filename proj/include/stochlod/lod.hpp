#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <span>
#include <vector>

#include "stochlod/fem.hpp"
#include "stochlod/grid.hpp"
#include "stochlod/randfield.hpp"

namespace stochlod {
namespace lod {

/// Projective quasi-interpolation I_H = E_H ∘ Π_H: elementwise L2 projection
/// onto Q1 followed by arithmetic nodal averaging; boundary coarse nodes map
/// to zero. Stored as a sparse operator from fine nodal vectors (all nodes)
/// to coarse interior nodal vectors.
struct Interpolator {
  CoarseGrid coarse;
  FineGrid fine;
  SpMatRM op;
};

Interpolator build_interpolator(const CoarseGrid& coarse, const FineGrid& fine);

/// Q1 injection of coarse interior nodal vectors into fine nodal vectors.
SpMat prolongation(const CoarseGrid& coarse, const FineGrid& fine);

/// Fine lattice of the clipped patch N^ell(T) ∩ D.
struct PatchFineMesh {
  int r = 1;            // fine cells per coarse cell
  int x0 = 0, y0 = 0;   // origin in global fine-cell coordinates
  int ncx = 0, ncy = 0; // fine cells per axis
  int nnx = 0, nny = 0; // fine nodes per axis

  int num_nodes() const { return nnx * nny; }
  int node(int lx, int ly) const { return ly * nnx + lx; }
  // Free nodes carry corrector DOFs: strictly inside the clipped patch box
  // (its boundary, including any part on the domain boundary, is Dirichlet).
  bool node_is_free(int lx, int ly) const {
    return lx >= 1 && lx <= ncx - 1 && ly >= 1 && ly <= ncy - 1;
  }
};

PatchFineMesh patch_fine_mesh(const PatchIndex& p, const FineGrid& fine);

/// Element correctors for the 2^d corner basis functions of the center
/// element, as fine functions on the patch-local mesh (zero on its boundary,
/// zero quasi-interpolant). The patch stiffness over all local nodes is kept
/// for the surrogate integrals.
struct CorrectorSet {
  PatchIndex patch;
  PatchFineMesh mesh;
  SpMat stiffness;          // over all patch-local nodes, no boundary conditions
  std::array<Vec, 4> q;     // per corner basis function, all patch-local nodes
};

CorrectorSet solve_correctors(const PatchIndex& p, const Interpolator& interp,
                              const FieldRealization& a, const FineGrid& fine);

namespace detail {
// rhs_scale 0 forces the homogeneous system (zero correctors); used by tests.
CorrectorSet solve_correctors_scaled_rhs(const PatchIndex& p,
                                         const Interpolator& interp,
                                         const FieldRealization& a,
                                         const FineGrid& fine, double rhs_scale);
}  // namespace detail

/// Local PG-LOD matrix S_{A,T}: rows are the patch node slots (virtual rows
/// zero), columns the corner basis functions of T.
struct LocalSurrogate {
  PatchIndex patch;
  Eigen::MatrixXd matrix;  // num_node_slots x 4

  std::vector<double> vec() const;  // column-major flattening
};

LocalSurrogate local_surrogate(const PatchIndex& p, const CorrectorSet& correctors,
                               const FieldRealization& a, const FineGrid& fine);

/// Shared inflation-and-sum path over interior coarse DOFs; mats[T] must be
/// the num_node_slots x 4 local matrix of element T.
SpMat assemble_surrogate(const CoarseGrid& grid, int ell,
                         std::span<const Eigen::MatrixXd> mats);

SpMat assemble_global(const CoarseGrid& grid,
                      const std::vector<LocalSurrogate>& locals);

/// Standard Q1 coarse load over interior nodes (uncorrected test functions).
Vec coarse_load(const CoarseGrid& grid, double f);

/// Sparse LU solve of the (nonsymmetric) PG-LOD system; residual-checked.
Vec solve_pglod(const SpMat& S, const Vec& load, double tol = 1e-12);

/// All local surrogates plus the assembled global matrix for one realization.
struct PgLodSystem {
  std::vector<LocalSurrogate> locals;
  SpMat S;
};

PgLodSystem pg_lod_system(const CoarseGrid& grid, const FineGrid& fine,
                          const Interpolator& interp, const FieldRealization& a,
                          int ell, int workers = 1);

/// Energy-norm distance between the k-patch correctors of T and the
/// full-domain ones, for k = 1..K where the K-patch covers the domain
/// (so the last entry is exactly zero).
std::vector<double> corrector_decay(const CoarseGrid& grid, const FineGrid& fine,
                                    const Interpolator& interp,
                                    const FieldRealization& a, int T);

}  // namespace lod
}  // namespace stochlod
