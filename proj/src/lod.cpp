#include "stochlod/lod.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>

#include "stochlod/parallel.hpp"

namespace stochlod {
namespace lod {

namespace {

// 1D ingredients of the elementwise L2 projection: w1d[a][k] expresses the
// coarse corner value a of the projection in terms of the r+1 fine nodal
// values along one axis of a coarse cell.
Eigen::Matrix<double, 2, Eigen::Dynamic> projection_weights_1d(double H, int r) {
  const double h = H / r;
  Eigen::Matrix<double, 2, Eigen::Dynamic> b(2, r + 1);
  b.setZero();
  for (int k = 0; k < r; ++k) {
    const double x0 = static_cast<double>(k) / r;
    const double x1 = static_cast<double>(k + 1) / r;
    const double lam[2][2] = {{1.0 - x0, 1.0 - x1}, {x0, x1}};
    for (int a = 0; a < 2; ++a) {
      b(a, k) += h / 6.0 * (2.0 * lam[a][0] + lam[a][1]);
      b(a, k + 1) += h / 6.0 * (lam[a][0] + 2.0 * lam[a][1]);
    }
  }
  Eigen::Matrix2d mass;
  mass << H / 3.0, H / 6.0, H / 6.0, H / 3.0;
  return mass.inverse() * b;
}

double hat1d(double t) { return std::max(0.0, 1.0 - std::abs(t)); }

// Coefficient value on a fine assembly cell, injecting from the (possibly
// coarser) mesh the field lives on.
struct CoeffView {
  const FieldRealization* a;
  int q;        // assembly cells per coefficient cell
  int nc_field; // coefficient cells per axis

  CoeffView(const FieldRealization& field, const FineGrid& fine) : a(&field) {
    const int nf = fine.cells_per_axis();
    nc_field = field.grid.cells_per_axis();
    if (field.grid.parent.n != fine.parent.n || nf % nc_field != 0)
      throw GridError("coefficient mesh does not underlie the corrector mesh");
    q = nf / nc_field;
  }
  double operator()(int gx, int gy) const {
    return a->values[static_cast<std::size_t>(gy / q) * nc_field + gx / q];
  }
};

}  // namespace

Interpolator build_interpolator(const CoarseGrid& coarse, const FineGrid& fine) {
  if (fine.parent.n != coarse.n)
    throw GridError("interpolator: fine grid does not refine the coarse grid");
  const int r = fine.refinement;
  const auto w1d = projection_weights_1d(coarse.H, r);

  std::vector<Eigen::Triplet<double>> trips;
  const int n = coarse.n;
  trips.reserve(static_cast<std::size_t>(coarse.num_interior_nodes()) * 4 *
                (r + 1) * (r + 1));
  for (int zy = 1; zy <= n - 1; ++zy)
    for (int zx = 1; zx <= n - 1; ++zx) {
      const int row = coarse.interior_node_index(zx, zy);
      for (int ey = zy - 1; ey <= zy; ++ey)
        for (int ex = zx - 1; ex <= zx; ++ex) {
          const int a1 = zx - ex;  // corner of the element matching z
          const int a2 = zy - ey;
          for (int k2 = 0; k2 <= r; ++k2)
            for (int k1 = 0; k1 <= r; ++k1) {
              const double w = 0.25 * w1d(a1, k1) * w1d(a2, k2);
              if (w == 0.0) continue;
              const std::int64_t col = fine.node_index(ex * r + k1, ey * r + k2);
              trips.emplace_back(row, static_cast<int>(col), w);
            }
        }
    }
  Interpolator interp;
  interp.coarse = coarse;
  interp.fine = fine;
  interp.op = SpMatRM(coarse.num_interior_nodes(), fine.num_nodes());
  interp.op.setFromTriplets(trips.begin(), trips.end());
  interp.op.makeCompressed();
  return interp;
}

SpMat prolongation(const CoarseGrid& coarse, const FineGrid& fine) {
  if (fine.parent.n != coarse.n)
    throw GridError("prolongation: fine grid does not refine the coarse grid");
  const int r = fine.refinement;
  const int nf = fine.cells_per_axis();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(fine.num_nodes()) * 4);
  for (int vy = 0; vy <= nf; ++vy)
    for (int vx = 0; vx <= nf; ++vx) {
      const int ex = std::min(vx / r, coarse.n - 1);
      const int ey = std::min(vy / r, coarse.n - 1);
      const double tx = static_cast<double>(vx) / r - ex;
      const double ty = static_cast<double>(vy) / r - ey;
      const std::int64_t row = fine.node_index(vx, vy);
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int col = coarse.interior_node_index(ex + dx, ey + dy);
          if (col < 0) continue;
          const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
          if (w != 0.0) trips.emplace_back(static_cast<int>(row), col, w);
        }
    }
  SpMat P(fine.num_nodes(), coarse.num_interior_nodes());
  P.setFromTriplets(trips.begin(), trips.end());
  P.makeCompressed();
  return P;
}

PatchFineMesh patch_fine_mesh(const PatchIndex& p, const FineGrid& fine) {
  if (fine.parent.n != p.n)
    throw GridError("patch_fine_mesh: grid mismatch");
  PatchFineMesh m;
  m.r = fine.refinement;
  m.x0 = p.px0 * m.r;
  m.y0 = p.py0 * m.r;
  m.ncx = (p.px1 - p.px0 + 1) * m.r;
  m.ncy = (p.py1 - p.py0 + 1) * m.r;
  m.nnx = m.ncx + 1;
  m.nny = m.ncy + 1;
  return m;
}

namespace detail {

CorrectorSet solve_correctors_scaled_rhs(const PatchIndex& p,
                                         const Interpolator& interp,
                                         const FieldRealization& a,
                                         const FineGrid& fine, double rhs_scale) {
  if (interp.coarse.n != p.n || interp.fine.cells_per_axis() != fine.cells_per_axis())
    throw GridError("solve_correctors: interpolator built for different grids");
  if (fine.refinement < 2)
    throw GridError("solve_correctors: refinement H/h must be >= 2");

  CorrectorSet out;
  out.patch = p;
  out.mesh = patch_fine_mesh(p, fine);
  const PatchFineMesh& m = out.mesh;
  const CoeffView coeff(a, fine);

  // Free-node numbering and its inverse over global fine nodes.
  const int n_free = (m.nnx - 2) * (m.nny - 2);
  std::vector<int> free_of_local(static_cast<std::size_t>(m.num_nodes()), -1);
  std::vector<std::int64_t> global_of_free(static_cast<std::size_t>(n_free));
  std::vector<int> free_of_global(static_cast<std::size_t>(fine.num_nodes()), -1);
  {
    int f = 0;
    for (int ly = 1; ly <= m.ncy - 1; ++ly)
      for (int lx = 1; lx <= m.ncx - 1; ++lx) {
        const std::int64_t g = fine.node_index(m.x0 + lx, m.y0 + ly);
        free_of_local[static_cast<std::size_t>(m.node(lx, ly))] = f;
        global_of_free[static_cast<std::size_t>(f)] = g;
        free_of_global[static_cast<std::size_t>(g)] = f;
        ++f;
      }
  }

  // Patch stiffness over all local nodes plus its free-free block.
  std::vector<Eigen::Triplet<double>> trips_full, trips_free;
  trips_full.reserve(static_cast<std::size_t>(m.ncx) * m.ncy * 16);
  trips_free.reserve(trips_full.capacity());
  for (int cy = 0; cy < m.ncy; ++cy)
    for (int cx = 0; cx < m.ncx; ++cx) {
      const double ac = coeff(m.x0 + cx, m.y0 + cy);
      if (!(ac > 1e-14))
        throw Error("degenerate coefficient (<= 1e-14) on a patch cell");
      const int loc[4] = {m.node(cx, cy), m.node(cx + 1, cy), m.node(cx, cy + 1),
                          m.node(cx + 1, cy + 1)};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          const double v = ac * fem::kQ1Stiffness[i][j];
          trips_full.emplace_back(loc[i], loc[j], v);
          const int fi = free_of_local[static_cast<std::size_t>(loc[i])];
          const int fj = free_of_local[static_cast<std::size_t>(loc[j])];
          if (fi >= 0 && fj >= 0) trips_free.emplace_back(fi, fj, v);
        }
    }
  out.stiffness = SpMat(m.num_nodes(), m.num_nodes());
  out.stiffness.setFromTriplets(trips_full.begin(), trips_full.end());
  out.stiffness.makeCompressed();

  // Constraint rows: interior coarse nodes with an adjacent element in the
  // clipped patch; entries are the global I_H rows sliced to free columns.
  std::vector<int> constraint_nodes;
  for (int zy = p.py0; zy <= p.py1 + 1; ++zy)
    for (int zx = p.px0; zx <= p.px1 + 1; ++zx) {
      const int idx = interp.coarse.interior_node_index(zx, zy);
      if (idx >= 0) constraint_nodes.push_back(idx);
    }
  const int n_con = static_cast<int>(constraint_nodes.size());

  SpMat C(n_con, n_free);
  {
    std::vector<Eigen::Triplet<double>> trips_con;
    for (int c = 0; c < n_con; ++c)
      for (SpMatRM::InnerIterator it(interp.op, constraint_nodes[c]); it; ++it) {
        const int f = free_of_global[static_cast<std::size_t>(it.col())];
        if (f >= 0) trips_con.emplace_back(c, f, it.value());
      }
    C.setFromTriplets(trips_con.begin(), trips_con.end());
    C.makeCompressed();
  }
  SpMat A(n_free, n_free);
  A.setFromTriplets(trips_free.begin(), trips_free.end());
  A.makeCompressed();

  // The saddle system [A C^T; C 0] is solved through the Schur complement on
  // the multipliers: A is SPD, so q = A^-1 (b - C^T lambda) with
  // (C A^-1 C^T) lambda = C A^-1 b.
  Eigen::SimplicialLDLT<SpMat> ldlt;
  ldlt.compute(A);
  if (ldlt.info() != Eigen::Success)
    throw SolveError("singular saddle-point system in corrector solve "
                     "(degenerate coefficient on the patch)");
  const Eigen::MatrixXd Y = ldlt.solve(Eigen::MatrixXd(C.transpose()));
  const Eigen::MatrixXd schur = C * Y;
  const Eigen::LLT<Eigen::MatrixXd> schur_llt(schur);
  if (schur_llt.info() != Eigen::Success)
    throw SolveError("singular saddle-point system in corrector solve "
                     "(constraint rank deficiency)");

  // Right-hand sides assembled from the center element only.
  auto [tx, ty] = std::pair<int, int>{p.center % p.n, p.center / p.n};
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_free, 4);
  const int corner_x[4] = {tx, tx + 1, tx, tx + 1};
  const int corner_y[4] = {ty, ty, ty + 1, ty + 1};
  for (int cy = ty * m.r; cy < (ty + 1) * m.r; ++cy)
    for (int cx = tx * m.r; cx < (tx + 1) * m.r; ++cx) {
      const double ac = rhs_scale * coeff(cx, cy);
      const int lx = cx - m.x0, ly = cy - m.y0;
      const int loc[4] = {m.node(lx, ly), m.node(lx + 1, ly), m.node(lx, ly + 1),
                          m.node(lx + 1, ly + 1)};
      const int nodes_x[4] = {cx, cx + 1, cx, cx + 1};
      const int nodes_y[4] = {cy, cy, cy + 1, cy + 1};
      for (int j = 0; j < 4; ++j) {
        double lam[4];
        for (int v = 0; v < 4; ++v)
          lam[v] = hat1d(static_cast<double>(nodes_x[v]) / m.r - corner_x[j]) *
                   hat1d(static_cast<double>(nodes_y[v]) / m.r - corner_y[j]);
        for (int i = 0; i < 4; ++i) {
          const int fi = free_of_local[static_cast<std::size_t>(loc[i])];
          if (fi < 0) continue;
          double acc = 0.0;
          for (int v = 0; v < 4; ++v) acc += fem::kQ1Stiffness[i][v] * lam[v];
          rhs(fi, j) += ac * acc;
        }
      }
    }

  const Eigen::MatrixXd t = ldlt.solve(rhs);
  const Eigen::MatrixXd lambda = schur_llt.solve(C * t);
  const Eigen::MatrixXd sol = t - Y * lambda;

  for (int j = 0; j < 4; ++j) {
    out.q[static_cast<std::size_t>(j)] = Vec::Zero(m.num_nodes());
    for (int f = 0; f < n_free; ++f) {
      const std::int64_t g = global_of_free[static_cast<std::size_t>(f)];
      const int gx = static_cast<int>(g % fine.nodes_per_axis());
      const int gy = static_cast<int>(g / fine.nodes_per_axis());
      out.q[static_cast<std::size_t>(j)][m.node(gx - m.x0, gy - m.y0)] = sol(f, j);
    }
  }
  return out;
}

}  // namespace detail

CorrectorSet solve_correctors(const PatchIndex& p, const Interpolator& interp,
                              const FieldRealization& a, const FineGrid& fine) {
  return detail::solve_correctors_scaled_rhs(p, interp, a, fine, 1.0);
}

std::vector<double> LocalSurrogate::vec() const {
  std::vector<double> v(static_cast<std::size_t>(matrix.size()));
  Eigen::Map<Eigen::MatrixXd>(v.data(), matrix.rows(), matrix.cols()) = matrix;
  return v;
}

LocalSurrogate local_surrogate(const PatchIndex& p, const CorrectorSet& correctors,
                               const FieldRealization& a, const FineGrid& fine) {
  if (correctors.patch.center != p.center || correctors.patch.ell != p.ell ||
      correctors.patch.n != p.n)
    throw GridError("local_surrogate: correctors belong to a different patch");
  const PatchFineMesh& m = correctors.mesh;
  const CoeffView coeff(a, fine);
  const int slots = p.num_node_slots();

  // Hat-function values of every patch node slot on the local fine lattice.
  Eigen::MatrixXd hats = Eigen::MatrixXd::Zero(m.num_nodes(), slots);
  for (int s = 0; s < slots; ++s) {
    auto [nx, ny] = p.node_slot_global(s);
    for (int ly = 0; ly < m.nny; ++ly) {
      const double wy = hat1d(static_cast<double>(m.y0 + ly) / m.r - ny);
      if (wy == 0.0) continue;
      for (int lx = 0; lx < m.nnx; ++lx) {
        const double wx = hat1d(static_cast<double>(m.x0 + lx) / m.r - nx);
        if (wx != 0.0) hats(m.node(lx, ly), s) = wx * wy;
      }
    }
  }

  // Stiffness restricted to the cells of the center element.
  auto [tx, ty] = std::pair<int, int>{p.center % p.n, p.center / p.n};
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(m.r) * m.r * 16);
  for (int cy = ty * m.r; cy < (ty + 1) * m.r; ++cy)
    for (int cx = tx * m.r; cx < (tx + 1) * m.r; ++cx) {
      const double ac = coeff(cx, cy);
      const int lx = cx - m.x0, ly = cy - m.y0;
      const int loc[4] = {m.node(lx, ly), m.node(lx + 1, ly), m.node(lx, ly + 1),
                          m.node(lx + 1, ly + 1)};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          trips.emplace_back(loc[i], loc[j], ac * fem::kQ1Stiffness[i][j]);
    }
  SpMat K_T(m.num_nodes(), m.num_nodes());
  K_T.setFromTriplets(trips.begin(), trips.end());

  const int center_slot[4] = {
      (p.ell + 0) * p.nodes_per_axis() + (p.ell + 0),
      (p.ell + 0) * p.nodes_per_axis() + (p.ell + 1),
      (p.ell + 1) * p.nodes_per_axis() + (p.ell + 0),
      (p.ell + 1) * p.nodes_per_axis() + (p.ell + 1)};

  LocalSurrogate s;
  s.patch = p;
  s.matrix = Eigen::MatrixXd::Zero(slots, 4);
  for (int j = 0; j < 4; ++j) {
    const Vec t_col = K_T * hats.col(center_slot[j]);
    const Vec c_col = correctors.stiffness * correctors.q[static_cast<std::size_t>(j)];
    s.matrix.col(j) = hats.transpose() * (t_col - c_col);
  }
  for (int slot = 0; slot < slots; ++slot)
    if (!p.node_closure[static_cast<std::size_t>(slot)]) s.matrix.row(slot).setZero();
  return s;
}

SpMat assemble_surrogate(const CoarseGrid& grid, int ell,
                         std::span<const Eigen::MatrixXd> mats) {
  if (mats.size() != static_cast<std::size_t>(grid.num_elements()))
    throw GridError("assemble_surrogate: one local matrix per coarse element required");
  const int n_int = grid.num_interior_nodes();
  std::vector<Eigen::Triplet<double>> trips;
  for (int t = 0; t < grid.num_elements(); ++t) {
    const PatchIndex p = patch(grid, t, ell);
    const Eigen::MatrixXd& m = mats[static_cast<std::size_t>(t)];
    if (m.rows() != p.num_node_slots() || m.cols() != 4)
      throw GridError("assemble_surrogate: local matrix for element " +
                      std::to_string(t) + " has wrong shape");
    const LocalToGlobalMap map = local_to_global(grid, p);
    for (int j = 0; j < 4; ++j) {
      if (map.col[static_cast<std::size_t>(j)] < 0) continue;
      for (int i = 0; i < p.num_node_slots(); ++i) {
        const int row = map.row[static_cast<std::size_t>(i)];
        if (row < 0) continue;
        trips.emplace_back(row, map.col[static_cast<std::size_t>(j)], m(i, j));
      }
    }
  }
  SpMat S(n_int, n_int);
  S.setFromTriplets(trips.begin(), trips.end());
  S.makeCompressed();
  return S;
}

SpMat assemble_global(const CoarseGrid& grid,
                      const std::vector<LocalSurrogate>& locals) {
  if (locals.size() != static_cast<std::size_t>(grid.num_elements()))
    throw GridError("assemble_global: missing local surrogates");
  std::vector<Eigen::MatrixXd> mats;
  mats.reserve(locals.size());
  for (int t = 0; t < grid.num_elements(); ++t) {
    if (locals[static_cast<std::size_t>(t)].patch.center != t)
      throw GridError("assemble_global: locals must be ordered by element index");
    mats.push_back(locals[static_cast<std::size_t>(t)].matrix);
  }
  return assemble_surrogate(grid, locals.front().patch.ell, mats);
}

Vec coarse_load(const CoarseGrid& grid, double f) {
  FineGrid self;
  self.parent = grid;
  self.refinement = 1;
  return fem::assemble_load(self, f);
}

Vec solve_pglod(const SpMat& S, const Vec& load, double tol) {
  if (S.rows() != S.cols() || load.size() != S.rows())
    throw GridError("solve_pglod: dimension mismatch");
  if (load.isZero(0.0)) return Vec::Zero(load.size());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(S);
  if (lu.info() != Eigen::Success)
    throw SolveError("PG-LOD system matrix is singular");
  const Vec x = lu.solve(load);
  const double rel_res = (S * x - load).norm() / load.norm();
  if (!(rel_res <= tol))
    throw SolveError("PG-LOD solve missed the residual contract; achieved " +
                         std::to_string(rel_res),
                     rel_res);
  return x;
}

PgLodSystem pg_lod_system(const CoarseGrid& grid, const FineGrid& fine,
                          const Interpolator& interp, const FieldRealization& a,
                          int ell, int workers) {
  PgLodSystem sys;
  sys.locals.resize(static_cast<std::size_t>(grid.num_elements()));
  parallel_for(grid.num_elements(), workers, [&](int t) {
    const PatchIndex p = patch(grid, t, ell);
    const CorrectorSet cs = solve_correctors(p, interp, a, fine);
    sys.locals[static_cast<std::size_t>(t)] = local_surrogate(p, cs, a, fine);
  });
  sys.S = assemble_global(grid, sys.locals);
  return sys;
}

std::vector<double> corrector_decay(const CoarseGrid& grid, const FineGrid& fine,
                                    const Interpolator& interp,
                                    const FieldRealization& a, int T) {
  auto [tx, ty] = grid.element_coords(T);
  const int K = std::max({tx, ty, grid.n - 1 - tx, grid.n - 1 - ty});
  const SpMat K_glob = fem::assemble_stiffness(fine, a);

  auto globalize = [&](const CorrectorSet& cs, int j) {
    Vec full = Vec::Zero(fine.num_interior_nodes());
    const PatchFineMesh& m = cs.mesh;
    for (int ly = 0; ly < m.nny; ++ly)
      for (int lx = 0; lx < m.nnx; ++lx) {
        const std::int64_t gi = fine.interior_node_index(m.x0 + lx, m.y0 + ly);
        if (gi >= 0) full[gi] = cs.q[static_cast<std::size_t>(j)][m.node(lx, ly)];
      }
    return full;
  };

  const PatchIndex p_full = patch(grid, T, std::max(K, 1));
  const CorrectorSet full = solve_correctors(p_full, interp, a, fine);
  std::array<Vec, 4> q_full;
  for (int j = 0; j < 4; ++j) q_full[static_cast<std::size_t>(j)] = globalize(full, j);

  std::vector<double> table;
  for (int k = 1; k <= std::max(K, 1); ++k) {
    const PatchIndex pk = patch(grid, T, k);
    const CorrectorSet cs = solve_correctors(pk, interp, a, fine);
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
      const Vec diff = globalize(cs, j) - q_full[static_cast<std::size_t>(j)];
      acc += diff.dot(K_glob * diff);
    }
    table.push_back(std::sqrt(std::max(acc, 0.0)));
  }
  return table;
}

}  // namespace lod
}  // namespace stochlod
