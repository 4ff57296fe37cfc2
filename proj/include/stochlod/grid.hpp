#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "stochlod/errors.hpp"

namespace stochlod {

/// Uniform Cartesian mesh of the unit box (0,1)^d at mesh size H = 2^-p.
///
/// All index sets are row-major lexicographic with x running fastest. Cells
/// are indexed by their lower-left corner in cell coordinates; interior nodes
/// are the ((1/H)-1)^d nodes carrying degrees of freedom.
struct CoarseGrid {
  int d = 2;
  double H = 0.5;
  int n = 2;  // cells per axis, 1/H

  int num_elements() const { return n * n; }
  int num_interior_nodes() const { return (n - 1) * (n - 1); }

  int element_index(int ex, int ey) const { return ey * n + ex; }
  std::pair<int, int> element_coords(int t) const { return {t % n, t / n}; }

  bool node_is_interior(int nx, int ny) const {
    return nx >= 1 && nx <= n - 1 && ny >= 1 && ny <= n - 1;
  }
  // Global interior-node index, or -1 for boundary/exterior node coordinates.
  int interior_node_index(int nx, int ny) const {
    if (!node_is_interior(nx, ny)) return -1;
    return (ny - 1) * (n - 1) + (nx - 1);
  }
};

CoarseGrid build_coarse_grid(double H, int d);

/// Uniform refinement of a CoarseGrid; every coarse cell holds
/// refinement^d fine cells. Also used for the coefficient mesh.
struct FineGrid {
  CoarseGrid parent;
  int refinement = 1;  // H/h per axis, power of two

  double h() const { return parent.H / refinement; }
  int cells_per_axis() const { return parent.n * refinement; }
  int nodes_per_axis() const { return cells_per_axis() + 1; }
  std::int64_t num_cells() const {
    const std::int64_t c = cells_per_axis();
    return c * c;
  }
  std::int64_t num_nodes() const {
    const std::int64_t m = nodes_per_axis();
    return m * m;
  }

  std::int64_t cell_index(int cx, int cy) const {
    return static_cast<std::int64_t>(cy) * cells_per_axis() + cx;
  }
  std::int64_t node_index(int vx, int vy) const {
    return static_cast<std::int64_t>(vy) * nodes_per_axis() + vx;
  }
  bool node_is_interior(int vx, int vy) const {
    const int c = cells_per_axis();
    return vx >= 1 && vx <= c - 1 && vy >= 1 && vy <= c - 1;
  }
  std::int64_t interior_node_index(int vx, int vy) const {
    if (!node_is_interior(vx, vy)) return -1;
    const std::int64_t m = cells_per_axis() - 1;
    return static_cast<std::int64_t>(vy - 1) * m + (vx - 1);
  }
  std::int64_t num_interior_nodes() const {
    const std::int64_t m = cells_per_axis() - 1;
    return m * m;
  }
};

FineGrid refine(const CoarseGrid& coarse, int refinement);

/// Padded element neighborhood N^ell(T). The bounding box always holds
/// (2ell+1)^d cell slots and (2ell+2)^d node slots; slots outside the domain
/// are virtual and flagged by the masks. The physical patch N^ell(T) ∩ D is
/// the clipped coarse-cell range [px0,px1] x [py0,py1].
struct PatchIndex {
  int center = 0;
  int ell = 1;
  int n = 2;      // parent coarse cells per axis
  double H = 0.5; // parent coarse mesh size
  int cx0 = 0, cy0 = 0;  // bounding-box origin in coarse-cell coordinates

  int cells_per_axis() const { return 2 * ell + 1; }
  int nodes_per_axis() const { return 2 * ell + 2; }
  int num_cell_slots() const { return cells_per_axis() * cells_per_axis(); }
  int num_node_slots() const { return nodes_per_axis() * nodes_per_axis(); }

  // Clipped physical patch, inclusive coarse-cell range.
  int px0 = 0, py0 = 0, px1 = 0, py1 = 0;

  std::vector<bool> cell_inside;   // per cell slot: cell lies in D
  std::vector<bool> node_closure;  // per node slot: node lies in closure of D
  std::vector<bool> node_interior; // per node slot: node carries a global DOF

  std::pair<int, int> cell_slot_coords(int s) const {
    return {s % cells_per_axis(), s / cells_per_axis()};
  }
  std::pair<int, int> node_slot_coords(int s) const {
    return {s % nodes_per_axis(), s / nodes_per_axis()};
  }
  // Coarse coordinates of a node slot.
  std::pair<int, int> node_slot_global(int s) const {
    auto [ix, iy] = node_slot_coords(s);
    return {cx0 + ix, cy0 + iy};
  }
};

PatchIndex patch(const CoarseGrid& grid, int T, int ell);

/// Local-to-global map Phi_T: rows are the patch node slots, columns the 2^d
/// corner basis functions of the center element (SW, SE, NW, NE order).
/// Entries are global interior-node indices; -1 means discard.
struct LocalToGlobalMap {
  std::vector<int> row;
  std::array<int, 4> col{-1, -1, -1, -1};
};

LocalToGlobalMap local_to_global(const CoarseGrid& grid, const PatchIndex& p);

/// Patch restriction R_T of a cellwise field given on a refinement of the
/// patch's coarse grid. Values are returned row-major over the patch's fine
/// cell lattice ((2ell+1)*r cells per axis); slots outside D are zero-filled.
std::vector<double> restrict_cells(std::span<const double> values,
                                   const FineGrid& grid, const PatchIndex& p);

}  // namespace stochlod
