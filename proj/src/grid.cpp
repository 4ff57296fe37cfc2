#include "stochlod/grid.hpp"

#include <cmath>
#include <string>

namespace stochlod {

CoarseGrid build_coarse_grid(double H, int d) {
  if (d != 2) throw GridError("unsupported dimension: d = " + std::to_string(d));
  if (!(H > 0.0) || H >= 1.0) throw GridError("non-dyadic H: " + std::to_string(H));
  const double inv = 1.0 / H;
  const double rounded = std::round(inv);
  const int n = static_cast<int>(rounded);
  // 1/H must be an integer power of two >= 2.
  if (std::abs(inv - rounded) > 1e-12 || n < 2 || (n & (n - 1)) != 0)
    throw GridError("non-dyadic H: " + std::to_string(H));
  CoarseGrid g;
  g.d = d;
  g.H = H;
  g.n = n;
  return g;
}

FineGrid refine(const CoarseGrid& coarse, int refinement) {
  if (refinement < 1 || (refinement & (refinement - 1)) != 0)
    throw GridError("refinement must be a power of two, got " +
                    std::to_string(refinement));
  FineGrid f;
  f.parent = coarse;
  f.refinement = refinement;
  return f;
}

PatchIndex patch(const CoarseGrid& grid, int T, int ell) {
  if (T < 0 || T >= grid.num_elements())
    throw GridError("element index out of range: " + std::to_string(T));
  if (ell < 1) throw GridError("patch order ell must be >= 1");

  PatchIndex p;
  p.center = T;
  p.ell = ell;
  p.n = grid.n;
  p.H = grid.H;
  auto [tx, ty] = grid.element_coords(T);
  p.cx0 = tx - ell;
  p.cy0 = ty - ell;
  p.px0 = std::max(p.cx0, 0);
  p.py0 = std::max(p.cy0, 0);
  p.px1 = std::min(tx + ell, grid.n - 1);
  p.py1 = std::min(ty + ell, grid.n - 1);

  const int cs = p.cells_per_axis();
  const int ns = p.nodes_per_axis();
  p.cell_inside.assign(static_cast<std::size_t>(cs) * cs, false);
  p.node_closure.assign(static_cast<std::size_t>(ns) * ns, false);
  p.node_interior.assign(static_cast<std::size_t>(ns) * ns, false);
  for (int iy = 0; iy < cs; ++iy)
    for (int ix = 0; ix < cs; ++ix) {
      const int cx = p.cx0 + ix;
      const int cy = p.cy0 + iy;
      p.cell_inside[static_cast<std::size_t>(iy) * cs + ix] =
          cx >= 0 && cx < grid.n && cy >= 0 && cy < grid.n;
    }
  for (int iy = 0; iy < ns; ++iy)
    for (int ix = 0; ix < ns; ++ix) {
      const int nx = p.cx0 + ix;
      const int ny = p.cy0 + iy;
      const std::size_t s = static_cast<std::size_t>(iy) * ns + ix;
      p.node_closure[s] = nx >= 0 && nx <= grid.n && ny >= 0 && ny <= grid.n;
      p.node_interior[s] = grid.node_is_interior(nx, ny);
    }
  return p;
}

LocalToGlobalMap local_to_global(const CoarseGrid& grid, const PatchIndex& p) {
  if (p.n != grid.n)
    throw GridError("patch was built from a different coarse grid");
  LocalToGlobalMap map;
  map.row.resize(static_cast<std::size_t>(p.num_node_slots()));
  for (int s = 0; s < p.num_node_slots(); ++s) {
    auto [nx, ny] = p.node_slot_global(s);
    map.row[static_cast<std::size_t>(s)] = grid.interior_node_index(nx, ny);
  }
  auto [tx, ty] = grid.element_coords(p.center);
  map.col[0] = grid.interior_node_index(tx, ty);
  map.col[1] = grid.interior_node_index(tx + 1, ty);
  map.col[2] = grid.interior_node_index(tx, ty + 1);
  map.col[3] = grid.interior_node_index(tx + 1, ty + 1);
  return map;
}

std::vector<double> restrict_cells(std::span<const double> values,
                                   const FineGrid& grid, const PatchIndex& p) {
  if (grid.parent.n != p.n)
    throw GridError("refinement mismatch: field grid does not refine the patch's coarse grid");
  if (values.size() != static_cast<std::size_t>(grid.num_cells()))
    throw GridError("field value count does not match its grid");

  const int r = grid.refinement;
  const int w = p.cells_per_axis() * r;  // patch fine cells per axis
  const int total = grid.cells_per_axis();
  std::vector<double> out(static_cast<std::size_t>(w) * w, 0.0);
  const int fx0 = p.cx0 * r;
  const int fy0 = p.cy0 * r;
  for (int fy = 0; fy < w; ++fy) {
    const int gy = fy0 + fy;
    if (gy < 0 || gy >= total) continue;
    for (int fx = 0; fx < w; ++fx) {
      const int gx = fx0 + fx;
      if (gx < 0 || gx >= total) continue;
      out[static_cast<std::size_t>(fy) * w + fx] =
          values[static_cast<std::size_t>(grid.cell_index(gx, gy))];
    }
  }
  return out;
}

}  // namespace stochlod
