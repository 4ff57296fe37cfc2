#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "stochlod/grid.hpp"
#include "stochlod/rng.hpp"

using namespace stochlod;

TEST_CASE("coarse grid counts") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);  // H = 2^-4
  CHECK(g.num_elements() == 256);
  CHECK(g.num_interior_nodes() == 225);

  const CoarseGrid smallest = build_coarse_grid(0.5, 2);
  CHECK(smallest.num_elements() == 4);
  CHECK(smallest.num_interior_nodes() == 1);
}

TEST_CASE("coarse grid rejects bad parameters") {
  CHECK_THROWS_WITH_AS(build_coarse_grid(0.25, 3),
                       doctest::Contains("unsupported dimension"), GridError);
  CHECK_THROWS_AS(build_coarse_grid(0.3, 2), GridError);
  CHECK_THROWS_AS(build_coarse_grid(1.0 / 3.0, 2), GridError);
  CHECK_THROWS_AS(build_coarse_grid(1.0, 2), GridError);
  CHECK_THROWS_AS(build_coarse_grid(-0.25, 2), GridError);
  CHECK_THROWS_AS(refine(build_coarse_grid(0.25, 2), 3), GridError);
}

TEST_CASE("patch slot counts are shape-invariant") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);
  for (int ell : {1, 2, 3}) {
    CounterRng rng(17 + static_cast<std::uint64_t>(ell));
    for (int trial = 0; trial < 20; ++trial) {
      const int t = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(g.num_elements()));
      const PatchIndex p = patch(g, t, ell);
      CHECK(p.num_node_slots() == (2 * ell + 2) * (2 * ell + 2));
      CHECK(p.num_cell_slots() == (2 * ell + 1) * (2 * ell + 1));
    }
  }
  const PatchIndex p = patch(g, 100, 2);
  CHECK(p.num_node_slots() == 36);
  CHECK(p.num_cell_slots() == 25);
}

TEST_CASE("corner patch masks against direct enumeration") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);
  const PatchIndex p = patch(g, g.element_index(0, 0), 2);
  int cells_inside = 0;
  for (int s = 0; s < p.num_cell_slots(); ++s) {
    auto [ix, iy] = p.cell_slot_coords(s);
    const int cx = p.cx0 + ix, cy = p.cy0 + iy;
    const bool expect = cx >= 0 && cx < 16 && cy >= 0 && cy < 16;
    CHECK(p.cell_inside[static_cast<std::size_t>(s)] == expect);
    if (p.cell_inside[static_cast<std::size_t>(s)]) ++cells_inside;
  }
  // N^2 of a corner element is the 3x3 block of cells; its closure holds the
  // 4x4 block of nodes.
  CHECK(cells_inside == 9);
  int nodes_in_closure = 0, nodes_interior = 0;
  for (int s = 0; s < p.num_node_slots(); ++s) {
    auto [nx, ny] = p.node_slot_global(s);
    const bool closure = nx >= 0 && nx <= 16 && ny >= 0 && ny <= 16;
    CHECK(p.node_closure[static_cast<std::size_t>(s)] == closure);
    if (p.node_closure[static_cast<std::size_t>(s)]) ++nodes_in_closure;
    if (p.node_interior[static_cast<std::size_t>(s)]) ++nodes_interior;
  }
  CHECK(nodes_in_closure == 16);
  CHECK(nodes_interior == 9);
}

TEST_CASE("interior patch is fully inside") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);
  const PatchIndex p = patch(g, g.element_index(7, 8), 2);
  for (bool b : p.cell_inside) CHECK(b);
  for (bool b : p.node_closure) CHECK(b);
}

TEST_CASE("local_to_global rows for interior and corner elements") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);
  const PatchIndex inner = patch(g, g.element_index(7, 8), 2);
  const LocalToGlobalMap map_in = local_to_global(g, inner);
  for (int r : map_in.row) CHECK(r >= 0);
  for (int c : map_in.col) CHECK(c >= 0);

  const PatchIndex corner = patch(g, g.element_index(0, 0), 2);
  const LocalToGlobalMap map_c = local_to_global(g, corner);
  int discarded = 0;
  for (int s = 0; s < corner.num_node_slots(); ++s) {
    const bool interior = corner.node_interior[static_cast<std::size_t>(s)];
    CHECK((map_c.row[static_cast<std::size_t>(s)] >= 0) == interior);
    if (map_c.row[static_cast<std::size_t>(s)] < 0) ++discarded;
  }
  CHECK(discarded > 0);
  CHECK(map_c.col[0] < 0);  // corner node of T lies on the boundary
}

TEST_CASE("retained rows of one patch never collide") {
  const CoarseGrid g = build_coarse_grid(0.125, 2);
  for (int t = 0; t < g.num_elements(); ++t) {
    const LocalToGlobalMap map = local_to_global(g, patch(g, t, 2));
    std::map<int, int> seen;
    for (int r : map.row)
      if (r >= 0) CHECK(++seen[r] == 1);
  }
}

TEST_CASE("all-ones inflation reproduces the patch cover count") {
  const CoarseGrid g = build_coarse_grid(0.25, 2);  // 4x4
  const int ell = 1;
  std::map<std::pair<int, int>, double> acc;
  for (int t = 0; t < g.num_elements(); ++t) {
    const PatchIndex p = patch(g, t, ell);
    const LocalToGlobalMap map = local_to_global(g, p);
    for (int j = 0; j < 4; ++j) {
      if (map.col[static_cast<std::size_t>(j)] < 0) continue;
      for (int s = 0; s < p.num_node_slots(); ++s)
        if (map.row[static_cast<std::size_t>(s)] >= 0)
          acc[{map.row[static_cast<std::size_t>(s)], map.col[static_cast<std::size_t>(j)]}] += 1.0;
    }
  }
  // Brute-force count over (patch node, center corner) incidences.
  std::map<std::pair<int, int>, int> expect;
  for (int ty = 0; ty < 4; ++ty)
    for (int tx = 0; tx < 4; ++tx)
      for (int ny = ty - ell; ny <= ty + ell + 1; ++ny)
        for (int nx = tx - ell; nx <= tx + ell + 1; ++nx) {
          const int row = g.interior_node_index(nx, ny);
          if (row < 0) continue;
          const int cxs[4] = {tx, tx + 1, tx, tx + 1};
          const int cys[4] = {ty, ty, ty + 1, ty + 1};
          for (int j = 0; j < 4; ++j) {
            const int col = g.interior_node_index(cxs[j], cys[j]);
            if (col >= 0) ++expect[{row, col}];
          }
        }
  CHECK(acc.size() == expect.size());
  for (const auto& [key, count] : expect)
    CHECK(acc.at(key) == doctest::Approx(count));
}

TEST_CASE("restrict_cells length and padding") {
  const CoarseGrid g = build_coarse_grid(0.0625, 2);            // H = 2^-4
  const FineGrid eps = refine(g, 8);                            // eps = 2^-7
  std::vector<double> ones(static_cast<std::size_t>(eps.num_cells()), 1.0);

  const PatchIndex inner = patch(g, g.element_index(8, 8), 2);
  const std::vector<double> v = restrict_cells(ones, eps, inner);
  CHECK(v.size() == 1600);
  for (double x : v) CHECK(x == 1.0);

  const PatchIndex corner = patch(g, g.element_index(0, 0), 2);
  const std::vector<double> w = restrict_cells(ones, eps, corner);
  CHECK(w.size() == 1600);
  const int width = 5 * 8;
  for (int fy = 0; fy < width; ++fy)
    for (int fx = 0; fx < width; ++fx) {
      const int slot = (fy / 8) * 5 + (fx / 8);
      const double expect = corner.cell_inside[static_cast<std::size_t>(slot)] ? 1.0 : 0.0;
      CHECK(w[static_cast<std::size_t>(fy) * width + fx] == expect);
    }
}

TEST_CASE("restrict_cells is linear and idempotent") {
  const CoarseGrid g = build_coarse_grid(0.125, 2);
  const FineGrid eps = refine(g, 4);
  const PatchIndex p = patch(g, g.element_index(1, 2), 2);
  CounterRng rng(99);
  std::vector<double> f1(static_cast<std::size_t>(eps.num_cells()));
  std::vector<double> f2(f1.size());
  for (auto& x : f1) x = rng.gaussian();
  for (auto& x : f2) x = rng.gaussian();

  std::vector<double> combo(f1.size());
  for (std::size_t i = 0; i < f1.size(); ++i) combo[i] = 2.5 * f1[i] + f2[i];
  const auto r1 = restrict_cells(f1, eps, p);
  const auto r2 = restrict_cells(f2, eps, p);
  const auto rc = restrict_cells(combo, eps, p);
  for (std::size_t i = 0; i < rc.size(); ++i)
    CHECK(rc[i] == doctest::Approx(2.5 * r1[i] + r2[i]).epsilon(1e-14));

  // Embed the restriction back into a zero field and restrict again.
  std::vector<double> embedded(f1.size(), 0.0);
  const int width = p.cells_per_axis() * eps.refinement;
  const int total = eps.cells_per_axis();
  for (int fy = 0; fy < width; ++fy)
    for (int fx = 0; fx < width; ++fx) {
      const int gx = p.cx0 * eps.refinement + fx;
      const int gy = p.cy0 * eps.refinement + fy;
      if (gx < 0 || gx >= total || gy < 0 || gy >= total) continue;
      embedded[static_cast<std::size_t>(eps.cell_index(gx, gy))] =
          r1[static_cast<std::size_t>(fy) * width + fx];
    }
  const auto again = restrict_cells(embedded, eps, p);
  CHECK(again == r1);
}

TEST_CASE("restrict_cells rejects a grid mismatch") {
  const CoarseGrid g = build_coarse_grid(0.125, 2);
  const CoarseGrid other = build_coarse_grid(0.25, 2);
  const FineGrid eps_other = refine(other, 4);
  std::vector<double> vals(static_cast<std::size_t>(eps_other.num_cells()), 1.0);
  const PatchIndex p = patch(g, 0, 1);
  CHECK_THROWS_AS(restrict_cells(vals, eps_other, p), GridError);
}
