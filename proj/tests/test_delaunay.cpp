#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "octomesh/delaunay.hpp"
#include "oracle.hpp"

using namespace octomesh;

namespace {

using Quad = std::array<VertexId, 4>;

std::set<Quad> finite_cells(const Tetrahedralization& t) {
  std::set<Quad> out;
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c) {
    if (t.is_infinite(c)) continue;
    auto v = t.cell(c).v;
    std::sort(v.begin(), v.end());
    out.insert(v);
  }
  return out;
}

std::vector<Vec3> random_points(std::mt19937_64& g, int n, bool lattice) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> k(0, 3);
  std::vector<Vec3> p(n);
  for (auto& x : p) x = lattice ? Vec3{double(k(g)), double(k(g)), double(k(g))} : Vec3{u(g), u(g), u(g)};
  return p;
}

}  // namespace

TEST(Delaunay, FourPoints) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto t = tetrahedralize(p);
  EXPECT_EQ(t.finite_cell_count(), 1u);
  EXPECT_EQ(t.cell_count(), 5u);
  t.validate();
}

TEST(Delaunay, DegenerateInputs) {
  std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(tetrahedralize(three), DegenerateInput);
  std::vector<Vec3> flat{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}};
  EXPECT_THROW(tetrahedralize(flat), DegenerateInput);
  std::vector<Vec3> dup{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  EXPECT_THROW(tetrahedralize(dup), DegenerateInput);
}

TEST(Delaunay, CubeCornersEmptySphere) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  const auto t = tetrahedralize(p);
  t.validate();
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c) {
    if (t.is_infinite(c)) continue;
    const auto& v = t.cell(c).v;
    for (int e = 0; e < 5; ++e)
      EXPECT_LE(insphere(p[v[0]], p[v[1]], p[v[2]], p[v[3]], p[e]), 0);
  }
  std::vector<std::uint64_t> key{0, 1, 2, 3, 4};
  EXPECT_EQ(finite_cells(t), oracle::brute_delaunay(p, key));
}

TEST(Delaunay, RandomMatchesBruteForce) {
  std::mt19937_64 g(42);
  for (int trial = 0; trial < 6; ++trial) {
    const auto p = random_points(g, 60, false);
    const auto t = tetrahedralize(p);
    t.validate();
    std::vector<std::uint64_t> key(p.size());
    std::iota(key.begin(), key.end(), 0);
    EXPECT_EQ(finite_cells(t), oracle::brute_delaunay(p, key)) << trial;
  }
}

TEST(Delaunay, DegenerateLatticeMatchesBruteForceAndIsOrderFree) {
  std::mt19937_64 g(43);
  for (int trial = 0; trial < 4; ++trial) {
    // A 4x4x4 lattice sample: many cospherical and coplanar configurations.
    auto p = random_points(g, 40, true);
    std::sort(p.begin(), p.end(), [](Vec3 a, Vec3 b) { return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z); });
    p.erase(std::unique(p.begin(), p.end()), p.end());
    std::vector<std::uint64_t> key(p.size());
    for (std::size_t i = 0; i < key.size(); ++i) key[i] = (i * 7919) % 1000003;
    const auto t = tetrahedralize(p, key);
    t.validate();
    EXPECT_EQ(finite_cells(t), oracle::brute_delaunay(p, key)) << trial;

    // Shuffle the input together with its keys: same complex under the global keys.
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    std::vector<Vec3> p2(p.size());
    std::vector<std::uint64_t> k2(p.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      p2[i] = p[perm[i]];
      k2[i] = key[perm[i]];
    }
    const auto t2 = tetrahedralize(p2, k2);
    std::set<std::array<std::uint64_t, 4>> a, b;
    for (auto q : finite_cells(t)) {
      std::array<std::uint64_t, 4> x{key[q[0]], key[q[1]], key[q[2]], key[q[3]]};
      std::sort(x.begin(), x.end());
      a.insert(x);
    }
    for (auto q : finite_cells(t2)) {
      std::array<std::uint64_t, 4> x{k2[q[0]], k2[q[1]], k2[q[2]], k2[q[3]]};
      std::sort(x.begin(), x.end());
      b.insert(x);
    }
    EXPECT_EQ(a, b);
  }
}

TEST(Delaunay, DuplicatesMapToRepresentative) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0.3, 0.3, 0.3}};
  const auto t = tetrahedralize(p);
  t.validate();
  EXPECT_EQ(t.representative(4), 1);
  EXPECT_FALSE(t.star(4).empty());
}

TEST(Delaunay, LargerSampledEmptySphere) {
  std::mt19937_64 g(44);
  const auto p = random_points(g, 10000, false);
  const auto t = tetrahedralize(p);
  t.validate();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(p.size()) - 1);
  // Euler-type check: finite cells tile the hull, so each finite facet shows up twice.
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); c += 7) {
    if (t.is_infinite(c)) continue;
    const auto& v = t.cell(c).v;
    for (int s = 0; s < 200; ++s) {
      const int e = pick(g);
      ASSERT_LE(insphere(p[v[0]], p[v[1]], p[v[2]], p[v[3]], p[e]), 0);
    }
  }
}

TEST(IsFinal, Examples) {
  std::vector<Vec3> p{{0, 0, 0}, {0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}};
  const auto t = tetrahedralize(p);
  CellId f = 0;
  while (t.is_infinite(f)) ++f;
  EXPECT_TRUE(t.is_final(f, Box{{-10, -10, -10}, {10, 10, 10}}));
  EXPECT_FALSE(t.is_final(f, Box{{0, -10, -10}, {10, 10, 10}}));
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    if (t.is_infinite(c)) EXPECT_FALSE(t.is_final(c, Box{{-10, -10, -10}, {10, 10, 10}}));
}

TEST(IsFinal, MatchesRationalOracle) {
  std::mt19937_64 g(45);
  std::uniform_real_distribution<double> u(-1, 1), w(0.2, 2.0);
  int agree = 0, finals = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<Vec3> p{{u(g), u(g), u(g)}, {u(g), u(g), u(g)}, {u(g), u(g), u(g)}, {u(g), u(g), u(g)}};
    if (orient3d(p[0], p[1], p[2], p[3]) == 0) continue;
    const auto t = tetrahedralize(p);
    CellId f = 0;
    while (t.is_infinite(f)) ++f;
    const Vec3 c{u(g), u(g), u(g)};
    const double h = w(g) * 2;
    const Box box{c - Vec3{h, h, h}, c + Vec3{h, h, h}};
    // Exact center via rationals, radius compared squared against the box slack.
    const auto& v = t.cell(f).v;
    mpq_class m[3][3], rhs[3], ctr[3];
    auto sq = [](Vec3 a) -> mpq_class { return oracle::q(a.x) * oracle::q(a.x) + oracle::q(a.y) * oracle::q(a.y) + oracle::q(a.z) * oracle::q(a.z); };
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) m[r][k] = 2 * (oracle::q(p[v[r + 1]][k]) - oracle::q(p[v[0]][k]));
      rhs[r] = sq(p[v[r + 1]]) - sq(p[v[0]]);
    }
    const mpq_class det = oracle::det3(m);
    for (int k = 0; k < 3; ++k) {
      mpq_class mk[3][3];
      for (int r = 0; r < 3; ++r)
        for (int j = 0; j < 3; ++j) mk[r][j] = j == k ? rhs[r] : m[r][j];
      ctr[k] = oracle::det3(mk) / det;
    }
    mpq_class r2 = 0;
    for (int k = 0; k < 3; ++k) r2 += (oracle::q(p[v[0]][k]) - ctr[k]) * (oracle::q(p[v[0]][k]) - ctr[k]);
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      const mpq_class lo = ctr[k] - oracle::q(box.lo[k]), hi = oracle::q(box.hi[k]) - ctr[k];
      if (lo < 0 || hi < 0 || lo * lo < r2 || hi * hi < r2) inside = false;
    }
    agree += t.is_final(f, box) == inside;
    finals += inside;
  }
  EXPECT_EQ(agree, 100);
  EXPECT_GT(finals, 0);
}

namespace {

// Cells whose interiors meet the segment (p, q), by brute force over all finite cells.
std::set<CellId> brute_crossed(const Tetrahedralization& t, Vec3 p, Vec3 q) {
  std::set<CellId> out;
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c) {
    if (t.is_infinite(c)) continue;
    for (int k = 0; k < 4; ++k) {
      const auto f = t.facet(c, k);
      if (segment_triangle_intersect(p, q, t.point(f[0]), t.point(f[1]), t.point(f[2]))) out.insert(c);
    }
  }
  return out;
}

}  // namespace

TEST(WalkSegment, InsideSingleCell) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto t = tetrahedralize(p);
  const auto w = walk_segment(t, {0.1, 0.1, 0.1}, 0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_FALSE(t.is_infinite(w[0].cell));
  EXPECT_EQ(w[0].entry_facet, -1);
  EXPECT_THROW(walk_segment(t, p[0], 0), Error);
  EXPECT_THROW(walk_segment(t, {1, 1, 1}, 9), Error);
}

TEST(WalkSegment, TwoStackedTetrahedra) {
  // Bipyramid: base triangle plus apexes above and below.
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.3, 0.3, 1}, {0.3, 0.3, -1}};
  const auto t = tetrahedralize(p);
  ASSERT_EQ(t.finite_cell_count(), 2u);
  // From far above, through the upper tetrahedron and the base into the lower apex.
  const Vec3 cam{0.3, 0.32, 5};
  const auto w = walk_segment(t, cam, 4);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_TRUE(t.is_infinite(w[0].cell));
  EXPECT_FALSE(t.is_infinite(w[1].cell));
  EXPECT_FALSE(t.is_infinite(w[2].cell));
  EXPECT_EQ(t.vertex_index(w[2].cell, 4) >= 0, true);
  // Crossed facets: hull facet then the interior base.
  auto base = t.facet(w[2].cell, w[2].entry_facet);
  std::sort(base.begin(), base.end());
  EXPECT_EQ(base, (std::array<VertexId, 3>{0, 1, 2}));
  EXPECT_EQ(t.cell(w[1].cell).n[w[1].entry_facet], w[0].cell);
  EXPECT_EQ(cell_behind(t, cam, 4), kNoCell);
  EXPECT_EQ(cell_behind(t, Vec3{0.3, 0.3, -5}, 3), kNoCell);
}

TEST(WalkSegment, MatchesBruteForceCrossings) {
  std::mt19937_64 g(46);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto p = random_points(g, 80, false);
  const auto t = tetrahedralize(p);
  ASSERT_LE(t.cell_count(), 600u);
  for (int trial = 0; trial < 300; ++trial) {
    const VertexId q = trial % 80;
    const Vec3 cam = trial % 3 == 0 ? Vec3{u(g), u(g), u(g)} * 0.8 : Vec3{u(g) * 4, u(g) * 4, u(g) * 4};
    const auto w = walk_segment(t, cam, q);
    ASSERT_FALSE(w.empty());
    EXPECT_GE(t.vertex_index(w.back().cell, q), 0);
    for (std::size_t i = 1; i < w.size(); ++i) {
      ASSERT_GE(w[i].entry_facet, 0);
      EXPECT_EQ(t.cell(w[i].cell).n[w[i].entry_facet], w[i - 1].cell);
    }
    std::set<CellId> walked;
    for (const auto& s : w)
      if (!t.is_infinite(s.cell)) walked.insert(s.cell);
    auto brute = brute_crossed(t, cam, p[q]);
    // The cell containing the camera meets the segment without a facet crossing.
    if (!t.is_infinite(w.front().cell)) brute.insert(w.front().cell);
    // The last cell is incident to q and entered through a crossed facet, unless the walk has length 1.
    EXPECT_EQ(walked, brute) << trial;
    const CellId behind = cell_behind(t, cam, q);
    if (behind != kNoCell) {
      // A point just past q along the ray lies in the behind cell.
      const Vec3 past = p[q] + (p[q] - cam) * 1e-7;
      const auto& v = t.cell(behind).v;
      EXPECT_GE(orient3d(p[v[0]], p[v[1]], p[v[2]], p[v[3]]), 1);
      for (int k = 0; k < 4; ++k) {
        const auto f = t.facet(behind, k);
        EXPECT_LE(orient3d(p[f[0]], p[f[1]], p[f[2]], past), 0);
      }
    }
  }
}
