#include <gtest/gtest.h>

#include <random>
#include <set>

#include "octomesh/harness.hpp"
#include "octomesh/scenes.hpp"

using namespace octomesh;

namespace {

// Icosphere by midpoint subdivision, consistently oriented, closed.
IndexedMesh icosphere(int levels) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<std::uint32_t, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                                 {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                                 {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                                 {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < levels; ++l) {
    std::map<std::uint64_t, std::uint32_t> mid;
    auto m = [&](std::uint32_t a, std::uint32_t b) {
      const auto k = edge_key(a, b);
      auto it = mid.find(k);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]) * 0.5);
      return mid[k] = static_cast<std::uint32_t>(v.size() - 1);
    };
    std::vector<std::array<std::uint32_t, 3>> g;
    for (auto [a, b, c] : f) {
      const auto ab = m(a, b), bc = m(b, c), ca = m(c, a);
      g.push_back({a, ab, ca});
      g.push_back({b, bc, ab});
      g.push_back({c, ca, bc});
      g.push_back({ab, bc, ca});
    }
    f = g;
  }
  IndexedMesh out;
  for (auto& p : v) out.vertices.push_back(p * (1.0 / norm(p)));
  for (auto [a, b, c] : f) out.add_triangle(Triangle{{a, b, c}});
  return out;
}

// n x n vertex grid in the z = 0 plane, spacing 1.
IndexedMesh grid(int n, std::set<std::pair<int, int>> skip = {}) {
  IndexedMesh m;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) m.vertices.push_back({double(i), double(j), 0});
  auto id = [n](int i, int j) { return static_cast<std::uint32_t>(j * n + i); };
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      if (!skip.count({2 * (j * (n - 1) + i), 0})) m.add_triangle(Triangle{{id(i, j), id(i + 1, j), id(i + 1, j + 1)}});
      if (!skip.count({2 * (j * (n - 1) + i) + 1, 0}))
        m.add_triangle(Triangle{{id(i, j), id(i + 1, j + 1), id(i, j + 1)}});
    }
  return m;
}

}  // namespace

TEST(CountHoles, ClosedSphereHasNone) {
  const auto s = icosphere(3);
  const auto m = count_holes(s);
  EXPECT_EQ(m.loops, 0u);
  EXPECT_EQ(m.boundary_edges, 0u);
  EXPECT_EQ(m.non_manifold_edges, 0u);
  EXPECT_EQ(m.triangles, 1280u);
  EXPECT_EQ(static_cast<long>(m.vertices) - static_cast<long>(s.edges().size()) + static_cast<long>(m.triangles), 2);
}

TEST(CountHoles, SingleTriangleIsOneLoop) {
  IndexedMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.add_triangle(Triangle{{0, 1, 2}});
  const auto r = count_holes(m);
  EXPECT_EQ(r.loops, 1u);
  EXPECT_EQ(r.boundary_edges, 3u);
  EXPECT_NEAR(r.boundary_length, 2 + std::sqrt(2.0), 1e-15);
}

TEST(CountHoles, GridWithInteriorTriangleRemoved) {
  const int n = 6;
  const int cell = 2 * (2 * (n - 1) + 2);  // cell (2, 2), first triangle
  const auto m = grid(n, {{cell, 0}});
  const auto r = count_holes(m);
  EXPECT_EQ(r.loops, 2u);
  EXPECT_EQ(r.boundary_edges, 4u * (n - 1) + 3u);
  Box fp;
  for (auto& v : m.vertices) fp.extend(v);
  EXPECT_EQ(interior_holes(m.vertices, m.triangles(), fp, 0.5), 1u);
  EXPECT_EQ(count_holes(grid(n)).loops, 1u);
  EXPECT_EQ(interior_holes(grid(n).vertices, grid(n).triangles(), fp, 0.5), 0u);
}

TEST(CountHoles, TouchingHolesAtAVertexAreOneLoop) {
  // two removed triangles sharing only a vertex
  const int n = 7;
  auto tri = [&](int i, int j, int k) { return 2 * (j * (n - 1) + i) + k; };
  const auto m = grid(n, {{tri(2, 2, 0), 0}, {tri(3, 3, 1), 0}});
  EXPECT_EQ(count_holes(m).loops, 2u);  // outer + one merged
}

TEST(CountHoles, NonManifoldEdgesCounted) {
  IndexedMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
  m.add_triangle(Triangle{{0, 1, 2}});
  m.add_triangle(Triangle{{1, 0, 3}});
  m.add_triangle(Triangle{{0, 1, 4}});
  const auto r = count_holes(m);
  EXPECT_EQ(r.non_manifold_edges, 1u);
  EXPECT_EQ(r.boundary_edges, 6u);
}

TEST(Accuracy, ExactSamplingIsZero) {
  const auto s = icosphere(2);
  MeshMetrics m;
  accuracy_completeness(s.vertices, s.triangles(), s.vertices, 1e-9, m);
  EXPECT_EQ(m.mean_accuracy, 0.0);
  EXPECT_EQ(m.median_accuracy, 0.0);
  EXPECT_EQ(m.mean_completeness, 0.0);
  EXPECT_EQ(m.median_completeness, 0.0);
  EXPECT_EQ(m.completeness_ratio, 1.0);
}

TEST(Accuracy, ConstantOffsetPlane) {
  const auto g = grid(11);
  const double d = 0.37;
  std::vector<Vec3> ref;
  for (int j = 0; j <= 20; ++j)
    for (int i = 0; i <= 20; ++i) ref.push_back({i * 0.5, j * 0.5, d});
  MeshMetrics m;
  accuracy_completeness(g.vertices, g.triangles(), ref, 0.3, m);
  EXPECT_NEAR(m.mean_accuracy, d, 1e-12);
  EXPECT_NEAR(m.median_accuracy, d, 1e-12);
  EXPECT_NEAR(m.mean_completeness, d, 1e-12);
  EXPECT_EQ(m.completeness_ratio, 0.0);
}

TEST(Accuracy, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> pos(300);
    for (auto& p : pos) p = {u(rng), u(rng), u(rng)};
    std::vector<Triangle> tris;
    std::set<TriangleKey> seen;
    while (tris.size() < 400) {
      Triangle t{{std::uint32_t(rng() % 300), std::uint32_t(rng() % 300), std::uint32_t(rng() % 300)}};
      if (t.valid() && seen.insert(triangle_key(t)).second) tris.push_back(t);
    }
    std::vector<Vec3> ref(1000);
    for (auto& p : ref) p = {u(rng), u(rng), u(rng)};
    MeshMetrics m;
    accuracy_completeness(pos, tris, ref, 0.1, m);

    std::vector<std::uint8_t> used(pos.size(), 0);
    for (auto& t : tris)
      for (auto v : t.v) used[v] = 1;
    std::vector<double> acc, com;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (!used[i]) continue;
      double b = 1e300;
      for (auto& r : ref) b = std::min(b, distance(pos[i], r));
      acc.push_back(b);
    }
    for (auto& r : ref) {
      double b = 1e300;
      for (auto& t : tris) b = std::min(b, point_triangle_distance(r, pos[t[0]], pos[t[1]], pos[t[2]]));
      com.push_back(b);
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / double(v.size());
    };
    auto med = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const auto n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    EXPECT_NEAR(m.mean_accuracy, mean(acc), 1e-12);
    EXPECT_NEAR(m.median_accuracy, med(acc), 1e-12);
    EXPECT_NEAR(m.mean_completeness, mean(com), 1e-12);
    EXPECT_NEAR(m.median_completeness, med(com), 1e-12);
    const double ratio = double(std::count_if(com.begin(), com.end(), [](double x) { return x <= 0.1; })) / com.size();
    EXPECT_EQ(m.completeness_ratio, ratio);
  }
}

TEST(Accuracy, EmptyReferenceRejected) {
  MeshMetrics m;
  EXPECT_THROW(accuracy_completeness({}, {}, {}, 1.0, m), Error);
}

TEST(Breakdown, CenterDensityRecount) {
  BreakdownParams p;
  p.n_points = 100000;
  p.ratio = 4;
  const auto d = gen_breakdown(p);
  EXPECT_EQ(d.points.size(), p.n_points);
  EXPECT_EQ(d.cameras.size(), 4u);
  std::size_t center = 0, outer = 0;
  for (const auto& v : d.points) {
    const auto& q = v.position;
    const bool in = q.x >= 0.25 && q.x < 0.75 && q.y >= 0.25 && q.y < 0.75;
    (in ? center : outer) += 1;
    ASSERT_EQ(v.cameras.size(), 4u);
  }
  const double outer_density = outer / 0.75;
  const double expected = outer_density / 4 * 0.25;
  EXPECT_NEAR(double(center), expected, 0.05 * expected);
}

TEST(Breakdown, ExtremeRatioStillHasPoints) {
  BreakdownParams p;
  p.n_points = 1000000;
  p.ratio = 4096;
  const auto d = gen_breakdown(p);
  std::size_t center = 0;
  for (const auto& v : d.points) {
    const auto& q = v.position;
    center += q.x > 0.25 && q.x < 0.75 && q.y > 0.25 && q.y < 0.75;
  }
  EXPECT_GE(center, 4u);
}

TEST(Breakdown, RejectsBadRatio) {
  BreakdownParams p;
  p.ratio = 3;
  EXPECT_THROW(gen_breakdown(p), Error);
  p.ratio = 0;
  EXPECT_THROW(gen_breakdown(p), Error);
  p.ratio = 1;
  p.n_points = 10;
  EXPECT_THROW(gen_breakdown(p), Error);
}

TEST(Pipeline, SphereHasNoBoundaryAndIsDeterministic) {
  const auto ds = gen_sphere(3000, 1.0, 0.002, 4);
  PipelineConfig cfg;
  cfg.leaf_size = 150;
  cfg.fuse_input = false;
  std::vector<std::string> stages;
  PipelineHooks hooks;
  hooks.mesh = [&](int, const std::string& name, const IndexedMesh&) { stages.push_back(name); };
  const auto a = run_pipeline(ds, cfg, hooks);
  EXPECT_EQ(stages, (std::vector<std::string>{"consistency", "full-patch", "hole-fill"}));
  EXPECT_GT(a.resources.voxels, 8u);
  EXPECT_EQ(a.metrics.non_manifold_edges, 0u);
  EXPECT_EQ(a.metrics.loops, 0u);
  ASSERT_EQ(a.stage_metrics.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_LE(a.stage_metrics[i].boundary_length, a.stage_metrics[i - 1].boundary_length);

  const auto b = run_pipeline(ds, cfg);
  ASSERT_EQ(a.mesh.size(), b.mesh.size());
  for (std::size_t i = 0; i < a.mesh.size(); ++i) ASSERT_EQ(a.mesh.triangles()[i].v, b.mesh.triangles()[i].v);
  EXPECT_EQ(a.mesh.vertices.size(), b.mesh.vertices.size());
}

TEST(Pipeline, ResumeFromHypothesesMatches) {
  const auto ds = gen_flat_grid(30, 30, 0.1, 0.1, 2);
  PipelineConfig cfg;
  cfg.leaf_size = 200;
  HypothesisSet saved;
  PipelineHooks hooks;
  hooks.hypotheses = [&](const HypothesisSet& hs) { saved = hs; };
  const auto a = run_pipeline(ds, cfg, hooks);
  PipelineHooks resume;
  resume.resume = &saved;
  const auto b = run_pipeline(ds, cfg, resume);
  ASSERT_EQ(a.mesh.size(), b.mesh.size());
  for (std::size_t i = 0; i < a.mesh.size(); ++i) ASSERT_EQ(a.mesh.triangles()[i].v, b.mesh.triangles()[i].v);

  auto other = cfg;
  other.leaf_size = 100;
  EXPECT_THROW(run_pipeline(ds, other, resume), Error);
}

TEST(Pipeline, FarFromOriginMatchesNearOrigin) {
  auto ds = gen_flat_grid(25, 25, 0.125, 0.1, 3);
  PipelineConfig cfg;
  cfg.leaf_size = 150;
  cfg.fuse_input = false;
  const auto a = run_pipeline(ds, cfg);
  const Vec3 shift{4194304.0, -2097152.0, 0.0};  // dyadic grid + power-of-two shift: sums stay exact
  for (auto& p : ds.points) p.position = p.position + shift;
  for (auto& c : ds.cameras) c.center = c.center + shift;
  const auto b = run_pipeline(ds, cfg);
  EXPECT_EQ(a.metrics.triangles, b.metrics.triangles);
  EXPECT_EQ(a.metrics.loops, b.metrics.loops);
  ASSERT_EQ(a.mesh.vertices.size(), b.mesh.vertices.size());
  for (std::size_t i = 0; i < a.mesh.vertices.size(); ++i)
    ASSERT_LT(distance(a.mesh.vertices[i] + shift, b.mesh.vertices[i]), 1e-6);
}

TEST(Pipeline, StageErrorsAreTagged) {
  auto ds = gen_flat_grid(10, 10);
  PipelineConfig cfg;
  cfg.leaf_size = 5;
  EXPECT_THROW(run_pipeline(ds, cfg), Error);
  cfg.leaf_size = 100;
  ds.points.clear();
  EXPECT_THROW(run_pipeline(ds, cfg), Error);
}
