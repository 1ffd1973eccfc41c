#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "octomesh/extract.hpp"
#include "octomesh/predicates.hpp"
#include "octomesh/scenes.hpp"

using namespace octomesh;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> p(n);
  for (auto& x : p) x = {u(g), u(g), u(g)};
  return p;
}

struct Snapshot {
  std::vector<double> caps, src, snk;
};

Snapshot snap(const FlowGraph& g) {
  Snapshot s;
  for (std::size_t a = 0; a < g.arc_count(); ++a) s.caps.push_back(g.capacity(static_cast<FlowGraph::ArcId>(a)));
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    s.src.push_back(g.source_capacity(static_cast<FlowGraph::NodeId>(u)));
    s.snk.push_back(g.sink_capacity(static_cast<FlowGraph::NodeId>(u)));
  }
  return s;
}

std::size_t count_interior_facets(const Tetrahedralization& t) {
  std::size_t n = 0;
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    for (int k = 0; k < 4; ++k)
      if (t.cell(c).n[k] > c && t.facet_is_finite(c, k)) ++n;
  return n;
}

int euler_characteristic(const std::vector<Triangle>& tris) {
  std::set<std::uint32_t> v;
  std::set<std::uint64_t> e;
  for (const auto& t : tris)
    for (int i = 0; i < 3; ++i) {
      v.insert(t[i]);
      e.insert(edge_key(t[i], t[(i + 1) % 3]));
    }
  return static_cast<int>(v.size()) - static_cast<int>(e.size()) + static_cast<int>(tris.size());
}

std::size_t edge_components(const std::vector<Triangle>& tris) {
  std::vector<std::size_t> parent(tris.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::unordered_map<std::uint64_t, std::size_t> first;
  for (std::size_t i = 0; i < tris.size(); ++i)
    for (int e = 0; e < 3; ++e) {
      auto [it, fresh] = first.try_emplace(edge_key(tris[i][e], tris[i][(e + 1) % 3]), i);
      if (!fresh) parent[find(i)] = find(it->second);
    }
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < tris.size(); ++i) roots.insert(find(i));
  return roots.size();
}

Box bbox(const std::vector<VisPoint>& pts) {
  Box b;
  for (const auto& p : pts) b.extend(p.position);
  return b;
}

std::vector<PointId> all_ids(std::size_t n) {
  std::vector<PointId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// Finite cell containing p by exhaustive orientation tests, or kNoCell.
CellId locate_brute(const Tetrahedralization& t, Vec3 p) {
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c) {
    if (t.is_infinite(c)) continue;
    const auto& v = t.cell(c).v;
    const Vec3 a = t.point(v[0]), b = t.point(v[1]), cc = t.point(v[2]), d = t.point(v[3]);
    if (orient3d(p, b, cc, d) > 0 && orient3d(a, p, cc, d) > 0 && orient3d(a, b, p, d) > 0 &&
        orient3d(a, b, cc, p) > 0)
      return c;
  }
  return kNoCell;
}

}  // namespace

TEST(BuildDual, SingleTetrahedron) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto t = tetrahedralize(p);
  const auto d = build_dual(t);
  EXPECT_EQ(d.graph.node_count(), 5u);
  EXPECT_EQ(d.interior_facet_count(), 4u);
  EXPECT_EQ(d.graph.arc_count(), 8u);
  for (std::size_t u = 0; u < d.graph.node_count(); ++u) {
    EXPECT_EQ(d.graph.source_capacity(static_cast<int>(u)), 0.0);
    EXPECT_EQ(d.graph.sink_capacity(static_cast<int>(u)), 0.0);
  }
}

TEST(BuildDual, CountsAndRoundTrip) {
  const auto p = random_points(300, 7);
  const auto t = tetrahedralize(p);
  const auto d = build_dual(t);
  EXPECT_EQ(d.graph.node_count(), t.cell_count());
  EXPECT_EQ(d.interior_facet_count(), count_interior_facets(t));
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    for (int k = 0; k < 4; ++k) {
      const auto a = d.arc_out(c, k);
      if (!t.facet_is_finite(c, k)) {
        EXPECT_EQ(a, -1);
        continue;
      }
      ASSERT_GE(a, 0);
      EXPECT_EQ(d.graph.arc_tail(a), c);
      EXPECT_EQ(d.graph.arc_head(a), t.cell(c).n[k]);
      const auto f = d.facet_of_arc(a, t);
      EXPECT_EQ(f.first, c);
      EXPECT_EQ(f.second, k);
    }
}

TEST(Visibility, SingleRayAuditsDeltas) {
  // Two tetrahedra sharing abc, plus a far point below so q has a cell behind it.
  std::vector<Vec3> p{{1, 0, 0}, {-0.5, 0.866, 0}, {-0.5, -0.866, 0}, {0, 0, 2}, {0, 0, -2}, {0.1, 0.05, -4}};
  const auto t = tetrahedralize(p);
  auto d = build_dual(t);
  const auto before = snap(d.graph);
  const Vec3 cam{0.02, 0.01, 0.5};
  const auto r = apply_visibility(d, t, cam, 4, EnergyParams{});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->crossed.size(), 1u);
  EXPECT_EQ(locate_brute(t, cam), r->source_cell);
  ASSERT_NE(r->behind, kNoCell);
  EXPECT_EQ(locate_brute(t, p[4] + (p[4] - cam) * 1e-6), r->behind);
  const auto after = snap(d.graph);
  int arcs = 0, sources = 0, sinks = 0;
  for (std::size_t a = 0; a < after.caps.size(); ++a)
    if (after.caps[a] != before.caps[a]) {
      ++arcs;
      EXPECT_EQ(after.caps[a] - before.caps[a], 1.0);
    }
  for (std::size_t u = 0; u < after.src.size(); ++u) {
    if (after.src[u] != before.src[u]) {
      ++sources;
      EXPECT_EQ(after.src[u], FlowGraph::kInfinite);
    }
    if (after.snk[u] != before.snk[u]) {
      ++sinks;
      EXPECT_EQ(after.snk[u] - before.snk[u], 1.0);
    }
  }
  EXPECT_EQ(arcs, 1);
  EXPECT_EQ(sources, 1);
  EXPECT_EQ(sinks, 1);
  // The arc runs from the camera's cell toward q's side.
  EXPECT_EQ(d.graph.arc_tail(r->crossed[0]), r->source_cell);
}

TEST(Visibility, TwoIdenticalRaysDouble) {
  const auto p = random_points(60, 9);
  const auto t = tetrahedralize(p);
  auto one = build_dual(t), two = build_dual(t);
  const Vec3 cam{3, 0.2, 0.1};
  EnergyParams ep;
  ep.lambda_vis = 0.75;
  apply_visibility(one, t, cam, 5, ep);
  apply_visibility(two, t, cam, 5, ep);
  apply_visibility(two, t, cam, 5, ep);
  const auto a = snap(one.graph), b = snap(two.graph);
  for (std::size_t i = 0; i < a.caps.size(); ++i) EXPECT_EQ(b.caps[i], 2 * a.caps[i]);
  for (std::size_t i = 0; i < a.src.size(); ++i) {
    EXPECT_EQ(b.src[i], a.src[i]);  // sentinel saturates
    EXPECT_EQ(b.snk[i], 2 * a.snk[i]);
  }
}

TEST(Visibility, DegenerateRaySkipped) {
  const auto p = random_points(30, 10);
  const auto t = tetrahedralize(p);
  auto d = build_dual(t);
  const auto before = snap(d.graph);
  EXPECT_FALSE(apply_visibility(d, t, p[3], 3, EnergyParams{}));
  const auto after = snap(d.graph);
  EXPECT_EQ(before.caps, after.caps);
  EXPECT_EQ(before.src, after.src);
  EXPECT_EQ(before.snk, after.snk);
}

TEST(Smoothness, TotalAndAccumulation) {
  const auto p = random_points(200, 11);
  const auto t = tetrahedralize(p);
  auto d = build_dual(t);
  EnergyParams zero;
  zero.alpha = 0;
  apply_smoothness(d, t, zero);
  for (std::size_t a = 0; a < d.graph.arc_count(); ++a) EXPECT_EQ(d.graph.capacity(static_cast<int>(a)), 0.0);
  apply_smoothness(d, t, EnergyParams{});
  double total = 0;
  for (std::size_t a = 0; a < d.graph.arc_count(); ++a) total += d.graph.capacity(static_cast<int>(a));
  const double f = static_cast<double>(count_interior_facets(t));
  EXPECT_NEAR(total, 2 * f * 1e-4, 1e-12 * f);
  apply_smoothness(d, t, EnergyParams{});
  EXPECT_DOUBLE_EQ(d.graph.capacity(0), 2e-4);
}

TEST(EnergyParams, Validation) {
  EnergyParams p;
  p.alpha = -1;
  EXPECT_THROW(p.validate(), Error);
  p.alpha = 0;
  p.lambda_vis = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(ExtractSurface, AllOutsideIsEmpty) {
  const auto p = random_points(40, 12);
  const auto t = tetrahedralize(p);
  std::vector<Side> labels(t.cell_count(), Side::Source);
  EXPECT_TRUE(extract_surface(t, labels).triangles.empty());
}

TEST(ExtractSurface, SingleInsideCellIsClosedAndOutward) {
  const auto p = random_points(40, 13);
  const auto t = tetrahedralize(p);
  std::vector<Side> labels(t.cell_count(), Side::Source);
  CellId in = kNoCell;
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()) && in == kNoCell; ++c)
    if (!t.is_infinite(c)) in = c;
  labels[in] = Side::Sink;
  const auto s = extract_surface(t, labels);
  ASSERT_EQ(s.triangles.size(), 4u);
  EXPECT_TRUE(is_watertight(s.triangles));
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& tri = s.triangles[i];
    const VertexId opp = t.cell(in).v[s.facets[i].second];
    EXPECT_LT(orient3d(t.point(tri[0]), t.point(tri[1]), t.point(tri[2]), t.point(opp)), 0);
  }
}

// Energy identity: the solver's flow against a from-scratch recount of the energy from
// the labeling, with segment/facet crossings found by exhaustive intersection tests.
TEST(Energy, IdentityOnSmallComplexes) {
  std::mt19937_64 g(14);
  for (int trial = 0; trial < 25; ++trial) {
    const auto p = random_points(20 + trial * 2, 100 + trial);
    const auto t = tetrahedralize(p);
    ASSERT_LE(t.cell_count(), 500u);
    EnergyParams ep;
    ep.alpha = trial % 2 ? 0.3 : 1e-4;
    ep.lambda_vis = 1.0 + trial % 3;
    std::uniform_real_distribution<double> ang(0, 2 * M_PI), uz(-1, 1), inner(-0.3, 0.3);
    std::vector<std::pair<Vec3, VertexId>> rays;
    for (VertexId q = 0; q < static_cast<VertexId>(p.size()); ++q) {
      Vec3 cam;
      if (q % 5 == 0) {
        cam = {inner(g), inner(g), inner(g)};
      } else {
        const double a = ang(g), z = uz(g), r = std::sqrt(1 - z * z);
        cam = Vec3{r * std::cos(a), r * std::sin(a), z} * 4.0;
      }
      rays.push_back({cam, q});
    }
    auto d = build_dual(t);
    for (auto& [cam, q] : rays) apply_visibility(d, t, cam, q, ep);
    apply_smoothness(d, t, ep);
    pin_infinite_cells(d, t);
    const auto cut = d.graph.solve();
    const auto& L = cut.labels;

    double violated = 0, behind = 0, facets = 0;
    for (auto& [cam, q] : rays) {
      const Vec3 qp = t.point(q);
      for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
        for (int k = 0; k < 4; ++k) {
          const CellId n = t.cell(c).n[k];
          if (n < c || !t.facet_is_finite(c, k)) continue;
          const auto f = t.facet(c, k);
          const Vec3 a = t.point(f[0]), b = t.point(f[1]), cc = t.point(f[2]);
          if (!segment_triangle_intersect(cam, qp, a, b, cc)) continue;
          const int cam_side = orient3d(a, b, cc, cam);
          const bool cam_in_c = t.is_infinite(c) ? cam_side < 0 : cam_side == orient3d(a, b, cc, t.point(t.cell(c).v[k]));
          const CellId A = cam_in_c ? c : n, B = cam_in_c ? n : c;
          if (L[A] == Side::Source && L[B] == Side::Sink) ++violated;
        }
      // Behind cell: brute-force location of a point just past q.
      const Vec3 dir = (qp - cam) * (1.0 / distance(qp, cam));
      const CellId bc = locate_brute(t, qp + dir * 1e-7);
      EXPECT_EQ(bc, cell_behind(t, cam, q));
      if (bc != kNoCell && L[bc] == Side::Source) ++behind;
    }
    for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
      for (int k = 0; k < 4; ++k)
        if (t.cell(c).n[k] > c && t.facet_is_finite(c, k) && L[c] != L[t.cell(c).n[k]]) ++facets;
    const double expected = ep.lambda_vis * (violated + behind) + ep.alpha * facets;
    EXPECT_NEAR(cut.flow, expected, 1e-9 * std::max(1.0, expected)) << "trial " << trial;
    EXPECT_NEAR(d.graph.cut_cost(L), cut.flow, 1e-9 * std::max(1.0, expected));
  }
}

TEST(Energy, ScalingInvariance) {
  const auto ds = gen_sphere(400, 1.0, 0.01, 3);
  const auto ids = all_ids(ds.points.size());
  std::vector<Vec3> pos;
  for (const auto& v : ds.points) pos.push_back(v.position);
  const auto t = tetrahedralize(pos);
  const auto cams = ds.camera_table();
  auto labels_for = [&](double s) {
    EnergyParams ep;
    ep.alpha *= s;
    ep.lambda_vis *= s;
    auto d = build_dual(t);
    for (VertexId i = 0; i < static_cast<VertexId>(pos.size()); ++i)
      apply_visibility(d, t, cams.at(ds.points[i].cameras[0]), i, ep);
    apply_smoothness(d, t, ep);
    pin_infinite_cells(d, t);
    return d.graph.solve().labels;
  };
  const auto base = labels_for(1.0);
  EXPECT_EQ(base, labels_for(4.0));
  EXPECT_EQ(base, labels_for(0.125));
}

TEST(ExtractLocal, SphereIsWatertightGenusZero) {
  const auto ds = gen_sphere(2000);
  const auto ids = all_ids(ds.points.size());
  LocalStats st;
  const auto h = extract_local(ds.points, ds.camera_table(), ids, bbox(ds.points), EnergyParams{}, &st);
  ASSERT_FALSE(h.triangles.empty());
  EXPECT_TRUE(is_watertight(h.triangles));
  EXPECT_EQ(euler_characteristic(h.triangles), 2);
  EXPECT_EQ(st.rays, 2000u);
  for (const auto& v : ds.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tri : h.triangles)
      best = std::min(best, point_triangle_distance(v.position, ds.points[tri[0]].position,
                                                    ds.points[tri[1]].position, ds.points[tri[2]].position));
    EXPECT_LE(best, 2 * v.scale);
  }
  // Outward orientation: signed volume positive.
  double vol = 0;
  for (const auto& tri : h.triangles)
    vol += dot(ds.points[tri[0]].position, cross(ds.points[tri[1]].position, ds.points[tri[2]].position)) / 6;
  EXPECT_GT(vol, 0.0);
}

TEST(ExtractLocal, AllCamerasOnNoisySphere) {
  const auto ds = gen_sphere(1500, 1.0, 0.003, 5);
  EnergyParams ep;
  ep.all_cameras = true;
  const auto h = extract_local(ds.points, ds.camera_table(), all_ids(ds.points.size()), bbox(ds.points), ep);
  EXPECT_TRUE(is_watertight(h.triangles));
}

TEST(ExtractLocal, FlatGridSingleSheet) {
  const auto ds = gen_flat_grid(50, 50, 1.0, 0.1, 2);
  const auto h =
      extract_local(ds.points, ds.camera_table(), all_ids(ds.points.size()), bbox(ds.points), EnergyParams{});
  ASSERT_FALSE(h.triangles.empty());
  EXPECT_TRUE(is_watertight(h.triangles));
  EXPECT_EQ(edge_components(h.triangles), 1u);
}

TEST(ExtractLocal, SubsetIdsAreGlobal) {
  const auto ds = gen_sphere(800);
  std::vector<PointId> ids;
  for (PointId i = 0; i < ds.points.size(); ++i)
    if (ds.points[i].position.z > 0.2) ids.push_back(i);
  const auto h = extract_local(ds.points, ds.camera_table(), ids, bbox(ds.points), EnergyParams{});
  EXPECT_TRUE(is_watertight(h.triangles));
  const std::set<PointId> allowed(ids.begin(), ids.end());
  for (const auto& t : h.triangles)
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(allowed.count(t[i]));
}

TEST(ExtractLocal, UnknownCameraThrows) {
  auto ds = gen_sphere(100);
  ds.points[7].cameras = {99};
  EXPECT_THROW(extract_local(ds.points, ds.camera_table(), all_ids(100), bbox(ds.points), EnergyParams{}), Error);
}

TEST(ExtractLocal, FinalFlags) {
  const auto ds = gen_sphere(1000);
  const auto ids = all_ids(ds.points.size());
  const auto tight = extract_local(ds.points, ds.camera_table(), ids, bbox(ds.points), EnergyParams{});
  Box huge{{-100, -100, -100}, {100, 100, 100}};
  const auto loose = extract_local(ds.points, ds.camera_table(), ids, huge, EnergyParams{});
  ASSERT_EQ(tight.triangles.size(), loose.triangles.size());
  std::size_t n_tight = 0, n_loose = 0;
  for (std::size_t i = 0; i < tight.triangles.size(); ++i) {
    n_tight += tight.separates_final[i];
    n_loose += loose.separates_final[i];
    if (tight.separates_final[i]) EXPECT_TRUE(loose.separates_final[i]);
  }
  EXPECT_LE(n_tight, n_loose);
  EXPECT_LT(n_tight, tight.triangles.size());
}

TEST(GraphDump, Format) {
  FlowGraph g;
  g.add_nodes(3);
  g.add_arc(0, 1, 2.5, 0);
  g.add_arc(1, 2, 1, 3);
  g.set_terminal(0, FlowGraph::kInfinite, 0);
  g.set_terminal(2, 0, 4);
  std::ostringstream os;
  write_graph_text(os, g);
  EXPECT_EQ(os.str(),
            "nodes 3\nt 0 inf 0\nt 1 0 0\nt 2 0 4\na 0 1 2.5\na 1 0 0\na 1 2 1\na 2 1 3\n");
}

TEST(Manifold, RepairOnlyAddsInside) {
  const auto p = random_points(400, 21);
  const auto t = tetrahedralize(p);
  std::mt19937_64 g(5);
  std::vector<Side> labels(t.cell_count(), Side::Source);
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    if (!t.is_infinite(c) && g() % 3 == 0) labels[c] = Side::Sink;
  const auto before = labels;
  make_edge_manifold(t, labels);
  for (std::size_t c = 0; c < labels.size(); ++c)
    if (before[c] == Side::Sink) EXPECT_EQ(labels[c], Side::Sink);
  const auto s = extract_surface(t, labels);
  std::unordered_map<std::uint64_t, int> cnt;
  for (const auto& tri : s.triangles)
    for (int e = 0; e < 3; ++e) ++cnt[edge_key(tri[e], tri[(e + 1) % 3])];
  for (auto& [k, n] : cnt) EXPECT_EQ(n, 2);
}
