#pragma once

// Mesh metrics and the end-to-end pipeline.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "octomesh/config.hpp"
#include "octomesh/dataset.hpp"
#include "octomesh/extract.hpp"
#include "octomesh/fuse.hpp"
#include "octomesh/geometry.hpp"
#include "octomesh/memory.hpp"
#include "octomesh/octree.hpp"
#include "octomesh/pointproc.hpp"

namespace octomesh {

struct MeshMetrics {
  std::size_t vertices = 0;
  std::size_t triangles = 0;
  std::size_t loops = 0;  // closed boundary cycles
  std::size_t boundary_edges = 0;
  double boundary_length = 0.0;
  std::size_t non_manifold_edges = 0;
  // Filled by accuracy_completeness.
  double mean_accuracy = 0.0, median_accuracy = 0.0;
  double mean_completeness = 0.0, median_completeness = 0.0;
  double completeness_ratio = 0.0;  // reference points within the threshold

  nlohmann::json to_json() const {
    return {{"vertices", vertices},
            {"triangles", triangles},
            {"loops", loops},
            {"boundary_edges", boundary_edges},
            {"boundary_length", boundary_length},
            {"non_manifold_edges", non_manifold_edges},
            {"mean_accuracy", mean_accuracy},
            {"median_accuracy", median_accuracy},
            {"mean_completeness", mean_completeness},
            {"median_completeness", median_completeness},
            {"completeness_ratio", completeness_ratio}};
  }
};

/// Boundary loops: connected components of the edges with one incident triangle.
/// Edges with three or more triangles are counted and left out.
inline MeshMetrics count_holes(const std::vector<Vec3>& pos, const std::vector<Triangle>& tris) {
  MeshMetrics m;
  m.triangles = tris.size();
  std::unordered_map<std::uint64_t, int> count;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
  std::vector<std::uint8_t> used(pos.size(), 0);
  for (const auto& t : tris)
    for (auto v : t.v) used[v] = 1;
  m.vertices = static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));

  std::vector<std::uint32_t> parent(pos.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&parent](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::uint8_t> on_boundary(pos.size(), 0);
  for (const auto& [k, c] : count) {
    if (c > 2) ++m.non_manifold_edges;
    if (c != 1) continue;
    ++m.boundary_edges;
    m.boundary_length += distance(pos[edge_first(k)], pos[edge_second(k)]);
    on_boundary[edge_first(k)] = on_boundary[edge_second(k)] = 1;
    const auto a = find(edge_first(k)), b = find(edge_second(k));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  for (std::uint32_t v = 0; v < pos.size(); ++v) m.loops += on_boundary[v] && find(v) == v;
  return m;
}

inline MeshMetrics count_holes(const IndexedMesh& mesh) { return count_holes(mesh.vertices, mesh.triangles()); }

/// Boundary loops with no vertex within `band` of the sides of `footprint`. Open
/// surfaces always have an outer rim; this counts what is left. Axes where the
/// footprint is thinner than 2*band are ignored.
inline std::size_t interior_holes(const std::vector<Vec3>& pos, const std::vector<Triangle>& tris, const Box& footprint,
                                  double band) {
  std::unordered_map<std::uint64_t, int> count;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
  std::vector<std::uint32_t> parent(pos.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&parent](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::uint8_t> on_boundary(pos.size(), 0);
  for (const auto& [k, c] : count) {
    if (c != 1) continue;
    on_boundary[edge_first(k)] = on_boundary[edge_second(k)] = 1;
    const auto a = find(edge_first(k)), b = find(edge_second(k));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  auto near_rim = [&](const Vec3& p) {
    for (int a = 0; a < 3; ++a) {
      const double lo = footprint.lo[a], hi = footprint.hi[a];
      if (hi - lo < 2 * band) continue;
      if (p[a] - lo < band || hi - p[a] < band) return true;
    }
    return false;
  };
  std::vector<std::uint8_t> rim(pos.size(), 0);
  for (std::uint32_t v = 0; v < pos.size(); ++v)
    if (on_boundary[v] && near_rim(pos[v])) rim[find(v)] = 1;
  std::size_t n = 0;
  for (std::uint32_t v = 0; v < pos.size(); ++v) n += on_boundary[v] && find(v) == v && !rim[v];
  return n;
}

/// Pairs of triangles that intersect beyond shared vertices or a shared edge. Every
/// pair with overlapping bounding boxes gets the exact test.
inline std::size_t count_intersections(const std::vector<Vec3>& pos, const std::vector<Triangle>& tris) {
  namespace bg = boost::geometry;
  namespace bgi = boost::geometry::index;
  using P = bg::model::point<double, 3, bg::cs::cartesian>;
  using B = bg::model::box<P>;
  using V = std::pair<B, std::uint32_t>;
  auto box_of = [&](const Triangle& t) {
    Box b;
    for (auto v : t.v) b.extend(pos[v]);
    return B(P(b.lo.x, b.lo.y, b.lo.z), P(b.hi.x, b.hi.y, b.hi.z));
  };
  std::vector<V> values;
  values.reserve(tris.size());
  for (std::uint32_t i = 0; i < tris.size(); ++i) values.push_back({box_of(tris[i]), i});
  bgi::rtree<V, bgi::rstar<16>> index(values.begin(), values.end());
  auto lookup = [&](std::uint32_t v) { return pos[v]; };
  std::size_t n = 0;
  std::vector<V> hits;
  for (std::uint32_t i = 0; i < tris.size(); ++i) {
    hits.clear();
    index.query(bgi::intersects(values[i].first), std::back_inserter(hits));
    for (const auto& h : hits)
      if (h.second > i && triangles_intersect(tris[i], tris[h.second], lookup)) ++n;
  }
  return n;
}

namespace detail {
inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2) return v[mid];
  const double hi = v[mid];
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}
}  // namespace detail

/// Accuracy: mesh vertex to nearest reference point. Completeness: reference point to
/// nearest triangle. `threshold` feeds completeness_ratio.
inline void accuracy_completeness(const std::vector<Vec3>& pos, const std::vector<Triangle>& tris,
                                  const std::vector<Vec3>& reference, double threshold, MeshMetrics& m) {
  if (reference.empty()) throw Error("accuracy: empty reference");
  namespace bg = boost::geometry;
  namespace bgi = boost::geometry::index;
  using P = bg::model::point<double, 3, bg::cs::cartesian>;
  using B = bg::model::box<P>;
  auto bp = [](Vec3 v) { return P(v.x, v.y, v.z); };

  std::vector<std::pair<P, std::uint32_t>> rp;
  for (std::uint32_t i = 0; i < reference.size(); ++i) rp.push_back({bp(reference[i]), i});
  bgi::rtree<std::pair<P, std::uint32_t>, bgi::rstar<16>> ref_index(rp.begin(), rp.end());

  std::vector<std::uint8_t> used(pos.size(), 0);
  for (const auto& t : tris)
    for (auto v : t.v) used[v] = 1;
  std::vector<double> acc;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (!used[i]) continue;
    std::vector<std::pair<P, std::uint32_t>> hit;
    ref_index.query(bgi::nearest(bp(pos[i]), 1), std::back_inserter(hit));
    acc.push_back(distance(pos[i], reference[hit[0].second]));
  }

  std::vector<double> com;
  com.reserve(reference.size());
  if (tris.empty()) {
    com.assign(reference.size(), std::numeric_limits<double>::infinity());
  } else {
    std::vector<std::pair<B, std::uint32_t>> tb;
    for (std::uint32_t i = 0; i < tris.size(); ++i) {
      Box b;
      for (auto v : tris[i].v) b.extend(pos[v]);
      tb.push_back({B(bp(b.lo), bp(b.hi)), i});
    }
    bgi::rtree<std::pair<B, std::uint32_t>, bgi::rstar<16>> tri_index(tb.begin(), tb.end());
    for (const auto& r : reference) {
      double best = std::numeric_limits<double>::infinity();
      for (auto it = tri_index.qbegin(bgi::nearest(bp(r), static_cast<unsigned>(tris.size()))); it != tri_index.qend();
           ++it) {
        if (bg::comparable_distance(bp(r), it->first) > best * best) break;
        const auto& t = tris[it->second];
        best = std::min(best, point_triangle_distance(r, pos[t[0]], pos[t[1]], pos[t[2]]));
      }
      com.push_back(best);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  m.mean_accuracy = mean(acc);
  m.median_accuracy = detail::median(acc);
  m.mean_completeness = mean(com);
  m.median_completeness = detail::median(com);
  m.completeness_ratio =
      static_cast<double>(std::count_if(com.begin(), com.end(), [&](double d) { return d <= threshold; })) /
      static_cast<double>(com.size());
}

/// Mesh over the vertices the triangles use, renumbered in first-use order.
inline IndexedMesh compact_mesh(const std::vector<Vec3>& pos, const std::vector<Triangle>& tris) {
  IndexedMesh out;
  std::vector<std::uint32_t> remap(pos.size(), std::numeric_limits<std::uint32_t>::max());
  for (const auto& t : tris) {
    Triangle n;
    for (int i = 0; i < 3; ++i) {
      auto& r = remap[t[i]];
      if (r == std::numeric_limits<std::uint32_t>::max()) {
        r = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.push_back(pos[t[i]]);
      }
      n.v[static_cast<std::size_t>(i)] = r;
    }
    out.add_triangle(n);
  }
  return out;
}

struct StageTiming {
  std::string name;
  double seconds = 0.0;
  std::int64_t peak_bytes = 0;  // tracked heap of the coordinator during the stage
};

struct ResourceReport {
  std::vector<StageTiming> stages;
  std::int64_t extract_peak_bytes = 0;  // largest single extraction task
  std::vector<std::int64_t> worker_peak_bytes;
  std::int64_t process_peak_rss = 0;
  bool heap_tracking = false;
  std::size_t subsets = 0, hypotheses = 0, failed_subsets = 0, voxels = 0;
  std::size_t input_points = 0, fused_points = 0;

  nlohmann::json to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages) st.push_back({{"name", s.name}, {"seconds", s.seconds}, {"peak_bytes", s.peak_bytes}});
    return {{"stages", st},
            {"extract_peak_bytes", extract_peak_bytes},
            {"worker_peak_bytes", worker_peak_bytes},
            {"process_peak_rss", process_peak_rss},
            {"heap_tracking", heap_tracking},
            {"subsets", subsets},
            {"hypotheses", hypotheses},
            {"failed_subsets", failed_subsets},
            {"voxels", voxels},
            {"input_points", input_points},
            {"fused_points", fused_points}};
  }
};

struct PipelineResult {
  IndexedMesh mesh;                          // final, smoothed, input coordinates
  MeshMetrics metrics;                       // of the final mesh
  std::vector<StageReport> fusion;           // per fusion stage
  std::vector<MeshMetrics> stage_metrics;    // after each fusion stage
  ResourceReport resources;
  Vec3 origin;                               // subtracted from all inputs while processing
  std::vector<VisPoint> points;              // after input fusion, processing coordinates
};

struct PipelineHooks {
  /// Combined solution after each fusion stage, in input coordinates.
  std::function<void(int stage, const std::string& name, const IndexedMesh& mesh)> mesh;
  /// Points after input fusion, processing coordinates.
  std::function<void(const std::vector<VisPoint>&)> points;
  /// Local hypotheses once extraction is done.
  std::function<void(const HypothesisSet&)> hypotheses;
  /// Skip extraction and fuse these instead. Their subsets must match the octree.
  const HypothesisSet* resume = nullptr;
};

/// Bounding-box center of points and cameras.
inline Vec3 dataset_center(const Dataset& ds) {
  Box b;
  for (const auto& p : ds.points) b.extend(p.position);
  for (const auto& c : ds.cameras) b.extend(c.center);
  if (b.empty()) return {0, 0, 0};
  return (b.lo + b.hi) * 0.5;
}

inline IndexedMesh translated(const IndexedMesh& m, Vec3 d) {
  IndexedMesh out;
  out.vertices = m.vertices;
  for (auto& v : out.vertices) v = v + d;
  for (const auto& t : m.triangles()) out.add_triangle(t);
  return out;
}

inline void check_resume(const HypothesisSet& hs, const std::vector<VoxelSubset>& subsets) {
  if (hs.subsets.size() != subsets.size() || hs.subset_hyp.size() != subsets.size())
    throw Error("hypotheses do not match the octree (subset count " + std::to_string(hs.subsets.size()) + " vs " +
                std::to_string(subsets.size()) + ")");
  for (std::size_t i = 0; i < subsets.size(); ++i)
    if (hs.subsets[i].members != subsets[i].members)
      throw Error("hypotheses do not match the octree (subset " + std::to_string(i) + ")");
  for (auto h : hs.subset_hyp)
    if (h >= static_cast<int>(hs.hyps.size())) throw Error("hypotheses reference a missing surface");
}

/// Normalize, fuse points, octree, local extraction, three fusion stages, smoothing.
inline PipelineResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg, const PipelineHooks& hooks = {}) {
  cfg.validate();
  ds.validate();
  if (ds.points.empty()) throw Error("dataset has no points");
  PipelineResult res;
  auto& rr = res.resources;
  rr.heap_tracking = memory::tracking_enabled();
  rr.input_points = ds.points.size();
  const OctreeParams op{cfg.leaf_size, 40};
  res.origin = dataset_center(ds);
  const Vec3 origin = res.origin;

  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    memory::PeakScope scope;
    try {
      fn();
    } catch (const std::exception& e) {
      throw Error(name + ": " + e.what());
    }
    rr.stages.push_back(
        {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), scope.peak_bytes()});
  };

  CameraTable cams;
  for (const auto& c : ds.cameras) cams[c.id] = c.center - origin;
  stage("fuse-points", [&] {
    std::vector<VisPoint> local = ds.points;
    for (auto& p : local) p.position = p.position - origin;
    if (cfg.fuse_input) {
      const auto raw_tree = Octree::build(local, op);
      res.points = fuse_points(local, cfg.fusion(), raw_tree, cfg.workers);
    } else {
      res.points = std::move(local);
    }
  });
  rr.fused_points = res.points.size();
  if (hooks.points) hooks.points(res.points);

  Octree tree;
  stage("octree", [&] { tree = Octree::build(res.points, op); });
  rr.voxels = tree.voxels().size();

  HypothesisSet hs;
  stage("extract", [&] {
    auto subsets = corner_subsets(tree);
    if (hooks.resume) {
      check_resume(*hooks.resume, subsets);
      hs = *hooks.resume;
      hs.subsets = std::move(subsets);
      rr.failed_subsets = static_cast<std::size_t>(std::count(hs.subset_hyp.begin(), hs.subset_hyp.end(), -1));
    } else {
      SolveReport sr;
      hs = solve_subsets(res.points, cams, tree, std::move(subsets), cfg.energy(), cfg.workers, &sr);
      rr.failed_subsets = sr.failed;
      for (auto b : sr.peak_bytes) rr.extract_peak_bytes = std::max(rr.extract_peak_bytes, b);
    }
    rr.subsets = hs.subsets.size();
    rr.hypotheses = hs.hyps.size();
    if (hooks.hypotheses) hooks.hypotheses(hs);
  });

  std::vector<Vec3> pos(res.points.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = res.points[i].position;
  CombinedSolution combined(pos);
  stage("fuse-surfaces", [&] {
    FuseParams fp{cfg.seed, cfg.workers};
    res.fusion = fuse_hypotheses(hs, tree, combined, fp, [&](int s, const std::string& name, const CombinedSolution& c) {
      res.stage_metrics.push_back(count_holes(c.positions(), c.triangles()));
      if (hooks.mesh) hooks.mesh(s, name, translated(compact_mesh(c.positions(), c.triangles()), origin));
    });
  });
  hs = {};

  stage("smooth", [&] {
    res.mesh = translated(hc_smooth(compact_mesh(combined.positions(), combined.triangles()), cfg.smoothing()), origin);
  });
  res.metrics = count_holes(res.mesh);
  rr.worker_peak_bytes = {rr.extract_peak_bytes};
  rr.process_peak_rss = memory::process_peak_rss();
  return res;
}

}  // namespace octomesh
