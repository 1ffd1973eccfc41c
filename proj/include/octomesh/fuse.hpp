#pragma once

// Merging overlapping local hypotheses into one combined mesh: unanimous triangles per
// voxel, agreed cross-voxel triangles, whole patches that close holes exactly, and a
// boundary-length graph cut for the rest.

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "octomesh/extract.hpp"
#include "octomesh/geometry.hpp"
#include "octomesh/maxflow.hpp"
#include "octomesh/memory.hpp"
#include "octomesh/octree.hpp"
#include "octomesh/parallel.hpp"
#include "octomesh/predicates.hpp"

namespace octomesh {

namespace detail {
namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using RPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using RBox = bg::model::box<RPoint>;
using RValue = std::pair<RBox, std::uint32_t>;

inline RBox to_rbox(const Box& b) { return {RPoint(b.lo.x, b.lo.y, b.lo.z), RPoint(b.hi.x, b.hi.y, b.hi.z)}; }
}  // namespace detail

inline Box triangle_box(const Triangle& t, const std::vector<Vec3>& pos) {
  Box b;
  for (int i = 0; i < 3; ++i) b.extend(pos[t[i]]);
  return b;
}

inline double edge_length(std::uint64_t key, const std::vector<Vec3>& pos) {
  return distance(pos[edge_first(key)], pos[edge_second(key)]);
}

/// Triangles with exact-key lookup, undirected edge incidence and a box index.
class TriangleStore {
public:
  void add(const Triangle& t, const Box& box) {
    const auto id = static_cast<std::uint32_t>(tris_.size());
    if (!keys_.emplace(triangle_key(t), id).second) throw Error("duplicate triangle in store");
    tris_.push_back(t);
    for (int e = 0; e < 3; ++e) edges_[edge_key(t[e], t[(e + 1) % 3])].push_back(id);
    index_.insert({detail::to_rbox(box), id});
  }
  bool contains(const TriangleKey& k) const { return keys_.count(k) != 0; }
  void edge_triangles(std::uint32_t a, std::uint32_t b, std::vector<Triangle>& out) const {
    auto it = edges_.find(edge_key(a, b));
    if (it == edges_.end()) return;
    for (auto id : it->second) out.push_back(tris_[id]);
  }
  std::size_t edge_count(std::uint32_t a, std::uint32_t b) const {
    auto it = edges_.find(edge_key(a, b));
    return it == edges_.end() ? 0 : it->second.size();
  }
  void overlapping(const Box& box, std::vector<Triangle>& out) const {
    std::vector<detail::RValue> hits;
    index_.query(detail::bgi::intersects(detail::to_rbox(box)), std::back_inserter(hits));
    for (const auto& h : hits) out.push_back(tris_[h.second]);
  }
  const std::vector<Triangle>& triangles() const { return tris_; }
  const std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>& edges() const { return edges_; }
  std::size_t size() const { return tris_.size(); }

private:
  std::vector<Triangle> tris_;
  std::unordered_map<TriangleKey, std::uint32_t, TriangleKeyHash> keys_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edges_;
  detail::bgi::rtree<detail::RValue, detail::bgi::rstar<16>> index_;
};

/// Read access shared by the combined solution and staged overlays on top of it.
class SurfaceView {
public:
  virtual ~SurfaceView() = default;
  virtual const std::vector<Vec3>& positions() const = 0;
  virtual bool contains(const TriangleKey& k) const = 0;
  virtual void edge_triangles(std::uint32_t a, std::uint32_t b, std::vector<Triangle>& out) const = 0;
  virtual void overlapping(const Box& box, std::vector<Triangle>& out) const = 0;

  bool contains(const Triangle& t) const { return contains(triangle_key(t)); }
};

/// The global mesh. Vertex ids are point ids; triangles only ever get appended.
class CombinedSolution : public SurfaceView {
public:
  explicit CombinedSolution(std::vector<Vec3> positions) : pos_(std::move(positions)) {}

  const std::vector<Vec3>& positions() const override { return pos_; }
  bool contains(const TriangleKey& k) const override { return store_.contains(k); }
  using SurfaceView::contains;
  void edge_triangles(std::uint32_t a, std::uint32_t b, std::vector<Triangle>& out) const override {
    store_.edge_triangles(a, b, out);
  }
  void overlapping(const Box& box, std::vector<Triangle>& out) const override { store_.overlapping(box, out); }

  void add(const Triangle& t) {
    for (auto v : t.v)
      if (v >= pos_.size()) throw Error("triangle references a missing vertex");
    store_.add(t, triangle_box(t, pos_));
  }
  const std::vector<Triangle>& triangles() const { return store_.triangles(); }
  std::size_t size() const { return store_.size(); }
  std::size_t edge_count(std::uint32_t a, std::uint32_t b) const { return store_.edge_count(a, b); }
  const std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>& edges() const { return store_.edges(); }

  /// Sum of lengths of edges with exactly one incident triangle.
  double boundary_length() const {
    double s = 0;
    for (const auto& [k, ts] : store_.edges())
      if (ts.size() == 1) s += edge_length(k, pos_);
    return s;
  }
  std::size_t boundary_edge_count() const {
    std::size_t n = 0;
    for (const auto& [k, ts] : store_.edges()) n += ts.size() == 1;
    return n;
  }

private:
  std::vector<Vec3> pos_;
  TriangleStore store_;
};

/// Tentative additions over a parent view. Reads see parent and local triangles.
class Staging : public SurfaceView {
public:
  explicit Staging(const SurfaceView& parent) : parent_(parent) {}
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  const std::vector<Vec3>& positions() const override { return parent_.positions(); }
  bool contains(const TriangleKey& k) const override { return local_.contains(k) || parent_.contains(k); }
  using SurfaceView::contains;
  void edge_triangles(std::uint32_t a, std::uint32_t b, std::vector<Triangle>& out) const override {
    parent_.edge_triangles(a, b, out);
    local_.edge_triangles(a, b, out);
  }
  void overlapping(const Box& box, std::vector<Triangle>& out) const override {
    parent_.overlapping(box, out);
    if (local_.size()) local_.overlapping(box, out);
  }
  void add(const Triangle& t) { local_.add(t, triangle_box(t, positions())); }
  const std::vector<Triangle>& added() const { return local_.triangles(); }

private:
  const SurfaceView& parent_;
  TriangleStore local_;
};

enum class Conflict { None, Duplicate, NonManifold, Intersection };

/// Whether t can join the surface: new, at most two triangles per edge, and no
/// intersection beyond shared vertices and edges.
inline Conflict check_triangle(const SurfaceView& s, const Triangle& t) {
  if (s.contains(t)) return Conflict::Duplicate;
  std::vector<Triangle> around;
  for (int e = 0; e < 3; ++e) {
    around.clear();
    s.edge_triangles(t[e], t[(e + 1) % 3], around);
    if (around.size() >= 2) return Conflict::NonManifold;
  }
  const auto& pos = s.positions();
  around.clear();
  s.overlapping(triangle_box(t, pos), around);
  auto lookup = [&pos](std::uint32_t v) { return pos[v]; };
  for (const auto& o : around)
    if (triangles_intersect(t, o, lookup)) return Conflict::Intersection;
  return Conflict::None;
}

inline bool try_add(CombinedSolution& c, const Triangle& t) {
  if (check_triangle(c, t) != Conflict::None) return false;
  c.add(t);
  return true;
}
inline bool try_add(Staging& c, const Triangle& t) {
  if (check_triangle(c, t) != Conflict::None) return false;
  c.add(t);
  return true;
}

// ---------------------------------------------------------------------------------
// Hypothesis bookkeeping

/// Solved subsets. Subsets with equal member sets share one hypothesis; a failed
/// subset maps to -1.
struct HypothesisSet {
  std::vector<VoxelSubset> subsets;
  std::vector<int> subset_hyp;
  std::vector<SurfaceHypothesis> hyps;
};

struct SolveReport {
  std::vector<LocalStats> stats;          // per hypothesis
  std::vector<std::int64_t> peak_bytes;   // per hypothesis, tracked heap of its task
  std::vector<double> seconds;
  std::size_t failed = 0;
};

/// Solves every distinct member set of `subsets` once, with `workers` threads.
inline HypothesisSet solve_subsets(const std::vector<VisPoint>& points, const CameraTable& cameras, const Octree& tree,
                                   std::vector<VoxelSubset> subsets, const EnergyParams& params, unsigned workers,
                                   SolveReport* report = nullptr) {
  HypothesisSet hs;
  hs.subsets = std::move(subsets);
  hs.subset_hyp.assign(hs.subsets.size(), -1);
  std::map<std::vector<VoxelId>, int> seen;
  std::vector<std::size_t> first_subset;
  for (std::size_t s = 0; s < hs.subsets.size(); ++s) {
    auto [it, fresh] = seen.try_emplace(hs.subsets[s].members, static_cast<int>(first_subset.size()));
    if (fresh) first_subset.push_back(s);
    hs.subset_hyp[s] = it->second;
  }
  const std::size_t n = first_subset.size();
  hs.hyps.resize(n);
  std::vector<std::uint8_t> ok(n, 0);
  SolveReport local;
  SolveReport& rep = report ? *report : local;
  rep.stats.assign(n, {});
  rep.peak_bytes.assign(n, 0);
  rep.seconds.assign(n, 0.0);
  parallel_for(n, workers, [&](std::size_t h, unsigned) {
    const auto& sub = hs.subsets[first_subset[h]];
    const auto t0 = std::chrono::steady_clock::now();
    memory::PeakScope scope;
    std::vector<PointId> ids;
    for (auto m : sub.members) {
      const auto& pts = tree.voxel(m).points;
      ids.insert(ids.end(), pts.begin(), pts.end());
    }
    std::sort(ids.begin(), ids.end());
    try {
      hs.hyps[h] = extract_local(points, cameras, ids, sub.box, params, &rep.stats[h]);
      hs.hyps[h].subset_id = sub.id;
      ok[h] = 1;
    } catch (const Error&) {
      hs.hyps[h] = {};
    }
    rep.peak_bytes[h] = scope.peak_bytes();
    rep.seconds[h] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  // Failed member sets leave their subsets uncovered.
  for (auto& h : hs.subset_hyp)
    if (!ok[static_cast<std::size_t>(h)]) h = -1;
  rep.failed = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
  return hs;
}

namespace detail {

struct HypIndex {
  // Per hypothesis: triangle key -> separates-final flag.
  std::vector<std::unordered_map<TriangleKey, std::uint8_t, TriangleKeyHash>> keys;
  // Per voxel: distinct hypotheses of subsets containing it, ascending.
  std::vector<std::vector<int>> covering;
  // Per hypothesis: member voxels and inner points (union over subsets sharing it).
  std::vector<std::vector<VoxelId>> members;
  std::vector<std::vector<InnerPoint>> inner;
  std::vector<Box> region;  // per voxel: box around every subset containing it
};

inline HypIndex index_hypotheses(const HypothesisSet& hs, const Octree& tree) {
  HypIndex ix;
  ix.keys.resize(hs.hyps.size());
  for (std::size_t h = 0; h < hs.hyps.size(); ++h) {
    auto& m = ix.keys[h];
    m.reserve(hs.hyps[h].triangles.size());
    for (std::size_t i = 0; i < hs.hyps[h].triangles.size(); ++i)
      m.emplace(triangle_key(hs.hyps[h].triangles[i]),
                i < hs.hyps[h].separates_final.size() ? hs.hyps[h].separates_final[i] : 0);
  }
  ix.covering.resize(tree.voxels().size());
  ix.region.resize(tree.voxels().size());
  ix.members.resize(hs.hyps.size());
  ix.inner.resize(hs.hyps.size());
  for (std::size_t s = 0; s < hs.subsets.size(); ++s) {
    const auto& sub = hs.subsets[s];
    for (auto m : sub.members) ix.region[m].extend(sub.box);
    const int h = hs.subset_hyp[s];
    if (h < 0) continue;
    for (auto m : sub.members) ix.covering[m].push_back(h);
    ix.members[static_cast<std::size_t>(h)] = sub.members;
    for (const auto& ip : inner_points(tree, sub)) {
      auto& v = ix.inner[static_cast<std::size_t>(h)];
      const bool dup = std::any_of(v.begin(), v.end(), [&](const InnerPoint& q) { return q.position == ip.position; });
      if (!dup) v.push_back(ip);
    }
  }
  for (auto& c : ix.covering) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
  }
  return ix;
}

}  // namespace detail

/// Adds, per voxel, the triangles with all three vertices in that voxel that every
/// hypothesis covering the voxel contains. Returns the number added.
inline std::size_t collect_consistent(const HypothesisSet& hs, const Octree& tree, CombinedSolution& combined) {
  const auto ix = detail::index_hypotheses(hs, tree);
  std::size_t added = 0;
  for (const auto& vox : tree.voxels()) {
    const auto& cov = ix.covering[vox.id];
    if (cov.empty()) continue;
    const auto& first = hs.hyps[static_cast<std::size_t>(cov[0])];
    std::vector<std::pair<TriangleKey, Triangle>> agreed;
    for (const auto& t : first.triangles) {
      if (tree.voxel_of_point(t[0]) != vox.id || tree.voxel_of_point(t[1]) != vox.id ||
          tree.voxel_of_point(t[2]) != vox.id)
        continue;
      const auto k = triangle_key(t);
      bool all = true;
      for (std::size_t i = 1; i < cov.size() && all; ++i) all = ix.keys[static_cast<std::size_t>(cov[i])].count(k) != 0;
      if (all) agreed.push_back({k, t});
    }
    std::sort(agreed.begin(), agreed.end(), [](const auto& a, const auto& b) { return a.first.v < b.first.v; });
    for (const auto& [k, t] : agreed) added += try_add(combined, t);
  }
  return added;
}

/// Adds triangles spanning exactly two voxels that every hypothesis covering both
/// voxels contains, each time separating two final tetrahedra. Returns the number added.
inline std::size_t collect_cross_voxel(const HypothesisSet& hs, const Octree& tree, CombinedSolution& combined) {
  const auto ix = detail::index_hypotheses(hs, tree);
  std::unordered_map<TriangleKey, Triangle, TriangleKeyHash> candidates;
  std::unordered_map<TriangleKey, std::pair<VoxelId, VoxelId>, TriangleKeyHash> pair_of;
  for (const auto& h : hs.hyps)
    for (const auto& t : h.triangles) {
      std::array<VoxelId, 3> v{tree.voxel_of_point(t[0]), tree.voxel_of_point(t[1]), tree.voxel_of_point(t[2])};
      std::sort(v.begin(), v.end());
      const auto distinct = std::unique(v.begin(), v.end()) - v.begin();
      if (distinct != 2) continue;
      const auto k = triangle_key(t);
      if (candidates.emplace(k, t).second) pair_of[k] = {v[0], v[1]};
    }
  std::vector<std::pair<TriangleKey, Triangle>> accepted;
  for (const auto& [k, t] : candidates) {
    const auto [a, b] = pair_of[k];
    std::vector<int> both;
    std::set_intersection(ix.covering[a].begin(), ix.covering[a].end(), ix.covering[b].begin(),
                          ix.covering[b].end(), std::back_inserter(both));
    // Hypotheses whose subsets contain both voxels.
    both.erase(std::remove_if(both.begin(), both.end(),
                              [&](int h) {
                                const auto& m = ix.members[static_cast<std::size_t>(h)];
                                return !std::binary_search(m.begin(), m.end(), a) ||
                                       !std::binary_search(m.begin(), m.end(), b);
                              }),
               both.end());
    if (both.empty()) continue;
    bool ok = true;
    for (int h : both) {
      auto it = ix.keys[static_cast<std::size_t>(h)].find(k);
      if (it == ix.keys[static_cast<std::size_t>(h)].end() || !it->second) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.push_back({k, t});
  }
  std::sort(accepted.begin(), accepted.end(), [](const auto& x, const auto& y) { return x.first.v < y.first.v; });
  std::size_t added = 0;
  for (const auto& [k, t] : accepted) added += try_add(combined, t);
  return added;
}

// ---------------------------------------------------------------------------------
// Patches

struct Patch {
  std::uint32_t id = 0;
  std::uint32_t hypothesis = 0;
  std::vector<Triangle> triangles;
  std::vector<std::uint64_t> outer_edges;  // edges used by exactly one patch triangle
  Vec3 centroid;
  double centricity = 0.0;
};

/// Area-weighted centroid; plain vertex average when the area vanishes.
inline Vec3 patch_centroid(const std::vector<Triangle>& tris, const std::vector<Vec3>& pos) {
  Vec3 acc{0, 0, 0};
  double area = 0;
  for (const auto& t : tris) {
    const double a = triangle_area(pos[t[0]], pos[t[1]], pos[t[2]]);
    acc = acc + (pos[t[0]] + pos[t[1]] + pos[t[2]]) * (a / 3.0);
    area += a;
  }
  if (area > 0) return acc * (1.0 / area);
  acc = {0, 0, 0};
  for (const auto& t : tris) acc = acc + (pos[t[0]] + pos[t[1]] + pos[t[2]]) * (1.0 / 3.0);
  return acc * (1.0 / static_cast<double>(tris.size()));
}

/// 1 - |c - i*| / r with i* the nearest inner point and r the distance from i* to the
/// farthest corner of the voxel containing c, clamped to [0, 1]. Ties go to the first.
inline double centricity(Vec3 c, const std::vector<InnerPoint>& inner, const Box& voxel_of_c) {
  if (inner.empty()) return 0.0;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const double d = distance(c, inner[i].position);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const double r = voxel_of_c.farthest_corner_distance(inner[best].position);
  if (!(r > 0)) return best_d > 0 ? 0.0 : 1.0;
  return std::clamp(1.0 - best_d / r, 0.0, 1.0);
}

inline std::vector<std::uint64_t> outer_edges(const std::vector<Triangle>& tris) {
  std::unordered_map<std::uint64_t, int> count;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
  std::vector<std::uint64_t> out;
  for (const auto& [k, n] : count)
    if (n == 1) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

/// Edge-connected components of `tris` (input order kept inside each component;
/// components ordered by their first triangle).
inline std::vector<std::vector<Triangle>> edge_components(const std::vector<Triangle>& tris) {
  std::vector<std::uint32_t> parent(tris.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::unordered_map<std::uint64_t, std::uint32_t> first;
  first.reserve(tris.size() * 2);
  for (std::uint32_t i = 0; i < tris.size(); ++i)
    for (int e = 0; e < 3; ++e) {
      auto [it, fresh] = first.try_emplace(edge_key(tris[i][e], tris[i][(e + 1) % 3]), i);
      if (!fresh) {
        const auto a = find(i), b = find(it->second);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<std::vector<Triangle>> out;
  for (std::uint32_t i = 0; i < tris.size(); ++i) {
    const auto r = find(i);
    auto [it, fresh] = slot.try_emplace(r, out.size());
    if (fresh) out.emplace_back();
    out[it->second].push_back(tris[i]);
  }
  return out;
}

/// Hypothesis triangles missing from the view that could each be added on their own,
/// grouped into edge-connected patches. Centricity is left at its default.
inline std::vector<Patch> extract_patches(const SurfaceHypothesis& h, const SurfaceView& view,
                                          std::uint32_t hypothesis = 0) {
  std::vector<Triangle> cand;
  for (const auto& t : h.triangles)
    if (check_triangle(view, t) == Conflict::None) cand.push_back(t);
  std::vector<Patch> out;
  for (auto& comp : edge_components(cand)) {
    Patch p;
    p.id = static_cast<std::uint32_t>(out.size());
    p.hypothesis = hypothesis;
    p.triangles = std::move(comp);
    p.outer_edges = outer_edges(p.triangles);
    p.centroid = patch_centroid(p.triangles, view.positions());
    out.push_back(std::move(p));
  }
  return out;
}

/// Adds the whole patch iff none of its triangles is present, every outer edge closes an
/// existing boundary edge of the view, and every triangle passes the checks.
inline bool fit_full_patch(const Patch& p, Staging& view) {
  if (p.triangles.empty()) return false;
  std::vector<Triangle> around;
  for (auto k : p.outer_edges) {
    around.clear();
    view.edge_triangles(edge_first(k), edge_second(k), around);
    if (around.size() != 1) return false;
  }
  Staging trial(static_cast<const SurfaceView&>(view));
  for (const auto& t : p.triangles)
    if (!try_add(trial, t)) return false;
  for (const auto& t : trial.added()) view.add(t);
  return true;
}

/// Graph-cut selection over hole ring th (kept) and patch tp. selected[i] is set for
/// the tp triangles on the source side; cut is the min-cut value.
struct HoleFillSelection {
  std::vector<std::uint8_t> selected;
  double cut = 0.0;
};

inline HoleFillSelection holefill_select(const std::vector<Triangle>& th, const std::vector<Triangle>& tp,
                                         const std::vector<Vec3>& pos) {
  HoleFillSelection r;
  r.selected.assign(tp.size(), 0);
  if (tp.empty()) return r;
  const std::size_t n = th.size() + tp.size();
  auto tri = [&](std::size_t i) -> const Triangle& { return i < th.size() ? th[i] : tp[i - th.size()]; };
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> incident;
  for (std::size_t i = 0; i < n; ++i)
    for (int e = 0; e < 3; ++e) incident[edge_key(tri(i)[e], tri(i)[(e + 1) % 3])].push_back(static_cast<std::uint32_t>(i));
  FlowGraph g;
  g.add_nodes(n);
  std::vector<double> outer(n, 0.0);
  std::vector<std::uint64_t> keys;
  keys.reserve(incident.size());
  for (const auto& kv : incident) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  for (auto k : keys) {
    const auto& L = incident[k];
    const double len = edge_length(k, pos);
    if (L.size() == 1) {
      outer[L[0]] += len;
      continue;
    }
    for (std::size_t a = 0; a < L.size(); ++a)
      for (std::size_t b = a + 1; b < L.size(); ++b) {
        const auto x = L[a], y = L[b];
        const bool hx = x < th.size(), hy = y < th.size();
        if (hx && hy) continue;
        if (hx)
          g.add_arc(static_cast<int>(x), static_cast<int>(y), len, 0.0);
        else if (hy)
          g.add_arc(static_cast<int>(y), static_cast<int>(x), len, 0.0);
        else
          g.add_arc(static_cast<int>(x), static_cast<int>(y), len, len);
      }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double src = i < th.size() ? FlowGraph::kInfinite : 0.0;
    if (src > 0 || outer[i] > 0) g.set_terminal(static_cast<int>(i), src, outer[i]);
  }
  const auto cut = g.solve();
  r.cut = cut.flow;
  for (std::size_t j = 0; j < tp.size(); ++j) r.selected[j] = cut.labels[th.size() + j] == Side::Source;
  return r;
}

/// Combined triangles sharing an edge with the patch, ordered by key.
inline std::vector<Triangle> hole_ring(const std::vector<Triangle>& tp, const SurfaceView& view) {
  std::vector<std::pair<TriangleKey, Triangle>> ring;
  std::unordered_set<TriangleKey, TriangleKeyHash> seen;
  std::vector<Triangle> around;
  for (const auto& t : tp)
    for (int e = 0; e < 3; ++e) {
      around.clear();
      view.edge_triangles(t[e], t[(e + 1) % 3], around);
      for (const auto& o : around)
        if (seen.insert(triangle_key(o)).second) ring.push_back({triangle_key(o), o});
    }
  std::sort(ring.begin(), ring.end(), [](const auto& a, const auto& b) { return a.first.v < b.first.v; });
  std::vector<Triangle> out;
  for (auto& [k, t] : ring) out.push_back(t);
  return out;
}

/// Graph-cut hole filling with patch p. The selected triangles are added all together
/// or not at all; returns what was added.
inline std::vector<Triangle> holefill_graphcut(const Patch& p, Staging& view) {
  std::vector<Triangle> tp;
  for (const auto& t : p.triangles)
    if (!view.contains(t)) tp.push_back(t);
  const auto th = hole_ring(tp, view);
  if (th.empty()) return {};
  const auto sel = holefill_select(th, tp, view.positions());
  Staging trial(static_cast<const SurfaceView&>(view));
  for (std::size_t i = 0; i < tp.size(); ++i)
    if (sel.selected[i] && !try_add(trial, tp[i])) return {};
  std::vector<Triangle> added = trial.added();
  for (const auto& t : added) view.add(t);
  return added;
}

// ---------------------------------------------------------------------------------
// Stages

struct FuseParams {
  std::uint64_t seed = 1;  // tie-break order among equally central patches
  unsigned workers = 1;
};

struct StageReport {
  std::string name;
  std::size_t added = 0;
  std::size_t triangles = 0;
  std::size_t boundary_edges = 0;
  double boundary_length = 0.0;
  std::size_t patches = 0;
  std::size_t accepted = 0;
  std::size_t rounds = 0;
  double seconds = 0.0;
};

namespace detail {

/// Every hypothesis' patches against `view`, most central first. Equal scores keep a
/// seeded random order.
inline std::vector<Patch> ranked_patches(const HypothesisSet& hs, const HypIndex& ix, const Octree& tree,
                                         const SurfaceView& view, const FuseParams& params, std::uint64_t salt) {
  std::vector<std::vector<Patch>> per(hs.hyps.size());
  parallel_for(hs.hyps.size(), params.workers, [&](std::size_t h, unsigned) {
    if (ix.members[h].empty()) return;  // failed or unused
    per[h] = extract_patches(hs.hyps[h], view, static_cast<std::uint32_t>(h));
    for (auto& p : per[h])
      p.centricity = centricity(p.centroid, ix.inner[h], tree.voxel(tree.leaf_containing(p.centroid)).box);
  });
  std::vector<Patch> all;
  for (auto& v : per)
    for (auto& p : v) all.push_back(std::move(p));
  std::mt19937_64 rng(params.seed ^ (0x9e3779b97f4a7c15ull * (salt + 1)));
  std::shuffle(all.begin(), all.end(), rng);
  std::stable_sort(all.begin(), all.end(), [](const Patch& a, const Patch& b) { return a.centricity > b.centricity; });
  return all;
}

/// Offers patches in rank order. A round takes every patch whose voxels are not locked
/// by a patch ranked before it that is still waiting; those run in parallel against
/// the frozen combined solution and are committed in rank order. The outcome equals a
/// sequential pass and does not depend on the worker count.
template <class Work>
StageReport run_ranked_stage(const std::string& name, const std::vector<Patch>& patches, const Octree& tree,
                             CombinedSolution& combined, const FuseParams& params, Work work) {
  const auto t0 = std::chrono::steady_clock::now();
  StageReport rep;
  rep.name = name;
  rep.patches = patches.size();
  const auto& pos = combined.positions();
  std::vector<std::vector<VoxelId>> locks(patches.size());
  parallel_for(patches.size(), params.workers, [&](std::size_t i, unsigned) {
    Box b;
    for (const auto& t : patches[i].triangles) b.extend(triangle_box(t, pos));
    locks[i] = tree.leaves_overlapping(b);
  });

  const std::size_t before = combined.size();
  std::vector<std::size_t> pending(patches.size());
  std::iota(pending.begin(), pending.end(), std::size_t{0});
  std::vector<std::uint8_t> held(tree.voxels().size(), 0);
  while (!pending.empty()) {
    std::fill(held.begin(), held.end(), 0);
    std::vector<std::size_t> round, rest;
    for (auto i : pending) {
      bool free = true;
      for (auto v : locks[i]) free = free && !held[v];
      (free ? round : rest).push_back(i);
      for (auto v : locks[i]) held[v] = 1;
    }
    pending.swap(rest);
    ++rep.rounds;
    std::vector<std::vector<Triangle>> added(round.size());
    std::vector<std::uint8_t> accepted(round.size(), 0);
    parallel_for(round.size(), params.workers, [&](std::size_t k, unsigned) {
      Staging view(combined);
      accepted[k] = work(patches[round[k]], view);
      added[k] = view.added();
    });
    for (std::size_t k = 0; k < round.size(); ++k) {
      rep.accepted += accepted[k];
      for (const auto& t : added[k])
        if (!try_add(combined, t)) throw Error("voxel lock violation while committing " + name);
    }
  }
  rep.added = combined.size() - before;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline void finish_report(StageReport& r, const CombinedSolution& c) {
  r.triangles = c.size();
  r.boundary_edges = c.boundary_edge_count();
  r.boundary_length = c.boundary_length();
}

}  // namespace detail

/// All three fusion stages. `checkpoint` (optional) sees the combined solution after each.
inline std::vector<StageReport> fuse_hypotheses(
    const HypothesisSet& hs, const Octree& tree, CombinedSolution& combined, const FuseParams& params,
    const std::function<void(int, const std::string&, const CombinedSolution&)>& checkpoint = {}) {
  const auto ix = detail::index_hypotheses(hs, tree);
  std::vector<StageReport> reports;

  {
    const auto t0 = std::chrono::steady_clock::now();
    StageReport r;
    r.name = "consistency";
    r.added = collect_consistent(hs, tree, combined);
    r.added += collect_cross_voxel(hs, tree, combined);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::finish_report(r, combined);
    reports.push_back(r);
    if (checkpoint) checkpoint(1, r.name, combined);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto patches = detail::ranked_patches(hs, ix, tree, combined, params, 2);
    auto r = detail::run_ranked_stage("full-patch", patches, tree, combined, params,
                                      [](const Patch& p, Staging& view) { return fit_full_patch(p, view); });
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::finish_report(r, combined);
    reports.push_back(r);
    if (checkpoint) checkpoint(2, r.name, combined);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto patches = detail::ranked_patches(hs, ix, tree, combined, params, 3);
    auto r = detail::run_ranked_stage("hole-fill", patches, tree, combined, params, [](const Patch& p, Staging& view) {
      Patch q = p;
      q.triangles.erase(std::remove_if(q.triangles.begin(), q.triangles.end(),
                                       [&](const Triangle& t) { return check_triangle(view, t) != Conflict::None; }),
                        q.triangles.end());
      return !q.triangles.empty() && !holefill_graphcut(q, view).empty();
    });
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail::finish_report(r, combined);
    reports.push_back(r);
    if (checkpoint) checkpoint(3, r.name, combined);
  }
  return reports;
}

}  // namespace octomesh
