#pragma once

// Scale-aware point fusion before meshing and HC-Laplacian smoothing after.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_map>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "octomesh/geometry.hpp"
#include "octomesh/octree.hpp"
#include "octomesh/parallel.hpp"

namespace octomesh {

struct FusionParams {
  std::size_t k = 20;
  double radius_factor = 3.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (k < 1) throw Error("fusion k must be at least 1");
    if (!(radius_factor > 0.0) || !std::isfinite(radius_factor)) throw Error("fusion radius factor must be positive");
  }
};

/// Order in which the points of voxel `voxel` are drawn.
inline std::vector<PointId> fusion_draw_order(std::vector<PointId> ids, std::uint64_t seed, VoxelId voxel) {
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 g(seed * 0x9e3779b97f4a7c15ull + voxel + 1);
  std::shuffle(ids.begin(), ids.end(), g);
  return ids;
}

/// Merges `group` (head first) into one point: 1/scale^2 weighted position, smallest
/// scale, union of cameras in ascending order.
inline VisPoint merge_points(const std::vector<VisPoint>& points, const std::vector<PointId>& group) {
  VisPoint out;
  Vec3 acc{0, 0, 0};
  double wsum = 0;
  out.scale = points[group[0]].scale;
  for (auto id : group) {
    const auto& p = points[id];
    const double w = 1.0 / (p.scale * p.scale);
    acc = acc + p.position * w;
    wsum += w;
    out.scale = std::min(out.scale, p.scale);
    out.cameras.insert(out.cameras.end(), p.cameras.begin(), p.cameras.end());
  }
  out.position = group.size() == 1 ? points[group[0]].position : acc * (1.0 / wsum);
  std::sort(out.cameras.begin(), out.cameras.end());
  out.cameras.erase(std::unique(out.cameras.begin(), out.cameras.end()), out.cameras.end());
  return out;
}

/// Fusion of the given ids (one voxel). Each drawn unfused point absorbs up to k
/// nearest unfused points within radius_factor times its scale.
inline std::vector<VisPoint> fuse_voxel(const std::vector<VisPoint>& points, const std::vector<PointId>& draw,
                                        const FusionParams& params) {
  namespace bg = boost::geometry;
  namespace bgi = boost::geometry::index;
  using P = bg::model::point<double, 3, bg::cs::cartesian>;
  using V = std::pair<P, PointId>;
  auto pt = [&](PointId i) {
    const auto& q = points[i].position;
    return P(q.x, q.y, q.z);
  };
  std::vector<V> values;
  values.reserve(draw.size());
  for (auto i : draw) values.push_back({pt(i), i});
  bgi::rtree<V, bgi::rstar<16>> index(values.begin(), values.end());

  std::vector<VisPoint> out;
  std::vector<V> hits;
  std::vector<std::pair<double, PointId>> near;
  std::vector<PointId> group;
  for (auto i : draw) {
    if (index.remove(V{pt(i), i}) == 0) continue;  // already fused
    const double r = params.radius_factor * points[i].scale;
    hits.clear();
    index.query(bgi::nearest(pt(i), static_cast<unsigned>(params.k)), std::back_inserter(hits));
    near.clear();
    for (const auto& h : hits) {
      const double d = distance(points[h.second].position, points[i].position);
      if (d <= r) near.push_back({d, h.second});
    }
    std::sort(near.begin(), near.end());
    group.assign(1, i);
    for (const auto& [d, j] : near) {
      group.push_back(j);
      index.remove(V{pt(j), j});
    }
    out.push_back(merge_points(points, group));
  }
  return out;
}

/// Per-voxel fusion over the whole cloud. Output order: by voxel id, then draw order.
inline std::vector<VisPoint> fuse_points(const std::vector<VisPoint>& points, const FusionParams& params,
                                         const Octree& tree, unsigned workers = 1) {
  params.validate();
  const auto& voxels = tree.voxels();
  std::vector<std::vector<VisPoint>> parts(voxels.size());
  parallel_for(voxels.size(), workers, [&](std::size_t v, unsigned) {
    if (voxels[v].points.empty()) return;
    parts[v] = fuse_voxel(points, fusion_draw_order(voxels[v].points, params.seed, static_cast<VoxelId>(v)), params);
  });
  std::vector<VisPoint> out;
  for (auto& p : parts) {
    for (auto& q : p) out.push_back(std::move(q));
    p.clear();
    p.shrink_to_fit();
  }
  return out;
}

struct SmoothParams {
  int iterations = 2;
  double alpha = 0.0;
  double beta = 0.5;
  bool fix_boundary = true;
};

/// One-ring neighbour lists from the triangles.
inline std::vector<std::vector<std::uint32_t>> vertex_rings(std::size_t n, const std::vector<Triangle>& tris) {
  std::vector<std::vector<std::uint32_t>> ring(n);
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) {
      ring[t[e]].push_back(t[(e + 1) % 3]);
      ring[t[(e + 1) % 3]].push_back(t[e]);
    }
  for (auto& r : ring) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }
  return ring;
}

/// Vertices on an edge with a single incident triangle.
inline std::vector<std::uint8_t> boundary_vertices(std::size_t n, const std::vector<Triangle>& tris) {
  std::unordered_map<std::uint64_t, int> count;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
  std::vector<std::uint8_t> out(n, 0);
  for (const auto& [k, c] : count)
    if (c == 1) out[edge_first(k)] = out[edge_second(k)] = 1;
  return out;
}

/// HC-Laplacian smoothing on vertex positions; connectivity is untouched.
inline std::vector<Vec3> hc_smooth(const std::vector<Vec3>& original, const std::vector<Triangle>& tris,
                                   const SmoothParams& sp = {}) {
  if (sp.iterations < 0) throw Error("smoothing iterations must be non-negative");
  const std::size_t n = original.size();
  const auto ring = vertex_rings(n, tris);
  std::vector<std::uint8_t> fixed(n, 0);
  if (sp.fix_boundary) fixed = boundary_vertices(n, tris);
  std::vector<Vec3> p = original, q(n), b(n);
  for (int it = 0; it < sp.iterations; ++it) {
    q = p;
    for (std::size_t i = 0; i < n; ++i) {
      if (ring[i].empty() || fixed[i]) {
        b[i] = {0, 0, 0};
        continue;
      }
      Vec3 m{0, 0, 0};
      for (auto j : ring[i]) m = m + q[j];
      p[i] = m * (1.0 / static_cast<double>(ring[i].size()));
      b[i] = p[i] - (original[i] * sp.alpha + q[i] * (1.0 - sp.alpha));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (ring[i].empty() || fixed[i]) continue;
      Vec3 m{0, 0, 0};
      for (auto j : ring[i]) m = m + b[j];
      p[i] = p[i] - (b[i] * sp.beta + m * ((1.0 - sp.beta) / static_cast<double>(ring[i].size())));
    }
  }
  return p;
}

inline IndexedMesh hc_smooth(const IndexedMesh& mesh, const SmoothParams& sp = {}) {
  IndexedMesh out;
  out.vertices = hc_smooth(mesh.vertices, mesh.triangles(), sp);
  for (const auto& t : mesh.triangles()) out.add_triangle(t);
  return out;
}

}  // namespace octomesh
