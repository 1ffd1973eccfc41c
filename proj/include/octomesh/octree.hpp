#pragma once

// Unrestricted point octree and its corner-keyed voxel subsets.
//
// Every position is quantized once to an integer lattice at max_depth resolution;
// all subdivision and all corner identities are decided on those integers.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "octomesh/geometry.hpp"

namespace octomesh {

using VoxelId = std::uint32_t;

struct LatticePoint {
  std::uint64_t x = 0, y = 0, z = 0;
  std::uint64_t operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend auto operator<=>(const LatticePoint&, const LatticePoint&) = default;
};

/// A leaf of the octree.
struct Voxel {
  VoxelId id = 0;
  int depth = 0;
  LatticePoint origin;          // lower corner, max_depth lattice units
  std::uint64_t size = 0;       // side length, max_depth lattice units
  Box box;
  std::vector<PointId> points;
};

struct VoxelSubset {
  std::uint32_t id = 0;
  LatticePoint corner;
  std::vector<VoxelId> members;  // ascending
  Box box;                       // union of the member boxes

  bool contains(VoxelId v) const { return std::binary_search(members.begin(), members.end(), v); }
};

enum class InnerPointKind : std::uint8_t { VoxelCenter, FaceCenter, EdgeMidpoint, Corner };

struct InnerPoint {
  InnerPointKind kind;
  Vec3 position;
};

struct OctreeParams {
  std::size_t leaf_size = 128000;
  int max_depth = 40;
};

class Octree {
public:
  /// Builds the tree over `positions`; point ids are indices into that span.
  static Octree build(std::span<const Vec3> positions, const OctreeParams& params = {}) {
    if (positions.empty()) throw Error("octree: empty point set");
    if (params.leaf_size < 4) throw Error("octree: leaf_size must be at least 4");
    if (params.max_depth < 1 || params.max_depth > 60) throw Error("octree: max_depth must be in [1, 60]");
    Octree t;
    t.max_depth_ = params.max_depth;
    t.leaf_size_ = params.leaf_size;
    Box bb;
    for (const auto& p : positions) {
      if (!is_finite(p)) throw Error("octree: non-finite point");
      bb.extend(p);
    }
    const Vec3 ext = bb.extent();
    double side = std::max({ext.x, ext.y, ext.z});
    if (!(side > 0.0)) side = 1.0;
    t.origin_ = bb.lo;
    t.side_ = side;
    const std::uint64_t full = std::uint64_t{1} << t.max_depth_;
    t.quantized_.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      auto q = [&](int a) {
        const double f = (positions[i][a] - t.origin_[a]) / side * static_cast<double>(full);
        if (!(f > 0.0)) return std::uint64_t{0};
        const auto v = static_cast<std::uint64_t>(f);
        return std::min(v, full - 1);
      };
      t.quantized_[i] = {q(0), q(1), q(2)};
    }
    std::vector<PointId> ids(positions.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<PointId>(i);
    t.nodes_.push_back({});
    t.subdivide(0, 0, LatticePoint{}, std::move(ids));
    t.point_voxel_.assign(positions.size(), 0);
    for (const auto& v : t.voxels_)
      for (auto p : v.points) t.point_voxel_[p] = v.id;
    return t;
  }

  static Octree build(const std::vector<VisPoint>& points, const OctreeParams& params = {}) {
    std::vector<Vec3> pos(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) pos[i] = points[i].position;
    return build(pos, params);
  }

  int max_depth() const { return max_depth_; }
  std::size_t leaf_size() const { return leaf_size_; }
  Box root_box() const { return {origin_, origin_ + Vec3{side_, side_, side_}}; }
  const std::vector<Voxel>& voxels() const { return voxels_; }
  const Voxel& voxel(VoxelId v) const { return voxels_.at(v); }
  VoxelId voxel_of_point(PointId p) const { return point_voxel_.at(p); }
  std::size_t point_count() const { return point_voxel_.size(); }
  /// Leaves holding more than leaf_size points because max_depth was reached.
  const std::vector<VoxelId>& oversized() const { return oversized_; }

  /// Leaf containing the max-resolution lattice cell `cell`.
  VoxelId leaf_at(const LatticePoint& cell) const {
    std::int32_t n = 0;
    int depth = 0;
    while (nodes_[n].first_child >= 0) {
      const int bit = max_depth_ - 1 - depth;
      const int child = static_cast<int>(((cell.x >> bit) & 1u) | (((cell.y >> bit) & 1u) << 1) |
                                         (((cell.z >> bit) & 1u) << 2));
      n = nodes_[n].first_child + child;
      ++depth;
    }
    return static_cast<VoxelId>(nodes_[n].voxel);
  }

  /// Leaf whose half-open cell contains p; points outside the root are clamped.
  VoxelId leaf_containing(Vec3 p) const {
    const std::uint64_t full = std::uint64_t{1} << max_depth_;
    auto q = [&](int a) {
      const double f = (p[a] - origin_[a]) / side_ * static_cast<double>(full);
      if (!(f > 0.0)) return std::uint64_t{0};
      return std::min(static_cast<std::uint64_t>(f), full - 1);
    };
    return leaf_at({q(0), q(1), q(2)});
  }

  /// Leaves whose closed box overlaps `box`, ascending.
  std::vector<VoxelId> leaves_overlapping(const Box& box) const {
    std::vector<VoxelId> out;
    collect_overlapping(0, box, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Lattice point (max_depth units) to scene coordinates.
  Vec3 to_scene(const LatticePoint& l) const {
    const double unit = side_ / static_cast<double>(std::uint64_t{1} << max_depth_);
    return origin_ + Vec3{static_cast<double>(l.x) * unit, static_cast<double>(l.y) * unit,
                          static_cast<double>(l.z) * unit};
  }
  double lattice_unit() const { return side_ / static_cast<double>(std::uint64_t{1} << max_depth_); }

  /// Non-empty leaves whose closed box contains the lattice corner, ascending.
  std::vector<VoxelId> leaves_touching(const LatticePoint& corner) const {
    std::vector<VoxelId> out;
    for (const auto& m : octant_members(corner))
      if (m && !voxels_[*m].points.empty()) out.push_back(*m);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Leaf occupying each of the 8 octants around a lattice corner (bit 0 = +x side,
  /// bit 1 = +y, bit 2 = +z); empty optional outside the root.
  std::array<std::optional<VoxelId>, 8> octant_members(const LatticePoint& c) const {
    std::array<std::optional<VoxelId>, 8> out;
    const std::uint64_t full = std::uint64_t{1} << max_depth_;
    for (int o = 0; o < 8; ++o) {
      LatticePoint cell;
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const bool plus = (o >> a) & 1;
        const std::uint64_t ca = c[a];
        std::uint64_t v;
        if (plus) {
          if (ca >= full) inside = false;
          v = ca;
        } else {
          if (ca == 0) inside = false;
          v = ca - 1;
        }
        (a == 0 ? cell.x : a == 1 ? cell.y : cell.z) = v;
      }
      if (inside) out[o] = leaf_at(cell);
    }
    return out;
  }

private:
  struct Node {
    std::int32_t first_child = -1;
    std::int32_t voxel = -1;
    int depth = 0;
    Box box;
  };

  void subdivide(std::int32_t node, int depth, LatticePoint origin, std::vector<PointId> ids) {
    const std::uint64_t size = std::uint64_t{1} << (max_depth_ - depth);
    Node& nd = nodes_[node];
    nd.depth = depth;
    nd.box = {to_scene(origin), to_scene({origin.x + size, origin.y + size, origin.z + size})};
    if (ids.size() <= leaf_size_ || depth == max_depth_) {
      Voxel v;
      v.id = static_cast<VoxelId>(voxels_.size());
      v.depth = depth;
      v.origin = origin;
      v.size = size;
      v.box = nd.box;
      v.points = std::move(ids);
      std::sort(v.points.begin(), v.points.end());
      if (v.points.size() > leaf_size_) oversized_.push_back(v.id);
      nodes_[node].voxel = static_cast<std::int32_t>(v.id);
      voxels_.push_back(std::move(v));
      return;
    }
    const int bit = max_depth_ - 1 - depth;
    std::array<std::vector<PointId>, 8> parts;
    for (auto p : ids) {
      const auto& q = quantized_[p];
      const int child = static_cast<int>(((q.x >> bit) & 1u) | (((q.y >> bit) & 1u) << 1) |
                                         (((q.z >> bit) & 1u) << 2));
      parts[child].push_back(p);
    }
    ids.clear();
    ids.shrink_to_fit();
    const auto first = static_cast<std::int32_t>(nodes_.size());
    nodes_[node].first_child = first;
    nodes_.resize(nodes_.size() + 8);
    const std::uint64_t half = size / 2;
    for (int c = 0; c < 8; ++c) {
      LatticePoint o{origin.x + ((c & 1) ? half : 0), origin.y + ((c & 2) ? half : 0),
                     origin.z + ((c & 4) ? half : 0)};
      subdivide(first + c, depth + 1, o, std::move(parts[c]));
    }
  }

  void collect_overlapping(std::int32_t n, const Box& box, std::vector<VoxelId>& out) const {
    const Node& nd = nodes_[n];
    if (!nd.box.overlaps(box)) return;
    if (nd.first_child < 0) {
      out.push_back(static_cast<VoxelId>(nd.voxel));
      return;
    }
    for (int c = 0; c < 8; ++c) collect_overlapping(nd.first_child + c, box, out);
  }

  int max_depth_ = 40;
  std::size_t leaf_size_ = 128000;
  Vec3 origin_;
  double side_ = 1.0;
  std::vector<LatticePoint> quantized_;
  std::vector<Node> nodes_;
  std::vector<Voxel> voxels_;
  std::vector<VoxelId> point_voxel_;
  std::vector<VoxelId> oversized_;
};

/// One subset per lattice corner of a non-empty leaf: the non-empty leaves whose closed
/// boxes contain that corner (corner, edge or face contact). Distinct corners can yield
/// the same member set; callers that solve per member set should share the work.
inline std::vector<VoxelSubset> corner_subsets(const Octree& tree) {
  std::set<LatticePoint> corners;
  for (const auto& v : tree.voxels()) {
    if (v.points.empty()) continue;
    for (int c = 0; c < 8; ++c)
      corners.insert({v.origin.x + ((c & 1) ? v.size : 0), v.origin.y + ((c & 2) ? v.size : 0),
                      v.origin.z + ((c & 4) ? v.size : 0)});
  }
  std::vector<VoxelSubset> out;
  out.reserve(corners.size());
  for (const auto& c : corners) {
    VoxelSubset s;
    s.corner = c;
    s.members = tree.leaves_touching(c);
    if (s.members.empty()) continue;
    for (auto m : s.members) s.box.extend(tree.voxel(m).box);
    s.id = static_cast<std::uint32_t>(out.size());
    out.push_back(std::move(s));
  }
  return out;
}

/// Reference points of a subset: voxel centers, shared-face centers, midpoints of edges
/// shared by four members and the corner itself when eight members meet there. For
/// members of different sizes the face and edge points sit on the smaller member.
inline std::vector<InnerPoint> inner_points(const Octree& tree, const VoxelSubset& subset) {
  std::vector<InnerPoint> out;
  for (auto m : subset.members) out.push_back({InnerPointKind::VoxelCenter, tree.voxel(m).box.center()});

  std::array<std::optional<VoxelId>, 8> oct = tree.octant_members(subset.corner);
  for (auto& o : oct)
    if (o && !subset.contains(*o)) o.reset();
  const Vec3 c = tree.to_scene(subset.corner);

  std::set<std::pair<VoxelId, VoxelId>> faces;
  for (int o1 = 0; o1 < 8; ++o1)
    for (int axis = 0; axis < 3; ++axis) {
      const int o2 = o1 ^ (1 << axis);
      if (o2 < o1 || !oct[o1] || !oct[o2] || *oct[o1] == *oct[o2]) continue;
      const auto a = std::min(*oct[o1], *oct[o2]), b = std::max(*oct[o1], *oct[o2]);
      if (!faces.insert({a, b}).second) continue;
      const Voxel& va = tree.voxel(a);
      const Voxel& vb = tree.voxel(b);
      const Voxel& small = va.size <= vb.size ? va : vb;
      Vec3 p = small.box.center();
      p[axis] = c[axis];
      out.push_back({InnerPointKind::FaceCenter, p});
    }

  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side) {
      std::vector<VoxelId> around;
      for (int o = 0; o < 8; ++o)
        if (((o >> axis) & 1) == side && oct[o]) around.push_back(*oct[o]);
      std::sort(around.begin(), around.end());
      if (around.size() != 4 || std::unique(around.begin(), around.end()) != around.end()) continue;
      std::uint64_t smallest = tree.voxel(around[0]).size;
      for (auto m : around) smallest = std::min(smallest, tree.voxel(m).size);
      Vec3 p = c;
      const double half = 0.5 * static_cast<double>(smallest) * tree.lattice_unit();
      p[axis] += side ? half : -half;
      out.push_back({InnerPointKind::EdgeMidpoint, p});
    }

  std::set<VoxelId> all;
  bool full = true;
  for (const auto& o : oct) {
    if (!o) full = false;
    else all.insert(*o);
  }
  if (full && all.size() == 8) out.push_back({InnerPointKind::Corner, c});
  return out;
}

}  // namespace octomesh
