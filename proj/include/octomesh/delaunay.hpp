#pragma once

// Incremental Delaunay tetrahedralization with a symbolic infinite vertex.
//
// Cells are stored with positive orientation. For an infinite cell, replacing the
// infinite vertex by any point strictly outside its hull facet gives a positive
// orientation. Ties in the empty-sphere test are broken by insphere_sos, keyed on the
// caller-provided global keys, so the complex does not depend on insertion order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "octomesh/geometry.hpp"
#include "octomesh/predicates.hpp"

namespace octomesh {

class DegenerateInput : public Error {
public:
  using Error::Error;
};

using CellId = std::int32_t;
using VertexId = std::int32_t;
inline constexpr VertexId kInfiniteVertex = -1;
inline constexpr CellId kNoCell = -1;

struct Cell {
  std::array<VertexId, 4> v{};
  std::array<CellId, 4> n{kNoCell, kNoCell, kNoCell, kNoCell};
};

namespace detail {
// Facet opposite vertex k, listed so its normal points out of the cell.
inline constexpr int kFacet[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
}  // namespace detail

class Tetrahedralization {
public:
  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<std::uint64_t>& keys() const { return keys_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(CellId c) const { return cells_[static_cast<std::size_t>(c)]; }
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t vertex_count() const { return points_.size(); }
  Vec3 point(VertexId v) const { return points_[static_cast<std::size_t>(v)]; }

  bool is_infinite(CellId c) const { return infinite_index(c) >= 0; }
  int infinite_index(CellId c) const {
    const auto& v = cell(c).v;
    for (int i = 0; i < 4; ++i)
      if (v[i] == kInfiniteVertex) return i;
    return -1;
  }
  std::size_t finite_cell_count() const {
    std::size_t n = 0;
    for (CellId c = 0; c < static_cast<CellId>(cells_.size()); ++c) n += !is_infinite(c);
    return n;
  }

  /// Input index whose position this vertex duplicates, or the vertex itself.
  VertexId representative(VertexId v) const { return representative_[static_cast<std::size_t>(v)]; }
  CellId incident_cell(VertexId v) const { return vertex_cell_[static_cast<std::size_t>(representative(v))]; }

  /// Vertices of facet k of cell c, oriented away from the cell.
  std::array<VertexId, 3> facet(CellId c, int k) const {
    const auto& v = cell(c).v;
    return {v[detail::kFacet[k][0]], v[detail::kFacet[k][1]], v[detail::kFacet[k][2]]};
  }
  bool facet_is_finite(CellId c, int k) const {
    for (auto v : facet(c, k))
      if (v == kInfiniteVertex) return false;
    return true;
  }
  /// Index of c within the neighbor list of its k-th neighbor.
  int mirror_index(CellId c, int k) const {
    const CellId n = cell(c).n[k];
    for (int i = 0; i < 4; ++i)
      if (cell(n).n[i] == c) return i;
    throw Error("broken cell adjacency");
  }
  int vertex_index(CellId c, VertexId v) const {
    for (int i = 0; i < 4; ++i)
      if (cell(c).v[i] == v) return i;
    return -1;
  }

  /// All cells incident to vertex v.
  std::vector<CellId> star(VertexId v) const {
    v = representative(v);
    std::vector<CellId> out;
    const CellId start = vertex_cell_[static_cast<std::size_t>(v)];
    if (start == kNoCell) return out;
    // Per-thread visit stamps keep this linear in the star size.
    thread_local std::vector<std::uint32_t> seen;
    thread_local std::uint32_t stamp = 0;
    if (seen.size() < cells_.size()) seen.resize(cells_.size(), 0);
    if (++stamp == 0) {
      std::fill(seen.begin(), seen.end(), 0);
      stamp = 1;
    }
    out.push_back(start);
    seen[static_cast<std::size_t>(start)] = stamp;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Cell& c = cell(out[i]);
      for (int k = 0; k < 4; ++k) {
        if (c.v[k] == v) continue;
        const CellId n = c.n[k];
        if (seen[static_cast<std::size_t>(n)] == stamp) continue;
        seen[static_cast<std::size_t>(n)] = stamp;
        out.push_back(n);
      }
    }
    return out;
  }

  /// True iff the closed circumsphere of finite cell c lies inside the closed box.
  bool is_final(CellId c, const Box& box) const {
    if (is_infinite(c)) return false;
    long double center[3], radius;
    circumsphere(c, center, radius);
    for (int a = 0; a < 3; ++a)
      if (center[a] - radius < static_cast<long double>(box.lo[a]) ||
          center[a] + radius > static_cast<long double>(box.hi[a]))
        return false;
    return true;
  }

  void circumsphere(CellId c, long double center[3], long double& radius) const {
    const auto& v = cell(c).v;
    const Vec3 a = point(v[0]);
    long double r[3][3];
    for (int i = 0; i < 3; ++i) {
      const Vec3 p = point(v[i + 1]);
      r[i][0] = static_cast<long double>(p.x) - a.x;
      r[i][1] = static_cast<long double>(p.y) - a.y;
      r[i][2] = static_cast<long double>(p.z) - a.z;
    }
    auto crs = [](const long double* x, const long double* y, long double* out) {
      out[0] = x[1] * y[2] - x[2] * y[1];
      out[1] = x[2] * y[0] - x[0] * y[2];
      out[2] = x[0] * y[1] - x[1] * y[0];
    };
    long double cd[3], db[3], bc[3];
    crs(r[1], r[2], cd);
    crs(r[2], r[0], db);
    crs(r[0], r[1], bc);
    const long double denom = 2.0L * (r[0][0] * cd[0] + r[0][1] * cd[1] + r[0][2] * cd[2]);
    long double len[3];
    for (int i = 0; i < 3; ++i) len[i] = r[i][0] * r[i][0] + r[i][1] * r[i][1] + r[i][2] * r[i][2];
    long double off[3];
    for (int a2 = 0; a2 < 3; ++a2) off[a2] = (len[0] * cd[a2] + len[1] * db[a2] + len[2] * bc[a2]) / denom;
    radius = std::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
    center[0] = a.x + off[0];
    center[1] = a.y + off[1];
    center[2] = a.z + off[2];
  }

  /// Throws if adjacency is not involutive or a finite cell is not positively oriented.
  void validate() const {
    for (CellId c = 0; c < static_cast<CellId>(cells_.size()); ++c) {
      const Cell& cc = cell(c);
      for (int k = 0; k < 4; ++k) {
        const CellId n = cc.n[k];
        if (n < 0 || n >= static_cast<CellId>(cells_.size())) throw Error("dangling neighbor");
        const int m = mirror_index(c, k);
        auto f1 = facet(c, k), f2 = facet(n, m);
        std::sort(f1.begin(), f1.end());
        std::sort(f2.begin(), f2.end());
        if (f1 != f2) throw Error("neighbors do not share a facet");
      }
      if (!is_infinite(c) && orient3d(point(cc.v[0]), point(cc.v[1]), point(cc.v[2]), point(cc.v[3])) <= 0)
        throw Error("cell is not positively oriented");
    }
  }

private:
  friend class DelaunayBuilder;
  std::vector<Vec3> points_;
  std::vector<std::uint64_t> keys_;
  std::vector<Cell> cells_;
  std::vector<VertexId> representative_;
  std::vector<CellId> vertex_cell_;
};

class DelaunayBuilder {
public:
  DelaunayBuilder(std::span<const Vec3> pts, std::span<const std::uint64_t> keys) {
    if (pts.size() < 4) throw DegenerateInput("fewer than 4 points");
    if (!keys.empty() && keys.size() != pts.size()) throw Error("key count does not match point count");
    t_.points_.assign(pts.begin(), pts.end());
    for (const auto& p : t_.points_)
      if (!is_finite(p)) throw Error("non-finite point");
    if (keys.empty()) {
      t_.keys_.resize(pts.size());
      std::iota(t_.keys_.begin(), t_.keys_.end(), std::uint64_t{0});
    } else {
      t_.keys_.assign(keys.begin(), keys.end());
    }
    t_.representative_.resize(pts.size());
    std::iota(t_.representative_.begin(), t_.representative_.end(), 0);
    t_.vertex_cell_.assign(pts.size(), kNoCell);
  }

  Tetrahedralization run() {
    const std::vector<VertexId> order = spatial_order();
    std::array<VertexId, 4> init = initial_simplex(order);
    make_initial(init);
    for (VertexId v : order) {
      if (v == init[0] || v == init[1] || v == init[2] || v == init[3]) continue;
      insert(v);
    }
    compact();
    return std::move(t_);
  }

private:
  Vec3 P(VertexId v) const { return t_.points_[static_cast<std::size_t>(v)]; }

  std::vector<VertexId> spatial_order() const {
    Box bb;
    for (const auto& p : t_.points_) bb.extend(p);
    const Vec3 ext = bb.extent();
    const double side = std::max({ext.x, ext.y, ext.z, 1e-300});
    auto spread = [](std::uint64_t x) {
      x &= 0x1fffff;
      x = (x | x << 32) & 0x1f00000000ffffull;
      x = (x | x << 16) & 0x1f0000ff0000ffull;
      x = (x | x << 8) & 0x100f00f00f00f00full;
      x = (x | x << 4) & 0x10c30c30c30c30c3ull;
      x = (x | x << 2) & 0x1249249249249249ull;
      return x;
    };
    std::vector<std::pair<std::uint64_t, VertexId>> codes(t_.points_.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      std::uint64_t q[3];
      for (int a = 0; a < 3; ++a) {
        const double f = (t_.points_[i][a] - bb.lo[a]) / side * 2097151.0;
        q[a] = static_cast<std::uint64_t>(std::clamp(f, 0.0, 2097151.0));
      }
      codes[i] = {spread(q[0]) | spread(q[1]) << 1 | spread(q[2]) << 2, static_cast<VertexId>(i)};
    }
    std::sort(codes.begin(), codes.end());
    std::vector<VertexId> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = codes[i].second;
    return out;
  }

  std::array<VertexId, 4> initial_simplex(const std::vector<VertexId>& order) const {
    std::array<VertexId, 4> s{order[0], -1, -1, -1};
    std::size_t i = 1;
    for (; i < order.size() && s[1] < 0; ++i)
      if (P(order[i]) != P(s[0])) s[1] = order[i];
    for (; i < order.size() && s[2] < 0; ++i) {
      const Vec3 c = P(order[i]);
      if (orient2d(P(s[0]), P(s[1]), c, 0) != 0 || orient2d(P(s[0]), P(s[1]), c, 1) != 0 ||
          orient2d(P(s[0]), P(s[1]), c, 2) != 0)
        s[2] = order[i];
    }
    for (; i < order.size() && s[3] < 0; ++i)
      if (orient3d(P(s[0]), P(s[1]), P(s[2]), P(order[i])) != 0) s[3] = order[i];
    if (s[3] < 0) throw DegenerateInput("all points are coplanar");
    if (orient3d(P(s[0]), P(s[1]), P(s[2]), P(s[3])) < 0) std::swap(s[2], s[3]);
    return s;
  }

  CellId new_cell(const std::array<VertexId, 4>& v) {
    CellId id;
    if (!free_.empty()) {
      id = free_.back();
      free_.pop_back();
    } else {
      id = static_cast<CellId>(t_.cells_.size());
      t_.cells_.push_back({});
      alive_.push_back(0);
      mark_.push_back(0);
    }
    t_.cells_[id] = Cell{v, {kNoCell, kNoCell, kNoCell, kNoCell}};
    alive_[id] = 1;
    return id;
  }

  void make_initial(const std::array<VertexId, 4>& s) {
    const CellId f = new_cell(s);
    for (int k = 0; k < 4; ++k) {
      const auto fv = t_.facet(f, k);
      const CellId inf = new_cell({fv[0], fv[1], fv[2], kInfiniteVertex});
      t_.cells_[f].n[k] = inf;
      t_.cells_[inf].n[3] = f;
    }
    // Infinite cells meet along the edges of the hull.
    for (CellId a = 1; a <= 4; ++a)
      for (int i = 0; i < 3; ++i) {
        if (t_.cells_[a].n[i] != kNoCell) continue;
        const VertexId x = t_.cells_[a].v[(i + 1) % 3], y = t_.cells_[a].v[(i + 2) % 3];
        for (CellId b = 1; b <= 4; ++b) {
          if (b == a) continue;
          const int ix = t_.vertex_index(b, x), iy = t_.vertex_index(b, y);
          if (ix < 0 || iy < 0) continue;
          const int j = 3 - ix - iy;  // the remaining finite slot (infinite vertex is at 3)
          t_.cells_[a].n[i] = b;
          t_.cells_[b].n[j] = a;
        }
      }
    for (int k = 0; k < 4; ++k) t_.vertex_cell_[s[k]] = f;
    hint_ = f;
  }

  bool conflict(CellId c, VertexId p) const {
    const Cell& cc = t_.cells_[c];
    const int m = t_.infinite_index(c);
    if (m < 0) {
      const int s = detail::insphere_raw(P(cc.v[0]), P(cc.v[1]), P(cc.v[2]), P(cc.v[3]), P(p));
      if (s != 0) return s > 0;
      const auto& key = t_.keys_;
      return insphere_sos({P(cc.v[0]), P(cc.v[1]), P(cc.v[2]), P(cc.v[3]), P(p)},
                          {key[cc.v[0]], key[cc.v[1]], key[cc.v[2]], key[cc.v[3]], key[p]}) > 0;
    }
    std::array<Vec3, 4> q;
    for (int i = 0; i < 4; ++i) q[i] = i == m ? P(p) : P(cc.v[i]);
    const int o = orient3d(q[0], q[1], q[2], q[3]);
    if (o != 0) return o > 0;
    return conflict(cc.n[m], p);
  }

  CellId locate(VertexId p) {
    CellId c = hint_;
    if (c < 0 || !alive_[c]) c = first_alive();
    if (const int m = t_.infinite_index(c); m >= 0) c = t_.cells_[c].n[m];
    const Vec3 x = P(p);
    const std::size_t cap = 4 * t_.cells_.size() + 64;
    for (std::size_t step = 0; step < cap; ++step) {
      if (t_.is_infinite(c)) return c;
      const Cell& cc = t_.cells_[c];
      bool moved = false;
      rng_ = rng_ * 6364136223846793005ull + 1442695040888963407ull;
      const int start = static_cast<int>(rng_ >> 62);
      for (int t = 0; t < 4 && !moved; ++t) {
        const int k = (start + t) & 3;
        const auto f = t_.facet(c, k);
        if (orient3d(P(f[0]), P(f[1]), P(f[2]), x) > 0) {
          c = cc.n[k];
          moved = true;
        }
      }
      if (!moved) return c;
    }
    for (CellId d = 0; d < static_cast<CellId>(t_.cells_.size()); ++d)
      if (alive_[d] && conflict(d, p)) return d;
    throw Error("point location failed");
  }

  CellId first_alive() const {
    for (CellId c = 0; c < static_cast<CellId>(alive_.size()); ++c)
      if (alive_[c]) return c;
    throw Error("empty triangulation");
  }

  void insert(VertexId p) {
    const CellId start = locate(p);
    if (!t_.is_infinite(start))
      for (VertexId v : t_.cells_[start].v)
        if (P(v) == P(p)) {
          t_.representative_[p] = t_.representative_[v];
          return;
        }
    if (!conflict(start, p)) throw Error("located cell is not in conflict");

    cavity_.clear();
    boundary_.clear();
    ++stamp_;
    cavity_.push_back(start);
    mark_[start] = stamp_;
    for (std::size_t i = 0; i < cavity_.size(); ++i) {
      const CellId c = cavity_[i];
      for (int k = 0; k < 4; ++k) {
        const CellId n = t_.cells_[c].n[k];
        if (mark_[n] == stamp_) continue;
        if (mark_[n] == -stamp_) {
          boundary_.push_back({c, k});
          continue;
        }
        if (conflict(n, p)) {
          mark_[n] = stamp_;
          cavity_.push_back(n);
        } else {
          mark_[n] = -stamp_;
          boundary_.push_back({c, k});
        }
      }
    }

    // One new cell per boundary facet; created_[4c+k] records it for the linking pass.
    if (created_.size() < 4 * t_.cells_.size()) created_.resize(8 * t_.cells_.size());
    new_cells_.clear();
    for (auto [c, k] : boundary_) {
      std::array<VertexId, 4> v = t_.cells_[c].v;
      v[k] = p;
      const CellId outside = t_.cells_[c].n[k];
      const int back = t_.mirror_index(c, k);
      const CellId nc = new_cell(v);
      t_.cells_[nc].n[k] = outside;
      t_.cells_[outside].n[back] = nc;
      created_[4 * static_cast<std::size_t>(c) + k] = nc;
      new_cells_.push_back(nc);
      for (VertexId w : v)
        if (w != kInfiniteVertex) t_.vertex_cell_[w] = nc;
      hint_ = nc;
    }
    // Neighbors among new cells: rotate around the shared edge through the cavity.
    for (std::size_t i = 0; i < boundary_.size(); ++i) {
      const auto [c, k] = boundary_[i];
      const CellId nc = new_cells_[i];
      for (int j = 0; j < 4; ++j) {
        if (j == k || t_.cells_[nc].n[j] != kNoCell) continue;
        VertexId a = -2, b = -2;
        for (int q = 0; q < 4; ++q)
          if (q != j && q != k) (a == -2 ? a : b) = t_.cells_[c].v[q];
        CellId cur = c, other = kNoCell;
        int exit = j;
        for (std::size_t guard = 0; guard <= cavity_.size(); ++guard) {
          const CellId n = t_.cells_[cur].n[exit];
          if (mark_[n] != stamp_) {
            other = created_[4 * static_cast<std::size_t>(cur) + exit];
            break;
          }
          const int m = t_.mirror_index(cur, exit);
          const Cell& nn = t_.cells_[n];
          int next = -1;
          for (int q = 0; q < 4; ++q)
            if (q != m && nn.v[q] != a && nn.v[q] != b) next = q;
          cur = n;
          exit = next;
        }
        if (other == kNoCell) throw Error("cavity boundary is not closed");
        const Cell& oc = t_.cells_[other];
        int oj = -1;
        for (int q = 0; q < 4; ++q)
          if (oc.v[q] != p && oc.v[q] != a && oc.v[q] != b) oj = q;
        t_.cells_[nc].n[j] = other;
        t_.cells_[other].n[oj] = nc;
      }
    }
    for (CellId c : cavity_) {
      alive_[c] = 0;
      free_.push_back(c);
    }
  }

  void compact() {
    std::vector<CellId> remap(t_.cells_.size(), kNoCell);
    CellId next = 0;
    for (CellId c = 0; c < static_cast<CellId>(t_.cells_.size()); ++c)
      if (alive_[c]) remap[c] = next++;
    std::vector<Cell> cells(static_cast<std::size_t>(next));
    for (CellId c = 0; c < static_cast<CellId>(t_.cells_.size()); ++c) {
      if (!alive_[c]) continue;
      Cell nc = t_.cells_[c];
      for (auto& n : nc.n) n = remap[n];
      cells[remap[c]] = nc;
    }
    t_.cells_ = std::move(cells);
    for (auto& vc : t_.vertex_cell_)
      if (vc != kNoCell) vc = remap[vc];
    for (std::size_t v = 0; v < t_.representative_.size(); ++v)
      if (t_.representative_[v] != static_cast<VertexId>(v)) t_.vertex_cell_[v] = kNoCell;
  }


  Tetrahedralization t_;
  std::vector<char> alive_;
  std::vector<std::int64_t> mark_;
  std::int64_t stamp_ = 0;
  std::vector<CellId> free_;
  std::vector<CellId> cavity_;
  std::vector<std::pair<CellId, int>> boundary_;
  std::vector<CellId> created_;
  std::vector<CellId> new_cells_;
  CellId hint_ = kNoCell;
  std::uint64_t rng_ = 0x9e3779b97f4a7c15ull;
};

/// Delaunay tetrahedralization of `points`. `keys` (default: the indices) break
/// cospherical ties and must be distinct.
inline Tetrahedralization tetrahedralize(std::span<const Vec3> points, std::span<const std::uint64_t> keys = {}) {
  return DelaunayBuilder(points, keys).run();
}

struct WalkStep {
  CellId cell;
  int entry_facet;  // facet of `cell` crossed to enter it; -1 for the first cell
};

namespace detail {

// Ray-walk helpers; p (the far end) is the symbolically perturbed point throughout.
inline int facet_side(const Tetrahedralization& t, CellId c, int k, Vec3 p) {
  const auto f = t.facet(c, k);
  return orient3d_sos(t.point(f[0]), t.point(f[1]), t.point(f[2]), p);
}

inline bool ray_hits_facet(const Tetrahedralization& t, CellId c, int k, Vec3 q, Vec3 p) {
  const auto f = t.facet(c, k);
  int pos = 0, neg = 0;
  for (int i = 0; i < 3; ++i) {
    const int s = orient3d_sos(t.point(f[i]), t.point(f[(i + 1) % 3]), q, p);
    pos += s > 0;
    neg += s < 0;
  }
  return pos == 0 || neg == 0;
}

}  // namespace detail

/// Cells met by the segment from p to vertex q, in order from p's end. The first cell
/// contains p, or is the infinite cell through which the segment enters the hull; the
/// last cell is incident to q.
inline std::vector<WalkStep> walk_segment(const Tetrahedralization& t, Vec3 p, VertexId q) {
  if (q < 0 || static_cast<std::size_t>(q) >= t.vertex_count()) throw Error("walk target is not a vertex");
  q = t.representative(q);
  const Vec3 qp = t.point(q);
  if (!is_finite(p)) throw Error("non-finite walk origin");
  if (p == qp) throw Error("degenerate ray: origin equals target");
  const auto star = t.star(q);
  if (star.empty()) throw Error("walk target is not a vertex");

  // Walk from q toward p, then reverse.
  std::vector<CellId> cells;
  std::vector<int> exit_facet;
  CellId cur = kNoCell;
  for (CellId c : star) {
    if (t.is_infinite(c)) continue;
    const int k = t.vertex_index(c, q);
    bool inside = true;
    for (int j = 0; j < 4 && inside; ++j)
      if (j != k && detail::facet_side(t, c, j, p) >= 0) inside = false;
    if (inside) {
      cur = c;
      break;
    }
  }
  if (cur == kNoCell) {
    // The ray leaves the hull at q; pick an infinite cell whose hull facet faces p.
    for (CellId c : star) {
      if (!t.is_infinite(c)) continue;
      if (detail::facet_side(t, c, t.infinite_index(c), p) < 0) {
        cur = c;
        break;
      }
    }
    if (cur == kNoCell)
      for (CellId c : star)
        if (t.is_infinite(c)) {
          cur = c;
          break;
        }
    return {{cur, -1}};
  }

  int entry = t.vertex_index(cur, q);  // first exit candidate is the facet opposite q
  bool first = true;
  const std::size_t cap = 4 * t.cell_count() + 16;
  for (std::size_t guard = 0; guard < cap; ++guard) {
    cells.push_back(cur);
    if (t.is_infinite(cur)) {
      exit_facet.push_back(-1);
      break;
    }
    int exit = -1;
    if (first) {
      exit = entry;
      first = false;
    } else {
      for (int k = 0; k < 4; ++k)
        if (k != entry && detail::ray_hits_facet(t, cur, k, qp, p)) {
          exit = k;
          break;
        }
      if (exit < 0) throw Error("segment walk lost the ray");
    }
    if (detail::facet_side(t, cur, exit, p) < 0) {
      exit_facet.push_back(-1);
      break;
    }
    exit_facet.push_back(exit);
    const CellId next = t.cell(cur).n[exit];
    entry = t.mirror_index(cur, exit);
    cur = next;
    if (guard + 1 == cap) throw Error("segment walk did not terminate");
  }

  std::vector<WalkStep> out;
  out.reserve(cells.size());
  for (std::size_t i = cells.size(); i-- > 0;) {
    // Going camera-first, cells[i] is entered from cells[i+1].
    out.push_back({cells[i], i + 1 < cells.size() ? exit_facet[i] : -1});
  }
  return out;
}

/// The finite cell entered by extending the ray p->q past q, or kNoCell when that
/// continuation leaves the hull.
inline CellId cell_behind(const Tetrahedralization& t, Vec3 p, VertexId q) {
  q = t.representative(q);
  for (CellId c : t.star(q)) {
    if (t.is_infinite(c)) continue;
    const int k = t.vertex_index(c, q);
    bool behind = true;
    for (int j = 0; j < 4 && behind; ++j)
      if (j != k && detail::facet_side(t, c, j, p) <= 0) behind = false;
    if (behind) return c;
  }
  return kNoCell;
}

}  // namespace octomesh
