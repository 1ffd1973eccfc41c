#pragma once

// Inside/outside labelling of a tetrahedralization by s-t min cut and readout of the
// separating surface. Source side = outside (free space), sink side = inside.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "octomesh/delaunay.hpp"
#include "octomesh/geometry.hpp"
#include "octomesh/maxflow.hpp"

namespace octomesh {

using CameraTable = std::unordered_map<CameraId, Vec3>;

struct EnergyParams {
  double alpha = 1e-4;
  double lambda_vis = 1.0;
  bool all_cameras = false;  // one ray per listed camera instead of the first only

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("alpha must be >= 0");
    if (!(lambda_vis > 0.0) || !std::isfinite(lambda_vis)) throw Error("lambda_vis must be > 0");
  }
};

struct DualGraph {
  using ArcId = FlowGraph::ArcId;
  FlowGraph graph;
  std::vector<ArcId> facet_arc;                  // [4*c + k]: arc leaving c through facet k, -1 if none
  std::vector<std::pair<CellId, int>> arc_facet;  // [arc / 2]: facet seen from the forward arc's tail

  ArcId arc_out(CellId c, int k) const { return facet_arc[4 * static_cast<std::size_t>(c) + k]; }
  /// Facet (cell, index) from the tail side of arc a.
  std::pair<CellId, int> facet_of_arc(ArcId a, const Tetrahedralization& t) const {
    const auto f = arc_facet[static_cast<std::size_t>(a / 2)];
    if ((a & 1) == 0) return f;
    return {t.cell(f.first).n[f.second], t.mirror_index(f.first, f.second)};
  }
  std::size_t interior_facet_count() const { return arc_facet.size(); }
};

/// One node per cell, one arc pair per facet with three finite vertices.
inline DualGraph build_dual(const Tetrahedralization& t) {
  DualGraph d;
  d.graph.add_nodes(t.cell_count());
  d.facet_arc.assign(4 * t.cell_count(), -1);
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    for (int k = 0; k < 4; ++k) {
      const CellId n = t.cell(c).n[k];
      if (n < c || !t.facet_is_finite(c, k)) continue;
      const auto a = d.graph.add_arc(c, n, 0.0, 0.0);
      d.facet_arc[4 * static_cast<std::size_t>(c) + k] = a;
      d.facet_arc[4 * static_cast<std::size_t>(n) + t.mirror_index(c, k)] = a ^ 1;
      d.arc_facet.push_back({c, k});
    }
  return d;
}

/// What one ray contributed, for auditing the energy.
struct RayTerms {
  CellId source_cell = kNoCell;
  std::vector<DualGraph::ArcId> crossed;  // arcs from the camera-side cell to the q-side cell
  CellId behind = kNoCell;
};

/// Adds the visibility terms of the ray camera -> q. Returns nothing when the ray is
/// degenerate (camera at q) and leaves the graph untouched in that case.
inline std::optional<RayTerms> apply_visibility(DualGraph& d, const Tetrahedralization& t, Vec3 camera, VertexId q,
                                                const EnergyParams& params) {
  if (camera == t.point(q)) return std::nullopt;
  const auto walk = walk_segment(t, camera, q);
  RayTerms r;
  r.source_cell = walk.front().cell;
  d.graph.set_terminal(r.source_cell, FlowGraph::kInfinite, 0.0);
  for (std::size_t i = 1; i < walk.size(); ++i) {
    const CellId prev = walk[i - 1].cell;
    const int k = t.mirror_index(walk[i].cell, walk[i].entry_facet);
    const auto arc = d.arc_out(prev, k);
    if (arc < 0) continue;
    d.graph.add_capacity(arc, params.lambda_vis);
    r.crossed.push_back(arc);
  }
  r.behind = cell_behind(t, camera, q);
  if (r.behind != kNoCell) d.graph.set_terminal(r.behind, 0.0, params.lambda_vis);
  return r;
}

/// alpha on both arcs of every interior facet; repeated calls accumulate.
inline void apply_smoothness(DualGraph& d, const Tetrahedralization&, const EnergyParams& params) {
  if (params.alpha == 0.0) return;
  for (std::size_t i = 0; i < d.arc_facet.size(); ++i) {
    d.graph.add_capacity(static_cast<DualGraph::ArcId>(2 * i), params.alpha);
    d.graph.add_capacity(static_cast<DualGraph::ArcId>(2 * i + 1), params.alpha);
  }
}

/// Ties every infinite cell to the source so the inside region is bounded.
inline void pin_infinite_cells(DualGraph& d, const Tetrahedralization& t) {
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    if (t.is_infinite(c)) d.graph.set_terminal(c, FlowGraph::kInfinite, 0.0);
}

/// Surface triangles over the tetrahedralization's vertex ids (representatives).
struct LocalSurface {
  std::vector<Triangle> triangles;          // oriented toward the outside cell
  std::vector<std::uint8_t> separates_final;  // both incident cells final
  std::vector<std::pair<CellId, int>> facets;  // (inside cell, facet index)
};

/// Facets between differently labelled cells, normals pointing into the outside cell.
inline LocalSurface extract_surface(const Tetrahedralization& t, const std::vector<Side>& labels,
                                    const std::optional<Box>& subset_box = std::nullopt) {
  LocalSurface s;
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c) {
    if (labels[c] != Side::Sink) continue;
    for (int k = 0; k < 4; ++k) {
      const CellId n = t.cell(c).n[k];
      if (labels[n] != Side::Source || !t.facet_is_finite(c, k)) continue;
      const auto f = t.facet(c, k);
      s.triangles.push_back(Triangle{{static_cast<std::uint32_t>(f[0]), static_cast<std::uint32_t>(f[1]),
                                      static_cast<std::uint32_t>(f[2])}});
      s.separates_final.push_back(subset_box && t.is_final(c, *subset_box) && t.is_final(n, *subset_box));
      s.facets.push_back({c, k});
    }
  }
  return s;
}

/// Cells around edge (a, b) in rotation order, starting from cell c which contains both.
inline std::vector<CellId> cells_around_edge(const Tetrahedralization& t, CellId c, VertexId a, VertexId b) {
  std::vector<CellId> ring;
  CellId cur = c;
  CellId prev = kNoCell;
  for (std::size_t guard = 0; guard < t.cell_count() + 1; ++guard) {
    ring.push_back(cur);
    const int ia = t.vertex_index(cur, a), ib = t.vertex_index(cur, b);
    int other[2], m = 0;
    for (int i = 0; i < 4; ++i)
      if (i != ia && i != ib) other[m++] = i;
    CellId next = t.cell(cur).n[other[0]];
    if (next == prev) next = t.cell(cur).n[other[1]];
    if (next == c) break;
    prev = cur;
    cur = next;
  }
  return ring;
}

/// Relabels finite cells so that every surface edge has exactly two incident triangles:
/// around each over-shared edge, finite outside cells become inside. Returns the number
/// of flipped cells.
inline std::size_t make_edge_manifold(const Tetrahedralization& t, std::vector<Side>& labels) {
  struct EdgeState {
    int count = 0;
    CellId cell = kNoCell;  // some cell containing the edge
  };
  std::unordered_map<std::uint64_t, EdgeState> edges;
  auto surface = [&](CellId c, int k) {
    const CellId n = t.cell(c).n[k];
    return labels[c] != labels[n] && t.facet_is_finite(c, k);
  };
  auto touch = [&](CellId c, int k, int delta) {
    const auto f = t.facet(c, k);
    for (int e = 0; e < 3; ++e) {
      auto& st = edges[edge_key(static_cast<std::uint32_t>(f[e]), static_cast<std::uint32_t>(f[(e + 1) % 3]))];
      st.count += delta;
      st.cell = c;
    }
  };
  for (CellId c = 0; c < static_cast<CellId>(t.cell_count()); ++c)
    if (labels[c] == Side::Sink)
      for (int k = 0; k < 4; ++k)
        if (surface(c, k)) touch(c, k, 1);

  std::vector<std::uint64_t> bad;
  for (const auto& [k, st] : edges)
    if (st.count > 2) bad.push_back(k);
  std::size_t flipped = 0;
  for (int round = 0; !bad.empty(); ++round) {
    if (round > 100000) throw Error("surface repair did not converge");
    std::sort(bad.begin(), bad.end());
    std::vector<std::uint64_t> next;
    for (auto key : bad) {
      const auto st = edges[key];
      if (st.count <= 2) continue;
      const auto a = static_cast<VertexId>(edge_first(key)), b = static_cast<VertexId>(edge_second(key));
      for (CellId c : cells_around_edge(t, st.cell, a, b)) {
        if (t.is_infinite(c) || labels[c] != Side::Source) continue;
        for (int k = 0; k < 4; ++k)
          if (surface(c, k)) touch(c, k, -1);
        labels[c] = Side::Sink;
        ++flipped;
        for (int k = 0; k < 4; ++k)
          if (surface(c, k)) {
            touch(c, k, 1);
            const auto f = t.facet(c, k);
            for (int e = 0; e < 3; ++e) {
              const auto ek = edge_key(static_cast<std::uint32_t>(f[e]), static_cast<std::uint32_t>(f[(e + 1) % 3]));
              if (edges[ek].count > 2) next.push_back(ek);
            }
          }
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    bad.clear();
    for (auto k : next)
      if (edges[k].count > 2) bad.push_back(k);
  }
  return flipped;
}

/// Every edge shared by exactly two triangles that traverse it in opposite directions.
inline bool is_watertight(const std::vector<Triangle>& tris) {
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(tris.size() * 3);
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) {
      const std::uint64_t key = (std::uint64_t{t[e]} << 32) | t[(e + 1) % 3];
      if (++directed[key] > 1) return false;
    }
  for (const auto& [key, n] : directed) {
    const std::uint64_t rev = (key << 32) | (key >> 32);
    if (!directed.count(rev)) return false;
  }
  return true;
}

/// Triangles of one subset's hypothesis over global point ids.
struct SurfaceHypothesis {
  std::uint32_t subset_id = 0;
  std::vector<Triangle> triangles;
  std::vector<std::uint8_t> separates_final;
};

struct LocalStats {
  std::size_t points = 0;
  std::size_t cells = 0;
  std::size_t rays = 0;
  std::size_t skipped_rays = 0;
  std::size_t repaired_cells = 0;
  double flow = 0.0;
  bool degenerate = false;
};

/// Solves one local problem over `ids` (global point ids) and returns its hypothesis.
/// The subset box decides which tetrahedra are final. Throws DegenerateInput when the
/// points do not span a volume.
inline SurfaceHypothesis extract_local(const std::vector<VisPoint>& points, const CameraTable& cameras,
                                       const std::vector<PointId>& ids, const Box& box, const EnergyParams& params,
                                       LocalStats* stats = nullptr) {
  params.validate();
  std::vector<Vec3> pos(ids.size());
  std::vector<std::uint64_t> keys(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    pos[i] = points[ids[i]].position;
    keys[i] = ids[i];
  }
  const Tetrahedralization t = tetrahedralize(pos, keys);
  DualGraph d = build_dual(t);
  std::size_t rays = 0, skipped = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& cams = points[ids[i]].cameras;
    const std::size_t n = params.all_cameras ? cams.size() : std::min<std::size_t>(1, cams.size());
    for (std::size_t j = 0; j < n; ++j) {
      auto it = cameras.find(cams[j]);
      if (it == cameras.end()) throw Error("unknown camera id " + std::to_string(cams[j]));
      if (apply_visibility(d, t, it->second, static_cast<VertexId>(i), params))
        ++rays;
      else
        ++skipped;
    }
  }
  apply_smoothness(d, t, params);
  pin_infinite_cells(d, t);
  CutResult cut = d.graph.solve();
  const std::size_t repaired = make_edge_manifold(t, cut.labels);
  const LocalSurface s = extract_surface(t, cut.labels, box);
  SurfaceHypothesis h;
  h.triangles.reserve(s.triangles.size());
  for (const auto& tri : s.triangles)
    h.triangles.push_back(Triangle{{ids[tri[0]], ids[tri[1]], ids[tri[2]]}});
  h.separates_final = s.separates_final;
  if (stats) {
    stats->points = ids.size();
    stats->cells = t.cell_count();
    stats->rays = rays;
    stats->skipped_rays = skipped;
    stats->repaired_cells = repaired;
    stats->flow = cut.flow;
  }
  return h;
}

/// Plain-text dump of a flow graph:
///   nodes <n>
///   t <node> <source capacity> <sink capacity>     (one per node; "inf" for the sentinel)
///   a <tail> <head> <capacity>                      (one per directed arc)
inline void write_graph_text(std::ostream& os, const FlowGraph& g) {
  const auto old = os.precision(17);
  auto cap = [&os](double c) -> std::ostream& { return std::isfinite(c) ? os << c : os << "inf"; };
  os << "nodes " << g.node_count() << '\n';
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    const auto n = static_cast<FlowGraph::NodeId>(u);
    os << "t " << u << ' ';
    cap(g.source_capacity(n)) << ' ';
    cap(g.sink_capacity(n)) << '\n';
  }
  for (std::size_t a = 0; a < g.arc_count(); ++a) {
    const auto id = static_cast<FlowGraph::ArcId>(a);
    os << "a " << g.arc_tail(id) << ' ' << g.arc_head(id) << ' ' << g.capacity(id) << '\n';
  }
  os.precision(old);
}

}  // namespace octomesh
