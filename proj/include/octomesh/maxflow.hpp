#pragma once

// s-t minimum cut on capacitated directed graphs.
//
// The solver grows two search trees (from the source and from the sink) and reuses
// them across augmentations, adopting orphaned subtrees instead of rebuilding. This
// is the usual choice for the sparse, low-degree graphs produced by cell complexes
// and triangle adjacency.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "octomesh/geometry.hpp"

namespace octomesh {

enum class Side : std::uint8_t { Source, Sink };

struct CutResult {
  double flow = 0.0;
  std::vector<Side> labels;
};

class FlowGraph {
public:
  using NodeId = std::int32_t;
  using ArcId = std::int32_t;

  /// Terminal capacity that can never be cut. Resolved at solve time to the sum of all
  /// finite capacities plus one.
  static constexpr double kInfinite = std::numeric_limits<double>::infinity();

  FlowGraph() = default;
  explicit FlowGraph(std::size_t nodes) { add_nodes(nodes); }

  NodeId add_node() {
    nodes_.push_back({});
    return static_cast<NodeId>(nodes_.size() - 1);
  }
  void add_nodes(std::size_t n) { nodes_.resize(nodes_.size() + n); }

  /// Adds arc u->v with capacity cap_uv and its reverse v->u with cap_vu. Returns the
  /// id of the forward arc; the reverse arc is `id ^ 1`.
  ArcId add_arc(NodeId u, NodeId v, double cap_uv, double cap_vu) {
    check_node(u);
    check_node(v);
    check_capacity(cap_uv);
    check_capacity(cap_vu);
    const auto id = static_cast<ArcId>(arcs_.size());
    arcs_.push_back({v, nodes_[u].first, cap_uv});
    nodes_[u].first = id;
    arcs_.push_back({u, nodes_[v].first, cap_vu});
    nodes_[v].first = id + 1;
    return id;
  }

  /// Increases the capacity of an existing arc.
  void add_capacity(ArcId a, double delta) {
    if (a < 0 || static_cast<std::size_t>(a) >= arcs_.size()) throw Error("arc id out of range");
    check_capacity(delta);
    arcs_[a].cap += delta;
  }

  /// Accumulates terminal capacities; repeated calls add up.
  void set_terminal(NodeId u, double cap_source, double cap_sink) {
    check_node(u);
    check_capacity(cap_source);
    check_capacity(cap_sink);
    nodes_[u].source += cap_source;
    nodes_[u].sink += cap_sink;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t arc_count() const { return arcs_.size(); }
  double capacity(ArcId a) const { return arcs_.at(static_cast<std::size_t>(a)).cap; }
  NodeId arc_head(ArcId a) const { return arcs_.at(static_cast<std::size_t>(a)).head; }
  NodeId arc_tail(ArcId a) const { return arcs_.at(static_cast<std::size_t>(a ^ 1)).head; }
  double source_capacity(NodeId u) const { return nodes_.at(static_cast<std::size_t>(u)).source; }
  double sink_capacity(NodeId u) const { return nodes_.at(static_cast<std::size_t>(u)).sink; }

  /// Value substituted for kInfinite: every finite capacity summed, plus one.
  double infinite_value() const {
    double sum = 0.0;
    for (const auto& a : arcs_) sum += a.cap;
    for (const auto& n : nodes_) {
      if (std::isfinite(n.source)) sum += n.source;
      if (std::isfinite(n.sink)) sum += n.sink;
    }
    return sum + 1.0;
  }

  /// Cost of the cut induced by `labels`, with infinite capacities resolved.
  double cut_cost(const std::vector<Side>& labels) const {
    const double inf = infinite_value();
    auto resolve = [inf](double c) { return std::isfinite(c) ? c : inf; };
    double cost = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      cost += labels[i] == Side::Source ? resolve(nodes_[i].sink) : resolve(nodes_[i].source);
    for (std::size_t a = 0; a < arcs_.size(); ++a) {
      const auto tail = arcs_[a ^ 1].head, head = arcs_[a].head;
      if (labels[tail] == Side::Source && labels[head] == Side::Sink) cost += arcs_[a].cap;
    }
    return cost;
  }

  /// Maximum flow and the source-minimal minimum cut: a node is labelled Source iff it
  /// is reachable from the source in the final residual graph.
  CutResult solve() const { return Solver(*this).run(); }

private:
  struct Node {
    ArcId first = -1;
    double source = 0.0;
    double sink = 0.0;
  };
  struct Arc {
    NodeId head;
    ArcId next;
    double cap;
  };

  void check_node(NodeId u) const {
    if (u < 0 || static_cast<std::size_t>(u) >= nodes_.size()) throw Error("node id out of range");
  }
  static void check_capacity(double c) {
    if (!(c >= 0.0)) throw Error("capacity must be non-negative");
  }

  class Solver {
  public:
    explicit Solver(const FlowGraph& g) : g_(g) {
      const std::size_t n = g.nodes_.size();
      r_cap_.resize(g.arcs_.size());
      for (std::size_t a = 0; a < g.arcs_.size(); ++a) r_cap_[a] = g.arcs_[a].cap;
      tr_cap_.resize(n);
      parent_.assign(n, kFree);
      is_sink_.assign(n, 0);
      ts_.assign(n, 0);
      dist_.assign(n, 0);
      in_queue_.assign(n, 0);
      const double inf = g.infinite_value();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = std::isfinite(g.nodes_[i].source) ? g.nodes_[i].source : inf;
        const double t = std::isfinite(g.nodes_[i].sink) ? g.nodes_[i].sink : inf;
        flow_ += std::min(s, t);
        tr_cap_[i] = s - t;
      }
    }

    CutResult run() {
      const auto n = static_cast<NodeId>(tr_cap_.size());
      for (NodeId i = 0; i < n; ++i) {
        if (tr_cap_[i] > 0.0) {
          is_sink_[i] = 0;
        } else if (tr_cap_[i] < 0.0) {
          is_sink_[i] = 1;
        } else {
          continue;
        }
        parent_[i] = kTerminal;
        ts_[i] = 0;
        dist_[i] = 1;
        push_active(i);
      }

      NodeId current = -1;
      for (;;) {
        if (current >= 0 && parent_[current] == kFree) current = -1;
        if (current < 0) {
          current = pop_active();
          if (current < 0) break;
        }
        const NodeId i = current;
        ArcId bridge = -1;
        if (!is_sink_[i]) {
          for (ArcId a = g_.nodes_[i].first; a >= 0; a = g_.arcs_[a].next) {
            if (r_cap_[a] <= 0.0) continue;
            const NodeId j = g_.arcs_[a].head;
            if (parent_[j] == kFree) {
              is_sink_[j] = 0;
              parent_[j] = a ^ 1;
              ts_[j] = ts_[i];
              dist_[j] = dist_[i] + 1;
              push_active(j);
            } else if (is_sink_[j]) {
              bridge = a;
              break;
            } else if (ts_[j] <= ts_[i] && dist_[j] > dist_[i]) {
              parent_[j] = a ^ 1;
              ts_[j] = ts_[i];
              dist_[j] = dist_[i] + 1;
            }
          }
        } else {
          for (ArcId a = g_.nodes_[i].first; a >= 0; a = g_.arcs_[a].next) {
            if (r_cap_[a ^ 1] <= 0.0) continue;
            const NodeId j = g_.arcs_[a].head;
            if (parent_[j] == kFree) {
              is_sink_[j] = 1;
              parent_[j] = a ^ 1;
              ts_[j] = ts_[i];
              dist_[j] = dist_[i] + 1;
              push_active(j);
            } else if (!is_sink_[j]) {
              bridge = a ^ 1;
              break;
            } else if (ts_[j] <= ts_[i] && dist_[j] > dist_[i]) {
              parent_[j] = a ^ 1;
              ts_[j] = ts_[i];
              dist_[j] = dist_[i] + 1;
            }
          }
        }
        ++time_;
        if (bridge >= 0) {
          augment(bridge);
          adopt_orphans();
        } else {
          current = -1;
        }
      }
      return {flow_, residual_labels()};
    }

  private:
    static constexpr ArcId kFree = -1;
    static constexpr ArcId kTerminal = -2;
    static constexpr ArcId kOrphan = -3;
    static constexpr int kInfiniteDist = std::numeric_limits<int>::max();

    void push_active(NodeId i) {
      if (in_queue_[i]) return;
      in_queue_[i] = 1;
      active_.push_back(i);
    }
    NodeId pop_active() {
      while (!active_.empty()) {
        const NodeId i = active_.front();
        active_.pop_front();
        in_queue_[i] = 0;
        if (parent_[i] != kFree) return i;
      }
      return -1;
    }

    /// `bridge` runs from a source-tree node to a sink-tree node.
    void augment(ArcId bridge) {
      double bottleneck = r_cap_[bridge];
      NodeId i = g_.arcs_[bridge ^ 1].head;
      for (ArcId a = parent_[i]; a != kTerminal; a = parent_[i]) {
        bottleneck = std::min(bottleneck, r_cap_[a ^ 1]);
        i = g_.arcs_[a].head;
      }
      bottleneck = std::min(bottleneck, tr_cap_[i]);
      i = g_.arcs_[bridge].head;
      for (ArcId a = parent_[i]; a != kTerminal; a = parent_[i]) {
        bottleneck = std::min(bottleneck, r_cap_[a]);
        i = g_.arcs_[a].head;
      }
      bottleneck = std::min(bottleneck, -tr_cap_[i]);

      r_cap_[bridge ^ 1] += bottleneck;
      r_cap_[bridge] -= bottleneck;
      i = g_.arcs_[bridge ^ 1].head;
      for (ArcId a = parent_[i]; a != kTerminal; a = parent_[i]) {
        r_cap_[a] += bottleneck;
        r_cap_[a ^ 1] -= bottleneck;
        if (r_cap_[a ^ 1] <= 0.0) {
          r_cap_[a ^ 1] = 0.0;
          make_orphan(i);
        }
        i = g_.arcs_[a].head;
      }
      tr_cap_[i] -= bottleneck;
      if (tr_cap_[i] <= 0.0) {
        tr_cap_[i] = 0.0;
        make_orphan(i);
      }
      i = g_.arcs_[bridge].head;
      for (ArcId a = parent_[i]; a != kTerminal; a = parent_[i]) {
        r_cap_[a ^ 1] += bottleneck;
        r_cap_[a] -= bottleneck;
        if (r_cap_[a] <= 0.0) {
          r_cap_[a] = 0.0;
          make_orphan(i);
        }
        i = g_.arcs_[a].head;
      }
      tr_cap_[i] += bottleneck;
      if (tr_cap_[i] >= 0.0) {
        tr_cap_[i] = 0.0;
        make_orphan(i);
      }
      flow_ += bottleneck;
    }

    void make_orphan(NodeId i) {
      parent_[i] = kOrphan;
      orphans_.push_front(i);
    }

    /// Distance from j to its terminal through valid parents, or kInfiniteDist.
    int origin_distance(NodeId j) {
      int d = 0;
      for (;;) {
        if (ts_[j] == time_) return d + dist_[j];
        const ArcId a = parent_[j];
        ++d;
        if (a == kTerminal) {
          ts_[j] = time_;
          dist_[j] = 1;
          return d;
        }
        if (a == kOrphan) return kInfiniteDist;
        j = g_.arcs_[a].head;
      }
    }

    void adopt_orphans() {
      while (!orphans_.empty()) {
        const NodeId i = orphans_.front();
        orphans_.pop_front();
        const bool sink = is_sink_[i];
        ArcId best = kFree;
        int best_d = kInfiniteDist;
        for (ArcId a0 = g_.nodes_[i].first; a0 >= 0; a0 = g_.arcs_[a0].next) {
          const double cap = sink ? r_cap_[a0] : r_cap_[a0 ^ 1];
          if (cap <= 0.0) continue;
          const NodeId j = g_.arcs_[a0].head;
          if (static_cast<bool>(is_sink_[j]) != sink || parent_[j] == kFree) continue;
          int d = origin_distance(j);
          if (d == kInfiniteDist) continue;
          if (d < best_d) {
            best = a0;
            best_d = d;
          }
          for (NodeId k = j; ts_[k] != time_; k = g_.arcs_[parent_[k]].head) {
            ts_[k] = time_;
            dist_[k] = d--;
          }
        }
        if (best != kFree) {
          parent_[i] = best;
          ts_[i] = time_;
          dist_[i] = best_d + 1;
          continue;
        }
        parent_[i] = kFree;
        for (ArcId a0 = g_.nodes_[i].first; a0 >= 0; a0 = g_.arcs_[a0].next) {
          const NodeId j = g_.arcs_[a0].head;
          if (static_cast<bool>(is_sink_[j]) != sink || parent_[j] == kFree) continue;
          const double cap = sink ? r_cap_[a0] : r_cap_[a0 ^ 1];
          if (cap > 0.0) push_active(j);
          const ArcId pa = parent_[j];
          if (pa != kTerminal && pa != kOrphan && g_.arcs_[pa].head == i) {
            parent_[j] = kOrphan;
            orphans_.push_back(j);
          }
        }
      }
    }

    std::vector<Side> residual_labels() const {
      const std::size_t n = tr_cap_.size();
      std::vector<Side> labels(n, Side::Sink);
      std::vector<NodeId> stack;
      for (std::size_t i = 0; i < n; ++i)
        if (tr_cap_[i] > 0.0) {
          labels[i] = Side::Source;
          stack.push_back(static_cast<NodeId>(i));
        }
      while (!stack.empty()) {
        const NodeId i = stack.back();
        stack.pop_back();
        for (ArcId a = g_.nodes_[i].first; a >= 0; a = g_.arcs_[a].next) {
          const NodeId j = g_.arcs_[a].head;
          if (r_cap_[a] > 0.0 && labels[j] == Side::Sink) {
            labels[j] = Side::Source;
            stack.push_back(j);
          }
        }
      }
      return labels;
    }

    const FlowGraph& g_;
    std::vector<double> r_cap_;
    std::vector<double> tr_cap_;
    std::vector<ArcId> parent_;
    std::vector<std::uint8_t> is_sink_;
    std::vector<int> ts_;
    std::vector<int> dist_;
    std::vector<std::uint8_t> in_queue_;
    std::deque<NodeId> active_;
    std::deque<NodeId> orphans_;
    double flow_ = 0.0;
    int time_ = 0;
  };

  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
};

}  // namespace octomesh
