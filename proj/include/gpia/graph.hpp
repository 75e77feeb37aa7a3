#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpia/error.hpp"
#include "gpia/util.hpp"

namespace gpia {

using NodeId = std::int32_t;

/// Undirected edge stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(std::min(a, b)), v(std::max(a, b)) {}

  auto operator<=>(const Edge&) const = default;
};

/// Sorted, duplicate-free edge list.
using EdgeSet = std::vector<Edge>;

inline void normalize(EdgeSet& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

inline bool contains(const EdgeSet& edges, const Edge& e) {
  return std::binary_search(edges.begin(), edges.end(), e);
}

inline EdgeSet set_difference(const EdgeSet& a, const EdgeSet& b) {
  EdgeSet out;
  out.reserve(a.size());
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::uint64_t edge_hash(const EdgeSet& edges) {
  Fnv1a h;
  for (const auto& e : edges) {
    h.value(e.u);
    h.value(e.v);
  }
  return h.digest();
}

/// Metadata carried alongside a graph: how it was built and where it came from.
struct GraphMeta {
  std::size_t duplicate_edges_dropped = 0;
  std::size_t self_loops_dropped = 0;
  /// id_map[new_id] = id in the source graph; empty for root graphs.
  std::vector<NodeId> id_map;
  /// Set when a sampler stopped before reaching its target size.
  bool partial = false;
  std::size_t walk_steps = 0;
};

/// Undirected attributed graph. Immutable once constructed: every node has a
/// feature row of the same width, one binary property attribute and one class
/// label in [0, num_classes).
class AttributedGraph {
 public:
  AttributedGraph() = default;

  /// Validates and normalizes. Self-loops and duplicate edges are dropped and
  /// counted in meta().
  AttributedGraph(std::size_t node_count, EdgeSet edges, Eigen::MatrixXd features,
                  std::vector<int> property_attr, std::vector<int> class_label, int num_classes,
                  GraphMeta meta = {})
      : n_(node_count),
        features_(std::move(features)),
        attr_(std::move(property_attr)),
        label_(std::move(class_label)),
        num_classes_(num_classes),
        meta_(std::move(meta)) {
    require(static_cast<std::size_t>(features_.rows()) == n_ && attr_.size() == n_ &&
                label_.size() == n_,
            Errc::ragged_attributes, "per-node columns must have node_count rows");
    for (int y : label_)
      require(y >= 0 && y < num_classes_, Errc::invalid_argument, "class label out of range");
    EdgeSet kept;
    kept.reserve(edges.size());
    for (const auto& e : edges) {
      require(e.u >= 0 && static_cast<std::size_t>(e.v) < n_, Errc::edge_out_of_range,
              std::to_string(e.u) + "-" + std::to_string(e.v));
      if (e.u == e.v) {
        ++meta_.self_loops_dropped;
        continue;
      }
      kept.push_back(e);
    }
    const std::size_t before = kept.size();
    normalize(kept);
    meta_.duplicate_edges_dropped += before - kept.size();
    edges_ = std::move(kept);

    adj_.assign(n_, {});
    for (const auto& e : edges_) {
      adj_[e.u].push_back(e.v);
      adj_[e.v].push_back(e.u);
    }
    for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
  }

  [[nodiscard]] std::size_t node_count() const noexcept { return n_; }
  [[nodiscard]] std::size_t feature_dim() const noexcept {
    return static_cast<std::size_t>(features_.cols());
  }
  [[nodiscard]] int num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] const EdgeSet& edges() const noexcept { return edges_; }
  [[nodiscard]] const Eigen::MatrixXd& features() const noexcept { return features_; }
  [[nodiscard]] const std::vector<int>& property_attr() const noexcept { return attr_; }
  [[nodiscard]] const std::vector<int>& class_label() const noexcept { return label_; }
  [[nodiscard]] std::span<const NodeId> neighbors(NodeId v) const noexcept { return adj_[v]; }
  [[nodiscard]] std::size_t degree(NodeId v) const noexcept { return adj_[v].size(); }
  [[nodiscard]] const GraphMeta& meta() const noexcept { return meta_; }
  [[nodiscard]] bool empty() const noexcept { return n_ == 0; }

  [[nodiscard]] bool has_edge(NodeId a, NodeId b) const {
    return a != b && contains(edges_, Edge(a, b));
  }

  /// All node ids [0, n).
  [[nodiscard]] std::vector<NodeId> all_nodes() const {
    std::vector<NodeId> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = static_cast<NodeId>(i);
    return out;
  }

  /// Induced subgraph on `nodes` (kept in the given order, re-indexed 0..k-1);
  /// meta().id_map maps new ids back to ids of this graph.
  [[nodiscard]] AttributedGraph induced(std::span<const NodeId> nodes) const {
    std::vector<NodeId> remap(n_, -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      require(nodes[i] >= 0 && static_cast<std::size_t>(nodes[i]) < n_, Errc::invalid_argument,
              "induced(): node out of range");
      require(remap[nodes[i]] < 0, Errc::invalid_argument, "induced(): duplicate node");
      remap[nodes[i]] = static_cast<NodeId>(i);
    }
    EdgeSet sub;
    for (const auto& e : edges_)
      if (remap[e.u] >= 0 && remap[e.v] >= 0) sub.emplace_back(remap[e.u], remap[e.v]);
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(nodes.size()), features_.cols());
    std::vector<int> attr(nodes.size()), label(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      feats.row(static_cast<Eigen::Index>(i)) = features_.row(nodes[i]);
      attr[i] = attr_[nodes[i]];
      label[i] = label_[nodes[i]];
    }
    GraphMeta meta;
    meta.id_map.assign(nodes.begin(), nodes.end());
    return AttributedGraph(nodes.size(), std::move(sub), std::move(feats), std::move(attr),
                           std::move(label), num_classes_, std::move(meta));
  }

  /// Same graph with edges restricted to `kept` (must be a subset of edges()).
  [[nodiscard]] AttributedGraph with_edges(EdgeSet kept) const {
    return AttributedGraph(n_, std::move(kept), features_, attr_, label_, num_classes_);
  }

  void set_meta(GraphMeta meta) { meta_ = std::move(meta); }

 private:
  std::size_t n_ = 0;
  EdgeSet edges_;
  Eigen::MatrixXd features_;
  std::vector<int> attr_;
  std::vector<int> label_;
  int num_classes_ = 1;
  GraphMeta meta_;
  std::vector<std::vector<NodeId>> adj_;
};

}  // namespace gpia
