#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <vector>

#include "gpia/cg.hpp"
#include "gpia/graph.hpp"
#include "gpia/model.hpp"

namespace gpia {

/// Removal of a node set and an edge set from one reference graph.
/// closure_edges = removed_edges ∪ {edges incident to removed_nodes}: an edge
/// never outlives its endpoint.
struct Perturbation {
  std::vector<NodeId> removed_nodes;  // sorted, unique
  EdgeSet removed_edges;
  EdgeSet closure_edges;

  static Perturbation make(const AttributedGraph& g, std::vector<NodeId> nodes, EdgeSet edges) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (NodeId v : nodes)
      require(v >= 0 && static_cast<std::size_t>(v) < g.node_count(), Errc::invalid_argument,
              "removed node out of range");
    require(nodes.size() < g.node_count(), Errc::invalid_argument,
            "perturbation removes every node");
    normalize(edges);
    for (const auto& e : edges)
      require(contains(g.edges(), e), Errc::invalid_argument, "removed edge not in graph");
    Perturbation p;
    std::vector<char> gone(g.node_count(), 0);
    for (NodeId v : nodes) gone[v] = 1;
    // one ordered pass over E keeps the closure sorted
    auto removed = edges.begin();
    for (const auto& e : g.edges()) {
      while (removed != edges.end() && *removed < e) ++removed;
      if (gone[e.u] || gone[e.v] || (removed != edges.end() && *removed == e))
        p.closure_edges.push_back(e);
    }
    p.removed_nodes = std::move(nodes);
    p.removed_edges = std::move(edges);
    return p;
  }

  [[nodiscard]] bool empty() const { return removed_nodes.empty() && removed_edges.empty(); }
};

inline std::vector<NodeId> remaining_nodes(const AttributedGraph& g, const Perturbation& p) {
  std::vector<NodeId> out;
  out.reserve(g.node_count() - p.removed_nodes.size());
  auto it = p.removed_nodes.begin();
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    if (it != p.removed_nodes.end() && *it == static_cast<NodeId>(v)) {
      ++it;
      continue;
    }
    out.push_back(static_cast<NodeId>(v));
  }
  return out;
}

inline EdgeSet remaining_edges(const AttributedGraph& g, const Perturbation& p) {
  return set_difference(g.edges(), p.closure_edges);
}

/// The augmented graph as a standalone graph (re-indexed; id_map -> g).
inline AttributedGraph augmented_graph(const AttributedGraph& g, const Perturbation& p) {
  const auto keep = remaining_nodes(g, p);
  return g.with_edges(remaining_edges(g, p)).induced(keep);
}

/// Which edge set N_l(.) is measured in. `original` is the superset that is
/// safe for terms evaluated on both E and E \ E^R; `post_removal` uses
/// E \ E^R and exists for sensitivity checks.
enum class NeighborhoodBasis { original, post_removal };

struct InfluenceSet {
  std::vector<NodeId> nodes;  // sorted, disjoint from removed_nodes
  int hops = 0;
};

/// Union of N_l(v) over removed nodes and N_{l-1}(u) ∪ N_{l-1}(v) ∪ {u, v}
/// over removed edges, minus the removed nodes. One multi-source BFS: removed
/// nodes seed at depth 0, removed-edge endpoints at depth 1, cap l.
inline InfluenceSet influenced_nodes(const AttributedGraph& g, const Perturbation& p, int hops,
                                     NeighborhoodBasis basis = NeighborhoodBasis::original) {
  require(hops >= 1, Errc::invalid_argument, "influence needs l >= 1");
  const std::size_t n = g.node_count();
  std::vector<std::vector<NodeId>> post_adj;
  if (basis == NeighborhoodBasis::post_removal) {
    post_adj.assign(n, {});
    for (const auto& e : set_difference(g.edges(), p.removed_edges)) {
      post_adj[e.u].push_back(e.v);
      post_adj[e.v].push_back(e.u);
    }
  }
  auto neighbors = [&](NodeId v) -> std::span<const NodeId> {
    if (basis == NeighborhoodBasis::original) return g.neighbors(v);
    return post_adj[v];
  };

  constexpr int kUnseen = -1;
  std::vector<int> depth(n, kUnseen);
  std::deque<NodeId> frontier;
  for (NodeId v : p.removed_nodes) {
    depth[v] = 0;
    frontier.push_back(v);
  }
  for (const auto& e : p.removed_edges)
    for (NodeId v : {e.u, e.v})
      if (depth[v] == kUnseen) {
        depth[v] = 1;
        frontier.push_back(v);
      }
  // depth-0 seeds precede depth-1 seeds, so the queue stays depth-ordered
  while (!frontier.empty()) {
    const NodeId v = frontier.front();
    frontier.pop_front();
    if (depth[v] >= hops) continue;
    for (NodeId u : neighbors(v))
      if (depth[u] == kUnseen) {
        depth[u] = depth[v] + 1;
        frontier.push_back(u);
      }
  }

  InfluenceSet out;
  out.hops = hops;
  for (std::size_t v = 0; v < n; ++v)
    if (depth[v] != kUnseen && depth[v] <= hops &&
        !std::binary_search(p.removed_nodes.begin(), p.removed_nodes.end(),
                            static_cast<NodeId>(v)))
      out.nodes.push_back(static_cast<NodeId>(v));
  return out;
}

/// (|V^R| + 2 |V^I|)^2.
inline double error_criterion(const Perturbation& p, const InfluenceSet& infl) {
  const double s = static_cast<double>(p.removed_nodes.size()) + 2.0 * infl.nodes.size();
  return s * s;
}

struct CgOptions {
  std::size_t max_iters = 0;  ///< 0 -> 10 * parameter count
  double tol = 1e-8;          ///< on ||r|| / ||b||
  double damping = 1e-3;
};

struct ApproxResult {
  ModelParams theta_aug;
  double delta = 0.0;
  double residual_grad_norm = 0.0;
  std::size_t cg_iters = 0;
  double cg_residual = 0.0;
  bool cg_converged = true;
  InfluenceSet influence;
};

/// A trained reference model bound to its graph. Holds the propagation over
/// the full (V, E) so that many perturbations can be approximated cheaply.
/// Safe to share across threads.
class ReferenceModel {
 public:
  ReferenceModel(const AttributedGraph& g, ModelParams theta_ref)
      : g_(&g),
        theta_(std::move(theta_ref)),
        full_(propagate(g, g.all_nodes(), g.edges(), theta_.hops)) {
    require(theta_.feature_dim() == g.feature_dim() &&
                theta_.classes() == static_cast<std::size_t>(g.num_classes()),
            Errc::dimension_mismatch, "reference parameters do not match graph");
  }

  [[nodiscard]] const ModelParams& params() const { return theta_; }
  [[nodiscard]] const AttributedGraph& graph() const { return *g_; }

  /// One Newton step on the post-removal objective from theta_ref:
  ///   theta_aug = theta_ref + (H_aug + damping I)^-1 Delta,
  ///   Delta = grad sum_{V^I ∪ V^R} l(theta_ref; v, E) - grad sum_{V^I} l(theta_ref; v, E \ closure)
  /// with H_aug the Hessian over (V \ V^R, E \ closure) at theta_ref, solved by CG.
  [[nodiscard]] ApproxResult approximate(
      const Perturbation& p, const CgOptions& cg = {},
      NeighborhoodBasis basis = NeighborhoodBasis::original) const {
    ApproxResult out;
    out.theta_aug = theta_;
    if (p.empty()) {
      out.delta = 0.0;
      out.residual_grad_norm = objective_full().gradient(theta_.flat()).norm();
      return out;
    }
    const AttributedGraph& g = *g_;
    out.influence = influenced_nodes(g, p, theta_.hops, basis);
    out.delta = error_criterion(p, out.influence);

    const auto keep = remaining_nodes(g, p);
    const auto aug = propagate(g, keep, remaining_edges(g, p), theta_.hops);

    std::vector<NodeId> touched = out.influence.nodes;
    touched.insert(touched.end(), p.removed_nodes.begin(), p.removed_nodes.end());
    const Eigen::VectorXd theta = theta_.flat();
    const Eigen::VectorXd delta_grad =
        make_objective(theta_, g, full_, touched).gradient(theta) -
        make_objective(theta_, g, aug, out.influence.nodes).gradient(theta);

    const auto hessian = make_objective(theta_, g, aug, keep);
    const std::size_t max_iters = cg.max_iters ? cg.max_iters : 10 * theta_.size();
    const auto h = hessian.hessian_at(theta);
    auto solve = conjugate_gradient(
        [&](const Eigen::VectorXd& v) { return h.apply(v, cg.damping); }, delta_grad,
        max_iters, cg.tol);
    out.cg_iters = solve.iterations;
    out.cg_residual = solve.relative_residual;
    out.cg_converged = solve.converged;
    out.theta_aug.flat() = theta + solve.x;
    out.residual_grad_norm = hessian.gradient(out.theta_aug.flat()).norm();
    return out;
  }

 private:
  [[nodiscard]] Objective objective_full() const {
    return make_objective(theta_, *g_, full_, g_->all_nodes());
  }

  const AttributedGraph* g_;
  ModelParams theta_;
  PropagatedFeatures full_;
};

inline ApproxResult approximate(const ModelParams& theta_ref, const AttributedGraph& g,
                                const Perturbation& p, const CgOptions& cg = {}) {
  return ReferenceModel(g, theta_ref).approximate(p, cg);
}

/// Ground truth: train from scratch on (V \ V^R, E \ closure).
inline ModelParams retrain_exact(const AttributedGraph& g, const Perturbation& p,
                                 const TrainConfig& cfg, TrainReport* report = nullptr) {
  const auto keep = remaining_nodes(g, p);
  require(!keep.empty(), Errc::invalid_argument, "nothing left to train on");
  return train(g, keep, remaining_edges(g, p), cfg, report);
}

/// ||grad sum_{v in V \ V^R} l(theta; v, E \ closure)||_2.
inline double residual_gradient_norm(const ModelParams& theta, const AttributedGraph& g,
                                     const Perturbation& p) {
  return gradient(theta, g, remaining_nodes(g, p), remaining_edges(g, p)).norm();
}

}  // namespace gpia
