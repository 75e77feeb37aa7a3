#pragma once

#include <algorithm>
#include <random>
#include <utility>
#include <vector>

#include "gpia/graph.hpp"
#include "gpia/louvain.hpp"

namespace gpia {

struct WalkConfig {
  double w = 0.5;  ///< weight of same-community neighbours; others get 1 - w
  std::size_t target_size = 2;
  std::uint64_t seed = 0;
  bool restart_on_dead_end = true;

  void validate() const {
    require(w >= 0.0 && w <= 1.0, Errc::invalid_argument, "walk weight outside [0,1]");
    require(target_size >= 2, Errc::invalid_argument, "walk target size < 2");
  }
};

/// Transition distribution of the community-aware walk at `node`, aligned with
/// g.neighbors(node). All zeros when the node has no reachable neighbour.
inline std::vector<double> transition_probabilities(const AttributedGraph& g,
                                                    const CommunityPartition& part, double w,
                                                    NodeId node) {
  auto nb = g.neighbors(node);
  std::vector<double> p(nb.size());
  double total = 0.0;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    p[i] = part.assignment[nb[i]] == part.assignment[node] ? w : 1.0 - w;
    total += p[i];
  }
  if (total > 0.0)
    for (auto& x : p) x /= total;
  return p;
}

/// Community-aware random walk sample. Starts at a uniform node of
/// `start_community` and walks until target_size distinct nodes are visited or
/// 50 * target_size steps elapse (meta().partial is then set). Returns the
/// induced subgraph in visit order.
inline AttributedGraph sample_reference_graph(const AttributedGraph& g,
                                              const CommunityPartition& part,
                                              const WalkConfig& cfg, int start_community) {
  cfg.validate();
  require(part.assignment.size() == g.node_count(), Errc::invalid_argument,
          "partition does not match graph");
  std::vector<NodeId> pool;
  for (NodeId v = 0; static_cast<std::size_t>(v) < g.node_count(); ++v)
    if (part.assignment[v] == start_community) pool.push_back(v);
  require(start_community >= 0 && !pool.empty(), Errc::invalid_argument,
          "unknown start community");

  Rng rng(cfg.seed);
  auto draw_start = [&] {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };
  const std::size_t target = std::min(cfg.target_size, g.node_count());
  const std::size_t cap = 50 * cfg.target_size;
  auto weight = [&](NodeId from, NodeId to) {
    return part.assignment[to] == part.assignment[from] ? cfg.w : 1.0 - cfg.w;
  };

  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> visited;
  NodeId cur = draw_start();
  seen[cur] = 1;
  visited.push_back(cur);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t steps = 0;
  while (visited.size() < target && steps < cap) {
    ++steps;
    auto nb = g.neighbors(cur);
    double total = 0.0;
    for (NodeId x : nb) total += weight(cur, x);
    if (!(total > 0.0)) {
      require(cfg.restart_on_dead_end, Errc::isolated_start,
              "walk reached node " + std::to_string(cur) + " with no usable neighbour");
      cur = draw_start();
    } else {
      // same sampling rule as transition_probabilities, without the allocation
      const double u = unif(rng) * total;
      double acc = 0.0;
      std::size_t pick = nb.size() - 1;
      for (std::size_t i = 0; i < nb.size(); ++i) {
        const double p = weight(cur, nb[i]);
        acc += p;
        if (u < acc && p > 0.0) {
          pick = i;
          break;
        }
      }
      while (weight(cur, nb[pick]) == 0.0) --pick;
      cur = nb[pick];
    }
    if (!seen[cur]) {
      seen[cur] = 1;
      visited.push_back(cur);
    }
  }

  AttributedGraph out = g.induced(visited);
  GraphMeta meta = out.meta();
  meta.partial = visited.size() < target;
  meta.walk_steps = steps;
  out.set_meta(std::move(meta));
  return out;
}

/// Simple random walk (w = 0.5 over a single community) from a uniform start.
inline AttributedGraph sample_simple_walk(const AttributedGraph& g, std::size_t size,
                                          std::uint64_t seed) {
  CommunityPartition one;
  one.assignment.assign(g.node_count(), 0);
  WalkConfig cfg;
  cfg.w = 0.5;
  cfg.target_size = std::max<std::size_t>(2, size);
  cfg.seed = seed;
  cfg.restart_on_dead_end = true;
  return sample_reference_graph(g, one, cfg, 0);
}

/// `count` simple-walk samples with per-sample seeds derived from `seed`.
inline std::vector<AttributedGraph> sample_target_graphs(const AttributedGraph& pool,
                                                         std::size_t count, std::size_t size,
                                                         std::uint64_t seed) {
  require(size <= pool.node_count(), Errc::invalid_argument, "sample size exceeds pool");
  std::vector<AttributedGraph> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(sample_simple_walk(pool, size, mix_seed(seed, i)));
  return out;
}

/// Induced subgraph on `size` distinct nodes drawn uniformly.
inline AttributedGraph sample_uniform_nodes(const AttributedGraph& g, std::size_t size,
                                            std::uint64_t seed) {
  auto nodes = g.all_nodes();
  Rng rng(seed);
  std::shuffle(nodes.begin(), nodes.end(), rng);
  nodes.resize(std::min(size, nodes.size()));
  std::sort(nodes.begin(), nodes.end());
  return g.induced(nodes);
}

struct GraphSplit {
  AttributedGraph auxiliary;
  AttributedGraph target_pool;
};

/// Louvain communities (largest first, ties by id) are dealt greedily to the
/// lighter of two bins; bin 0 becomes the auxiliary graph.
inline GraphSplit split_target_auxiliary(const AttributedGraph& g, std::uint64_t seed) {
  require(g.node_count() >= 4, Errc::invalid_argument, "split needs at least 4 nodes");
  const auto part = louvain_partition(g, seed);
  auto members = part.members();
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return members[a].size() > members[b].size();
  });
  std::vector<NodeId> bins[2];
  for (std::size_t c : order) {
    auto& dst = bins[0].size() <= bins[1].size() ? bins[0] : bins[1];
    dst.insert(dst.end(), members[c].begin(), members[c].end());
  }
  for (auto& b : bins) std::sort(b.begin(), b.end());
  return {g.induced(bins[0]), g.induced(bins[1])};
}

}  // namespace gpia
