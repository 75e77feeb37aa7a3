#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "gpia/graph.hpp"

namespace gpia {

struct CommunityPartition {
  /// assignment[v] = community id, ids contiguous from 0 in order of first
  /// appearance over node ids.
  std::vector<int> assignment;
  double modularity = 0.0;

  [[nodiscard]] int count() const {
    return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  }

  [[nodiscard]] std::vector<std::vector<NodeId>> members() const {
    std::vector<std::vector<NodeId>> out(static_cast<std::size_t>(count()));
    for (std::size_t v = 0; v < assignment.size(); ++v)
      out[assignment[v]].push_back(static_cast<NodeId>(v));
    return out;
  }
};

/// Newman modularity of an unweighted undirected graph; 0 for edgeless graphs.
inline double modularity(const AttributedGraph& g, std::span<const int> assignment) {
  const double m = static_cast<double>(g.edges().size());
  if (m == 0.0) return 0.0;
  const int k = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<double> internal(k, 0.0), degree(k, 0.0);
  for (const auto& e : g.edges())
    if (assignment[e.u] == assignment[e.v]) internal[assignment[e.u]] += 1.0;
  for (std::size_t v = 0; v < g.node_count(); ++v)
    degree[assignment[v]] += static_cast<double>(g.degree(static_cast<NodeId>(v)));
  double q = 0.0;
  for (int c = 0; c < k; ++c) q += internal[c] / m - (degree[c] / (2 * m)) * (degree[c] / (2 * m));
  return q;
}

/// Relabels ids in order of first appearance.
inline std::vector<int> canonical_labels(std::span<const int> raw) {
  std::unordered_map<int, int> ids;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = ids.try_emplace(raw[i], static_cast<int>(ids.size()));
    out[i] = it->second;
  }
  return out;
}

namespace detail {

struct WeightedGraph {
  std::vector<std::vector<std::pair<int, double>>> adj;  // no self entries
  std::vector<double> self;                              // internal weight, each edge once

  [[nodiscard]] std::size_t size() const { return adj.size(); }
  [[nodiscard]] double degree(std::size_t i) const {
    double k = 2 * self[i];
    for (const auto& [j, w] : adj[i]) k += w;
    return k;
  }
};

/// One level of local moving. Returns true when any node changed community.
inline bool louvain_local_moves(const WeightedGraph& wg, std::vector<int>& comm, Rng& rng) {
  const std::size_t n = wg.size();
  std::vector<double> k(n), tot(n, 0.0);
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = wg.degree(i);
    m2 += k[i];
    tot[comm[i]] += k[i];
  }
  if (m2 == 0.0) return false;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> link(n, 0.0);
  std::vector<int> touched;
  bool any = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i : order) {
      const int own = comm[i];
      touched.clear();
      link[own] = 0.0;
      touched.push_back(own);
      for (const auto& [j, w] : wg.adj[i]) {
        const int c = comm[j];
        if (link[c] == 0.0 && c != own) touched.push_back(c);
        link[c] += w;
      }
      tot[own] -= k[i];
      int best = own;
      double best_gain = link[own] - tot[own] * k[i] / m2;
      for (int c : touched) {
        const double gain = link[c] - tot[c] * k[i] / m2;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += k[i];
      for (int c : touched) link[c] = 0.0;
      if (best != own) {
        comm[i] = best;
        moved = true;
        any = true;
      }
    }
  }
  return any;
}

inline WeightedGraph aggregate(const WeightedGraph& wg, const std::vector<int>& comm, int k) {
  WeightedGraph out;
  out.adj.assign(k, {});
  out.self.assign(k, 0.0);
  std::vector<std::unordered_map<int, double>> links(k);
  for (std::size_t i = 0; i < wg.size(); ++i) {
    out.self[comm[i]] += wg.self[i];
    for (const auto& [j, w] : wg.adj[i]) {
      if (static_cast<std::size_t>(j) < i) continue;
      if (comm[i] == comm[j]) {
        out.self[comm[i]] += w;
      } else {
        links[comm[i]][comm[j]] += w;
        links[comm[j]][comm[i]] += w;
      }
    }
  }
  for (int c = 0; c < k; ++c) {
    out.adj[c].assign(links[c].begin(), links[c].end());
    std::sort(out.adj[c].begin(), out.adj[c].end());
  }
  return out;
}

}  // namespace detail

/// Multi-level Louvain. Each level visits nodes in a seeded shuffled order and
/// moves a node to its best-gain neighbouring community as soon as that gain is
/// positive; levels repeat on the aggregated graph until nothing moves.
inline CommunityPartition louvain_partition(const AttributedGraph& g, std::uint64_t seed) {
  require(!g.empty(), Errc::empty_graph, "louvain_partition");
  const std::size_t n = g.node_count();

  detail::WeightedGraph wg;
  wg.adj.assign(n, {});
  wg.self.assign(n, 0.0);
  for (const auto& e : g.edges()) {
    wg.adj[e.u].emplace_back(e.v, 1.0);
    wg.adj[e.v].emplace_back(e.u, 1.0);
  }

  Rng rng(seed);
  std::vector<int> assignment(n);
  std::iota(assignment.begin(), assignment.end(), 0);
  for (;;) {
    std::vector<int> comm(wg.size());
    std::iota(comm.begin(), comm.end(), 0);
    if (!detail::louvain_local_moves(wg, comm, rng)) break;
    comm = canonical_labels(comm);
    const int k = *std::max_element(comm.begin(), comm.end()) + 1;
    for (auto& a : assignment) a = comm[a];
    if (static_cast<std::size_t>(k) == wg.size()) break;
    wg = detail::aggregate(wg, comm, k);
  }

  CommunityPartition out;
  out.assignment = canonical_labels(assignment);
  out.modularity = modularity(g, out.assignment);
  return out;
}

}  // namespace gpia
