#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "gpia/approximation.hpp"
#include "gpia/property.hpp"

namespace gpia {

/// k candidate perturbations of one reference graph.
struct PerturbationPool {
  int reference_id = 0;
  std::vector<Perturbation> perturbations;
  /// Symmetric, zero diagonal; empty until pairwise_edit_distance is run.
  Eigen::MatrixXd distances;
  std::vector<double> deltas;
  std::vector<int> labels;
  /// Reference id each perturbation was drawn from.
  std::vector<int> origins;

  [[nodiscard]] std::size_t size() const { return perturbations.size(); }
};

namespace detail {

/// Partial Fisher-Yates: afterwards v[0, m) is a uniform m-sample of v.
template <typename T>
void shuffle_prefix(std::vector<T>& v, std::size_t m, Rng& rng) {
  for (std::size_t i = 0; i < m && i + 1 < v.size(); ++i)
    std::swap(v[i], v[std::uniform_int_distribution<std::size_t>(i, v.size() - 1)(rng)]);
}

}  // namespace detail

/// k random removals. The first ceil(k/2) draw their nodes from the stratum
/// attr == spec.attr_value, the rest from its complement (topping up from the
/// other stratum when one runs short), so the pool tends to realize both
/// property labels. Edges are drawn uniformly from those surviving the node
/// removal. Labels are the property of each augmented graph.
inline PerturbationPool generate_perturbations(const AttributedGraph& g_ref,
                                               const PropertySpec& spec, std::size_t k,
                                               double node_frac, double edge_frac,
                                               std::uint64_t seed, int reference_id = 0) {
  require(k >= 2, Errc::invalid_argument, "need at least two perturbations");
  require(node_frac >= 0.0 && edge_frac >= 0.0 && edge_frac <= 1.0, Errc::invalid_argument,
          "removal fractions must be non-negative");
  const std::size_t n = g_ref.node_count();
  std::size_t n_nodes = static_cast<std::size_t>(std::llround(node_frac * n));
  if (node_frac > 0.0) n_nodes = std::max<std::size_t>(1, n_nodes);
  require(n_nodes < n, Errc::invalid_argument, "node fraction removes the whole graph");
  const auto n_edges_req =
      static_cast<std::size_t>(std::llround(edge_frac * g_ref.edges().size()));

  std::vector<NodeId> strata[2];
  for (std::size_t v = 0; v < n; ++v)
    strata[g_ref.property_attr()[v] == spec.attr_value ? 0 : 1].push_back(static_cast<NodeId>(v));

  PerturbationPool pool;
  pool.reference_id = reference_id;
  Rng rng(seed);
  const std::size_t first_half = (k + 1) / 2;
  EdgeSet surviving_pool;
  std::vector<char> removed(n, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const int s = i < first_half ? 0 : 1;
    auto& primary = strata[s];
    auto& secondary = strata[1 - s];
    const std::size_t from_primary = std::min(n_nodes, primary.size());
    detail::shuffle_prefix(primary, from_primary, rng);
    detail::shuffle_prefix(secondary, n_nodes - from_primary, rng);
    std::vector<NodeId> nodes(primary.begin(),
                              primary.begin() + static_cast<std::ptrdiff_t>(from_primary));
    nodes.insert(nodes.end(), secondary.begin(),
                 secondary.begin() + static_cast<std::ptrdiff_t>(n_nodes - from_primary));
    std::sort(nodes.begin(), nodes.end());

    for (NodeId v : nodes) removed[v] = 1;
    surviving_pool.clear();
    for (const auto& e : g_ref.edges())
      if (!removed[e.u] && !removed[e.v]) surviving_pool.push_back(e);
    for (NodeId v : nodes) removed[v] = 0;
    const std::size_t n_edges = std::min(n_edges_req, surviving_pool.size());
    detail::shuffle_prefix(surviving_pool, n_edges, rng);
    EdgeSet surviving(surviving_pool.begin(),
                      surviving_pool.begin() + static_cast<std::ptrdiff_t>(n_edges));

    auto p = Perturbation::make(g_ref, std::move(nodes), std::move(surviving));
    pool.labels.push_back(spec.kind == PropertyKind::node
                              ? compute_property(g_ref.property_attr(),
                                                 remaining_nodes(g_ref, p), {}, spec)
                              : compute_property(g_ref.property_attr(), {},
                                                 remaining_edges(g_ref, p), spec));
    pool.perturbations.push_back(std::move(p));
    pool.origins.push_back(reference_id);
  }
  return pool;
}

/// delta_i = (|V^R_i| + 2 |V^I_i|)^2 for every pool member.
inline void compute_deltas(PerturbationPool& pool, const AttributedGraph& g_ref, int hops) {
  pool.deltas.clear();
  for (const auto& p : pool.perturbations)
    pool.deltas.push_back(error_criterion(p, influenced_nodes(g_ref, p, hops)));
}

namespace detail {

template <typename T>
std::size_t symmetric_difference_size(const std::vector<T>& a, const std::vector<T>& b) {
  std::size_t common = 0;
  for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return a.size() + b.size() - 2 * common;
}

}  // namespace detail

/// Graph edit distance between sibling deletion subgraphs of one parent:
/// |V^R_i Δ V^R_j| + |closure_i Δ closure_j|.
inline Eigen::MatrixXd pairwise_edit_distance(const PerturbationPool& pool) {
  for (int o : pool.origins)
    require(o == pool.reference_id, Errc::mixed_references,
            "pool mixes perturbations of different references");
  const auto k = static_cast<Eigen::Index>(pool.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const auto& a = pool.perturbations[static_cast<std::size_t>(i)];
      const auto& b = pool.perturbations[static_cast<std::size_t>(j)];
      d(i, j) = d(j, i) = static_cast<double>(
          detail::symmetric_difference_size(a.removed_nodes, b.removed_nodes) +
          detail::symmetric_difference_size(a.closure_edges, b.closure_edges));
    }
  return d;
}

enum class SelectionObjective { maximize_diversity, minimize_diversity };
enum class SelectionSolver { exact_bb, brute_force, greedy };
enum class SelectionProof { optimal, feasible_heuristic };

struct SelectionConfig {
  std::size_t q = 1;
  double epsilon = 1.0;
  SelectionObjective objective = SelectionObjective::maximize_diversity;
  SelectionSolver solver = SelectionSolver::exact_bb;
  /// Demand at least one chosen member of each property label.
  bool require_both_labels = false;
};

struct SelectionResult {
  std::vector<std::size_t> chosen;  // ascending
  double objective_value = 0.0;     // sum_{i<j in chosen} d_ij
  SelectionProof proof = SelectionProof::optimal;
  bool infeasible = false;
};

/// eps = q * median(delta); the median of an even count is the mean of the middle pair.
inline double default_budget(std::span<const double> deltas, std::size_t q) {
  require(!deltas.empty(), Errc::invalid_argument, "no deltas");
  std::vector<double> v(deltas.begin(), deltas.end());
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return static_cast<double>(q) * median;
}

inline double default_budget(const PerturbationPool& pool, std::size_t q) {
  return default_budget(pool.deltas, q);
}

namespace detail {

inline bool improves(double candidate, double incumbent) {
  if (incumbent == -std::numeric_limits<double>::infinity()) return true;
  return candidate > incumbent + 1e-9 * std::max(1.0, std::abs(incumbent));
}

inline double pair_sum(const Eigen::MatrixXd& d, std::span<const std::size_t> set) {
  double s = 0.0;
  for (std::size_t a = 0; a < set.size(); ++a)
    for (std::size_t b = a + 1; b < set.size(); ++b)
      s += d(static_cast<Eigen::Index>(set[a]), static_cast<Eigen::Index>(set[b]));
  return s;
}

struct SelectionProblem {
  Eigen::MatrixXd w;  // signed: larger is better
  std::span<const double> delta;
  std::span<const int> labels;
  std::size_t q;
  double eps;
  bool both_labels;

  [[nodiscard]] std::size_t k() const { return delta.size(); }

  [[nodiscard]] bool labels_ok(std::span<const std::size_t> set) const {
    if (!both_labels) return true;
    bool seen[2] = {false, false};
    for (auto i : set) seen[labels[i] ? 1 : 0] = true;
    return seen[0] && seen[1];
  }
};

inline std::vector<std::size_t> brute_force(const SelectionProblem& pr) {
  require(pr.k() <= 25, Errc::invalid_argument, "brute force limited to k <= 25");
  const std::size_t k = pr.k(), q = pr.q;
  std::vector<std::size_t> idx(q), best;
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double best_obj = -std::numeric_limits<double>::infinity();
  for (;;) {
    double budget = 0.0;
    for (auto i : idx) budget += pr.delta[i];
    if (budget <= pr.eps && pr.labels_ok(idx)) {
      const double obj = pair_sum(pr.w, idx);
      if (improves(obj, best_obj)) {
        best_obj = obj;
        best = idx;
      }
    }
    // next combination in lexicographic order
    std::size_t pos = q;
    while (pos > 0 && idx[pos - 1] == k - q + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < q; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

inline std::vector<std::size_t> greedy(const SelectionProblem& pr) {
  const std::size_t k = pr.k();
  std::vector<std::size_t> chosen;
  std::vector<char> used(k, 0);
  std::vector<double> attach(k, 0.0);
  double spent = 0.0;
  auto completion_fits = [&](std::size_t j) {
    const std::size_t rest = pr.q - chosen.size() - 1;
    std::vector<double> others;
    for (std::size_t l = 0; l < k; ++l)
      if (!used[l] && l != j) others.push_back(pr.delta[l]);
    if (others.size() < rest) return false;
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(rest),
                      others.end());
    double cost = spent + pr.delta[j];
    for (std::size_t s = 0; s < rest; ++s) cost += others[s];
    return cost <= pr.eps;
  };
  while (chosen.size() < pr.q) {
    std::size_t pick = k;
    double score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (used[j] || !completion_fits(j)) continue;
      if (pr.both_labels && chosen.size() + 1 == pr.q) {
        auto trial = chosen;
        trial.push_back(j);
        if (!pr.labels_ok(trial)) continue;
      }
      const double s = chosen.empty() ? pr.w.row(static_cast<Eigen::Index>(j)).sum() : attach[j];
      if (s > score) {
        score = s;
        pick = j;
      }
    }
    if (pick == k) return {};
    used[pick] = 1;
    spent += pr.delta[pick];
    chosen.push_back(pick);
    for (std::size_t j = 0; j < k; ++j)
      attach[j] += pr.w(static_cast<Eigen::Index>(pick), static_cast<Eigen::Index>(j));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const SelectionProblem& pr)
      : pr_(pr), attach_(pr.k(), 0.0), scratch_(pr.k()), ranked_(pr.k()) {
    // each candidate's links to the others, strongest first
    for (std::size_t j = 0; j < pr.k(); ++j) {
      for (std::size_t l = 0; l < pr.k(); ++l)
        if (l != j) ranked_[j].emplace_back(pr.w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)), l);
      std::sort(ranked_[j].begin(), ranked_[j].end(), std::greater<>());
    }
  }

  std::vector<std::size_t> solve() {
    // a greedy incumbent sets the pruning threshold; the margin keeps every
    // optimal set reachable so the lexicographically smallest one still wins
    const auto warm = greedy(pr_);
    if (!warm.empty()) {
      const double g = pair_sum(pr_.w, warm);
      best_obj_ = g - 1e-6 * std::max(1.0, std::abs(g));
    }
    dfs(0);
    return best_.empty() ? warm : best_;
  }

 private:
  void dfs(std::size_t idx) {
    const std::size_t k = pr_.k();
    if (cur_.size() == pr_.q) {
      if (pr_.labels_ok(cur_) && improves(cur_obj_, best_obj_)) {
        best_obj_ = cur_obj_;
        best_ = cur_;
      }
      return;
    }
    const std::size_t slots = pr_.q - cur_.size();
    if (k - idx < slots) return;

    // cheapest completion must fit the budget
    scratch_.assign(pr_.delta.begin() + static_cast<std::ptrdiff_t>(idx), pr_.delta.end());
    std::partial_sort(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(slots),
                      scratch_.end());
    double cheapest = cur_delta_;
    for (std::size_t s = 0; s < slots; ++s) cheapest += scratch_[s];
    if (cheapest > pr_.eps) return;

    if (pr_.both_labels && !labels_reachable(idx, slots)) return;

    if (best_obj_ != -std::numeric_limits<double>::infinity() &&
        cur_obj_ + completion_bound(idx, slots) <=
            best_obj_ + 1e-9 * std::max(1.0, std::abs(best_obj_)))
      return;

    if (cur_delta_ + pr_.delta[idx] <= pr_.eps) {
      push(idx);
      dfs(idx + 1);
      pop(idx);
    }
    dfs(idx + 1);
  }

  bool labels_reachable(std::size_t idx, std::size_t slots) const {
    bool have[2] = {false, false}, avail[2] = {false, false};
    for (auto i : cur_) have[pr_.labels[i] ? 1 : 0] = true;
    for (std::size_t j = idx; j < pr_.k(); ++j) avail[pr_.labels[j] ? 1 : 0] = true;
    std::size_t missing = 0;
    for (int l = 0; l < 2; ++l) {
      if (!have[l] && !avail[l]) return false;
      if (!have[l]) ++missing;
    }
    return missing <= slots;
  }

  // Upper bound on the gain from adding `slots` members of [idx, k): each
  // candidate is credited its link to the current set plus half of its
  // (slots - 1) largest links to other candidates; the best `slots` credits add up.
  double completion_bound(std::size_t idx, std::size_t slots) {
    const std::size_t k = pr_.k();
    auto& potential = potential_;
    potential.clear();
    for (std::size_t j = idx; j < k; ++j) {
      if (cur_delta_ + pr_.delta[j] > pr_.eps) continue;
      double extra = 0.0;
      std::size_t taken = 0;
      for (const auto& [weight, l] : ranked_[j]) {
        if (taken + 1 >= slots) break;
        if (l < idx) continue;
        extra += weight;
        ++taken;
      }
      potential.push_back(attach_[j] + 0.5 * extra);
    }
    if (potential.size() < slots) return -std::numeric_limits<double>::infinity();
    std::partial_sort(potential.begin(), potential.begin() + static_cast<std::ptrdiff_t>(slots),
                      potential.end(), std::greater<>());
    double bound = 0.0;
    for (std::size_t s = 0; s < slots; ++s) bound += potential[s];
    return bound;
  }

  void push(std::size_t i) {
    cur_obj_ += attach_[i];
    cur_delta_ += pr_.delta[i];
    cur_.push_back(i);
    for (std::size_t j = 0; j < pr_.k(); ++j)
      attach_[j] += pr_.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  void pop(std::size_t i) {
    cur_.pop_back();
    for (std::size_t j = 0; j < pr_.k(); ++j)
      attach_[j] -= pr_.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    cur_delta_ -= pr_.delta[i];
    cur_obj_ -= attach_[i];
  }

  const SelectionProblem& pr_;
  std::vector<double> attach_;
  std::vector<double> scratch_;
  std::vector<double> potential_;
  std::vector<std::vector<std::pair<double, std::size_t>>> ranked_;
  std::vector<std::size_t> cur_;
  double cur_obj_ = 0.0;
  double cur_delta_ = 0.0;
  std::vector<std::size_t> best_;
  double best_obj_ = -std::numeric_limits<double>::infinity();
};

}  // namespace detail

/// Chooses q of k perturbations maximizing sum_{i<j} d_ij subject to
/// sum delta_i <= epsilon (or minimizing, under minimize_diversity). exact_bb
/// and brute_force return the lexicographically smallest optimal index set.
/// When no q-subset fits the budget, `infeasible` is set and the largest
/// affordable subset (cheapest deltas first) is reported.
inline SelectionResult select(const Eigen::MatrixXd& distances, std::span<const double> deltas,
                              std::span<const int> labels, const SelectionConfig& cfg) {
  const std::size_t k = deltas.size();
  require(static_cast<std::size_t>(distances.rows()) == k &&
              static_cast<std::size_t>(distances.cols()) == k,
          Errc::dimension_mismatch, "distance matrix does not match pool");
  require(cfg.q >= 1 && cfg.q <= k, Errc::invalid_argument, "need 1 <= q <= k");
  require(cfg.epsilon > 0.0, Errc::invalid_argument, "budget must be positive");
  require(!cfg.require_both_labels || labels.size() == k, Errc::dimension_mismatch,
          "labels do not match pool");

  detail::SelectionProblem pr{
      cfg.objective == SelectionObjective::maximize_diversity ? distances : Eigen::MatrixXd(-distances),
      deltas, labels, cfg.q, cfg.epsilon, cfg.require_both_labels};

  SelectionResult out;
  switch (cfg.solver) {
    case SelectionSolver::exact_bb:
      out.chosen = detail::BranchAndBound(pr).solve();
      break;
    case SelectionSolver::brute_force:
      out.chosen = detail::brute_force(pr);
      break;
    case SelectionSolver::greedy:
      out.chosen = detail::greedy(pr);
      out.proof = SelectionProof::feasible_heuristic;
      break;
  }
  if (out.chosen.empty()) {
    out.infeasible = true;
    out.proof = SelectionProof::feasible_heuristic;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return deltas[a] < deltas[b]; });
    double spent = 0.0;
    for (auto i : order) {
      if (out.chosen.size() == cfg.q || spent + deltas[i] > cfg.epsilon) break;
      spent += deltas[i];
      out.chosen.push_back(i);
    }
    std::sort(out.chosen.begin(), out.chosen.end());
  }
  out.objective_value = detail::pair_sum(distances, out.chosen);
  return out;
}

inline SelectionResult select(const PerturbationPool& pool, const SelectionConfig& cfg) {
  require(pool.deltas.size() == pool.size(), Errc::invalid_argument, "pool deltas not computed");
  require(static_cast<std::size_t>(pool.distances.rows()) == pool.size(), Errc::invalid_argument,
          "pool distances not computed");
  return select(pool.distances, pool.deltas, pool.labels, cfg);
}

inline nlohmann::json to_json(const SelectionResult& r) {
  return {{"chosen", r.chosen},
          {"objective_value", r.objective_value},
          {"proof", r.proof == SelectionProof::optimal ? "optimal" : "feasible-heuristic"},
          {"infeasible", r.infeasible}};
}

/// Distances are omitted above k = 64.
inline nlohmann::json to_json(const PerturbationPool& pool) {
  nlohmann::json j;
  j["reference_id"] = pool.reference_id;
  j["k"] = pool.size();
  j["deltas"] = pool.deltas;
  j["labels"] = pool.labels;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& p : pool.perturbations) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : p.removed_edges) edges.push_back({e.u, e.v});
    items.push_back({{"removed_nodes", p.removed_nodes}, {"removed_edges", edges}});
  }
  j["perturbations"] = items;
  if (pool.size() <= 64 && pool.distances.size() > 0) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < pool.distances.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < pool.distances.cols(); ++c) row.push_back(pool.distances(i, c));
      rows.push_back(row);
    }
    j["distances"] = rows;
  }
  return j;
}

}  // namespace gpia
