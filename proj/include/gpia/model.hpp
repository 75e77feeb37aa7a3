#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gpia/graph.hpp"

namespace gpia {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// cross_entropy: softmax regression (the attacked model family).
/// squared_error: 0.5 * ||W x - onehot(y)||^2, a quadratic surrogate used to
/// check that the Newton update is exact on quadratic objectives.
enum class LossKind { cross_entropy, squared_error };

inline std::string to_string(LossKind k) {
  return k == LossKind::cross_entropy ? "cross_entropy" : "squared_error";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "squared_error") return LossKind::squared_error;
  fail(Errc::config, "unknown loss '" + s + "'");
}

/// Parameters of the propagated-feature classifier: one row per class holding
/// f weights followed by the bias. Flattened row-major, m = c * (f + 1).
struct ModelParams {
  RowMatrix theta;
  int hops = 2;
  double lambda = 1e-2;
  LossKind loss = LossKind::cross_entropy;

  static ModelParams zeros(std::size_t classes, std::size_t feature_dim, int hops, double lambda,
                           LossKind loss = LossKind::cross_entropy) {
    ModelParams p;
    p.theta = RowMatrix::Zero(static_cast<Eigen::Index>(classes),
                              static_cast<Eigen::Index>(feature_dim + 1));
    p.hops = hops;
    p.lambda = lambda;
    p.loss = loss;
    return p;
  }

  [[nodiscard]] std::size_t classes() const { return static_cast<std::size_t>(theta.rows()); }
  [[nodiscard]] std::size_t feature_dim() const {
    return static_cast<std::size_t>(theta.cols()) - 1;
  }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(theta.size()); }

  [[nodiscard]] Eigen::Map<Eigen::VectorXd> flat() { return {theta.data(), theta.size()}; }
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> flat() const {
    return {theta.data(), theta.size()};
  }
};

/// Rows of S^l X where S = D^-1 (A + I) is the mean aggregation over the
/// closed neighbourhood, with A restricted to `nodes` and the given edge set.
/// Rows of nodes outside the subset are zero.
struct PropagatedFeatures {
  RowMatrix rows;
  std::vector<NodeId> nodes;
  int hops = 0;
  std::uint64_t edge_snapshot_hash = 0;
};

inline PropagatedFeatures propagate(const AttributedGraph& g, std::span<const NodeId> node_subset,
                                    const EdgeSet& edge_set, int hops) {
  require(hops >= 0, Errc::invalid_argument, "negative hop count");
  const std::size_t n = g.node_count();
  std::vector<char> in(n, 0);
  for (NodeId v : node_subset) {
    require(v >= 0 && static_cast<std::size_t>(v) < n, Errc::invalid_argument,
            "propagate: node out of range");
    in[v] = 1;
  }
  // CSR adjacency of the edges with both endpoints inside the subset
  std::vector<std::size_t> offset(n + 1, 0);
  for (const auto& e : edge_set) {
    require(e.u >= 0 && static_cast<std::size_t>(e.v) < n, Errc::edge_out_of_range,
            "propagate: edge outside graph");
    if (in[e.u] && in[e.v]) {
      ++offset[e.u + 1];
      ++offset[e.v + 1];
    }
  }
  for (std::size_t v = 0; v < n; ++v) offset[v + 1] += offset[v];
  std::vector<NodeId> adj(offset[n]);
  {
    std::vector<std::size_t> fill(offset.begin(), offset.end() - 1);
    for (const auto& e : edge_set)
      if (in[e.u] && in[e.v]) {
        adj[fill[e.u]++] = e.v;
        adj[fill[e.v]++] = e.u;
      }
  }

  PropagatedFeatures out;
  out.nodes.assign(node_subset.begin(), node_subset.end());
  out.hops = hops;
  out.edge_snapshot_hash = edge_hash(edge_set);
  const auto f = g.features().cols();
  RowMatrix cur = RowMatrix::Zero(static_cast<Eigen::Index>(n), f);
  for (NodeId v : node_subset) cur.row(v) = g.features().row(v);
  RowMatrix next = RowMatrix::Zero(static_cast<Eigen::Index>(n), f);
  for (int step = 0; step < hops; ++step) {
    for (NodeId v : node_subset) {
      auto row = next.row(v);
      row = cur.row(v);
      for (std::size_t i = offset[v]; i < offset[v + 1]; ++i) row += cur.row(adj[i]);
      row /= static_cast<double>(offset[v + 1] - offset[v] + 1);
    }
    cur.swap(next);
  }
  out.rows = std::move(cur);
  return out;
}

/// Total objective sum_{v in nodes} [ loss_v(theta) + lambda/2 ||theta||^2 ]
/// over a fixed set of propagated rows. The regularizer is attached to every
/// node term, so the objective is (|nodes| * lambda)-strongly convex.
class Objective {
 public:
  Objective(const PropagatedFeatures& features, std::span<const int> labels,
            std::span<const NodeId> nodes, std::size_t num_classes, double lambda, LossKind loss)
      : classes_(num_classes), lambda_(lambda), loss_(loss) {
    const auto f = features.rows.cols();
    design_.resize(static_cast<Eigen::Index>(nodes.size()), f + 1);
    targets_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nodes.size()),
                                     static_cast<Eigen::Index>(num_classes));
    labels_.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      design_.row(r).head(f) = features.rows.row(nodes[i]);
      design_(r, f) = 1.0;
      labels_[i] = labels[nodes[i]];
      require(labels_[i] >= 0 && static_cast<std::size_t>(labels_[i]) < num_classes,
              Errc::invalid_argument, "label outside class range");
      targets_(r, labels_[i]) = 1.0;
    }
  }

  [[nodiscard]] std::size_t count() const { return labels_.size(); }
  [[nodiscard]] std::size_t param_size() const {
    return classes_ * static_cast<std::size_t>(design_.cols());
  }
  [[nodiscard]] double ridge_weight() const { return lambda_ * static_cast<double>(count()); }

  [[nodiscard]] double loss(const Eigen::VectorXd& theta) const {
    if (count() == 0) return 0.0;
    const Eigen::MatrixXd z = logits(theta);
    double total = 0.0;
    if (loss_ == LossKind::cross_entropy) {
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        total += lse - z(i, labels_[static_cast<std::size_t>(i)]);
      }
    } else {
      total = 0.5 * (z - targets_).squaredNorm();
    }
    return total + 0.5 * ridge_weight() * theta.squaredNorm();
  }

  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    if (count() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_size()));
    const Eigen::MatrixXd resid = residual(theta);
    RowMatrix g = resid.transpose() * design_;
    Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
    out += ridge_weight() * theta;
    return out;
  }

  /// The Hessian at a fixed theta as a linear operator; the softmax outputs
  /// are computed once and reused by every product.
  class HessianAt {
   public:
    HessianAt(const Objective& obj, const Eigen::VectorXd& theta) : obj_(&obj) {
      if (obj.loss_ == LossKind::cross_entropy && obj.count() > 0) probs_ = obj.probabilities(theta);
    }

    /// (H + damping I) v; O(|nodes| c f).
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& v, double damping = 0.0) const {
      const Objective& o = *obj_;
      if (o.count() == 0) return damping * v;
      const auto cols = o.design_.cols();
      Eigen::Map<const RowMatrix> vm(v.data(), static_cast<Eigen::Index>(o.classes_), cols);
      Eigen::MatrixXd a = o.design_ * vm.transpose();  // |nodes| x c
      if (o.loss_ == LossKind::cross_entropy) {
        const Eigen::VectorXd pa = (probs_.array() * a.array()).rowwise().sum();
        a = (probs_.array() * (a.colwise() - pa).array()).matrix();
      }
      RowMatrix h = a.transpose() * o.design_;
      Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(h.data(), h.size());
      out += (o.ridge_weight() + damping) * v;
      return out;
    }

   private:
    const Objective* obj_;
    Eigen::MatrixXd probs_;
  };

  [[nodiscard]] HessianAt hessian_at(const Eigen::VectorXd& theta) const { return {*this, theta}; }

  /// (H + damping I) v with H the exact Hessian at theta.
  [[nodiscard]] Eigen::VectorXd hvp(const Eigen::VectorXd& theta, const Eigen::VectorXd& v,
                                    double damping = 0.0) const {
    return hessian_at(theta).apply(v, damping);
  }

  /// Upper bound on the largest Hessian eigenvalue, valid for every theta.
  [[nodiscard]] double lipschitz_bound() const {
    const double curv = loss_ == LossKind::cross_entropy ? 0.5 : 1.0;
    return curv * design_.squaredNorm() + ridge_weight();
  }

  [[nodiscard]] Eigen::MatrixXd probabilities(const Eigen::VectorXd& theta) const {
    return softmax_rows(logits(theta));
  }

  static Eigen::MatrixXd softmax_rows(Eigen::MatrixXd z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  }

 private:
  [[nodiscard]] Eigen::MatrixXd logits(const Eigen::VectorXd& theta) const {
    Eigen::Map<const RowMatrix> w(theta.data(), static_cast<Eigen::Index>(classes_),
                                  design_.cols());
    return design_ * w.transpose();
  }

  [[nodiscard]] Eigen::MatrixXd residual(const Eigen::VectorXd& theta) const {
    if (loss_ == LossKind::cross_entropy) return probabilities(theta) - targets_;
    return logits(theta) - targets_;
  }

  std::size_t classes_;
  double lambda_;
  LossKind loss_;
  Eigen::MatrixXd design_;   // propagated rows with a trailing 1 for the bias
  Eigen::MatrixXd targets_;  // one-hot labels
  std::vector<int> labels_;
};

inline Objective make_objective(const ModelParams& like, const AttributedGraph& g,
                                const PropagatedFeatures& features,
                                std::span<const NodeId> nodes) {
  return Objective(features, g.class_label(), nodes, like.classes(), like.lambda, like.loss);
}

// Convenience entry points that propagate first. Callers evaluating many
// quantities on the same (nodes, edges) should build one Objective instead.

inline double loss(const ModelParams& params, const AttributedGraph& g,
                   std::span<const NodeId> nodes, const EdgeSet& edges) {
  const auto x = propagate(g, nodes, edges, params.hops);
  return make_objective(params, g, x, nodes).loss(params.flat());
}

inline Eigen::VectorXd gradient(const ModelParams& params, const AttributedGraph& g,
                                std::span<const NodeId> nodes, const EdgeSet& edges) {
  const auto x = propagate(g, nodes, edges, params.hops);
  return make_objective(params, g, x, nodes).gradient(params.flat());
}

inline Eigen::VectorXd hessian_vector_product(const ModelParams& params, const AttributedGraph& g,
                                              std::span<const NodeId> nodes, const EdgeSet& edges,
                                              const Eigen::VectorXd& v, double damping) {
  require(static_cast<std::size_t>(v.size()) == params.size(), Errc::dimension_mismatch,
          "hvp vector length");
  require(damping >= 0.0, Errc::invalid_argument, "negative damping");
  const auto x = propagate(g, nodes, edges, params.hops);
  return make_objective(params, g, x, nodes).hvp(params.flat(), v, damping);
}

enum class StepRule { fixed, backtracking };

struct TrainConfig {
  int hops = 2;
  double lambda = 1e-2;
  LossKind loss = LossKind::cross_entropy;
  std::size_t max_iters = 50000;
  double grad_tol = 1e-6;
  StepRule step_rule = StepRule::backtracking;
  double fixed_step = 1e-2;

  void validate() const {
    require(grad_tol > 0.0, Errc::invalid_argument, "grad_tol must be positive");
    require(lambda > 0.0, Errc::invalid_argument, "lambda must be positive");
    require(hops >= 0, Errc::invalid_argument, "negative hop count");
  }
};

struct TrainReport {
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

/// Full-batch gradient descent from zero. Backtracking (Armijo, c = 1/2)
/// starts from twice the previous step and never goes below 1/L, the step the
/// global curvature bound guarantees to descend with.
inline ModelParams train(const Objective& obj, ModelParams params, const TrainConfig& cfg,
                         TrainReport* report = nullptr) {
  cfg.validate();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.param_size()));
  double f = obj.loss(theta);
  Eigen::VectorXd g = obj.gradient(theta);
  const double min_step = 1.0 / obj.lipschitz_bound();
  double step = min_step;
  TrainReport rep;
  for (; rep.iterations < cfg.max_iters; ++rep.iterations) {
    const double gn2 = g.squaredNorm();
    if (std::sqrt(gn2) <= cfg.grad_tol) break;
    Eigen::VectorXd next;
    double fn = 0.0;
    if (cfg.step_rule == StepRule::fixed) {
      next = theta - cfg.fixed_step * g;
      fn = obj.loss(next);
    } else {
      step *= 2.0;
      for (;;) {
        next = theta - step * g;
        fn = obj.loss(next);
        if (fn <= f - 0.5 * step * gn2) break;
        if (step <= min_step) {
          step = min_step;
          next = theta - step * g;
          fn = obj.loss(next);
          break;
        }
        step = std::max(step * 0.5, min_step);
      }
    }
    require(std::isfinite(fn), Errc::non_finite_loss, "training diverged");
    theta.swap(next);
    f = fn;
    g = obj.gradient(theta);
  }
  rep.grad_norm = g.norm();
  rep.converged = rep.grad_norm <= cfg.grad_tol;
  if (report) *report = rep;
  params.flat() = theta;
  return params;
}

inline ModelParams train(const AttributedGraph& g, std::span<const NodeId> nodes,
                         const EdgeSet& edges, const TrainConfig& cfg,
                         TrainReport* report = nullptr) {
  cfg.validate();
  auto params = ModelParams::zeros(static_cast<std::size_t>(g.num_classes()), g.feature_dim(),
                                   cfg.hops, cfg.lambda, cfg.loss);
  const auto x = propagate(g, nodes, edges, cfg.hops);
  const auto obj = make_objective(params, g, x, nodes);
  return train(obj, std::move(params), cfg, report);
}

inline ModelParams train(const AttributedGraph& g, const TrainConfig& cfg,
                         TrainReport* report = nullptr) {
  return train(g, g.all_nodes(), g.edges(), cfg, report);
}

/// Softmax outputs for `probe` nodes, propagating over (probe, edges).
inline Eigen::MatrixXd posteriors(const ModelParams& params, const AttributedGraph& g,
                                  std::span<const NodeId> probe, const EdgeSet& edges) {
  require(g.feature_dim() == params.feature_dim(), Errc::dimension_mismatch,
          "probe feature dimension");
  const auto x = propagate(g, probe, edges, params.hops);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(probe.size()), x.rows.cols() + 1);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    design.row(static_cast<Eigen::Index>(i)).head(x.rows.cols()) = x.rows.row(probe[i]);
    design(static_cast<Eigen::Index>(i), x.rows.cols()) = 1.0;
  }
  return Objective::softmax_rows(design * params.theta.transpose());
}

}  // namespace gpia
