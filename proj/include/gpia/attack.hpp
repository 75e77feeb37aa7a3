#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpia/graph.hpp"
#include "gpia/graph_io.hpp"
#include "gpia/model.hpp"

namespace gpia {

enum class SampleOrigin { approximated, retrained_shadow, target };

inline std::string to_string(SampleOrigin o) {
  switch (o) {
    case SampleOrigin::approximated: return "approximated";
    case SampleOrigin::retrained_shadow: return "retrained-shadow";
    case SampleOrigin::target: return "target";
  }
  return "target";
}

inline SampleOrigin sample_origin_from_string(const std::string& s) {
  if (s == "approximated") return SampleOrigin::approximated;
  if (s == "retrained-shadow") return SampleOrigin::retrained_shadow;
  if (s == "target") return SampleOrigin::target;
  fail(Errc::parse_error, "unknown sample origin '" + s + "'");
}

struct AttackSample {
  Eigen::VectorXd features;
  int label = 0;
  SampleOrigin origin = SampleOrigin::approximated;
};

inline constexpr std::size_t kWhiteboxStatsPerClass = 5;

/// Per class row of the weight matrix: mean, max and the three largest
/// absolute entries (descending, zero-padded), then the bias vector sorted
/// descending. Each statistic is invariant to permuting feature coordinates.
inline Eigen::VectorXd featurize_whitebox(const ModelParams& theta) {
  const std::size_t c = theta.classes();
  const auto f = static_cast<Eigen::Index>(theta.feature_dim());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c * (kWhiteboxStatsPerClass + 1)));
  std::vector<double> mags;
  for (std::size_t k = 0; k < c; ++k) {
    const auto row = theta.theta.row(static_cast<Eigen::Index>(k)).head(f);
    const auto base = static_cast<Eigen::Index>(k * kWhiteboxStatsPerClass);
    // summing in sorted order keeps the mean bit-identical under permutation
    mags.assign(row.begin(), row.end());
    std::sort(mags.begin(), mags.end());
    if (f > 0) {
      out(base) = std::accumulate(mags.begin(), mags.end(), 0.0) / static_cast<double>(f);
      out(base + 1) = mags.back();
    }
    for (auto& m : mags) m = std::abs(m);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    for (std::size_t t = 0; t < 3 && t < mags.size(); ++t)
      out(base + 2 + static_cast<Eigen::Index>(t)) = mags[t];
  }
  std::vector<double> bias(c);
  for (std::size_t k = 0; k < c; ++k) bias[k] = theta.theta(static_cast<Eigen::Index>(k), f);
  std::sort(bias.begin(), bias.end(), std::greater<>());
  for (std::size_t k = 0; k < c; ++k)
    out(static_cast<Eigen::Index>(c * kWhiteboxStatsPerClass + k)) = bias[k];
  return out;
}

/// Posteriors on every probe node (propagated over the probe's own edges),
/// rows sorted lexicographically and flattened; |probe| * c entries.
inline Eigen::VectorXd featurize_blackbox(const ModelParams& theta, const AttributedGraph& probe) {
  require(probe.feature_dim() == theta.feature_dim(), Errc::dimension_mismatch,
          "probe feature dimension");
  const Eigen::MatrixXd post = posteriors(theta, probe, probe.all_nodes(), probe.edges());
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(post.rows()));
  for (Eigen::Index i = 0; i < post.rows(); ++i)
    rows[static_cast<std::size_t>(i)].assign(post.row(i).begin(), post.row(i).end());
  std::sort(rows.begin(), rows.end());
  Eigen::VectorXd out(post.size());
  Eigen::Index at = 0;
  for (const auto& r : rows)
    for (double x : r) out(at++) = x;
  return out;
}

struct AttackConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
};

/// Binary logistic classifier over z-scored features.
struct AttackModelParams {
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  AttackConfig train_meta;

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(weights.size()); }

  [[nodiscard]] double linear_response(const Eigen::VectorXd& x) const {
    require(static_cast<std::size_t>(x.size()) == dim(), Errc::dimension_mismatch,
            "attack feature dimension");
    return weights.dot(((x - mean).array() / scale.array()).matrix()) + bias;
  }
};

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Full-batch gradient descent on mean binary cross-entropy plus
/// weight_decay/2 ||w||^2, from zero weights. Standardization statistics come
/// from the training samples and are stored with the model.
inline AttackModelParams train_attack(std::span<const AttackSample> samples,
                                      const AttackConfig& cfg = {}) {
  require(!samples.empty(), Errc::single_class, "no samples");
  const auto d = samples.front().features.size();
  bool seen[2] = {false, false};
  for (const auto& s : samples) {
    require(s.features.size() == d, Errc::dimension_mismatch, "ragged attack samples");
    require(s.label == 0 || s.label == 1, Errc::invalid_argument, "labels must be binary");
    seen[s.label] = true;
  }
  require(seen[0] && seen[1], Errc::single_class, "both property labels are required");

  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = samples[static_cast<std::size_t>(i)].features.transpose();
    y(i) = samples[static_cast<std::size_t>(i)].label;
  }

  AttackModelParams m;
  m.train_meta = cfg;
  m.mean = x.colwise().mean().transpose();
  m.scale = ((x.rowwise() - m.mean.transpose()).array().square().colwise().sum() /
             static_cast<double>(n))
                .sqrt()
                .transpose();
  for (auto& s : m.scale)
    if (!(s > 1e-12)) s = 1.0;
  const Eigen::MatrixXd z =
      ((x.rowwise() - m.mean.transpose()).array().rowwise() / m.scale.transpose().array()).matrix();

  m.weights = Eigen::VectorXd::Zero(d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Eigen::VectorXd r = (z * m.weights).array() + m.bias;
    for (auto& v : r) v = sigmoid(v);
    r -= y;
    const Eigen::VectorXd gw = z.transpose() * r / static_cast<double>(n) + cfg.weight_decay * m.weights;
    const double gb = r.mean();
    m.weights -= cfg.learning_rate * gw;
    m.bias -= cfg.learning_rate * gb;
  }
  return m;
}

struct Prediction {
  int label = 0;
  double score = 0.5;
};

/// label = score > 0.5; an exact 0.5 maps to 0.
inline Prediction infer_property(const AttackModelParams& model, const Eigen::VectorXd& features) {
  const double score = sigmoid(model.linear_response(features));
  return {score > 0.5 ? 1 : 0, score};
}

struct Metrics {
  double accuracy = 0.0;
  double roc_auc = 0.5;
  std::size_t n = 0;
  /// Truths contained one label only; roc_auc is then reported as 0.5.
  bool single_class = false;
};

/// Accuracy and ROC-AUC via the Mann-Whitney rank statistic (ties count 1/2).
inline Metrics evaluate(std::span<const Prediction> predictions, std::span<const int> truths) {
  require(predictions.size() == truths.size(), Errc::dimension_mismatch,
          "predictions and truths differ in length");
  require(!truths.empty(), Errc::invalid_argument, "no predictions to evaluate");
  Metrics m;
  m.n = truths.size();
  std::size_t hits = 0, pos = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    hits += predictions[i].label == truths[i];
    pos += truths[i] == 1;
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.n);
  const std::size_t neg = m.n - pos;
  if (pos == 0 || neg == 0) {
    m.single_class = true;
    m.roc_auc = 0.5;
    return m;
  }
  std::vector<std::size_t> order(m.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].score < predictions[b].score;
  });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < m.n;) {
    std::size_t j = i;
    while (j < m.n && predictions[order[j]].score == predictions[order[i]].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (truths[order[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  m.roc_auc = (pos_rank_sum - p * (p + 1) / 2) / (p * q);
  return m;
}

// Attack datasets: CSV with header f0..f{d-1},label,origin.

inline void save_samples(std::span<const AttackSample> samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, path.string());
  const auto d = samples.empty() ? 0 : samples.front().features.size();
  for (Eigen::Index c = 0; c < d; ++c) out << 'f' << c << ',';
  out << "label,origin\n" << std::setprecision(17);
  for (const auto& s : samples) {
    for (Eigen::Index c = 0; c < s.features.size(); ++c) out << s.features(c) << ',';
    out << s.label << ',' << to_string(s.origin) << '\n';
  }
  require(out.good(), Errc::io, path.string());
}

inline std::vector<AttackSample> load_samples(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::parse_error, "missing header");
  const auto header = detail::split_line(line, ',');
  require(header.size() >= 2 && header[header.size() - 2] == "label" && header.back() == "origin",
          Errc::parse_error, "header must end with label,origin");
  const std::size_t d = header.size() - 2;
  std::vector<AttackSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split_line(line, ',');
    require(cols.size() == d + 2, Errc::ragged_attributes, path.string());
    AttackSample s;
    s.features.resize(static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < d; ++c)
      s.features(static_cast<Eigen::Index>(c)) = detail::parse_real(cols[c], path.string());
    s.label = static_cast<int>(detail::parse_int(cols[d], path.string()));
    s.origin = sample_origin_from_string(cols[d + 1]);
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json to_json(const AttackModelParams& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); };
  return {{"weights", vec(m.weights)},
          {"bias", m.bias},
          {"mean", vec(m.mean)},
          {"scale", vec(m.scale)},
          {"train_meta",
           {{"epochs", m.train_meta.epochs},
            {"learning_rate", m.train_meta.learning_rate},
            {"weight_decay", m.train_meta.weight_decay}}}};
}

inline AttackModelParams attack_model_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    AttackModelParams m;
    m.weights = vec(j.at("weights"));
    m.bias = j.at("bias").get<double>();
    m.mean = vec(j.at("mean"));
    m.scale = vec(j.at("scale"));
    const auto& meta = j.at("train_meta");
    m.train_meta.epochs = meta.at("epochs").get<std::size_t>();
    m.train_meta.learning_rate = meta.at("learning_rate").get<double>();
    m.train_meta.weight_decay = meta.at("weight_decay").get<double>();
    require(m.mean.size() == m.weights.size() && m.scale.size() == m.weights.size(),
            Errc::dimension_mismatch, "attack model vectors disagree");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, e.what());
  }
}

}  // namespace gpia
