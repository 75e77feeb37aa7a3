#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gpia/gpia.hpp"

namespace testing_support {

using gpia::AttributedGraph;
using gpia::Edge;
using gpia::EdgeSet;
using gpia::NodeId;

/// Graph with the given edges, one-hot-ish features [attr, 1 - attr, noise]
/// and class labels alternating over `classes`.
inline AttributedGraph make_graph(std::size_t n, EdgeSet edges, std::vector<int> attr = {},
                                  int classes = 2, std::uint64_t seed = 0) {
  if (attr.empty()) attr.assign(n, 0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
  std::vector<int> label(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto r = static_cast<Eigen::Index>(v);
    x(r, 0) = attr[v];
    x(r, 1) = 1 - attr[v];
    x(r, 2) = noise(rng);
    label[v] = static_cast<int>(v % static_cast<std::size_t>(classes));
  }
  return AttributedGraph(n, std::move(edges), std::move(x), std::move(attr), std::move(label),
                         classes);
}

inline EdgeSet clique_edges(NodeId first, NodeId size) {
  EdgeSet e;
  for (NodeId a = first; a < first + size; ++a)
    for (NodeId b = a + 1; b < first + size; ++b) e.emplace_back(a, b);
  return e;
}

/// Two cliques of sizes a and b, optionally joined by the bridge (a-1, a).
inline AttributedGraph two_cliques(NodeId a, NodeId b, bool bridge) {
  auto e = clique_edges(0, a);
  auto rest = clique_edges(a, b);
  e.insert(e.end(), rest.begin(), rest.end());
  if (bridge) e.emplace_back(a - 1, a);
  return make_graph(static_cast<std::size_t>(a + b), std::move(e));
}

/// Erdos-Renyi graph with random binary attributes and features correlated
/// with the class label, so trained models are non-trivial.
inline AttributedGraph random_graph(std::mt19937_64& rng, std::size_t n, double p, int classes = 2,
                                    std::size_t feature_dim = 4) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  EdgeSet e;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (unif(rng) < p) e.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_dim));
  std::vector<int> attr(n), label(n);
  for (std::size_t v = 0; v < n; ++v) {
    label[v] = static_cast<int>(v % static_cast<std::size_t>(classes));
    attr[v] = unif(rng) < 0.5 ? 1 : 0;
    for (std::size_t c = 0; c < feature_dim; ++c)
      x(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) =
          noise(rng) + (static_cast<int>(c) == label[v] ? 1.5 : 0.0);
  }
  return AttributedGraph(n, std::move(e), std::move(x), std::move(attr), std::move(label), classes);
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gpia_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] std::filesystem::path file(const std::string& name) const { return path_ / name; }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support
