#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gpia/graph.hpp"

namespace gpia {

struct SbmSpec {
  std::vector<std::size_t> blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  /// Fraction of nodes per block carrying property_attr = 1.
  std::vector<double> attr_fracs;
  double feature_noise = 0.1;
  std::uint64_t seed = 0;
};

/// Stochastic block model with a planted binary property attribute.
///
/// Block b gets round(attr_fracs[b] * size) nodes with attribute 1 at random
/// positions. class_label is the block id. Features are the concatenation
/// one-hot(attr) (2 columns) ++ one-hot(block) (#blocks columns) plus i.i.d.
/// Gaussian noise of scale feature_noise.
inline AttributedGraph generate_sbm(const SbmSpec& spec) {
  require(!spec.blocks.empty(), Errc::invalid_argument, "empty block list");
  require(0.0 <= spec.p_out && spec.p_out <= spec.p_in && spec.p_in <= 1.0, Errc::invalid_argument,
          "need 0 <= p_out <= p_in <= 1");
  require(spec.attr_fracs.size() == spec.blocks.size(), Errc::invalid_argument,
          "one attr fraction per block");
  for (double f : spec.attr_fracs)
    require(f >= 0.0 && f <= 1.0, Errc::invalid_argument, "attr fraction outside [0,1]");
  require(spec.feature_noise >= 0.0, Errc::invalid_argument, "negative feature noise");

  const std::size_t nblocks = spec.blocks.size();
  const std::size_t n = std::accumulate(spec.blocks.begin(), spec.blocks.end(), std::size_t{0});
  Rng rng(spec.seed);

  std::vector<int> block(n), attr(n, 0);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t size = spec.blocks[b];
    const auto ones = static_cast<std::size_t>(std::llround(spec.attr_fracs[b] * size));
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < size; ++i) block[offset + i] = static_cast<int>(b);
    for (std::size_t i = 0; i < ones; ++i) attr[offset + order[i]] = 1;
    offset += size;
  }

  EdgeSet edges;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? spec.p_in : spec.p_out;
      if (unif(rng) < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }

  const auto dim = static_cast<Eigen::Index>(2 + nblocks);
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    features(r, attr[i]) = 1.0;
    features(r, 2 + block[i]) = 1.0;
    if (spec.feature_noise > 0.0)
      for (Eigen::Index c = 0; c < dim; ++c) features(r, c) += spec.feature_noise * noise(rng);
  }
  return AttributedGraph(n, std::move(edges), std::move(features), std::move(attr),
                         std::move(block), static_cast<int>(nblocks));
}

}  // namespace gpia
