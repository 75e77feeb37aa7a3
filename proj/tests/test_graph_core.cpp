#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace gpia;
using namespace testing_support;

namespace {

// Pairwise form of modularity, (1/2m) sum_ij [A_ij - k_i k_j / 2m] [c_i == c_j].
double modularity_oracle(const AttributedGraph& g, const std::vector<int>& c) {
  const auto n = g.node_count();
  const double m = static_cast<double>(g.edges().size());
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (c[i] != c[j]) continue;
      const double a = g.has_edge(static_cast<NodeId>(i), static_cast<NodeId>(j)) ? 1.0 : 0.0;
      q += a - static_cast<double>(g.degree(static_cast<NodeId>(i)) * g.degree(static_cast<NodeId>(j))) /
                   (2 * m);
    }
  return q / (2 * m);
}

// Best modularity over every 2-partition (node 0 fixed to side 0), with the
// winning assignment.
std::pair<double, std::vector<int>> best_two_partition(const AttributedGraph& g) {
  const auto n = g.node_count();
  std::vector<unsigned> deg(n);
  for (std::size_t v = 0; v < n; ++v) deg[v] = static_cast<unsigned>(g.degree(static_cast<NodeId>(v)));
  const double m = static_cast<double>(g.edges().size());
  double best = -2.0;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    const std::uint32_t side = mask << 1;
    double internal = 0.0, d1 = 0.0, d0 = 0.0;
    for (const auto& e : g.edges())
      if (((side >> e.u) & 1u) == ((side >> e.v) & 1u)) internal += 1.0;
    for (std::size_t v = 0; v < n; ++v) ((side >> v) & 1u ? d1 : d0) += deg[v];
    const double q = internal / m - (d0 * d0 + d1 * d1) / (4 * m * m);
    if (q > best + 1e-12) {
      best = q;
      best_mask = side;
    }
  }
  std::vector<int> c(n);
  for (std::size_t v = 0; v < n; ++v) c[v] = (best_mask >> v) & 1u;
  return {best, c};
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

AttributedGraph triangle_from_files(const TempDir& dir) {
  write_text(dir.file("e.tsv"), "0\t1\n1\t2\n0\t2\n");
  write_text(dir.file("n.csv"), "id,label,attr,f0,f1\n0,0,1,0.5,1\n1,1,0,1.5,2\n2,0,1,2.5,3\n");
  return load_graph(dir.file("e.tsv"), dir.file("n.csv"));
}

Errc load_error(const std::filesystem::path& e, const std::filesystem::path& n) {
  try {
    load_graph(e, n);
  } catch (const Error& err) {
    return err.code();
  }
  ADD_FAILURE() << "load_graph accepted invalid input";
  return Errc::io;
}

}  // namespace

TEST(LoadGraph, TriangleEchoesFiles) {
  TempDir dir;
  const auto g = triangle_from_files(dir);
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g.edges().size(), 3u);
  EXPECT_EQ(g.feature_dim(), 2u);
  EXPECT_DOUBLE_EQ(g.features()(1, 0), 1.5);
  EXPECT_EQ(g.property_attr(), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(g.class_label(), (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(g.num_classes(), 2);
}

TEST(LoadGraph, DuplicateEdgeCountedOnce) {
  TempDir dir;
  write_text(dir.file("e.tsv"), "0\t1\n1\t0\n1\t2\n");
  write_text(dir.file("n.csv"), "id,label,attr,f0\n0,0,0,1\n1,0,1,1\n2,0,0,1\n");
  const auto g = load_graph(dir.file("e.tsv"), dir.file("n.csv"));
  EXPECT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(g.meta().duplicate_edges_dropped, 1u);
}

TEST(LoadGraph, SelfLoopDropped) {
  TempDir dir;
  write_text(dir.file("e.tsv"), "0\t0\n0\t1\n");
  write_text(dir.file("n.csv"), "id,label,attr,f0\n0,0,0,1\n1,0,1,1\n");
  const auto g = load_graph(dir.file("e.tsv"), dir.file("n.csv"));
  EXPECT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.meta().self_loops_dropped, 1u);
}

TEST(LoadGraph, DistinctErrorCodes) {
  TempDir dir;
  write_text(dir.file("tri.tsv"), "0\t1\n1\t2\n0\t2\n");
  write_text(dir.file("two.csv"), "id,label,attr,f0\n0,0,0,1\n1,0,1,1\n");
  EXPECT_EQ(load_error(dir.file("tri.tsv"), dir.file("two.csv")), Errc::ragged_attributes);

  write_text(dir.file("short_row.csv"), "id,label,attr,f0,f1\n0,0,0,1,1\n1,0,1,1\n2,0,0,1,1\n");
  EXPECT_EQ(load_error(dir.file("tri.tsv"), dir.file("short_row.csv")), Errc::ragged_attributes);

  EXPECT_EQ(load_error(dir.file("absent.tsv"), dir.file("two.csv")), Errc::missing_file);

  write_text(dir.file("neg.tsv"), "0\t-1\n");
  EXPECT_EQ(load_error(dir.file("neg.tsv"), dir.file("two.csv")), Errc::edge_out_of_range);

  write_text(dir.file("bad.tsv"), "0\tx\n");
  EXPECT_EQ(load_error(dir.file("bad.tsv"), dir.file("two.csv")), Errc::parse_error);
}

TEST(LoadGraph, SaveRoundTrip) {
  TempDir dir;
  SbmSpec spec{{15, 15}, 0.4, 0.05, {0.3, 0.7}, 0.2, 9};
  const auto g = generate_sbm(spec);
  save_graph(g, dir.file("g.tsv"), dir.file("g.csv"));
  const auto back = load_graph(dir.file("g.tsv"), dir.file("g.csv"));
  EXPECT_EQ(back.edges(), g.edges());
  EXPECT_EQ(back.property_attr(), g.property_attr());
  EXPECT_EQ(back.class_label(), g.class_label());
  EXPECT_TRUE(back.features().isApprox(g.features(), 1e-12));
}

TEST(Sbm, FullInBlockNoCrossEdgesGivesCliques) {
  const auto g = generate_sbm({{10, 10}, 1.0, 0.0, {0.5, 0.5}, 0.0, 3});
  EXPECT_EQ(g.edges().size(), 2u * 45u);
  for (const auto& e : g.edges()) EXPECT_EQ(e.u < 10, e.v < 10);
}

TEST(Sbm, ForcedAttributeFractions) {
  const auto g = generate_sbm({{7, 9}, 0.3, 0.1, {1.0, 1.0}, 0.1, 4});
  for (int a : g.property_attr()) EXPECT_EQ(a, 1);
  const auto h = generate_sbm({{10, 10}, 0.3, 0.1, {0.4, 0.6}, 0.1, 4});
  EXPECT_EQ(std::count(h.property_attr().begin(), h.property_attr().begin() + 10, 1), 4);
  EXPECT_EQ(std::count(h.property_attr().begin() + 10, h.property_attr().end(), 1), 6);
}

TEST(Sbm, DeterministicPerSeed) {
  const SbmSpec spec{{50, 50}, 0.3, 0.01, {0.4, 0.6}, 0.1, 11};
  const auto a = generate_sbm(spec), b = generate_sbm(spec);
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.property_attr(), b.property_attr());
  EXPECT_TRUE(a.features() == b.features());
}

TEST(Sbm, LabelsAreBlocksAndFeaturesOneHot) {
  const auto g = generate_sbm({{4, 6}, 0.5, 0.1, {0.5, 0.5}, 0.0, 5});
  ASSERT_EQ(g.feature_dim(), 4u);
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const auto r = static_cast<Eigen::Index>(v);
    const int block = v < 4 ? 0 : 1;
    EXPECT_EQ(g.class_label()[v], block);
    EXPECT_DOUBLE_EQ(g.features()(r, g.property_attr()[v]), 1.0);
    EXPECT_DOUBLE_EQ(g.features()(r, 1 - g.property_attr()[v]), 0.0);
    EXPECT_DOUBLE_EQ(g.features()(r, 2 + block), 1.0);
    EXPECT_DOUBLE_EQ(g.features()(r, 3 - block), 0.0);
  }
}

TEST(Sbm, EmptyBlocksRejected) {
  EXPECT_THROW(generate_sbm({{}, 0.5, 0.1, {}, 0.1, 0}), Error);
}

TEST(Property, NodeMajority) {
  PropertySpec spec;
  EXPECT_EQ(compute_property(make_graph(5, {}, {1, 1, 0, 1, 0}), spec), 1);
  EXPECT_EQ(compute_property(make_graph(4, {}, {1, 0, 1, 0}), spec), 0);
  spec.attr_value = 0;
  EXPECT_EQ(compute_property(make_graph(5, {}, {1, 1, 0, 1, 0}), spec), 0);
}

TEST(Property, LinkTriangleHandCount) {
  // edges (0,1) same, (0,2) and (1,2) mixed
  const auto g = make_graph(3, {{0, 1}, {1, 2}, {0, 2}}, {1, 1, 0});
  EXPECT_EQ(compute_property(g, {PropertyKind::link_same, 1, ""}), 0);
  EXPECT_EQ(compute_property(g, {PropertyKind::link_attr, 1, ""}), 0);
  const auto h = make_graph(3, {{0, 1}}, {1, 1, 0});
  EXPECT_EQ(compute_property(h, {PropertyKind::link_same, 1, ""}), 1);
  EXPECT_EQ(compute_property(h, {PropertyKind::link_attr, 1, ""}), 1);
  EXPECT_EQ(compute_property(h, {PropertyKind::link_attr, 0, ""}), 0);
}

TEST(Property, InvariantUnderRelabeling) {
  std::mt19937_64 rng(21);
  const PropertySpec specs[] = {{PropertyKind::node, 1, ""},
                                {PropertyKind::link_same, 1, ""},
                                {PropertyKind::link_attr, 1, ""}};
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_graph(rng, 5 + trial % 20, 0.3);
    auto order = g.all_nodes();
    std::shuffle(order.begin(), order.end(), rng);
    const auto permuted = g.induced(order);
    for (const auto& spec : specs)
      EXPECT_EQ(compute_property(g, spec), compute_property(permuted, spec));
  }
}

TEST(Louvain, TwoBridgedCliquesMatchBruteForce) {
  for (NodeId a = 5; a <= 10; ++a) {
    const auto g = two_cliques(a, a, true);
    const auto part = louvain_partition(g, 17);
    const auto [best_q, best] = best_two_partition(g);
    EXPECT_EQ(part.count(), 2) << "clique size " << a;
    EXPECT_TRUE(same_partition(part.assignment, best)) << "clique size " << a;
    EXPECT_NEAR(part.modularity, best_q, 1e-12);
  }
}

TEST(Louvain, BridgedCliqueFamilySplitsAlongCliques) {
  for (NodeId a = 5; a <= 15; ++a)
    for (NodeId b : {a, static_cast<NodeId>(std::max(5, a - 2))}) {
      const auto g = two_cliques(a, b, true);
      const auto part = louvain_partition(g, 3);
      std::vector<int> cliques(static_cast<std::size_t>(a + b));
      for (NodeId v = 0; v < a + b; ++v) cliques[v] = v < a ? 0 : 1;
      EXPECT_TRUE(same_partition(part.assignment, cliques)) << a << "," << b;
    }
}

TEST(Louvain, SingleCliqueIsOneCommunity) {
  const auto g = make_graph(8, clique_edges(0, 8));
  EXPECT_EQ(louvain_partition(g, 1).count(), 1);
}

TEST(Louvain, ModularityMatchesOracleAndBeatsSingletons) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_graph(rng, 10 + trial, 0.2);
    if (g.edges().empty()) continue;
    const auto part = louvain_partition(g, static_cast<std::uint64_t>(trial));
    std::vector<int> singletons(g.node_count());
    std::iota(singletons.begin(), singletons.end(), 0);
    EXPECT_NEAR(part.modularity, modularity_oracle(g, part.assignment), 1e-12);
    EXPECT_GE(part.modularity, modularity_oracle(g, singletons) - 1e-12);
    EXPECT_GE(part.modularity, -1.0);
    EXPECT_LE(part.modularity, 1.0);
    ASSERT_EQ(part.assignment.size(), g.node_count());
  }
}

TEST(Louvain, DeterministicPerSeedAndRejectsEmpty) {
  const auto g = generate_sbm({{30, 30, 30}, 0.3, 0.02, {0.5, 0.5, 0.5}, 0.1, 8});
  EXPECT_EQ(louvain_partition(g, 4).assignment, louvain_partition(g, 4).assignment);
  EXPECT_THROW(louvain_partition(AttributedGraph{}, 0), Error);
}

TEST(Split, DisjointEqualCliquesSeparate) {
  const auto g = two_cliques(6, 6, false);
  const auto s = split_target_auxiliary(g, 2);
  ASSERT_EQ(s.auxiliary.node_count(), 6u);
  ASSERT_EQ(s.target_pool.node_count(), 6u);
  for (const auto* side : {&s.auxiliary, &s.target_pool}) {
    const auto& ids = side->meta().id_map;
    const bool first = ids.front() < 6;
    for (NodeId v : ids) EXPECT_EQ(v < 6, first);
    EXPECT_EQ(side->edges().size(), 15u);
  }
}

TEST(Split, SbmBalancedAndDisjoint) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = generate_sbm({{25, 25, 25, 25}, 0.4, 0.01, {0.5, 0.5, 0.5, 0.5}, 0.1, seed});
    const auto part = louvain_partition(g, seed);
    std::size_t largest = 0;
    for (const auto& m : part.members()) largest = std::max(largest, m.size());
    const auto s = split_target_auxiliary(g, seed);
    const auto& a = s.auxiliary.meta().id_map;
    const auto& b = s.target_pool.meta().id_map;
    EXPECT_EQ(a.size() + b.size(), 100u);
    std::set<NodeId> seen(a.begin(), a.end());
    for (NodeId v : b) EXPECT_FALSE(seen.count(v));
    const auto diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
    EXPECT_LE(diff, largest);
    EXPECT_NEAR(static_cast<double>(a.size()), 50.0, 25.0);
  }
}

TEST(Walk, FullWeightStaysInsideStartClique) {
  const auto g = two_cliques(8, 8, false);
  const auto part = louvain_partition(g, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    WalkConfig cfg{1.0, 6, seed, true};
    const int start = part.assignment[0];
    const auto s = sample_reference_graph(g, part, cfg, start);
    EXPECT_EQ(s.node_count(), 6u);
    for (NodeId v : s.meta().id_map) EXPECT_EQ(part.assignment[v], start);
  }
}

TEST(Walk, FullWeightStaysInsideCommunityWithoutBoundary) {
  // the bridge carries zero weight when w = 1
  const auto g = two_cliques(6, 6, true);
  CommunityPartition part;
  part.assignment = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = sample_reference_graph(g, part, {1.0, 6, seed, true}, 1);
    for (NodeId v : s.meta().id_map) EXPECT_GE(v, 6);
  }
}

TEST(Walk, HalfWeightIsUniform) {
  const auto g = two_cliques(4, 4, true);
  CommunityPartition part;
  part.assignment = {0, 0, 0, 0, 1, 1, 1, 1};
  for (NodeId v = 0; v < 8; ++v) {
    const auto p = transition_probabilities(g, part, 0.5, v);
    for (double x : p) EXPECT_DOUBLE_EQ(x, 1.0 / static_cast<double>(g.degree(v)));
  }
  // w = 0.8 at the bridge node 3: three in-community neighbours, one across
  const auto p = transition_probabilities(g, part, 0.8, 3);
  const auto nb = g.neighbors(3);
  for (std::size_t i = 0; i < nb.size(); ++i)
    EXPECT_NEAR(p[i], nb[i] < 4 ? 0.8 / 2.6 : 0.2 / 2.6, 1e-15);
}

TEST(Walk, ExhaustiveWalkReturnsWholeGraph) {
  std::mt19937_64 rng(3);
  auto g = random_graph(rng, 25, 0.3);
  const auto part = louvain_partition(g, 1);
  const auto s = sample_reference_graph(g, part, {0.7, 25, 9, true}, 0);
  EXPECT_FALSE(s.meta().partial);
  ASSERT_EQ(s.node_count(), 25u);
  EXPECT_EQ(s.edges().size(), g.edges().size());
}

TEST(Walk, InducedSubgraphIsSound) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_graph(rng, 60, 0.08);
    const auto part = louvain_partition(g, static_cast<std::uint64_t>(trial));
    const auto s = sample_reference_graph(g, part, {0.8, 20, static_cast<std::uint64_t>(trial), true},
                                          trial % part.count());
    const auto& ids = s.meta().id_map;
    for (const auto& e : s.edges()) EXPECT_TRUE(g.has_edge(ids[e.u], ids[e.v]));
    for (std::size_t a = 0; a < ids.size(); ++a) {
      for (std::size_t b = a + 1; b < ids.size(); ++b)
        EXPECT_EQ(s.has_edge(static_cast<NodeId>(a), static_cast<NodeId>(b)), g.has_edge(ids[a], ids[b]));
      EXPECT_EQ(s.property_attr()[a], g.property_attr()[ids[a]]);
      EXPECT_EQ(s.class_label()[a], g.class_label()[ids[a]]);
      EXPECT_TRUE(s.features().row(static_cast<Eigen::Index>(a)) == g.features().row(ids[a]));
    }
  }
}

TEST(Walk, StepCapFlagsPartialSample) {
  // a 3-node component cannot yield 10 distinct nodes
  const auto g = make_graph(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}});
  CommunityPartition part;
  part.assignment = {0, 0, 0, 1, 1, 1};
  const auto s = sample_reference_graph(g, part, {0.5, 5, 1, true}, 0);
  EXPECT_TRUE(s.meta().partial);
  EXPECT_EQ(s.node_count(), 3u);
  EXPECT_EQ(s.meta().walk_steps, 250u);
}

TEST(Walk, IsolatedStartWithoutRestartFails) {
  const auto g = make_graph(3, {{1, 2}});
  CommunityPartition part;
  part.assignment = {0, 1, 1};
  try {
    sample_reference_graph(g, part, {0.5, 2, 0, false}, 0);
    FAIL() << "expected an isolated-start error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::isolated_start);
  }
  EXPECT_THROW(sample_reference_graph(g, part, {0.5, 2, 0, true}, 5), Error);
  EXPECT_THROW(sample_reference_graph(g, part, {1.5, 2, 0, true}, 0), Error);
  EXPECT_THROW(sample_reference_graph(g, part, {0.5, 1, 0, true}, 0), Error);
}

TEST(Walk, DeterministicPerSeed) {
  const auto g = generate_sbm({{40, 40}, 0.2, 0.02, {0.5, 0.5}, 0.1, 2});
  const auto part = louvain_partition(g, 2);
  const WalkConfig cfg{0.8, 30, 77, true};
  EXPECT_EQ(sample_reference_graph(g, part, cfg, 0).meta().id_map,
            sample_reference_graph(g, part, cfg, 0).meta().id_map);
}

TEST(TargetGraphs, CountSizeAndDeterminism) {
  const auto pool = generate_sbm({{40, 40}, 0.2, 0.02, {0.5, 0.5}, 0.1, 6});
  EXPECT_TRUE(sample_target_graphs(pool, 0, 10, 1).empty());
  const auto a = sample_target_graphs(pool, 5, 20, 4);
  const auto b = sample_target_graphs(pool, 5, 20, 4);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE(a[i].node_count(), 20u);
    EXPECT_EQ(a[i].meta().id_map, b[i].meta().id_map);
  }
  EXPECT_NE(a[0].meta().id_map, a[1].meta().id_map);
  EXPECT_THROW(sample_target_graphs(pool, 1, 81, 0), Error);
}
