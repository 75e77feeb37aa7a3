#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpia/approximation.hpp"
#include "gpia/attack.hpp"
#include "gpia/graph_io.hpp"
#include "gpia/model_io.hpp"
#include "gpia/property.hpp"
#include "gpia/sampling.hpp"
#include "gpia/sbm.hpp"
#include "gpia/selection.hpp"

namespace gpia {

inline constexpr const char* kThreadsEnv = "GPIA_THREADS";

enum class Knowledge { white_box, black_box };

inline std::string to_string(Knowledge k) {
  return k == Knowledge::white_box ? "white-box" : "black-box";
}

inline Knowledge knowledge_from_string(const std::string& s) {
  if (s == "white-box") return Knowledge::white_box;
  if (s == "black-box") return Knowledge::black_box;
  fail(Errc::config, "unknown knowledge '" + s + "'");
}

/// How the auxiliary graph and the target pool are obtained from the source.
/// `louvain`: split one graph along communities. `independent`: two separate
/// draws from the same generator (SBM sources only).
enum class SplitMode { louvain, independent };

struct ExperimentConfig {
  std::string name = "experiment";

  struct Graph {
    std::string source = "sbm";  ///< "sbm" or "files"
    SbmSpec sbm{{200, 200}, 0.05, 0.0, {0.4, 0.6}, 0.3, 0};
    std::string edges;
    std::string nodes;
    SplitMode split = SplitMode::independent;
  } graph;

  PropertySpec property;

  struct Reference {
    std::size_t count = 10;
    std::size_t size = 120;
    double w = 0.8;
  } reference;

  struct Perturb {
    std::size_t k = 12;
    std::size_t q = 6;
    double node_frac = 0.1;
    double edge_frac = 0.02;
    std::optional<double> epsilon;  ///< empty: q * median(delta)
    SelectionSolver solver = SelectionSolver::exact_bb;
    SelectionObjective objective = SelectionObjective::maximize_diversity;
  } perturbation;

  TrainConfig model;
  CgOptions cg;

  struct Attack {
    AttackConfig train;
    Knowledge knowledge = Knowledge::white_box;
    std::size_t probe_size = 32;
  } attack;

  struct Targets {
    std::size_t count = 100;
    std::size_t size = 120;
  } target;

  struct Shadows {
    std::size_t count = 60;
    std::size_t size = 120;
  } shadow;

  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    auto need = [](bool ok, const std::string& what) { require(ok, Errc::config, what); };
    need(graph.source == "sbm" || graph.source == "files", "graph.source must be sbm or files");
    if (graph.source == "files") {
      need(!graph.edges.empty() && !graph.nodes.empty(), "graph.edges and graph.nodes required");
      need(graph.split == SplitMode::louvain, "file sources only support the louvain split");
    } else {
      need(!graph.sbm.blocks.empty(), "graph.sbm.blocks is empty");
      need(graph.sbm.attr_fracs.size() == graph.sbm.blocks.size(),
           "graph.sbm.attr_fracs needs one entry per block");
      need(0.0 <= graph.sbm.p_out && graph.sbm.p_out <= graph.sbm.p_in && graph.sbm.p_in <= 1.0,
           "graph.sbm needs 0 <= p_out <= p_in <= 1");
      for (double f : graph.sbm.attr_fracs) need(f >= 0.0 && f <= 1.0, "attr fraction outside [0,1]");
      need(graph.sbm.feature_noise >= 0.0, "graph.sbm.feature_noise is negative");
    }
    need(reference.count >= 1, "reference.count must be >= 1");
    need(reference.size >= 2, "reference.size must be >= 2");
    need(reference.w >= 0.0 && reference.w <= 1.0, "reference.w outside [0,1]");
    need(perturbation.k >= 2, "perturbation.k must be >= 2");
    need(perturbation.q >= 1 && perturbation.q <= perturbation.k, "need 1 <= q <= k");
    need(perturbation.node_frac >= 0.0 && perturbation.node_frac < 1.0,
         "perturbation.node_frac outside [0,1)");
    need(perturbation.edge_frac >= 0.0 && perturbation.edge_frac <= 1.0,
         "perturbation.edge_frac outside [0,1]");
    need(!perturbation.epsilon || *perturbation.epsilon > 0.0, "perturbation.epsilon must be > 0");
    need(model.lambda > 0.0, "model.lambda must be > 0");
    need(model.grad_tol > 0.0, "model.grad_tol must be > 0");
    need(model.hops >= 1, "model.hops must be >= 1");
    need(model.max_iters >= 1, "model.max_iters must be >= 1");
    need(cg.tol > 0.0, "model.cg_tol must be > 0");
    need(cg.damping >= 0.0, "model.damping must be >= 0");
    need(attack.train.epochs >= 1, "attack.epochs must be >= 1");
    need(attack.train.learning_rate > 0.0, "attack.learning_rate must be > 0");
    need(attack.train.weight_decay >= 0.0, "attack.weight_decay must be >= 0");
    need(attack.probe_size >= 1, "attack.probe_size must be >= 1");
    need(target.count >= 1 && target.size >= 2, "target.count >= 1 and target.size >= 2");
    need(shadow.count >= 1 && shadow.size >= 2, "shadow.count >= 1 and shadow.size >= 2");
    need(threads >= 1, "threads must be >= 1");
  }
};

namespace detail {

/// Reads known keys of one section, rejecting unknown ones so typos surface.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), Errc::config, path_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.emplace_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(Errc::config, path_ + key + " has the wrong type");
    }
  }

  [[nodiscard]] std::optional<Section> child(const char* key) {
    seen_.emplace_back(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), path_ + key + ".");
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }
  [[nodiscard]] const nlohmann::json& raw(const char* key) {
    seen_.emplace_back(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      require(std::find(seen_.begin(), seen_.end(), key) != seen_.end(), Errc::config,
              "unknown key " + path_ + key);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline SelectionSolver solver_from_string(const std::string& s) {
  if (s == "exact_bb") return SelectionSolver::exact_bb;
  if (s == "brute_force") return SelectionSolver::brute_force;
  if (s == "greedy") return SelectionSolver::greedy;
  fail(Errc::config, "unknown solver '" + s + "'");
}

inline std::string to_string(SelectionSolver s) {
  switch (s) {
    case SelectionSolver::exact_bb: return "exact_bb";
    case SelectionSolver::brute_force: return "brute_force";
    case SelectionSolver::greedy: return "greedy";
  }
  return "exact_bb";
}

inline std::string to_string(SelectionObjective o) {
  return o == SelectionObjective::maximize_diversity ? "maximize_diversity" : "minimize_diversity";
}

inline SelectionObjective objective_from_string(const std::string& s) {
  if (s == "maximize_diversity") return SelectionObjective::maximize_diversity;
  if (s == "minimize_diversity") return SelectionObjective::minimize_diversity;
  fail(Errc::config, "unknown objective '" + s + "'");
}

}  // namespace detail

/// Thread budget from the environment, if set to a positive integer.
inline std::optional<std::size_t> threads_from_env() {
  const char* v = std::getenv(kThreadsEnv);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  require(end && *end == '\0' && n >= 1, Errc::config,
          std::string(kThreadsEnv) + " must be a positive integer");
  return static_cast<std::size_t>(n);
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::Section root(j, "");
  root.read("name", cfg.name);
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);

  if (auto g = root.child("graph")) {
    g->read("source", cfg.graph.source);
    g->read("edges", cfg.graph.edges);
    g->read("nodes", cfg.graph.nodes);
    std::string split = cfg.graph.source == "files" ? "louvain" : "independent";
    g->read("split", split);
    require(split == "louvain" || split == "independent", Errc::config,
            "graph.split must be louvain or independent");
    cfg.graph.split = split == "louvain" ? SplitMode::louvain : SplitMode::independent;
    if (auto s = g->child("sbm")) {
      s->read("blocks", cfg.graph.sbm.blocks);
      s->read("p_in", cfg.graph.sbm.p_in);
      s->read("p_out", cfg.graph.sbm.p_out);
      s->read("attr_fracs", cfg.graph.sbm.attr_fracs);
      s->read("feature_noise", cfg.graph.sbm.feature_noise);
      s->finish();
    }
    g->finish();
  }
  if (auto p = root.child("property")) {
    std::string kind = to_string(cfg.property.kind);
    p->read("kind", kind);
    cfg.property.kind = property_kind_from_string(kind);
    p->read("attr_value", cfg.property.attr_value);
    p->read("description", cfg.property.description);
    p->finish();
  }
  if (auto r = root.child("reference")) {
    r->read("count", cfg.reference.count);
    r->read("size", cfg.reference.size);
    r->read("w", cfg.reference.w);
    r->finish();
  }
  if (auto p = root.child("perturbation")) {
    p->read("k", cfg.perturbation.k);
    p->read("q", cfg.perturbation.q);
    p->read("node_frac", cfg.perturbation.node_frac);
    p->read("edge_frac", cfg.perturbation.edge_frac);
    if (p->has("epsilon")) {
      const auto& e = p->raw("epsilon");
      if (e.is_string()) {
        require(e.get<std::string>() == "auto", Errc::config,
                "perturbation.epsilon must be a number or \"auto\"");
      } else {
        require(e.is_number(), Errc::config, "perturbation.epsilon must be a number or \"auto\"");
        cfg.perturbation.epsilon = e.get<double>();
      }
    }
    std::string solver = detail::to_string(cfg.perturbation.solver);
    p->read("solver", solver);
    cfg.perturbation.solver = detail::solver_from_string(solver);
    std::string objective = detail::to_string(cfg.perturbation.objective);
    p->read("objective", objective);
    cfg.perturbation.objective = detail::objective_from_string(objective);
    p->finish();
  }
  if (auto m = root.child("model")) {
    m->read("hops", cfg.model.hops);
    m->read("lambda", cfg.model.lambda);
    m->read("grad_tol", cfg.model.grad_tol);
    m->read("max_iters", cfg.model.max_iters);
    std::string loss = to_string(cfg.model.loss);
    m->read("loss", loss);
    cfg.model.loss = loss_kind_from_string(loss);
    m->read("damping", cfg.cg.damping);
    m->read("cg_tol", cfg.cg.tol);
    m->read("cg_max_iters", cfg.cg.max_iters);
    m->finish();
  }
  if (auto a = root.child("attack")) {
    a->read("epochs", cfg.attack.train.epochs);
    a->read("learning_rate", cfg.attack.train.learning_rate);
    a->read("weight_decay", cfg.attack.train.weight_decay);
    std::string knowledge = to_string(cfg.attack.knowledge);
    a->read("knowledge", knowledge);
    cfg.attack.knowledge = knowledge_from_string(knowledge);
    a->read("probe_size", cfg.attack.probe_size);
    a->finish();
  }
  if (auto t = root.child("target")) {
    t->read("count", cfg.target.count);
    t->read("size", cfg.target.size);
    t->finish();
  }
  if (auto s = root.child("shadow")) {
    s->read("count", cfg.shadow.count);
    s->read("size", cfg.shadow.size);
    s->finish();
  }
  root.finish();
  return cfg;
}

/// Parses a config file; GPIA_THREADS overrides `threads`.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::config, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config, path.string() + ": " + e.what());
  }
  auto cfg = config_from_json(j);
  if (auto t = threads_from_env()) cfg.threads = *t;
  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json graph{{"source", c.graph.source},
                       {"split", c.graph.split == SplitMode::louvain ? "louvain" : "independent"}};
  if (c.graph.source == "files") {
    graph["edges"] = c.graph.edges;
    graph["nodes"] = c.graph.nodes;
  } else {
    graph["sbm"] = {{"blocks", c.graph.sbm.blocks},
                    {"p_in", c.graph.sbm.p_in},
                    {"p_out", c.graph.sbm.p_out},
                    {"attr_fracs", c.graph.sbm.attr_fracs},
                    {"feature_noise", c.graph.sbm.feature_noise}};
  }
  nlohmann::json pert{{"k", c.perturbation.k},
                      {"q", c.perturbation.q},
                      {"node_frac", c.perturbation.node_frac},
                      {"edge_frac", c.perturbation.edge_frac},
                      {"solver", detail::to_string(c.perturbation.solver)},
                      {"objective", detail::to_string(c.perturbation.objective)}};
  if (c.perturbation.epsilon)
    pert["epsilon"] = *c.perturbation.epsilon;
  else
    pert["epsilon"] = "auto";
  return {{"name", c.name},
          {"seed", c.seed},
          {"threads", c.threads},
          {"graph", graph},
          {"property",
           {{"kind", to_string(c.property.kind)},
            {"attr_value", c.property.attr_value},
            {"description", c.property.description}}},
          {"reference", {{"count", c.reference.count}, {"size", c.reference.size}, {"w", c.reference.w}}},
          {"perturbation", pert},
          {"model",
           {{"hops", c.model.hops},
            {"lambda", c.model.lambda},
            {"grad_tol", c.model.grad_tol},
            {"max_iters", c.model.max_iters},
            {"loss", to_string(c.model.loss)},
            {"damping", c.cg.damping},
            {"cg_tol", c.cg.tol},
            {"cg_max_iters", c.cg.max_iters}}},
          {"attack",
           {{"epochs", c.attack.train.epochs},
            {"learning_rate", c.attack.train.learning_rate},
            {"weight_decay", c.attack.train.weight_decay},
            {"knowledge", to_string(c.attack.knowledge)},
            {"probe_size", c.attack.probe_size}}},
          {"target", {{"count", c.target.count}, {"size", c.target.size}}},
          {"shadow", {{"count", c.shadow.count}, {"size", c.shadow.size}}}};
}

// Seed streams derived from the experiment seed.
namespace seeds {
inline constexpr std::uint64_t graph = 1, louvain = 2, targets = 3, probe = 4, shadows = 5,
                               target_pool = 6, reference_walk = 100, perturbations = 1000;
}

/// Everything both pipelines share: the attacker's auxiliary graph, the
/// victims (target graphs, their trained models and true labels) and the
/// black-box probe.
struct Victims {
  AttributedGraph auxiliary;
  AttributedGraph target_pool;
  std::vector<AttributedGraph> targets;
  std::vector<ModelParams> models;
  std::vector<int> truths;
  AttributedGraph probe;
  double setup_ms = 0.0;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Runs one phase; any library error is re-raised as a phase failure tagged
/// with the phase name.
template <typename F>
double timed_phase(const char* phase, F&& body) {
  Stopwatch sw;
  try {
    body();
  } catch (const Error& e) {
    fail(Errc::phase_failure, std::string(phase) + ": " + e.what());
  }
  return sw.ms();
}

/// The attacker's auxiliary graph and the pool the victims are drawn from.
inline GraphSplit source_graphs(const ExperimentConfig& cfg) {
  if (cfg.graph.source == "files") {
    auto g = load_graph(cfg.graph.edges, cfg.graph.nodes);
    return split_target_auxiliary(g, mix_seed(cfg.seed, seeds::louvain));
  }
  auto spec = cfg.graph.sbm;
  spec.seed = mix_seed(cfg.seed, seeds::graph);
  if (cfg.graph.split == SplitMode::louvain)
    return split_target_auxiliary(generate_sbm(spec), mix_seed(cfg.seed, seeds::louvain));
  GraphSplit out;
  out.auxiliary = generate_sbm(spec);
  spec.seed = mix_seed(cfg.seed, seeds::target_pool);
  out.target_pool = generate_sbm(spec);
  return out;
}

inline Victims prepare_victims(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Victims v;
  {
    auto split = source_graphs(cfg);
    v.auxiliary = std::move(split.auxiliary);
    v.target_pool = std::move(split.target_pool);
  }
  require(v.auxiliary.node_count() >= cfg.reference.size, Errc::invalid_argument,
          "reference.size exceeds the auxiliary graph");
  require(v.auxiliary.node_count() >= cfg.shadow.size, Errc::invalid_argument,
          "shadow.size exceeds the auxiliary graph");
  require(v.target_pool.node_count() >= cfg.target.size, Errc::invalid_argument,
          "target.size exceeds the target pool");

  v.targets = sample_target_graphs(v.target_pool, cfg.target.count, cfg.target.size,
                                   mix_seed(cfg.seed, seeds::targets));
  v.models.resize(v.targets.size());
  v.truths.resize(v.targets.size());
  parallel_for(v.targets.size(), cfg.threads, [&](std::size_t i) {
    v.models[i] = train(v.targets[i], cfg.model);
    v.truths[i] = compute_property(v.targets[i], cfg.property);
  });
  v.probe = sample_uniform_nodes(v.auxiliary, cfg.attack.probe_size,
                                 mix_seed(cfg.seed, seeds::probe));
  v.setup_ms = sw.ms();
  return v;
}

inline Eigen::VectorXd featurize(const ExperimentConfig& cfg, const Victims& v,
                                 const ModelParams& theta) {
  return cfg.attack.knowledge == Knowledge::white_box ? featurize_whitebox(theta)
                                                      : featurize_blackbox(theta, v.probe);
}

struct PhaseTimes {
  double sampling = 0, training = 0, selection = 0, approximation = 0, attack = 0;
  [[nodiscard]] double total() const {
    return sampling + training + selection + approximation + attack;
  }
};

struct ExperimentReport {
  std::string mode;  ///< "attack" or "baseline"
  ExperimentConfig config;
  Metrics metrics;
  double majority_rate = 0.0;
  std::size_t models_trained = 0;
  std::size_t models_approximated = 0;
  std::size_t attack_train_samples = 0;
  std::array<std::size_t, 2> train_label_counts{};
  std::array<std::size_t, 2> target_label_counts{};
  PhaseTimes runtime;
  double victim_setup_ms = 0.0;
  std::map<std::string, std::string> digests;
  std::vector<std::string> warnings;
  nlohmann::json details = nlohmann::json::object();

  /// Attack-model artifacts, kept for optional persistence.
  std::vector<AttackSample> train_samples;
  AttackModelParams attack_model;
};

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["name"] = r.config.name;
  j["knowledge"] = to_string(r.config.attack.knowledge);
  j["seed"] = r.config.seed;
  j["config"] = to_json(r.config);
  j["metrics"] = {{"accuracy", r.metrics.accuracy},
                  {"roc_auc", r.metrics.roc_auc},
                  {"n", r.metrics.n},
                  {"single_class", r.metrics.single_class},
                  {"majority_rate", r.majority_rate}};
  j["counts"] = {{"models_trained", r.models_trained},
                 {"models_approximated", r.models_approximated},
                 {"attack_train_samples", r.attack_train_samples},
                 {"train_labels", r.train_label_counts},
                 {"target_labels", r.target_label_counts}};
  j["runtime_ms"] = {{"sampling", r.runtime.sampling},
                     {"training", r.runtime.training},
                     {"selection", r.runtime.selection},
                     {"approximation", r.runtime.approximation},
                     {"attack", r.runtime.attack},
                     {"total", r.runtime.total()},
                     {"victim_setup", r.victim_setup_ms}};
  j["digests"] = r.digests;
  j["warnings"] = r.warnings;
  j["details"] = r.details;
  return j;
}

namespace detail {

inline std::string digest_params(std::span<const ModelParams> models) {
  Fnv1a h;
  for (const auto& m : models) h.bytes(m.theta.data(), sizeof(double) * m.size());
  return h.hex();
}

inline std::string digest_samples(std::span<const AttackSample> samples) {
  Fnv1a h;
  for (const auto& s : samples) {
    h.bytes(s.features.data(), sizeof(double) * static_cast<std::size_t>(s.features.size()));
    h.value(s.label);
  }
  return h.hex();
}

inline std::string digest_graphs(std::span<const AttributedGraph> graphs) {
  Fnv1a h;
  for (const auto& g : graphs) {
    h.value(g.node_count());
    h.value(edge_hash(g.edges()));
    h.values(std::span<const NodeId>(g.meta().id_map));
  }
  return h.hex();
}

/// Trains the attack classifier, scores every victim and fills the metrics.
inline void attack_and_evaluate(const ExperimentConfig& cfg, const Victims& v,
                                ExperimentReport& report) {
  report.attack_model = train_attack(report.train_samples, cfg.attack.train);
  std::vector<Prediction> preds;
  preds.reserve(v.models.size());
  for (const auto& m : v.models)
    preds.push_back(infer_property(report.attack_model, featurize(cfg, v, m)));
  report.metrics = evaluate(preds, v.truths);

  Fnv1a h;
  for (const auto& p : preds) {
    h.value(p.label);
    h.value(p.score);
  }
  report.digests["predictions"] = h.hex();
  report.digests["samples"] = digest_samples(report.train_samples);
}

inline void count_labels(ExperimentReport& report, const Victims& v) {
  report.attack_train_samples = report.train_samples.size();
  for (const auto& s : report.train_samples) ++report.train_label_counts[s.label ? 1 : 0];
  for (int t : v.truths) ++report.target_label_counts[t ? 1 : 0];
  const double n = static_cast<double>(v.truths.size());
  report.majority_rate =
      static_cast<double>(std::max(report.target_label_counts[0], report.target_label_counts[1])) / n;
}

}  // namespace detail

/// The approximation-based attack: r reference graphs, k candidate removals
/// each, q selected and turned into models by one Newton step.
inline ExperimentReport run_attack(const ExperimentConfig& cfg, const Victims& v) {
  cfg.validate();
  ExperimentReport report;
  report.mode = "attack";
  report.config = cfg;
  report.victim_setup_ms = v.setup_ms;
  const std::size_t r = cfg.reference.count;

  std::vector<AttributedGraph> refs(r);
  report.runtime.sampling = timed_phase("sampling", [&] {
    const auto part = louvain_partition(v.auxiliary, mix_seed(cfg.seed, seeds::louvain));
    const std::size_t communities = part.count();
    parallel_for(r, cfg.threads, [&](std::size_t i) {
      WalkConfig walk;
      walk.w = cfg.reference.w;
      walk.target_size = cfg.reference.size;
      walk.seed = mix_seed(cfg.seed, seeds::reference_walk + i);
      walk.restart_on_dead_end = true;
      refs[i] = sample_reference_graph(v.auxiliary, part, walk, static_cast<int>(i % communities));
    });
    report.details["communities"] = communities;
  });
  for (std::size_t i = 0; i < r; ++i)
    if (refs[i].meta().partial)
      report.warnings.push_back("reference " + std::to_string(i) + ": walk hit the step cap with " +
                                std::to_string(refs[i].node_count()) + " nodes");

  std::vector<ModelParams> ref_models(r);
  std::vector<TrainReport> ref_train(r);
  report.runtime.training = timed_phase("training", [&] {
    parallel_for(r, cfg.threads,
                 [&](std::size_t i) { ref_models[i] = train(refs[i], cfg.model, &ref_train[i]); });
  });
  for (std::size_t i = 0; i < r; ++i)
    if (!ref_train[i].converged)
      report.warnings.push_back("reference " + std::to_string(i) +
                                ": training stopped at max_iters");
  report.models_trained = r;

  std::vector<PerturbationPool> pools(r);
  std::vector<SelectionResult> picks(r);
  std::vector<std::vector<std::string>> sel_warnings(r);
  report.runtime.selection = timed_phase("selection", [&] {
    parallel_for(r, cfg.threads, [&](std::size_t i) {
      auto& pool = pools[i];
      pool = generate_perturbations(refs[i], cfg.property, cfg.perturbation.k,
                                    cfg.perturbation.node_frac, cfg.perturbation.edge_frac,
                                    mix_seed(cfg.seed, seeds::perturbations + i),
                                    static_cast<int>(i));
      compute_deltas(pool, refs[i], cfg.model.hops);
      pool.distances = pairwise_edit_distance(pool);
      SelectionConfig sc;
      sc.q = cfg.perturbation.q;
      sc.epsilon = cfg.perturbation.epsilon ? *cfg.perturbation.epsilon
                                            : default_budget(pool, cfg.perturbation.q);
      if (sc.epsilon <= 0.0) sc.epsilon = std::numeric_limits<double>::min();
      sc.solver = cfg.perturbation.solver;
      sc.objective = cfg.perturbation.objective;
      auto pick = select(pool, sc);
      bool both = false;
      {
        bool seen[2] = {false, false};
        for (auto c : pick.chosen) seen[pool.labels[c] ? 1 : 0] = true;
        both = seen[0] && seen[1];
      }
      const bool pool_has_both =
          std::find(pool.labels.begin(), pool.labels.end(), 0) != pool.labels.end() &&
          std::find(pool.labels.begin(), pool.labels.end(), 1) != pool.labels.end();
      if (!both && pool_has_both && sc.q >= 2) {
        sc.require_both_labels = true;
        auto balanced = select(pool, sc);
        if (!balanced.infeasible) pick = std::move(balanced);
        else
          sel_warnings[i].push_back("reference " + std::to_string(i) +
                                    ": no label-balanced selection fits the budget");
      }
      if (pick.infeasible)
        sel_warnings[i].push_back("reference " + std::to_string(i) + ": budget admits only " +
                                  std::to_string(pick.chosen.size()) + " of " +
                                  std::to_string(sc.q) + " perturbations");
      picks[i] = std::move(pick);
    });
  });
  for (auto& w : sel_warnings) report.warnings.insert(report.warnings.end(), w.begin(), w.end());

  std::vector<std::vector<ApproxResult>> approx(r);
  report.runtime.approximation = timed_phase("approximation", [&] {
    parallel_for(r, cfg.threads, [&](std::size_t i) {
      const ReferenceModel ref(refs[i], ref_models[i]);
      for (auto c : picks[i].chosen) approx[i].push_back(ref.approximate(pools[i].perturbations[c], cfg.cg));
    });
  });
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t t = 0; t < approx[i].size(); ++t)
      if (!approx[i][t].cg_converged)
        report.warnings.push_back("reference " + std::to_string(i) + ", perturbation " +
                                  std::to_string(picks[i].chosen[t]) +
                                  ": conjugate gradient stopped at relative residual " +
                                  std::to_string(approx[i][t].cg_residual));
    report.models_approximated += approx[i].size();
  }

  report.runtime.attack = timed_phase("attack", [&] {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t t = 0; t < approx[i].size(); ++t)
        report.train_samples.push_back({featurize(cfg, v, approx[i][t].theta_aug),
                                        pools[i].labels[picks[i].chosen[t]],
                                        SampleOrigin::approximated});
    detail::attack_and_evaluate(cfg, v, report);
  });
  detail::count_labels(report, v);

  report.digests["references"] = detail::digest_graphs(refs);
  report.digests["reference_models"] = detail::digest_params(ref_models);
  {
    std::vector<ModelParams> flat;
    for (const auto& a : approx)
      for (const auto& x : a) flat.push_back(x.theta_aug);
    report.digests["approximated_models"] = detail::digest_params(flat);
  }
  report.digests["targets"] = detail::digest_graphs(v.targets);

  nlohmann::json refs_json = nlohmann::json::array();
  for (std::size_t i = 0; i < r; ++i) {
    nlohmann::json approx_json = nlohmann::json::array();
    for (std::size_t t = 0; t < approx[i].size(); ++t)
      approx_json.push_back({{"index", picks[i].chosen[t]},
                             {"delta", approx[i][t].delta},
                             {"residual_grad_norm", approx[i][t].residual_grad_norm},
                             {"cg_iters", approx[i][t].cg_iters},
                             {"cg_residual", approx[i][t].cg_residual},
                             {"cg_converged", approx[i][t].cg_converged}});
    refs_json.push_back({{"id", i},
                         {"nodes", refs[i].node_count()},
                         {"edges", refs[i].edges().size()},
                         {"label", compute_property(refs[i], cfg.property)},
                         {"train_iterations", ref_train[i].iterations},
                         {"pool_labels", pools[i].labels},
                         {"deltas", pools[i].deltas},
                         {"selection", to_json(picks[i])},
                         {"approximations", approx_json}});
  }
  report.details["references"] = refs_json;
  report.details["pools"] = nlohmann::json::array();
  for (const auto& p : pools) report.details["pools"].push_back(to_json(p));
  return report;
}

/// Conventional shadow training: every shadow graph gets its own model
/// trained from scratch.
inline ExperimentReport run_shadow_baseline(const ExperimentConfig& cfg, const Victims& v) {
  cfg.validate();
  ExperimentReport report;
  report.mode = "baseline";
  report.config = cfg;
  report.victim_setup_ms = v.setup_ms;
  const std::size_t n = cfg.shadow.count;

  // Walks are drawn until each property label fills half of the shadow
  // set, mirroring the label balance of the attack's selection step.
  std::vector<AttributedGraph> shadows;
  std::vector<int> labels;
  std::size_t draws = 0;
  bool balanced = false;
  report.runtime.sampling = timed_phase("sampling", [&] {
    require(cfg.shadow.size <= v.auxiliary.node_count(), Errc::invalid_argument,
            "sample size exceeds pool");
    const std::size_t quota[2] = {n / 2, n - n / 2};
    std::size_t taken[2] = {0, 0};
    std::vector<std::pair<AttributedGraph, int>> spare;
    const std::uint64_t base = mix_seed(cfg.seed, seeds::shadows);
    while (shadows.size() < n && draws < 20 * n) {
      auto g = sample_simple_walk(v.auxiliary, cfg.shadow.size, mix_seed(base, draws++));
      const int label = compute_property(g, cfg.property);
      if (taken[label] < quota[label]) {
        ++taken[label];
        shadows.push_back(std::move(g));
        labels.push_back(label);
      } else if (spare.size() < n) {
        spare.emplace_back(std::move(g), label);
      }
    }
    balanced = taken[0] == quota[0] && taken[1] == quota[1];
    for (auto& [g, label] : spare) {
      if (shadows.size() == n) break;
      shadows.push_back(std::move(g));
      labels.push_back(label);
    }
  });
  if (!balanced)
    report.warnings.push_back("shadow labels could not be balanced within " +
                              std::to_string(draws) + " walks");
  report.details["shadow_draws"] = draws;

  std::vector<ModelParams> models(n);
  std::vector<TrainReport> reps(n);
  report.runtime.training = timed_phase("training", [&] {
    parallel_for(n, cfg.threads,
                 [&](std::size_t i) { models[i] = train(shadows[i], cfg.model, &reps[i]); });
  });
  for (std::size_t i = 0; i < n; ++i)
    if (!reps[i].converged)
      report.warnings.push_back("shadow " + std::to_string(i) + ": training stopped at max_iters");
  report.models_trained = n;

  report.runtime.attack = timed_phase("attack", [&] {
    for (std::size_t i = 0; i < n; ++i)
      report.train_samples.push_back({featurize(cfg, v, models[i]), labels[i],
                                      SampleOrigin::retrained_shadow});
    detail::attack_and_evaluate(cfg, v, report);
  });
  detail::count_labels(report, v);
  report.digests["shadows"] = detail::digest_graphs(shadows);
  report.digests["shadow_models"] = detail::digest_params(models);
  report.digests["targets"] = detail::digest_graphs(v.targets);
  return report;
}

inline ExperimentReport run_attack(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_attack(cfg, prepare_victims(cfg));
}

inline ExperimentReport run_shadow_baseline(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_shadow_baseline(cfg, prepare_victims(cfg));
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "spearman: length mismatch");
  auto ranks = [](std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    std::vector<double> rk(x.size());
    for (std::size_t i = 0; i < x.size();) {
      std::size_t j = i;
      while (j < x.size() && x[order[j]] == x[order[i]]) ++j;
      for (std::size_t t = i; t < j; ++t) rk[order[t]] = 0.5 * static_cast<double>(i + j - 1);
      i = j;
    }
    return rk;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const Eigen::Map<const Eigen::VectorXd> va(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Eigen::VectorXd> vb(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Eigen::VectorXd ca = va.array() - va.mean(), cb = vb.array() - vb.mean();
  const double den = ca.norm() * cb.norm();
  return den > 0.0 ? ca.dot(cb) / den : 0.0;
}

struct BoundFitOptions {
  double max_node_frac = 0.02;
  double max_edge_frac = 0.02;
  CgOptions cg;
};

struct BoundPoint {
  std::size_t removed_nodes = 0;
  std::size_t removed_edges = 0;
  std::size_t influenced = 0;
  double delta = 0.0;
  double residual_grad_norm = 0.0;
};

struct BoundFit {
  double c_hat = 0.0;
  double spearman_rho = 0.0;
  std::vector<BoundPoint> points;
};

/// Draws n perturbations of mixed size (uniform node and edge counts up to
/// the configured fractions) and relates delta to the residual gradient norm
/// of the approximated model. Empty draws are skipped.
inline BoundFit fit_bound_constant(const AttributedGraph& g_ref, const ModelParams& theta_ref,
                                   std::size_t n, std::uint64_t seed,
                                   const BoundFitOptions& opts = {}) {
  const ReferenceModel ref(g_ref, theta_ref);
  const auto max_nodes = static_cast<std::size_t>(opts.max_node_frac * g_ref.node_count());
  const auto max_edges = static_cast<std::size_t>(opts.max_edge_frac * g_ref.edges().size());
  Rng rng(seed);
  BoundFit fit;
  std::vector<NodeId> nodes = g_ref.all_nodes();
  for (std::size_t i = 0; i < n; ++i) {
    const auto nn = std::uniform_int_distribution<std::size_t>(0, max_nodes)(rng);
    const auto ne = std::uniform_int_distribution<std::size_t>(0, max_edges)(rng);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    std::vector<NodeId> drop(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(nn));
    std::sort(drop.begin(), drop.end());
    EdgeSet surviving;
    for (const auto& e : g_ref.edges())
      if (!std::binary_search(drop.begin(), drop.end(), e.u) &&
          !std::binary_search(drop.begin(), drop.end(), e.v))
        surviving.push_back(e);
    std::shuffle(surviving.begin(), surviving.end(), rng);
    surviving.resize(std::min(ne, surviving.size()));
    const auto p = Perturbation::make(g_ref, std::move(drop), std::move(surviving));
    if (p.empty()) continue;
    const auto a = ref.approximate(p, opts.cg);
    fit.points.push_back({p.removed_nodes.size(), p.removed_edges.size(), a.influence.nodes.size(),
                          a.delta, a.residual_grad_norm});
  }
  require(!fit.points.empty(), Errc::invalid_argument, "every sampled perturbation was empty");
  std::vector<double> deltas, norms;
  for (const auto& pt : fit.points) {
    deltas.push_back(pt.delta);
    norms.push_back(pt.residual_grad_norm);
    fit.c_hat = std::max(fit.c_hat, pt.residual_grad_norm / pt.delta);
  }
  fit.spearman_rho = spearman(deltas, norms);
  return fit;
}

inline nlohmann::json to_json(const BoundFit& f) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : f.points)
    pts.push_back({{"removed_nodes", p.removed_nodes},
                   {"removed_edges", p.removed_edges},
                   {"influenced", p.influenced},
                   {"delta", p.delta},
                   {"residual_grad_norm", p.residual_grad_norm}});
  return {{"c_hat", f.c_hat}, {"spearman_rho", f.spearman_rho}, {"points", pts}};
}

inline constexpr std::array<const char*, 12> kSummaryColumns = {
    "name",           "mode",           "knowledge",           "accuracy",
    "roc_auc",        "n_targets",      "models_trained",      "models_approximated",
    "runtime_total_ms", "runtime_training_ms", "runtime_approximation_ms", "seed"};

enum class ReportFormat { json, csv_summary };

/// JSON overwrites the file with the full report. The CSV summary appends one
/// row, writing the header only when the file is new or empty.
inline void emit_report(const ExperimentReport& r, ReportFormat format,
                        const std::filesystem::path& path) {
  if (format == ReportFormat::json) {
    std::ofstream out(path);
    require(out.good(), Errc::io, "cannot write " + path.string());
    out << to_json(r).dump(2) << '\n';
    require(out.good(), Errc::io, "cannot write " + path.string());
    return;
  }
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  require(out.good(), Errc::io, "cannot write " + path.string());
  if (fresh) {
    for (std::size_t i = 0; i < kSummaryColumns.size(); ++i)
      out << (i ? "," : "") << kSummaryColumns[i];
    out << '\n';
  }
  std::string name = r.config.name;
  std::replace(name.begin(), name.end(), ',', ';');
  out << name << ',' << r.mode << ',' << to_string(r.config.attack.knowledge) << ','
      << r.metrics.accuracy << ',' << r.metrics.roc_auc << ',' << r.metrics.n << ','
      << r.models_trained << ',' << r.models_approximated << ',' << r.runtime.total() << ','
      << r.runtime.training << ',' << r.runtime.approximation << ',' << r.config.seed << '\n';
  require(out.good(), Errc::io, "cannot write " + path.string());
}

/// Rebuilds the summary fields of a report from its JSON form.
inline ExperimentReport report_from_json(const nlohmann::json& j) {
  try {
    ExperimentReport r;
    r.mode = j.at("mode").get<std::string>();
    r.config = config_from_json(j.at("config"));
    const auto& m = j.at("metrics");
    r.metrics.accuracy = m.at("accuracy").get<double>();
    r.metrics.roc_auc = m.at("roc_auc").get<double>();
    r.metrics.n = m.at("n").get<std::size_t>();
    r.metrics.single_class = m.at("single_class").get<bool>();
    r.majority_rate = m.at("majority_rate").get<double>();
    const auto& c = j.at("counts");
    r.models_trained = c.at("models_trained").get<std::size_t>();
    r.models_approximated = c.at("models_approximated").get<std::size_t>();
    r.attack_train_samples = c.at("attack_train_samples").get<std::size_t>();
    r.train_label_counts = c.at("train_labels").get<std::array<std::size_t, 2>>();
    r.target_label_counts = c.at("target_labels").get<std::array<std::size_t, 2>>();
    const auto& t = j.at("runtime_ms");
    r.runtime.sampling = t.at("sampling").get<double>();
    r.runtime.training = t.at("training").get<double>();
    r.runtime.selection = t.at("selection").get<double>();
    r.runtime.approximation = t.at("approximation").get<double>();
    r.runtime.attack = t.at("attack").get<double>();
    r.victim_setup_ms = t.at("victim_setup").get<double>();
    r.digests = j.at("digests").get<std::map<std::string, std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.details = j.at("details");
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, std::string("report: ") + e.what());
  }
}

/// Writes the attack-side artifacts of a finished run into `dir`.
inline void save_artifacts(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_samples(r.train_samples, dir / "attack_samples.csv");
  std::ofstream out(dir / "attack_model.json");
  require(out.good(), Errc::io, "cannot write " + (dir / "attack_model.json").string());
  out << to_json(r.attack_model).dump(2) << '\n';
  if (r.details.contains("pools")) {
    std::ofstream pools(dir / "pools.json");
    pools << r.details.at("pools").dump(2) << '\n';
  }
}

}  // namespace gpia
