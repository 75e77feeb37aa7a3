#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"

using namespace gpia;
using namespace testing_support;

namespace {

ExperimentConfig small_config(std::uint64_t seed = 7) {
  ExperimentConfig c;
  c.name = "unit";
  c.seed = seed;
  c.graph.sbm = {{80, 80}, 0.08, 0.0, {0.4, 0.6}, 0.3, 0};
  c.reference = {4, 50, 0.8};
  c.perturbation.k = 8;
  c.perturbation.q = 3;
  c.target = {12, 50};
  c.shadow = {12, 50};
  return c;
}

nlohmann::json without_runtime(const ExperimentReport& r) {
  auto j = to_json(r);
  j.erase("runtime_ms");
  return j;
}

int run_cli(const std::string& args, const TempDir& dir, std::string* out = nullptr) {
  const auto stdout_file = dir.file("stdout.txt");
  const std::string cmd = std::string(GPIA_CLI_PATH) + " " + args + " > " + stdout_file.string() +
                          " 2> " + dir.file("stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (out) *out = read_text(stdout_file);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const char* name) { return std::string(GPIA_CONFIG_DIR) + "/" + name; }

Errc config_error_code(const std::string& text) {
  try {
    auto cfg = config_from_json(nlohmann::json::parse(text));
    cfg.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::io;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(RunAttack, SingleReferenceWithKEqualQApproximatesEveryCandidate) {
  auto cfg = small_config();
  cfg.reference.count = 1;
  cfg.perturbation.k = 5;
  cfg.perturbation.q = 5;
  cfg.perturbation.epsilon = 1e300;
  // one reference yields a single property label, so the classifier needs
  // label variety from the perturbations themselves
  cfg.perturbation.node_frac = 0.3;
  const auto r = run_attack(cfg);
  EXPECT_EQ(r.models_trained, 1u);
  EXPECT_EQ(r.models_approximated, 5u);
  EXPECT_EQ(r.attack_train_samples, 5u);
  EXPECT_EQ(r.details["references"][0]["selection"]["chosen"].get<std::vector<std::size_t>>(),
            (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(RunAttack, PhaseAccountingAndReportShape) {
  const auto cfg = small_config();
  const auto v = prepare_victims(cfg);
  const auto r = run_attack(cfg, v);
  EXPECT_EQ(r.mode, "attack");
  EXPECT_EQ(r.models_trained, 4u);
  std::size_t chosen = 0;
  for (const auto& ref : r.details["references"]) chosen += ref["selection"]["chosen"].size();
  EXPECT_EQ(r.models_approximated, chosen);
  EXPECT_EQ(r.attack_train_samples, r.models_approximated);
  EXPECT_EQ(r.metrics.n, 12u);
  EXPECT_EQ(r.train_label_counts[0] + r.train_label_counts[1], r.attack_train_samples);
  EXPECT_EQ(r.target_label_counts[0] + r.target_label_counts[1], 12u);
  EXPECT_NEAR(r.runtime.total(),
              r.runtime.sampling + r.runtime.training + r.runtime.selection +
                  r.runtime.approximation + r.runtime.attack,
              1e-9);
  const auto j = to_json(r);
  EXPECT_EQ(j["runtime_ms"]["total"].get<double>(), r.runtime.total());
  for (const char* key : {"references", "reference_models", "approximated_models", "targets",
                          "samples", "predictions"})
    EXPECT_TRUE(r.digests.count(key)) << key;
}

TEST(RunAttack, DeterministicAcrossRunsAndThreadBudgets) {
  auto cfg = small_config(11);
  const auto a = without_runtime(run_attack(cfg)).dump();
  const auto b = without_runtime(run_attack(cfg)).dump();
  EXPECT_EQ(a, b);
  cfg.threads = 3;
  auto c = without_runtime(run_attack(cfg));
  c["config"]["threads"] = 1;
  EXPECT_EQ(a, c.dump());
}

TEST(RunAttack, SeedChangesTheExperiment) {
  const auto a = run_attack(small_config(1));
  const auto b = run_attack(small_config(2));
  EXPECT_NE(a.digests.at("references"), b.digests.at("references"));
}

TEST(RunAttack, ConjugateGradientShortfallIsAWarningNotAFailure) {
  auto cfg = small_config();
  cfg.cg.max_iters = 1;
  cfg.cg.tol = 1e-14;
  const auto r = run_attack(cfg);
  EXPECT_EQ(r.models_approximated, r.attack_train_samples);
  const auto flagged = std::count_if(r.warnings.begin(), r.warnings.end(), [](const std::string& w) {
    return w.find("conjugate gradient") != std::string::npos;
  });
  EXPECT_EQ(static_cast<std::size_t>(flagged), r.models_approximated);
}

TEST(RunAttack, SingleLabelTrainingSetIsAPhaseFailure) {
  auto cfg = small_config();
  cfg.property.attr_value = 5;
  try {
    run_attack(cfg);
    FAIL() << "expected a phase failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::phase_failure);
    EXPECT_NE(std::string(e.what()).find("attack"), std::string::npos);
  }
}

TEST(Baseline, SharesTargetsAndFeatureDimensionWithAttack) {
  for (auto knowledge : {Knowledge::white_box, Knowledge::black_box}) {
    auto cfg = small_config();
    cfg.attack.knowledge = knowledge;
    cfg.shadow.count = cfg.reference.count * cfg.perturbation.q;
    const auto v = prepare_victims(cfg);
    const auto a = run_attack(cfg, v);
    const auto b = run_shadow_baseline(cfg, v);
    EXPECT_EQ(b.mode, "baseline");
    EXPECT_EQ(b.models_trained, cfg.shadow.count);
    EXPECT_EQ(b.models_approximated, 0u);
    EXPECT_EQ(a.digests.at("targets"), b.digests.at("targets"));
    EXPECT_EQ(a.target_label_counts, b.target_label_counts);
    ASSERT_FALSE(a.train_samples.empty());
    ASSERT_FALSE(b.train_samples.empty());
    EXPECT_EQ(a.train_samples[0].features.size(), b.train_samples[0].features.size());
    EXPECT_EQ(b.train_samples[0].origin, SampleOrigin::retrained_shadow);
    EXPECT_EQ(a.train_samples[0].origin, SampleOrigin::approximated);
    const auto ja = to_json(a), jb = to_json(b);
    for (const auto& [key, _] : ja.items()) EXPECT_TRUE(jb.contains(key)) << key;
  }
}

TEST(Baseline, ShadowLabelsAreBalanced) {
  auto cfg = small_config();
  cfg.shadow.count = 13;
  const auto r = run_shadow_baseline(cfg);
  EXPECT_EQ(r.train_label_counts[0], 6u);
  EXPECT_EQ(r.train_label_counts[1], 7u);
  EXPECT_GE(r.details["shadow_draws"].get<std::size_t>(), 13u);
  for (const auto& w : r.warnings) EXPECT_EQ(w.find("balanced"), std::string::npos) << w;
}

TEST(Baseline, Deterministic) {
  const auto cfg = small_config(5);
  EXPECT_EQ(without_runtime(run_shadow_baseline(cfg)).dump(),
            without_runtime(run_shadow_baseline(cfg)).dump());
}

TEST(Baseline, TrainingTimeGrowsLinearlyInShadowCount) {
  auto cfg = small_config();
  const auto v = prepare_victims(cfg);
  run_shadow_baseline(cfg, v);  // warm caches
  // fastest of several interleaved repetitions, which filters scheduler noise
  const std::size_t counts[3] = {20, 40, 80};
  std::vector<double> best(3, std::numeric_limits<double>::infinity());
  for (int rep = 0; rep < 9; ++rep)
    for (std::size_t i = 0; i < 3; ++i) {
      cfg.shadow.count = counts[i];
      best[i] = std::min(best[i], run_shadow_baseline(cfg, v).runtime.training);
    }
  std::vector<double> per_shadow;
  for (std::size_t i = 0; i < 3; ++i) per_shadow.push_back(best[i] / static_cast<double>(counts[i]));
  const double mean = (per_shadow[0] + per_shadow[1] + per_shadow[2]) / 3.0;
  for (double x : per_shadow) {
    EXPECT_GE(x, 0.7 * mean);
    EXPECT_LE(x, 1.3 * mean);
  }
}

TEST(Spearman, RankCorrelation) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(a, std::vector<double>{2, 4, 9, 16, 100}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(a, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(spearman(a, std::vector<double>{3, 3, 3, 3, 3}), 0.0);
  // ranks (1.5, 1.5, 3) vs (1, 2, 3): Pearson of the rank vectors is sqrt(3)/2
  EXPECT_NEAR(spearman(std::vector<double>{7, 7, 9}, std::vector<double>{1, 2, 3}),
              std::sqrt(3.0) / 2.0, 1e-15);
  EXPECT_THROW(spearman(a, std::vector<double>{1, 2}), Error);
}

TEST(BoundFit, AllEmptyPerturbationsRejected) {
  const auto g = generate_sbm({{20, 20}, 0.2, 0.01, {0.4, 0.6}, 0.3, 1});
  const auto theta = train(g, TrainConfig{});
  BoundFitOptions opts;
  opts.max_node_frac = 0.0;
  opts.max_edge_frac = 0.0;
  EXPECT_THROW(fit_bound_constant(g, theta, 10, 3, opts), Error);
}

TEST(BoundFit, QuadraticSurrogateLeavesNoResidual) {
  const auto g = generate_sbm({{100, 100}, 0.05, 0.005, {0.4, 0.6}, 0.3, 2});
  TrainConfig tc;
  tc.loss = LossKind::squared_error;
  tc.grad_tol = 1e-11;
  const auto theta = train(g, tc);
  BoundFitOptions opts;
  opts.cg.tol = 1e-12;
  opts.cg.damping = 0.0;
  const auto fit = fit_bound_constant(g, theta, 30, 4, opts);
  ASSERT_GE(fit.points.size(), 25u);
  for (const auto& p : fit.points) EXPECT_LE(p.residual_grad_norm, 1e-8);
  EXPECT_LE(fit.c_hat, 1e-8);
}

TEST(BoundFit, PointsAreConsistent) {
  const auto g = generate_sbm({{100, 100}, 0.05, 0.005, {0.4, 0.6}, 0.3, 3});
  const auto theta = train(g, TrainConfig{});
  const auto fit = fit_bound_constant(g, theta, 20, 5);
  double c = 0.0;
  for (const auto& p : fit.points) {
    EXPECT_LE(p.removed_nodes, 4u);
    const double base = static_cast<double>(p.removed_nodes + 2 * p.influenced);
    EXPECT_EQ(p.delta, base * base);
    c = std::max(c, p.residual_grad_norm / p.delta);
  }
  EXPECT_EQ(fit.c_hat, c);
  const auto j = to_json(fit);
  EXPECT_EQ(j["points"].size(), fit.points.size());
  EXPECT_EQ(j["c_hat"].get<double>(), fit.c_hat);
}

TEST(Report, JsonRoundTrip) {
  const auto r = run_attack(small_config());
  const auto j = nlohmann::json::parse(to_json(r).dump());
  EXPECT_EQ(to_json(report_from_json(j)), j);
  auto broken = j;
  broken.erase("metrics");
  EXPECT_THROW(report_from_json(broken), Error);
}

TEST(Report, CsvSummarySchema) {
  TempDir dir;
  const auto cfg = small_config();
  const auto v = prepare_victims(cfg);
  emit_report(run_attack(cfg, v), ReportFormat::csv_summary, dir.file("s.csv"));
  emit_report(run_shadow_baseline(cfg, v), ReportFormat::csv_summary, dir.file("s.csv"));
  const auto lines = lines_of(read_text(dir.file("s.csv")));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0],
            "name,mode,knowledge,accuracy,roc_auc,n_targets,models_trained,models_approximated,"
            "runtime_total_ms,runtime_training_ms,runtime_approximation_ms,seed");
  for (const auto& line : lines) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11);
  EXPECT_EQ(lines[1].substr(0, 12), "unit,attack,");
  EXPECT_EQ(lines[2].substr(0, 14), "unit,baseline,");
}

TEST(Report, UnwritablePathRejected) {
  const auto r = run_attack(small_config());
  try {
    emit_report(r, ReportFormat::json, "/nonexistent-dir/report.json");
    FAIL() << "expected an io error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
}

TEST(Report, ArtifactsWritten) {
  TempDir dir;
  const auto r = run_attack(small_config());
  save_artifacts(r, dir.file("art"));
  EXPECT_EQ(load_samples(dir.file("art") / "attack_samples.csv").size(), r.attack_train_samples);
  const auto m = attack_model_from_json(nlohmann::json::parse(read_text(dir.file("art") / "attack_model.json")));
  EXPECT_EQ(m.weights, r.attack_model.weights);
  EXPECT_TRUE(std::filesystem::exists(dir.file("art") / "pools.json"));
}

TEST(Config, ShippedConfigsLoad) {
  const auto d = load_config(config_path("default.json"));
  EXPECT_EQ(d.reference.count, 10u);
  EXPECT_EQ(d.perturbation.k, 12u);
  EXPECT_EQ(d.perturbation.q, 6u);
  EXPECT_EQ(d.shadow.count, 60u);
  EXPECT_FALSE(d.perturbation.epsilon.has_value());
  const auto s = load_config(config_path("small.json"));
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(s.graph.sbm.blocks, (std::vector<std::size_t>{80, 80}));
}

TEST(Config, JsonRoundTrip) {
  auto cfg = small_config();
  cfg.perturbation.epsilon = 12.5;
  cfg.attack.knowledge = Knowledge::black_box;
  cfg.property.kind = PropertyKind::link_same;
  const auto j = to_json(cfg);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_EQ(config_error_code(R"({"bogus": 1})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"reference": {"cnt": 3}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"perturbation": {"k": "ten"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"perturbation": {"k": 3, "q": 4}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"perturbation": {"epsilon": "some"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"perturbation": {"solver": "cplex"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"model": {"loss": "hinge"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"model": {"lambda": 0}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"attack": {"knowledge": "grey-box"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"property": {"kind": "edge"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"graph": {"source": "files"}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"graph": {"sbm": {"blocks": [10], "attr_fracs": [0.1, 0.2]}}})"),
            Errc::config);
  EXPECT_EQ(config_error_code(R"({"reference": {"count": 0}})"), Errc::config);
  EXPECT_EQ(config_error_code(R"([1, 2])"), Errc::config);
  EXPECT_EQ(config_error_code(R"({"reference": {"count": 3}})"), Errc::io);
}

TEST(Config, FileErrorsAndThreadOverride) {
  TempDir dir;
  EXPECT_THROW(load_config(dir.file("missing.json")), Error);
  write_text(dir.file("bad.json"), "{ \"seed\": ");
  try {
    load_config(dir.file("bad.json"));
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
  write_text(dir.file("c.json"), "// comment\n{ \"threads\": 2 }\n");
  EXPECT_EQ(load_config(dir.file("c.json")).threads, 2u);
  ::setenv(kThreadsEnv, "5", 1);
  EXPECT_EQ(load_config(dir.file("c.json")).threads, 5u);
  ::setenv(kThreadsEnv, "many", 1);
  EXPECT_THROW(load_config(dir.file("c.json")), Error);
  ::unsetenv(kThreadsEnv);
}

TEST(Cli, RunAttackIsReproducible) {
  TempDir dir;
  const auto args = "run-attack -c " + config_path("small.json") + " -o ";
  ASSERT_EQ(run_cli(args + dir.file("a.json").string(), dir), 0);
  ASSERT_EQ(run_cli(args + dir.file("b.json").string() + " --csv " + dir.file("s.csv").string(), dir), 0);
  auto a = nlohmann::json::parse(read_text(dir.file("a.json")));
  auto b = nlohmann::json::parse(read_text(dir.file("b.json")));
  EXPECT_EQ(a["mode"], "attack");
  a.erase("runtime_ms");
  b.erase("runtime_ms");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(lines_of(read_text(dir.file("s.csv"))).size(), 2u);
}

TEST(Cli, RunBaselineToStdoutAndReport) {
  TempDir dir;
  std::string out;
  ASSERT_EQ(run_cli("run-baseline -c " + config_path("small.json"), dir, &out), 0);
  const auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["mode"], "baseline");
  write_text(dir.file("r.json"), out);
  ASSERT_EQ(run_cli("report " + dir.file("r.json").string() + " " + dir.file("r.json").string(), dir, &out), 0);
  EXPECT_EQ(lines_of(out).size(), 2u);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("run-attack -c " + dir.file("missing.json").string(), dir), 2);
  write_text(dir.file("typo.json"), R"({"referance": {}})");
  EXPECT_EQ(run_cli("run-attack -c " + dir.file("typo.json").string(), dir), 2);
  EXPECT_EQ(run_cli("no-such-command", dir), 2);
  EXPECT_EQ(run_cli("split --edges " + dir.file("none.tsv").string() + " --nodes " +
                        dir.file("none.csv").string() + " -o " + dir.path().string(),
                    dir),
            3);
  write_text(dir.file("phase.json"),
             R"({"seed": 3, "graph": {"sbm": {"blocks": [80, 80], "p_in": 0.08, "p_out": 0.0,
                 "attr_fracs": [0.4, 0.6]}}, "property": {"attr_value": 5},
                 "reference": {"count": 2, "size": 40}, "perturbation": {"k": 4, "q": 2},
                 "target": {"count": 4, "size": 40}, "shadow": {"count": 4, "size": 40}})");
  EXPECT_EQ(run_cli("run-attack -c " + dir.file("phase.json").string(), dir), 4);
  EXPECT_EQ(run_cli("--help", dir), 0);
}

TEST(Cli, GenerateSplitAndFitBound) {
  TempDir dir;
  const auto edges = dir.file("g.tsv").string(), nodes = dir.file("g.csv").string();
  ASSERT_EQ(run_cli("gen-sbm -c " + config_path("small.json") + " --edges " + edges + " --nodes " + nodes, dir), 0);
  const auto g = load_graph(edges, nodes);
  EXPECT_EQ(g.node_count(), 160u);

  ASSERT_EQ(run_cli("split --edges " + edges + " --nodes " + nodes + " -o " + dir.path().string() +
                        " --seed 4",
                    dir),
            0);
  const auto aux = load_graph(dir.file("auxiliary.tsv"), dir.file("auxiliary.csv"));
  const auto tgt = load_graph(dir.file("target.tsv"), dir.file("target.csv"));
  EXPECT_EQ(aux.node_count() + tgt.node_count(), 160u);

  ASSERT_EQ(run_cli("fit-bound -c " + config_path("small.json") + " -n 20 -o " + dir.file("b.json").string(), dir), 0);
  const auto fit = nlohmann::json::parse(read_text(dir.file("b.json")));
  EXPECT_TRUE(fit.contains("c_hat"));
  EXPECT_TRUE(fit.contains("spearman_rho"));
  EXPECT_GE(fit["points"].size(), 1u);
}
