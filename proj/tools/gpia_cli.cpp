#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpia/gpia.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kPhaseFailure = 4 };

int exit_code_for(gpia::Errc code) {
  switch (code) {
    case gpia::Errc::config: return kConfigError;
    case gpia::Errc::phase_failure: return kPhaseFailure;
    default: return kDataError;
  }
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  gpia::require(in.good(), gpia::Errc::missing_file, path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    gpia::fail(gpia::Errc::parse_error, path + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  gpia::require(out.good(), gpia::Errc::io, "cannot write " + path);
  out << j.dump(2) << '\n';
}

struct RunOptions {
  std::string config;
  std::string out;
  std::string csv;
  std::string artifacts;
};

void add_run_options(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  cmd.add_option("-o,--out", o.out, "full JSON report (default: stdout)");
  cmd.add_option("--csv", o.csv, "append a one-row summary to this CSV");
  cmd.add_option("--artifacts", o.artifacts, "directory for attack samples and model");
}

void finish_run(const gpia::ExperimentReport& r, const RunOptions& o) {
  if (o.out.empty() || o.out == "-")
    std::cout << gpia::to_json(r).dump(2) << '\n';
  else
    gpia::emit_report(r, gpia::ReportFormat::json, o.out);
  if (!o.csv.empty()) gpia::emit_report(r, gpia::ReportFormat::csv_summary, o.csv);
  if (!o.artifacts.empty()) gpia::save_artifacts(r, o.artifacts);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

void print_summary(const gpia::ExperimentReport& r) {
  std::printf("%-20s %-9s %-10s acc=%.3f auc=%.3f majority=%.3f trained=%zu approx=%zu total=%.1fms\n",
              r.config.name.c_str(), r.mode.c_str(), gpia::to_string(r.config.attack.knowledge).c_str(),
              r.metrics.accuracy, r.metrics.roc_auc, r.majority_rate, r.models_trained,
              r.models_approximated, r.runtime.total());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph property inference via model approximation"};
  app.require_subcommand(1);

  std::string gen_config, gen_edges, gen_nodes;
  auto* gen = app.add_subcommand("gen-sbm", "write the configured SBM graph as edge TSV + node CSV");
  gen->add_option("-c,--config", gen_config, "experiment config (JSON)")->required();
  gen->add_option("--edges", gen_edges, "edge TSV output")->required();
  gen->add_option("--nodes", gen_nodes, "node CSV output")->required();

  std::string split_edges, split_nodes, split_dir;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Louvain split into auxiliary and target graphs");
  split->add_option("--edges", split_edges, "edge TSV input")->required();
  split->add_option("--nodes", split_nodes, "node CSV input")->required();
  split->add_option("-o,--out-dir", split_dir, "output directory")->required();
  split->add_option("--seed", split_seed, "Louvain seed");

  RunOptions attack_opts, baseline_opts;
  auto* attack = app.add_subcommand("run-attack", "approximation-based property inference");
  add_run_options(*attack, attack_opts);
  auto* baseline = app.add_subcommand("run-baseline", "shadow-training baseline");
  add_run_options(*baseline, baseline_opts);

  std::string fit_config, fit_out;
  std::size_t fit_count = 50;
  auto* fit = app.add_subcommand("fit-bound", "estimate the error-bound constant on a reference graph");
  fit->add_option("-c,--config", fit_config, "experiment config (JSON)")->required();
  fit->add_option("-o,--out", fit_out, "JSON output (default: stdout)");
  fit->add_option("-n,--perturbations", fit_count, "number of sampled perturbations");

  std::vector<std::string> report_inputs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "summarize JSON reports");
  report->add_option("inputs", report_inputs, "JSON reports")->required();
  report->add_option("--csv", report_csv, "append summary rows to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      const auto cfg = gpia::load_config(gen_config);
      gpia::require(cfg.graph.source == "sbm", gpia::Errc::config, "gen-sbm needs graph.source = sbm");
      auto spec = cfg.graph.sbm;
      spec.seed = gpia::mix_seed(cfg.seed, gpia::seeds::graph);
      gpia::save_graph(gpia::generate_sbm(spec), gen_edges, gen_nodes);
    } else if (*split) {
      const auto g = gpia::load_graph(split_edges, split_nodes);
      const auto parts = gpia::split_target_auxiliary(g, split_seed);
      std::filesystem::create_directories(split_dir);
      const std::filesystem::path dir(split_dir);
      gpia::save_graph(parts.auxiliary, dir / "auxiliary.tsv", dir / "auxiliary.csv");
      gpia::save_graph(parts.target_pool, dir / "target.tsv", dir / "target.csv");
    } else if (*attack) {
      finish_run(gpia::run_attack(gpia::load_config(attack_opts.config)), attack_opts);
    } else if (*baseline) {
      finish_run(gpia::run_shadow_baseline(gpia::load_config(baseline_opts.config)), baseline_opts);
    } else if (*fit) {
      const auto cfg = gpia::load_config(fit_config);
      const auto aux = gpia::source_graphs(cfg).auxiliary;
      const auto part = gpia::louvain_partition(aux, gpia::mix_seed(cfg.seed, gpia::seeds::louvain));
      gpia::WalkConfig walk;
      walk.w = cfg.reference.w;
      walk.target_size = cfg.reference.size;
      walk.seed = gpia::mix_seed(cfg.seed, gpia::seeds::reference_walk);
      const auto ref = gpia::sample_reference_graph(aux, part, walk, 0);
      const auto theta = gpia::train(ref, cfg.model);
      gpia::BoundFitOptions opts;
      opts.cg = cfg.cg;
      const auto result = gpia::fit_bound_constant(
          ref, theta, fit_count, gpia::mix_seed(cfg.seed, gpia::seeds::perturbations), opts);
      write_json(gpia::to_json(result), fit_out);
    } else if (*report) {
      for (const auto& path : report_inputs) {
        const auto r = gpia::report_from_json(read_json(path));
        print_summary(r);
        if (!report_csv.empty()) gpia::emit_report(r, gpia::ReportFormat::csv_summary, report_csv);
      }
    }
  } catch (const gpia::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
