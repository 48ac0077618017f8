// Batch CLI for the optimizer lab: run experiments, tune gamma, run the
// validation suites, compare optimizers, and plot loss curves.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sophia/checks.hpp"
#include "sophia/config.hpp"
#include "sophia/errors.hpp"
#include "sophia/experiment.hpp"

namespace fs = std::filesystem;

namespace {

int print_results(const std::vector<sophia::CheckResult>& results) {
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %s %s — %s (%.2f s)\n", r.pass ? "PASS" : "FAIL", r.id.c_str(),
                r.name.c_str(), r.detail.c_str(), r.seconds);
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sophia optimizer laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite, slow_path, fast_path, plot_out;
  std::vector<std::string> plot_inputs;
  std::optional<double> target;
  int64_t probe_steps = 100;

  auto* run = app.add_subcommand("run", "run one experiment and emit telemetry CSV");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory")->required();

  auto* tune = app.add_subcommand("tune-gamma", "tune the clipping scale per the unclipped band");
  tune->add_option("--config", config_path, "Sophia experiment config file")->required();
  tune->add_option("--probe-steps", probe_steps, "probe run length (default 100)");

  auto* validate = app.add_subcommand("validate", "run a validation suite");
  validate->add_option("--suite", suite, "autodiff | estimators | theory | toy2d | all")
      ->required();

  auto* compare = app.add_subcommand("compare", "speed comparison, slow side grid-best");
  compare->add_option("--slow", slow_path, "slow-side config (may carry grid.peak_lr)")
      ->required();
  compare->add_option("--fast", fast_path, "fast-side config")->required();
  compare->add_option("--target", target,
                      "target loss (default: slow side's grid-best final eval loss)");

  auto* plot = app.add_subcommand("plot", "render loss curves from CSV files to SVG");
  plot->add_option("--in", plot_inputs, "input CSV files")->required()->expected(-1);
  plot->add_option("--out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      sophia::ExperimentConfig cfg = sophia::ExperimentConfig::from_file(config_path);
      sophia::RunRecord record = sophia::run_experiment(cfg);
      fs::create_directories(out_dir);
      fs::path csv = fs::path(out_dir) / "run.csv";
      sophia::emit_csv(record, csv);
      std::printf("status=%s steps=%zu csv=%s\n",
                  record.status == sophia::RunStatus::completed ? "completed" : "diverged",
                  record.rows.size(), csv.string().c_str());
      if (!record.rows.empty())
        std::printf("final loss=%.17g eval_loss=%.17g\n", record.rows.back().loss,
                    record.rows.back().eval_loss);
      return 0;
    }
    if (tune->parsed()) {
      sophia::ExperimentConfig cfg = sophia::ExperimentConfig::from_file(config_path);
      double gamma = sophia::tune_gamma(cfg, probe_steps);
      std::printf("gamma=%.17g\n", gamma);
      return 0;
    }
    if (validate->parsed()) {
      if (suite == "all") return print_results(sophia::run_all_checks());
      return print_results(sophia::run_suite(suite));
    }
    if (compare->parsed()) {
      sophia::ExperimentConfig slow = sophia::ExperimentConfig::from_file(slow_path);
      sophia::ExperimentConfig fast = sophia::ExperimentConfig::from_file(fast_path);
      sophia::CompareOutcome out = sophia::compare_runs(slow, fast, target);
      std::printf("target=%.17g slow_best_peak_lr=%.17g slow_best_final=%.17g\n", out.target,
                  out.best_slow_peak_lr, out.best_slow_final_eval);
      std::printf("steps_slow=%lld steps_fast=%lld speedup=%.6g slow_diverged_runs=%lld\n",
                  static_cast<long long>(out.steps_slow), static_cast<long long>(out.steps_fast),
                  out.ratio, static_cast<long long>(out.slow_runs_diverged));
      return 0;
    }
    if (plot->parsed()) {
      std::vector<std::pair<std::string, sophia::RunRecord>> records;
      for (const std::string& input : plot_inputs)
        records.emplace_back(fs::path(input).stem().string(), sophia::parse_csv(input));
      sophia::emit_plot(records, plot_out);
      std::printf("wrote %s\n", plot_out.c_str());
      return 0;
    }
  } catch (const sophia::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 1;
}
