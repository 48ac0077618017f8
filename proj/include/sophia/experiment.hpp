#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sophia/config.hpp"
#include "sophia/tensor.hpp"

namespace sophia {

/// Linear warmup 0 -> peak over `warmup` steps, then cosine from peak down to
/// final_lr_frac * peak at step T. Steps are 1-indexed.
double cosine_lr(int64_t t, const ExperimentConfig& cfg);

/// Scales g to `threshold` when its l2 norm exceeds it; flags whether
/// clipping triggered.
std::pair<Tensor, bool> grad_clip_global_norm(const Tensor& g, double threshold);

struct RunRow {
  int64_t step;
  double loss;
  double eval_loss;
  double lr;
  double unclipped_frac;
  double h_norm;
  double grad_norm;  // after global norm clipping
  bool grad_clip_triggered;

  bool operator==(const RunRow&) const = default;
};

enum class RunStatus { completed, diverged };

/// Per-step telemetry of one training run; exactly one row per executed step.
struct RunRecord {
  std::vector<RunRow> rows;
  RunStatus status = RunStatus::completed;
};

/// Executes the full training loop: batch -> loss/grad -> norm clip ->
/// estimator on schedule -> optimizer step -> telemetry row. Deterministic
/// given the config (including seed). Divergence (non-finite loss or loss
/// above 1e6) stops the run early with status = diverged.
RunRecord run_experiment(const ExperimentConfig& cfg);

/// First step whose eval loss is <= target, if any.
std::optional<int64_t> steps_to_target(const RunRecord& record, double target_loss);

/// steps_slow / steps_fast at the given target. The comparison contract
/// requires the slow record to be the grid-best run at its own budget; the
/// compare entry point below enforces that. Throws when either side never
/// reaches the target.
double speedup_ratio(const RunRecord& record_fast, const RunRecord& record_slow,
                     double target_loss);

/// Doubles or halves gamma until the mean unclipped fraction over a short
/// probe run lands in [0.1, 0.5]; at most 30 restarts.
double tune_gamma(const ExperimentConfig& cfg, int64_t probe_steps);

struct CompareOutcome {
  double target;
  double best_slow_peak_lr;
  double best_slow_final_eval;
  int64_t steps_slow;
  int64_t steps_fast;
  double ratio;
  int64_t slow_runs_diverged;
};

/// The speed-comparison methodology: the slow side is run over its peak-LR
/// grid (descending, diverged runs discarded) and the grid-best run at the
/// full budget defines the reference; the fast config is a single run. When
/// no explicit target is given, the target is the slow side's best final
/// eval loss.
CompareOutcome compare_runs(const ExperimentConfig& slow, const ExperimentConfig& fast,
                            std::optional<double> target);

// --- CSV emission -----------------------------------------------------------

extern const char* const kCsvHeader;

std::string csv_to_string(const RunRecord& record);
/// Atomic write (temp file + rename), 17 significant digits per float.
void emit_csv(const RunRecord& record, const std::filesystem::path& path);
RunRecord parse_csv_string(const std::string& text);
RunRecord parse_csv(const std::filesystem::path& path);

/// Loss-vs-step curves for one or more records as a static SVG.
void emit_plot(const std::vector<std::pair<std::string, RunRecord>>& records,
               const std::filesystem::path& path);

}  // namespace sophia
