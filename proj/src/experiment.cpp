#include "sophia/experiment.hpp"

#include <cmath>
#include <string>

#include "sophia/autodiff.hpp"
#include "sophia/errors.hpp"
#include "sophia/estimators.hpp"
#include "sophia/rng.hpp"

namespace sophia {

namespace {

constexpr double kDivergenceLossCap = 1e6;

}  // namespace

double cosine_lr(int64_t t, const ExperimentConfig& cfg) {
  if (t < 1 || t > cfg.steps)
    throw ParameterError("cosine_lr step " + std::to_string(t) + " outside [1, " +
                         std::to_string(cfg.steps) + "]");
  if (cfg.warmup > 0 && t <= cfg.warmup)
    return cfg.peak_lr * static_cast<double>(t) / static_cast<double>(cfg.warmup);
  double final_lr = cfg.final_lr_frac * cfg.peak_lr;
  if (cfg.steps == cfg.warmup) return cfg.peak_lr;
  double progress =
      static_cast<double>(t - cfg.warmup) / static_cast<double>(cfg.steps - cfg.warmup);
  return final_lr + (cfg.peak_lr - final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::pair<Tensor, bool> grad_clip_global_norm(const Tensor& g, double threshold) {
  if (threshold <= 0.0) throw ParameterError("grad clip threshold must be positive");
  double n = norm2(g);
  if (n <= threshold) return {g, false};
  Tensor out = Tensor::zeros(g.shape());
  double s = threshold / n;
  for (int64_t i = 0; i < g.size(); ++i) out[i] = g[i] * s;
  return {std::move(out), true};
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  auto problem = cfg.problem.instantiate();
  bool sophia_run = cfg.is_sophia();
  EstimatorKind estimator =
      (cfg.optimizer == "sophia_g") ? EstimatorKind::gnb : EstimatorKind::hutchinson;
  bool uses_estimator = sophia_run && cfg.sophia.mode != PreconditionerMode::empirical_fisher;
  if (uses_estimator && estimator == EstimatorKind::gnb && problem->logits_view() == nullptr)
    throw ConfigError("GNB estimator needs a problem with a logits interface");

  SophiaConfig scfg = cfg.sophia;
  scfg.estimator = estimator;

  Tensor theta = problem->init_params(cfg.seed);
  SophiaState sstate = SophiaState::init(theta.size());
  BaselineState bstate = BaselineState::init(theta.size());
  BaselineKind bkind = sophia_run ? BaselineKind::gd : cfg.baseline_kind();

  Batch eval_batch = problem->eval_batch();
  auto eval_loss_at = [&](const Tensor& params) {
    Tape tape;
    Tape::NodeId x = tape.input(params);
    return tape.value(problem->build_loss(tape, x, eval_batch)).item();
  };

  RunRecord record;
  record.rows.reserve(static_cast<size_t>(cfg.steps));
  double last_eval = 0.0;
  bool have_eval = false;

  for (int64_t t = 1; t <= cfg.steps; ++t) {
    double lr = cosine_lr(t, cfg);
    RngStream batch_rng(cfg.seed, static_cast<uint64_t>(t), RngStream::kBatch);
    Batch batch = problem->sample_batch(batch_rng, cfg.batch);

    double loss;
    Tensor g;
    try {
      auto [value, grad] = value_and_grad(loss_fn(*problem, batch), theta);
      loss = value;
      g = std::move(grad);
    } catch (const OverflowError&) {
      record.status = RunStatus::diverged;
      break;
    }
    if (!std::isfinite(loss) || loss > kDivergenceLossCap) {
      record.status = RunStatus::diverged;
      break;
    }

    bool clip_triggered = false;
    if (cfg.sophia.grad_clip_norm.has_value()) {
      auto [clipped, triggered] = grad_clip_global_norm(g, *cfg.sophia.grad_clip_norm);
      g = std::move(clipped);
      clip_triggered = triggered;
    }
    double grad_norm = norm2(g);

    double unclipped_frac = 0.0;
    double h_norm = 0.0;
    try {
      if (sophia_run) {
        std::optional<HessianEstimate> estimate;
        if (uses_estimator && hessian_step_due(t, scfg.hessian_interval)) {
          // Estimator batch: leading slice of the step batch, mirroring the
          // reduced Hessian batches of the reference setup.
          Batch hess_batch = batch;
          int64_t hb = std::min<int64_t>(cfg.hess_batch, cfg.batch);
          if (!hess_batch.items.empty())
            hess_batch.items.resize(static_cast<size_t>(hb));
          RngStream est_rng(cfg.seed, static_cast<uint64_t>(t), RngStream::kEstimator);
          if (estimator == EstimatorKind::gnb) {
            estimate = gnb_estimate(*problem, theta, hess_batch, est_rng);
          } else {
            estimate = hutchinson_estimate(loss_fn(*problem, hess_batch), theta, est_rng, 1);
          }
        }
        auto result = sophia_step(theta, g, estimate, sstate, scfg, lr);
        theta = std::move(result.theta);
        unclipped_frac = result.unclipped_fraction;
        h_norm = norm2(sstate.h);
      } else {
        theta = baseline_step(bkind, theta, g, bstate, cfg.baseline, lr);
      }
    } catch (const OverflowError&) {
      record.status = RunStatus::diverged;
      break;
    }
    if (!theta.all_finite()) {
      record.status = RunStatus::diverged;
      break;
    }

    if (!have_eval || t % cfg.eval_interval == 0 || t == cfg.steps) {
      try {
        last_eval = eval_loss_at(theta);
        have_eval = true;
      } catch (const OverflowError&) {
        record.status = RunStatus::diverged;
        break;
      }
    }

    record.rows.push_back(
        {t, loss, last_eval, lr, unclipped_frac, h_norm, grad_norm, clip_triggered});
  }
  return record;
}

std::optional<int64_t> steps_to_target(const RunRecord& record, double target_loss) {
  for (const RunRow& row : record.rows) {
    if (row.eval_loss <= target_loss) return row.step;
  }
  return std::nullopt;
}

double speedup_ratio(const RunRecord& record_fast, const RunRecord& record_slow,
                     double target_loss) {
  auto fast = steps_to_target(record_fast, target_loss);
  auto slow = steps_to_target(record_slow, target_loss);
  if (!fast.has_value())
    throw IncomparableError("fast record never reaches target " + std::to_string(target_loss));
  if (!slow.has_value())
    throw IncomparableError("slow record never reaches target " + std::to_string(target_loss));
  return static_cast<double>(*slow) / static_cast<double>(*fast);
}

double tune_gamma(const ExperimentConfig& cfg, int64_t probe_steps) {
  if (!cfg.is_sophia()) throw ConfigError("tune_gamma needs a Sophia optimizer config");
  if (probe_steps < cfg.sophia.hessian_interval)
    throw ParameterError("probe_steps must be >= the Hessian interval k");

  const double gamma0 = cfg.sophia.gamma;
  double gamma = gamma0;
  constexpr int kMaxRestarts = 30;
  double last_fraction = -1.0;
  for (int restart = 0; restart <= kMaxRestarts; ++restart) {
    ExperimentConfig probe = cfg;
    probe.sophia.gamma = gamma;
    probe.steps = probe_steps;
    probe.warmup = std::min(cfg.warmup, probe_steps / 2);
    probe.eval_interval = probe_steps;  // probes only need the update path
    RunRecord record = run_experiment(probe);
    if (record.status != RunStatus::completed || record.rows.empty())
      throw TuningFailure("gamma probe diverged at gamma = " + std::to_string(gamma));
    double mean = 0.0;
    for (const RunRow& row : record.rows) mean += row.unclipped_frac;
    mean /= static_cast<double>(record.rows.size());
    last_fraction = mean;
    if (mean > 0.5) {
      gamma *= 0.5;
    } else if (mean < 0.1) {
      gamma *= 2.0;
    } else {
      return gamma;
    }
    if (gamma < std::ldexp(gamma0, -30) || gamma > std::ldexp(gamma0, 30)) break;
  }
  throw TuningFailure("no gamma in [2^-30, 2^30] * " + std::to_string(gamma0) +
                      " lands the unclipped fraction in [0.1, 0.5]; last fraction " +
                      std::to_string(last_fraction) + " at gamma " + std::to_string(gamma));
}

CompareOutcome compare_runs(const ExperimentConfig& slow, const ExperimentConfig& fast,
                            std::optional<double> target) {
  std::vector<double> grid = slow.lr_grid.empty() ? std::vector<double>{slow.peak_lr}
                                                  : slow.lr_grid;
  // Descending probe: mirrors the search for the largest stable peak LR.
  std::sort(grid.begin(), grid.end(), std::greater<double>());

  std::optional<RunRecord> best;
  double best_final = 0.0, best_lr = 0.0;
  int64_t diverged = 0;
  for (double lr : grid) {
    ExperimentConfig c = slow;
    c.peak_lr = lr;
    c.lr_grid.clear();
    RunRecord record = run_experiment(c);
    if (record.status != RunStatus::completed || record.rows.empty()) {
      ++diverged;
      continue;
    }
    double final_eval = record.rows.back().eval_loss;
    if (!best.has_value() || final_eval < best_final) {
      best = std::move(record);
      best_final = final_eval;
      best_lr = lr;
    }
  }
  if (!best.has_value()) throw IncomparableError("every slow-side grid run diverged");

  double target_loss = target.value_or(best_final);
  RunRecord fast_record = run_experiment(fast);
  if (fast_record.status != RunStatus::completed)
    throw IncomparableError("fast run diverged");

  double ratio = speedup_ratio(fast_record, *best, target_loss);
  CompareOutcome out;
  out.target = target_loss;
  out.best_slow_peak_lr = best_lr;
  out.best_slow_final_eval = best_final;
  out.steps_slow = *steps_to_target(*best, target_loss);
  out.steps_fast = *steps_to_target(fast_record, target_loss);
  out.ratio = ratio;
  out.slow_runs_diverged = diverged;
  return out;
}

}  // namespace sophia
