#pragma once

#include <cstdint>
#include <optional>

#include "sophia/estimators.hpp"
#include "sophia/tensor.hpp"

namespace sophia {

enum class PreconditionerMode { sophia, adahessian_like, empirical_fisher };

struct SophiaConfig {
  double beta1 = 0.96;
  double beta2 = 0.99;
  double gamma = 0.01;  // 0.01 for Hutchinson, 0.05 for GNB
  double eps = 1e-12;
  int64_t hessian_interval = 10;  // k
  double weight_decay = 0.0;
  EstimatorKind estimator = EstimatorKind::hutchinson;
  std::optional<double> grad_clip_norm = 1.0;
  PreconditionerMode mode = PreconditionerMode::sophia;

  static SophiaConfig defaults_for(EstimatorKind kind);
};

/// Optimizer state: momentum EMA m, diagonal-Hessian EMA h (both start at
/// zero) and the 1-indexed step counter.
struct SophiaState {
  Tensor m;
  Tensor h;
  int64_t t = 1;

  static SophiaState init(int64_t dim);
};

/// True when step t takes a fresh Hessian estimate. Steps are 1-indexed, so
/// with interval k the Hessian steps are 1, k+1, 2k+1, ...; k = 1 means every
/// step (the literal "t mod 1 == 1" would never fire).
bool hessian_step_due(int64_t t, int64_t interval);

/// Elementwise clamp to [-rho, rho].
Tensor clip(const Tensor& z, double rho);

/// Pre-clip update ratio for the configured preconditioner:
///   sophia:           m / max(gamma * h, eps)
///   adahessian_like:  m / max(gamma * sqrt(h), eps)   (h is the EMA of h_hat^2)
///   empirical_fisher: m / max(gamma * h, eps)          (h is the EMA of g*g)
/// The caller applies clip(., 1).
Tensor precondition(PreconditionerMode mode, const Tensor& m, const Tensor& h_ema,
                    const SophiaConfig& cfg);

struct SophiaStepResult {
  Tensor theta;
  /// Fraction of coordinates with |m / max(gamma h, eps)| strictly below 1.
  double unclipped_fraction;
};

/// One Sophia update: momentum EMA, scheduled Hessian EMA, decoupled weight
/// decay, then the clipped preconditioned step. `h_hat` must be present
/// exactly on Hessian steps (empirical-Fisher mode feeds h from the gradient
/// every step and never takes an estimate).
SophiaStepResult sophia_step(const Tensor& theta, const Tensor& g,
                             const std::optional<HessianEstimate>& h_hat, SophiaState& state,
                             const SophiaConfig& cfg, double lr);

enum class BaselineKind { gd, signgd, sign_momentum, adamw, lion, normalize };

struct BaselineHyper {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.0;
  double eps = 1e-8;

  static BaselineHyper defaults_for(BaselineKind kind);
};

struct BaselineState {
  Tensor m;
  Tensor v;
  int64_t t = 1;

  static BaselineState init(int64_t dim);
};

Tensor baseline_step(BaselineKind kind, const Tensor& theta, const Tensor& g,
                     BaselineState& state, const BaselineHyper& hyper, double lr);

}  // namespace sophia
