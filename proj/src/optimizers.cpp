#include "sophia/optimizers.hpp"

#include <cmath>
#include <string>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

SophiaConfig SophiaConfig::defaults_for(EstimatorKind kind) {
  SophiaConfig cfg;
  cfg.estimator = kind;
  cfg.gamma = (kind == EstimatorKind::gnb) ? 0.05 : 0.01;
  if (kind == EstimatorKind::empirical_fisher) cfg.mode = PreconditionerMode::empirical_fisher;
  return cfg;
}

SophiaState SophiaState::init(int64_t dim) {
  return {Tensor::zeros({dim}), Tensor::zeros({dim}), 1};
}

bool hessian_step_due(int64_t t, int64_t interval) {
  if (interval < 1) throw ParameterError("hessian interval must be >= 1");
  return interval == 1 || (t % interval) == 1;
}

Tensor clip(const Tensor& z, double rho) {
  if (rho <= 0.0) throw ParameterError("clip threshold must be positive");
  Tensor out = Tensor::zeros(z.shape());
  for (int64_t i = 0; i < z.size(); ++i) out[i] = std::max(std::min(z[i], rho), -rho);
  return out;
}

Tensor precondition(PreconditionerMode mode, const Tensor& m, const Tensor& h_ema,
                    const SophiaConfig& cfg) {
  Tensor out = Tensor::zeros(m.shape());
  for (int64_t i = 0; i < m.size(); ++i) {
    double h = h_ema[i];
    if (mode == PreconditionerMode::adahessian_like) h = std::sqrt(std::max(h, 0.0));
    out[i] = m[i] / std::max(cfg.gamma * h, cfg.eps);
  }
  return out;
}

SophiaStepResult sophia_step(const Tensor& theta, const Tensor& g,
                             const std::optional<HessianEstimate>& h_hat, SophiaState& state,
                             const SophiaConfig& cfg, double lr) {
  if (!theta.same_shape(g) || !theta.same_shape(state.m) || !theta.same_shape(state.h))
    throw ShapeError("sophia_step shape mismatch");

  for (int64_t i = 0; i < state.m.size(); ++i)
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];

  if (cfg.mode == PreconditionerMode::empirical_fisher) {
    if (h_hat.has_value())
      throw SchedulingError("empirical-Fisher mode feeds h from the gradient; no estimate allowed");
    for (int64_t i = 0; i < state.h.size(); ++i)
      state.h[i] = cfg.beta2 * state.h[i] + (1.0 - cfg.beta2) * g[i] * g[i];
  } else if (hessian_step_due(state.t, cfg.hessian_interval)) {
    if (!h_hat.has_value())
      throw SchedulingError("Hessian estimate missing on Hessian step t=" +
                            std::to_string(state.t));
    const Tensor& est = h_hat->values;
    if (!est.same_shape(theta)) throw ShapeError("Hessian estimate shape mismatch");
    for (int64_t i = 0; i < state.h.size(); ++i) {
      double u = (cfg.mode == PreconditionerMode::adahessian_like) ? est[i] * est[i] : est[i];
      state.h[i] = cfg.beta2 * state.h[i] + (1.0 - cfg.beta2) * u;
    }
  } else if (h_hat.has_value()) {
    throw SchedulingError("Hessian estimate supplied off-schedule at t=" +
                          std::to_string(state.t));
  }
  // else: h carries forward unchanged

  Tensor ratio = precondition(cfg.mode, state.m, state.h, cfg);
  int64_t unclipped = 0;
  Tensor next = Tensor::zeros(theta.shape());
  for (int64_t i = 0; i < theta.size(); ++i) {
    if (std::fabs(ratio[i]) < 1.0) ++unclipped;
    double decayed = theta[i] - lr * cfg.weight_decay * theta[i];
    next[i] = decayed - lr * std::max(std::min(ratio[i], 1.0), -1.0);
  }
  state.t += 1;
  return {std::move(next),
          static_cast<double>(unclipped) / static_cast<double>(theta.size())};
}

BaselineHyper BaselineHyper::defaults_for(BaselineKind kind) {
  BaselineHyper h;
  switch (kind) {
    case BaselineKind::adamw:
      h.beta1 = 0.9;
      h.beta2 = 0.95;
      break;
    case BaselineKind::lion:
      h.beta1 = 0.95;
      h.beta2 = 0.98;
      break;
    case BaselineKind::sign_momentum:
    case BaselineKind::normalize:
      h.beta1 = 0.96;
      break;
    case BaselineKind::gd:
    case BaselineKind::signgd:
      break;
  }
  return h;
}

BaselineState BaselineState::init(int64_t dim) {
  return {Tensor::zeros({dim}), Tensor::zeros({dim}), 1};
}

Tensor baseline_step(BaselineKind kind, const Tensor& theta, const Tensor& g,
                     BaselineState& state, const BaselineHyper& hyper, double lr) {
  if (!theta.same_shape(g)) throw ShapeError("baseline_step shape mismatch");
  int64_t d = theta.size();
  Tensor next = Tensor::zeros(theta.shape());
  for (int64_t i = 0; i < d; ++i) next[i] = theta[i] - lr * hyper.weight_decay * theta[i];

  switch (kind) {
    case BaselineKind::gd:
      for (int64_t i = 0; i < d; ++i) next[i] -= lr * g[i];
      break;
    case BaselineKind::signgd:
      for (int64_t i = 0; i < d; ++i) next[i] -= lr * sign(g[i]);
      break;
    case BaselineKind::sign_momentum:
      for (int64_t i = 0; i < d; ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
        next[i] -= lr * sign(state.m[i]);
      }
      break;
    case BaselineKind::adamw: {
      double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
      double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
      for (int64_t i = 0; i < d; ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        next[i] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
      }
      break;
    }
    case BaselineKind::lion:
      for (int64_t i = 0; i < d; ++i) {
        double c = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
        next[i] -= lr * sign(c);
        state.m[i] = hyper.beta2 * state.m[i] + (1.0 - hyper.beta2) * g[i];
      }
      break;
    case BaselineKind::normalize: {
      double sq = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
        sq += state.m[i] * state.m[i];
      }
      double n = std::sqrt(sq);
      if (n > 0.0) {
        for (int64_t i = 0; i < d; ++i) next[i] -= lr * state.m[i] / n;
      }
      // zero momentum norm: defined no-op
      break;
    }
  }
  state.t += 1;
  return next;
}

}  // namespace sophia
