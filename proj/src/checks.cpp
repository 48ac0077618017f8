#include "sophia/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>

#include "sophia/autodiff.hpp"
#include "sophia/config.hpp"
#include "sophia/errors.hpp"
#include "sophia/estimators.hpp"
#include "sophia/experiment.hpp"
#include "sophia/optimizers.hpp"
#include "sophia/problems.hpp"
#include "sophia/rng.hpp"
#include "sophia/theory.hpp"

namespace sophia {

namespace {

class Stopwatch {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Collects failures; empty means pass.
class Failures {
 public:
  template <typename... Args>
  void expect(bool ok, Args&&... context) {
    if (ok) return;
    ++count_;
    if (count_ > 6) return;  // keep details readable
    std::ostringstream os;
    (os << ... << context);
    if (!text_.empty()) text_ += "; ";
    text_ += os.str();
  }
  bool ok() const { return count_ == 0; }
  std::string text() const {
    if (count_ <= 6) return text_;
    return text_ + "; (+" + std::to_string(count_ - 6) + " more)";
  }

 private:
  int count_ = 0;
  std::string text_;
};

CheckResult finish(std::string id, std::string name, Failures& fail, const Stopwatch& watch,
                   double time_limit, std::string measurements) {
  CheckResult r;
  r.id = std::move(id);
  r.name = std::move(name);
  r.seconds = watch.elapsed();
  fail.expect(r.seconds < time_limit, "runtime ", r.seconds, " s exceeds limit ", time_limit,
              " s");
  r.pass = fail.ok();
  r.detail = r.pass ? std::move(measurements) : fail.text();
  return r;
}

double loss_at(const Problem& problem, const Tensor& theta, const Batch& batch) {
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  return tape.value(problem.build_loss(tape, x, batch)).item();
}

Tensor gaussian(int64_t n, RngStream& rng, double scl = 1.0) {
  Tensor t = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) t[i] = scl * rng.normal();
  return t;
}

Tensor normalized(Tensor t) {
  double n = norm2(t);
  for (int64_t i = 0; i < t.size(); ++i) t[i] /= n;
  return t;
}

Tensor shifted(const Tensor& theta, const Tensor& u, double step) {
  Tensor out = theta;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += step * u[i];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// C1: gradients and HVPs against central finite differences

CheckResult check_autodiff_correctness() {
  Stopwatch watch;
  Failures fail;
  constexpr double kEps = 1e-5;

  struct Entry {
    std::string name;
    std::shared_ptr<Problem> problem;
    Batch batch;
  };
  std::vector<Entry> entries;
  entries.push_back({"toy2d", make_toy2d(), {}});
  entries.push_back({"quadratic", make_quadratic(10, 100.0, true, 7), {}});
  {
    auto cls = make_classifier(3, 5, 8, 64, 3);
    RngStream rng(3, 1, RngStream::kBatch);
    entries.push_back({"classifier", cls, cls->sample_batch(rng, 16)});
  }
  {
    auto lm = make_tiny_lm(32, 8, 32, 5);
    RngStream rng(5, 1, RngStream::kBatch);
    entries.push_back({"tiny_lm", lm, lm->sample_batch(rng, 16)});
  }

  double worst_grad = 0.0, worst_hvp = 0.0, worst_sym = 0.0;
  for (const Entry& e : entries) {
    Tensor theta = e.problem->init_params(11);
    TapeFn f = loss_fn(*e.problem, e.batch);
    for (int probe = 0; probe < 10; ++probe) {
      RngStream rng(99, static_cast<uint64_t>(probe), RngStream::kGeneric);
      Tensor u = normalized(gaussian(theta.size(), rng));

      auto [loss, grad] = value_and_grad(f, theta);
      (void)loss;
      double directional = dot(grad, u);
      double fd = (value_and_grad(f, shifted(theta, u, kEps)).first -
                   value_and_grad(f, shifted(theta, u, -kEps)).first) /
                  (2.0 * kEps);
      double grad_err = std::fabs(directional - fd) / std::max(1.0, std::fabs(directional));
      worst_grad = std::max(worst_grad, grad_err);
      fail.expect(grad_err <= 1e-6, e.name, " probe ", probe, ": grad FD error ", grad_err);

      Tensor hv = hvp(f, theta, u);
      Tensor gp = value_and_grad(f, shifted(theta, u, kEps)).second;
      Tensor gm = value_and_grad(f, shifted(theta, u, -kEps)).second;
      double num = 0.0;
      for (int64_t i = 0; i < hv.size(); ++i) {
        double d = hv[i] - (gp[i] - gm[i]) / (2.0 * kEps);
        num += d * d;
      }
      double hvp_err = std::sqrt(num) / std::max(1.0, norm2(hv));
      worst_hvp = std::max(worst_hvp, hvp_err);
      fail.expect(hvp_err <= 1e-6, e.name, " probe ", probe, ": HVP FD error ", hvp_err);

      Tensor a = gaussian(theta.size(), rng);
      Tensor b = gaussian(theta.size(), rng);
      double lhs = dot(hvp(f, theta, a), b);
      double rhs = dot(hvp(f, theta, b), a);
      double sym = std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs));
      worst_sym = std::max(worst_sym, sym);
      fail.expect(sym <= 1e-10, e.name, " probe ", probe, ": symmetry gap ", sym);
    }
  }

  std::ostringstream m;
  m << "worst grad FD err " << worst_grad << ", worst HVP FD err " << worst_hvp
    << ", worst symmetry gap " << worst_sym;
  return finish("C1", "autodiff gradients/HVPs vs central differences", fail, watch, 10.0,
                m.str());
}

// ---------------------------------------------------------------------------
// C2: Hutchinson unbiasedness on a fixed 5x5 quadratic

CheckResult check_hutchinson_unbiasedness() {
  Stopwatch watch;
  Failures fail;

  RngStream data_rng(2024, 0, RngStream::kData);
  Tensor a = Tensor::zeros({5, 5});
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j <= i; ++j) {
      double z = data_rng.normal();
      a.at(i, j) = a.at(j, i) = (i == j) ? 0.0 : z;
    }
  for (int64_t i = 0; i < 5; ++i) a.at(i, i) = 3.0 + static_cast<double>(i);

  TapeFn f = [&a](Tape& tape, Tape::NodeId theta) {
    Tape::NodeId col = tape.reshape(theta, {5, 1});
    return tape.scale(tape.sum(tape.mul(col, tape.matmul(tape.constant(a), col))), 0.5);
  };
  Tensor theta = gaussian(5, data_rng);
  Tensor exact = exact_hessian_diag(f, theta);

  RngStream probe_rng(31337, 0, RngStream::kEstimator);
  HessianEstimate est = hutchinson_estimate(f, theta, probe_rng, 200000);

  double worst = 0.0;
  for (int64_t i = 0; i < 5; ++i) {
    double rel = std::fabs(est.values[i] - exact[i]) / std::fabs(exact[i]);
    worst = std::max(worst, rel);
    fail.expect(rel <= 0.02, "coordinate ", i, ": relative error ", rel, " (mean ",
                est.values[i], " vs exact ", exact[i], ")");
  }
  std::ostringstream m;
  m << "200000 probes, worst per-coordinate relative error " << worst;
  return finish("C2", "Hutchinson estimator unbiasedness (5x5 quadratic)", fail, watch, 30.0,
                m.str());
}

// ---------------------------------------------------------------------------
// C3: GNB exactness, Gauss-Newton assembly, Bartlett identities

namespace {

/// Jacobian of the logits w.r.t. theta for one example, as a (d, V) tensor.
Tensor logits_jacobian(const ClassifierProblem& cls, const Tensor& theta, int32_t item) {
  int64_t v = cls.num_classes();
  Tensor jac = Tensor::zeros({theta.size(), v});
  Batch single{{item}};
  for (int64_t c = 0; c < v; ++c) {
    Tape tape;
    Tape::NodeId x = tape.input(theta);
    Tape::NodeId logits = cls.build_logits(tape, x, single);
    Tensor pick = Tensor::zeros({1, v});
    pick[c] = 1.0;
    Tape::NodeId sel = tape.sum(tape.mul(logits, tape.constant(pick)));
    auto grads = tape.gradient(sel, std::span<const Tape::NodeId>(&x, 1));
    const Tensor& g = tape.value(grads[0]);
    for (int64_t i = 0; i < theta.size(); ++i) jac.at(i, c) = g[i];
  }
  return jac;
}

std::vector<double> softmax_of(const ClassifierProblem& cls, const Tensor& theta, int32_t item) {
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId p = tape.softmax_rows(cls.build_logits(tape, x, Batch{{item}}));
  const Tensor& row = tape.value(p);
  return std::vector<double>(row.data(), row.data() + row.size());
}

Tensor ce_gradient(const ClassifierProblem& cls, const Tensor& theta, int32_t item, int32_t y) {
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId logits = cls.build_logits(tape, x, Batch{{item}});
  Tape::NodeId loss = tape.cross_entropy(
      logits, std::make_shared<const std::vector<int32_t>>(std::vector<int32_t>{y}));
  auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
  return tape.value(grads[0]);
}

}  // namespace

CheckResult check_gnb_exactness() {
  Stopwatch watch;
  Failures fail;

  auto cls = make_classifier(3, 5, 8, 32, 17);
  const int64_t v = cls->num_classes();
  Batch batch{{0, 1, 2}};  // V^B = 27 joint label assignments
  double worst_enum = 0.0, worst_asm = 0.0, worst_b1 = 0.0, worst_b2 = 0.0;

  for (uint64_t trial = 0; trial < 5; ++trial) {
    Tensor theta = cls->init_params(20 + trial);
    fail.expect(theta.size() == 75, "classifier dim ", theta.size(), " != 75");

    Tensor exact = exact_gn_diag(*cls, theta, batch);
    Tensor enumerated = gnb_enumerated_expectation(*cls, theta, batch);
    for (int64_t i = 0; i < exact.size(); ++i) {
      double diff = std::fabs(enumerated[i] - exact[i]);
      worst_enum = std::max(worst_enum, diff);
      fail.expect(diff <= 1e-10, "trial ", trial, " coord ", i,
                  ": enumeration vs exact_gn_diag gap ", diff);
    }

    // Independent dense assembly of diag(J S J') averaged over the batch.
    Tensor assembled = Tensor::zeros({theta.size()});
    for (int32_t item : batch.items) {
      Tensor jac = logits_jacobian(*cls, theta, item);
      std::vector<double> p = softmax_of(*cls, theta, item);
      for (int64_t i = 0; i < theta.size(); ++i) {
        double acc = 0.0;
        for (int64_t r = 0; r < v; ++r) {
          for (int64_t c = 0; c < v; ++c) {
            double s = (r == c ? p[static_cast<size_t>(r)] : 0.0) -
                       p[static_cast<size_t>(r)] * p[static_cast<size_t>(c)];
            acc += jac.at(i, r) * s * jac.at(i, c);
          }
        }
        assembled[i] += acc;
      }
    }
    for (int64_t i = 0; i < theta.size(); ++i) {
      assembled[i] /= static_cast<double>(batch.items.size());
      double diff = std::fabs(assembled[i] - exact[i]);
      worst_asm = std::max(worst_asm, diff);
      fail.expect(diff <= 1e-8, "trial ", trial, " coord ", i, ": J S J' assembly gap ", diff);
    }

    // Bartlett identities at the first example.
    int32_t item = batch.items[0];
    std::vector<double> p = softmax_of(*cls, theta, item);
    Tensor score_sum = Tensor::zeros({theta.size()});
    for (int32_t y = 0; y < v; ++y) {
      Tensor g = ce_gradient(*cls, theta, item, y);
      for (int64_t i = 0; i < theta.size(); ++i)
        score_sum[i] += p[static_cast<size_t>(y)] * g[i];
    }
    double b1 = norm_inf(score_sum);
    worst_b1 = std::max(worst_b1, b1);
    fail.expect(b1 <= 1e-12, "trial ", trial, ": Bartlett first identity residual ", b1);

    for (int64_t r = 0; r < v; ++r) {
      for (int64_t c = 0; c < v; ++c) {
        double lhs = 0.0;
        for (int64_t y = 0; y < v; ++y) {
          double sr = p[static_cast<size_t>(r)] - (r == y ? 1.0 : 0.0);
          double sc = p[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0);
          lhs += p[static_cast<size_t>(y)] * sr * sc;
        }
        double rhs = (r == c ? p[static_cast<size_t>(r)] : 0.0) -
                     p[static_cast<size_t>(r)] * p[static_cast<size_t>(c)];
        double diff = std::fabs(lhs - rhs);
        worst_b2 = std::max(worst_b2, diff);
        fail.expect(diff <= 1e-10, "trial ", trial, ": Bartlett second identity gap ", diff,
                    " at (", r, ",", c, ")");
      }
    }
  }

  std::ostringstream m;
  m << "worst gaps: enumeration " << worst_enum << ", assembly " << worst_asm << ", Bartlett-1 "
    << worst_b1 << ", Bartlett-2 " << worst_b2;
  return finish("C3", "GNB exactness and Bartlett identities (V=3, d=75)", fail, watch, 10.0,
                m.str());
}

// ---------------------------------------------------------------------------
// C4: toy landscape, Newton vs clipped update vs SignGD

namespace {

struct ToyTrace {
  Tensor theta;
  double grad_norm = 0.0;
  double loss = 0.0;
  std::optional<int64_t> steps_to_loss;
};

ToyTrace newton_toy(const Problem& toy, Tensor theta, int64_t max_steps) {
  TapeFn f = loss_fn(toy, {});
  ToyTrace out{theta, 0.0, 0.0, std::nullopt};
  for (int64_t t = 0; t < max_steps; ++t) {
    auto [loss, g] = value_and_grad(f, out.theta);
    (void)loss;
    if (norm2(g) < 1e-8) break;
    Tensor h = exact_hessian_diag(f, out.theta);
    for (int64_t i = 0; i < 2; ++i) out.theta[i] -= g[i] / h[i];
  }
  auto [loss, g] = value_and_grad(f, out.theta);
  out.loss = loss;
  out.grad_norm = norm2(g);
  return out;
}

/// The per-coordinate clipped Newton-style update on the toy landscape:
/// theta_i <- theta_i - eta * clip(g_i / max(h_i, eps), rho).
ToyTrace clipped_toy(const Problem& toy, Tensor theta, int64_t max_steps, double target,
                     double eta, double rho) {
  constexpr double kEpsFloor = 1e-12;
  TapeFn f = loss_fn(toy, {});
  ToyTrace out{theta, 0.0, 0.0, std::nullopt};
  for (int64_t t = 1; t <= max_steps; ++t) {
    auto [loss, g] = value_and_grad(f, out.theta);
    (void)loss;
    Tensor h = exact_hessian_diag(f, out.theta);
    for (int64_t i = 0; i < 2; ++i) {
      double ratio = g[i] / std::max(h[i], kEpsFloor);
      out.theta[i] -= eta * std::max(std::min(ratio, rho), -rho);
    }
    out.loss = loss_at(toy, out.theta, {});
    if (!out.steps_to_loss.has_value() && out.loss <= target) {
      out.steps_to_loss = t;
      break;
    }
  }
  return out;
}

std::optional<int64_t> signgd_toy_steps(const Problem& toy, Tensor theta, double eta,
                                        double target, int64_t max_steps) {
  TapeFn f = loss_fn(toy, {});
  BaselineState state = BaselineState::init(2);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::signgd);
  for (int64_t t = 1; t <= max_steps; ++t) {
    auto [loss, g] = value_and_grad(f, theta);
    (void)loss;
    theta = baseline_step(BaselineKind::signgd, theta, g, state, hyper, eta);
    if (loss_at(toy, theta, {}) <= target) return t;
  }
  return std::nullopt;
}

}  // namespace

Tensor scan_toy2d_init() {
  auto toy = make_toy2d();
  const double theta1_grid[] = {0.2, 0.1, 0.3, 0.05, 0.15, 0.25, 0.35, -0.1, -0.2};
  const double theta2_grid[] = {0.0, 2.0};
  for (double t2 : theta2_grid) {
    for (double t1 : theta1_grid) {
      Tensor init({2}, {t1, t2});
      ToyTrace newton = newton_toy(*toy, init, 400);
      if (!(newton.grad_norm < 1e-8 && newton.loss > 1.0)) continue;
      ToyTrace clipped = clipped_toy(*toy, init, 200, 1e-6, 1.0, 1.0);
      if (!clipped.steps_to_loss.has_value()) continue;
      ToyTrace clipped_coarse = clipped_toy(*toy, init, 200, 1e-3, 1.0, 1.0);
      if (!clipped_coarse.steps_to_loss.has_value()) continue;
      std::optional<int64_t> best_sign;
      for (int i = 0; i < 20; ++i) {
        double eta = std::pow(10.0, -4.0 + 4.0 * i / 19.0);
        auto steps = signgd_toy_steps(*toy, init, eta, 1e-3, 20000);
        if (steps.has_value() && (!best_sign.has_value() || *steps < *best_sign))
          best_sign = steps;
      }
      if (!best_sign.has_value()) continue;
      if (*best_sign > *clipped_coarse.steps_to_loss) return init;
    }
  }
  throw Error("scan", "no toy2d initialization satisfied the scan predicate");
}

CheckResult check_toy_landscape() {
  Stopwatch watch;
  Failures fail;
  auto toy = make_toy2d();

  Tensor init = scan_toy2d_init();
  fail.expect(init.same_shape(Toy2D::default_init()) &&
                  init[0] == Toy2D::default_init()[0] && init[1] == Toy2D::default_init()[1],
              "scan found (", init[0], ",", init[1], ") but the documented init is (",
              Toy2D::default_init()[0], ",", Toy2D::default_init()[1], ")");

  ToyTrace newton = newton_toy(*toy, init, 400);
  fail.expect(newton.grad_norm < 1e-8, "Newton gradient norm ", newton.grad_norm);
  fail.expect(newton.loss > 1.0, "Newton settled at loss ", newton.loss,
              " (should be a non-minimum stationary point)");

  ToyTrace clipped = clipped_toy(*toy, init, 200, 1e-6, 1.0, 1.0);
  fail.expect(clipped.steps_to_loss.has_value(), "clipped update missed loss 1e-6 in 200 steps");

  ToyTrace clipped_coarse = clipped_toy(*toy, init, 200, 1e-3, 1.0, 1.0);
  std::optional<int64_t> best_sign;
  double best_eta = 0.0;
  for (int i = 0; i < 20; ++i) {
    double eta = std::pow(10.0, -4.0 + 4.0 * i / 19.0);
    auto steps = signgd_toy_steps(*toy, init, eta, 1e-3, 20000);
    if (steps.has_value() && (!best_sign.has_value() || *steps < *best_sign)) {
      best_sign = steps;
      best_eta = eta;
    }
  }
  fail.expect(best_sign.has_value(), "SignGD never reached loss 1e-3 on the 20-point grid");
  if (best_sign.has_value() && clipped_coarse.steps_to_loss.has_value()) {
    fail.expect(*best_sign > *clipped_coarse.steps_to_loss, "SignGD best (", *best_sign,
                " steps at eta ", best_eta, ") is not strictly slower than clipped (",
                *clipped_coarse.steps_to_loss, " steps)");
  }

  std::ostringstream m;
  m << "init (" << init[0] << "," << init[1] << "); Newton stalls at loss " << newton.loss
    << "; clipped hits 1e-6 in "
    << (clipped.steps_to_loss ? std::to_string(*clipped.steps_to_loss) : "-") << " steps"
    << "; SignGD best " << (best_sign ? std::to_string(*best_sign) : "-")
    << " vs clipped " << (clipped_coarse.steps_to_loss
                              ? std::to_string(*clipped_coarse.steps_to_loss)
                              : "-")
    << " steps to 1e-3";
  return finish("C4", "toy landscape: Newton saddle vs clipped update vs SignGD", fail, watch,
                10.0, m.str());
}

// ---------------------------------------------------------------------------
// C5: Theorem 1 regime on diagonal quadratics

CheckResult check_theorem1_validation() {
  Stopwatch watch;
  Failures fail;

  const double kappas[] = {1.0, 1e2, 1e4, 1e6};
  const int64_t d = 10;
  const double mu = 1.0, radius = 1.0, eps_target = 1e-6;
  int64_t bound = theorem1_bound(1.0, mu, radius, d, eps_target);

  int64_t min_steps = 0, max_steps = 0;
  double worst_residual = 0.0;
  std::ostringstream per_kappa;
  for (double kappa : kappas) {
    auto quad = make_quadratic(d, kappa, false, 42);
    QuadraticObjective objective(quad->matrix());
    TheorySetting setting = TheorySetting::bound_regime(objective, mu, radius);
    double phase_boundary = mu * setting.rho * setting.rho / 8.0;

    Tensor theta = quad->init_params(1234);
    fail.expect(std::fabs(objective.loss(theta) - 1.0) < 1e-9, "kappa ", kappa,
                ": initial gap ", objective.loss(theta), " != 1");

    int64_t steps = 0;
    bool reached = false;
    for (int64_t t = 1; t <= bound + 8; ++t) {
      double loss = objective.loss(theta);
      if (loss <= eps_target) {
        reached = true;
        break;
      }
      double residual = verify_descent_lemma(theta, setting);
      worst_residual = std::max(worst_residual, residual);
      fail.expect(residual <= 1e-10, "kappa ", kappa, " step ", t, ": descent residual ",
                  residual);

      Tensor next = clipped_newton_step(theta, setting);
      if (loss <= phase_boundary) {
        // Second phase: clipping must be inactive and the gap must contract
        // at least geometrically.
        EigenFactors eig = eigendecompose_spd(objective.hessian(theta));
        Tensor g = objective.gradient(theta);
        double max_ratio = 0.0;
        for (int64_t i = 0; i < d; ++i) {
          double c = 0.0;
          for (int64_t j = 0; j < d; ++j) c += eig.vectors.at(i, j) * g[j];
          max_ratio = std::max(max_ratio, std::fabs(c) / eig.values[i]);
        }
        fail.expect(max_ratio <= setting.rho, "kappa ", kappa, " step ", t,
                    ": clipping active in phase 2 (ratio ", max_ratio, ")");
        double contraction = (objective.loss(next) - objective.min_loss()) /
                             (loss - objective.min_loss());
        fail.expect(contraction <= 1.0 - setting.eta * (1.0 - setting.eta) + 1e-9, "kappa ",
                    kappa, " step ", t, ": phase-2 contraction ", contraction);
      }
      theta = std::move(next);
      steps = t;
    }
    fail.expect(reached, "kappa ", kappa, ": did not reach eps within bound ", bound);
    if (min_steps == 0 || steps < min_steps) min_steps = steps;
    max_steps = std::max(max_steps, steps);
    fail.expect(steps <= bound, "kappa ", kappa, ": took ", steps, " > bound ", bound);
    per_kappa << " k=" << kappa << ":" << steps;
  }
  fail.expect(static_cast<double>(max_steps) < 2.0 * static_cast<double>(min_steps),
              "step spread ", min_steps, "..", max_steps, " is not within 2x");

  std::ostringstream m;
  m << "steps" << per_kappa.str() << " (bound " << bound << "), worst descent residual "
    << worst_residual;
  return finish("C5", "Theorem-1 regime: condition-number-free convergence", fail, watch, 30.0,
                m.str());
}

// ---------------------------------------------------------------------------
// C6: SignGD lower bound on the 2-d quadratic

namespace {

/// First step T with loss <= eps at both T-1 and T, via the library SignGD
/// update; nullopt when the cap is hit first.
std::optional<int64_t> signgd_quadratic_steps(const QuadraticProblem& quad, Tensor theta,
                                              double eta, double eps, int64_t cap) {
  BaselineState state = BaselineState::init(theta.size());
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::signgd);
  double prev = quad.loss_value(theta);
  for (int64_t t = 1; t <= cap; ++t) {
    Tensor g = quad.gradient_value(theta);
    theta = baseline_step(BaselineKind::signgd, theta, g, state, hyper, eta);
    double loss = quad.loss_value(theta);
    if (prev <= eps && loss <= eps) return t;
    prev = loss;
  }
  return std::nullopt;
}

}  // namespace

CheckResult check_signgd_lower_bound() {
  Stopwatch watch;
  Failures fail;

  const double mu = 1.0, delta = 1.0, eps = 0.01;
  std::ostringstream m;
  for (double beta : {1e2, 1e4}) {
    auto quad = make_quadratic(2, beta / mu, false, 0);  // diag(mu, beta)
    double bound = signgd_lower_bound(mu, beta, delta, eps);
    Tensor sharp_init({2}, {0.0, std::sqrt(2.0 * delta / beta)});
    Tensor flat_init({2}, {std::sqrt(2.0 * delta / mu), 0.0});

    std::optional<int64_t> best;
    double best_eta = 0.0;
    for (int i = 0; i < 20; ++i) {
      double eta = std::pow(10.0, -5.0 + 5.0 * i / 19.0);
      auto a = signgd_quadratic_steps(*quad, flat_init, eta, eps, 1000000);
      auto b = signgd_quadratic_steps(*quad, sharp_init, eta, eps, 1000000);
      if (!a.has_value() || !b.has_value()) continue;  // this eta never settles
      int64_t worst_of_inits = std::max(*a, *b);
      if (!best.has_value() || worst_of_inits < *best) {
        best = worst_of_inits;
        best_eta = eta;
      }
    }
    fail.expect(best.has_value(), "beta ", beta, ": no grid eta reached eps");
    if (best.has_value()) {
      fail.expect(static_cast<double>(*best) >= bound, "beta ", beta, ": measured ", *best,
                  " steps (eta ", best_eta, ") undercuts the lower bound ", bound);
      m << " beta=" << beta << ": measured " << *best << " >= bound " << bound << ";";
    }
  }
  return finish("C6", "SignGD condition-number lower bound", fail, watch, 60.0, m.str());
}

// ---------------------------------------------------------------------------
// C7: Sophia update contracts (property sweep)

CheckResult check_sophia_update_contracts() {
  Stopwatch watch;
  Failures fail;
  const int64_t n = 64;
  RngStream rng(7, 0, RngStream::kGeneric);

  // Re-parameterization identity.
  for (double gamma : {0.005, 0.05, 0.5}) {
    const double eps = 1e-12, eta = 0.37;
    Tensor m = gaussian(n, rng, 3.0);
    Tensor h = gaussian(n, rng, 1.0);
    for (int64_t i = 0; i < n; ++i) {
      double lhs = eta * std::max(std::min(m[i] / std::max(gamma * h[i], eps), 1.0), -1.0);
      double rhs = (eta / gamma) *
                   std::max(std::min(m[i] / std::max(h[i], eps / gamma), gamma), -gamma);
      fail.expect(std::fabs(lhs - rhs) <= 1e-15, "reparam gap ", std::fabs(lhs - rhs),
                  " at gamma ", gamma);
    }
  }

  // Negative-h fallback: exactly eta * sign(m).
  {
    SophiaConfig cfg = SophiaConfig::defaults_for(EstimatorKind::gnb);
    cfg.weight_decay = 0.0;
    const double eta = 0.25;
    Tensor m = Tensor::zeros({n});
    Tensor h = Tensor::zeros({n});
    for (int64_t i = 0; i < n; ++i) {
      m[i] = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * (1e-9 + std::fabs(rng.normal()));
      h[i] = -std::fabs(rng.normal()) - 1e-3;
    }
    SophiaState state{m, h, 2};  // t=2: off the Hessian schedule, h carries
    Tensor theta = gaussian(n, rng);
    auto result = sophia_step(theta, m, std::nullopt, state, cfg, eta);
    for (int64_t i = 0; i < n; ++i) {
      double expected = theta[i] - eta * (m[i] > 0.0 ? 1.0 : -1.0);
      fail.expect(result.theta[i] == expected, "negative-h coordinate ", i, ": got ",
                  result.theta[i], " expected ", expected);
    }
  }

  // Hessian EMA changes only at steps == 1 (mod k).
  {
    SophiaConfig cfg = SophiaConfig::defaults_for(EstimatorKind::hutchinson);
    cfg.hessian_interval = 3;
    SophiaState state = SophiaState::init(n);
    Tensor theta = gaussian(n, rng);
    for (int64_t t = 1; t <= 12; ++t) {
      Tensor g = gaussian(n, rng, 0.3);
      std::optional<HessianEstimate> est;
      bool due = hessian_step_due(t, cfg.hessian_interval);
      if (due)
        est = HessianEstimate{gaussian(n, rng), EstimatorKind::hutchinson, 1};
      Tensor h_before = state.h;
      auto result = sophia_step(theta, g, est, state, cfg, 0.01);
      theta = result.theta;
      bool changed = false;
      for (int64_t i = 0; i < n; ++i) changed = changed || (state.h[i] != h_before[i]);
      fail.expect(changed == due, "step ", t, ": h ", changed ? "changed" : "frozen",
                  " but schedule says ", due ? "update" : "carry");
    }
    // Off-schedule estimate and missing estimate both reject.
    bool threw = false;
    try {
      Tensor g = gaussian(n, rng, 0.3);
      auto est = std::make_optional(
          HessianEstimate{gaussian(n, rng), EstimatorKind::hutchinson, 1});
      sophia_step(theta, g, est, state, cfg, 0.01);  // t = 13, not a Hessian step
    } catch (const SchedulingError&) {
      threw = true;
    }
    fail.expect(threw, "off-schedule estimate was accepted");
    threw = false;
    SophiaState fresh = SophiaState::init(n);
    try {
      sophia_step(theta, gaussian(n, rng), std::nullopt, fresh, cfg, 0.01);  // t = 1
    } catch (const SchedulingError&) {
      threw = true;
    }
    fail.expect(threw, "missing estimate on a Hessian step was accepted");
  }

  // Worst-case step bound and determinism.
  for (double wd : {0.0, 0.1, 0.3}) {
    SophiaConfig cfg = SophiaConfig::defaults_for(EstimatorKind::hutchinson);
    cfg.weight_decay = wd;
    const double eta = 0.2;
    SophiaState state{gaussian(n, rng), gaussian(n, rng), 2};
    SophiaState state_copy = state;
    Tensor theta = gaussian(n, rng, 2.0);
    Tensor g = gaussian(n, rng);
    auto result = sophia_step(theta, g, std::nullopt, state, cfg, eta);
    double bound = eta * (1.0 + wd * norm_inf(theta)) * (1.0 + 1e-12);
    double step_inf = 0.0;
    for (int64_t i = 0; i < n; ++i)
      step_inf = std::max(step_inf, std::fabs(result.theta[i] - theta[i]));
    fail.expect(step_inf <= bound, "step inf-norm ", step_inf, " exceeds ", bound,
                " at weight decay ", wd);

    auto replay = sophia_step(theta, g, std::nullopt, state_copy, cfg, eta);
    bool identical = replay.unclipped_fraction == result.unclipped_fraction;
    for (int64_t i = 0; i < n; ++i)
      identical = identical && replay.theta[i] == result.theta[i] &&
                  state_copy.m[i] == state.m[i] && state_copy.h[i] == state.h[i];
    fail.expect(identical, "identical inputs produced different step outputs");
  }

  return finish("C7", "Sophia update contracts (reparam, sign fallback, schedule, step bound)",
                fail, watch, 5.0, "property sweep over 64-dim random states");
}

// ---------------------------------------------------------------------------
// C8: desk-scale speedup surrogate on the tiny LM

namespace {

ExperimentConfig tiny_lm_base() {
  ExperimentConfig cfg;
  cfg.problem.kind = "tiny_lm";
  cfg.problem.vocab = 32;
  cfg.problem.context = 8;
  cfg.problem.embed = 32;
  cfg.problem.seed = 1;
  cfg.steps = 10000;
  cfg.warmup = 200;
  cfg.batch = 64;
  cfg.hess_batch = 32;
  cfg.seed = 0;
  cfg.eval_interval = 50;
  return cfg;
}

}  // namespace

CheckResult check_speedup_surrogate() {
  Stopwatch watch;
  Failures fail;

  ExperimentConfig slow = tiny_lm_base();
  slow.optimizer = "adamw";
  slow.baseline = BaselineHyper::defaults_for(BaselineKind::adamw);
  slow.lr_grid = {3e-2, 1e-2, 3e-3, 1e-3, 3e-4};

  ExperimentConfig fast = tiny_lm_base();
  fast.optimizer = "sophia_g";
  fast.sophia = SophiaConfig::defaults_for(EstimatorKind::gnb);
  fast.steps = 7000;  // 0.7 T budget with its own cosine schedule
  fast.warmup = 140;
  fast.peak_lr = 8e-3;

  double gamma = tune_gamma(fast, 200);
  fast.sophia.gamma = gamma;

  std::ostringstream m;
  try {
    CompareOutcome out = compare_runs(slow, fast, std::nullopt);
    int64_t budget = static_cast<int64_t>(0.7 * static_cast<double>(slow.steps));
    fail.expect(out.steps_fast <= budget, "Sophia-G needed ", out.steps_fast,
                " steps (> 0.7 T = ", budget, ") to reach the AdamW grid-best loss ",
                out.target);
    m << "AdamW grid-best lr " << out.best_slow_peak_lr << " final eval " << out.target
      << " (reached at step " << out.steps_slow << "); Sophia-G (gamma " << gamma
      << ") reached it at step " << out.steps_fast << "; speedup ratio " << out.ratio;
  } catch (const IncomparableError& e) {
    fail.expect(false, "comparison failed: ", e.what());
  }
  return finish("C8", "desk-scale speedup surrogate (Sophia-G vs grid-best AdamW)", fail, watch,
                600.0, m.str());
}

// ---------------------------------------------------------------------------
// C9: gamma tuning lands in the 10%-50% unclipped band

CheckResult check_gamma_tuning() {
  Stopwatch watch;
  Failures fail;

  ExperimentConfig cfg = tiny_lm_base();
  cfg.optimizer = "sophia_g";
  cfg.sophia = SophiaConfig::defaults_for(EstimatorKind::gnb);
  cfg.peak_lr = 8e-3;
  cfg.warmup = 50;

  std::ostringstream m;
  try {
    double gamma = tune_gamma(cfg, 100);
    // Re-measure the band at the returned gamma.
    ExperimentConfig probe = cfg;
    probe.sophia.gamma = gamma;
    probe.steps = 100;
    probe.eval_interval = 100;
    RunRecord record = run_experiment(probe);
    double mean = 0.0;
    for (const RunRow& row : record.rows) mean += row.unclipped_frac;
    mean /= static_cast<double>(record.rows.size());
    fail.expect(mean >= 0.1 && mean <= 0.5, "returned gamma ", gamma,
                " has unclipped fraction ", mean, " outside [0.1, 0.5]");
    m << "gamma " << gamma << ", mean unclipped fraction " << mean;
  } catch (const TuningFailure& e) {
    fail.expect(false, e.what());
  }
  return finish("C9", "gamma tuning terminates inside the unclipped band", fail, watch, 120.0,
                m.str());
}

// ---------------------------------------------------------------------------
// C10: byte-identical CSV for identical configs

CheckResult check_determinism() {
  Stopwatch watch;
  Failures fail;

  ExperimentConfig lm = tiny_lm_base();
  lm.optimizer = "sophia_g";
  lm.sophia = SophiaConfig::defaults_for(EstimatorKind::gnb);
  lm.steps = 150;
  lm.warmup = 20;
  lm.batch = 32;
  lm.hess_batch = 16;
  lm.eval_interval = 25;
  lm.peak_lr = 5e-3;

  ExperimentConfig cls;
  cls.problem.kind = "classifier";
  cls.problem.classes = 3;
  cls.problem.inputs = 5;
  cls.problem.hidden = 8;
  cls.problem.examples = 128;
  cls.problem.seed = 9;
  cls.optimizer = "adamw";
  cls.baseline = BaselineHyper::defaults_for(BaselineKind::adamw);
  cls.steps = 200;
  cls.warmup = 10;
  cls.batch = 16;
  cls.eval_interval = 20;
  cls.peak_lr = 3e-3;
  cls.seed = 4;

  for (const ExperimentConfig& cfg : {lm, cls}) {
    std::string first = csv_to_string(run_experiment(cfg));
    std::string second = csv_to_string(run_experiment(cfg));
    fail.expect(first == second, cfg.optimizer, " run on ", cfg.problem.kind,
                " is not byte-deterministic");
    fail.expect(static_cast<int64_t>(std::count(first.begin(), first.end(), '\n')) ==
                    cfg.steps + 1,
                cfg.optimizer, ": expected ", cfg.steps + 1, " CSV lines");
  }
  return finish("C10", "byte-identical CSV re-runs", fail, watch, 60.0,
                "two configs, two runs each, byte-compared");
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> run_all_checks() {
  return {check_autodiff_correctness(), check_hutchinson_unbiasedness(), check_gnb_exactness(),
          check_toy_landscape(),        check_theorem1_validation(),     check_signgd_lower_bound(),
          check_sophia_update_contracts(), check_speedup_surrogate(),    check_gamma_tuning(),
          check_determinism()};
}

std::vector<std::string> suite_names() { return {"autodiff", "estimators", "theory", "toy2d"}; }

std::vector<CheckResult> run_suite(const std::string& suite) {
  if (suite == "autodiff") return {check_autodiff_correctness()};
  if (suite == "estimators") return {check_hutchinson_unbiasedness(), check_gnb_exactness()};
  if (suite == "theory") return {check_theorem1_validation(), check_signgd_lower_bound()};
  if (suite == "toy2d") return {check_toy_landscape()};
  throw ParameterError("unknown suite '" + suite + "' (autodiff|estimators|theory|toy2d)");
}

}  // namespace sophia
