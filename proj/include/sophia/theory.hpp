#pragma once

#include <cstdint>

#include "sophia/tensor.hpp"

namespace sophia {

/// Convex objective with exact loss, gradient, and dense Hessian access.
/// The analysis machinery below is an analysis device, not a practical
/// optimizer; it is restricted to d <= 200 (dense eigensolve per step).
class SecondOrderFunction {
 public:
  virtual ~SecondOrderFunction() = default;
  virtual int64_t dim() const = 0;
  virtual double loss(const Tensor& theta) const = 0;
  virtual Tensor gradient(const Tensor& theta) const = 0;
  virtual Tensor hessian(const Tensor& theta) const = 0;  // dense (d, d)
  virtual double min_loss() const = 0;
};

/// theta' A theta / 2 for symmetric positive-definite A; minimum 0 at 0.
class QuadraticObjective : public SecondOrderFunction {
 public:
  explicit QuadraticObjective(Tensor a);
  int64_t dim() const override { return a_.rows(); }
  double loss(const Tensor& theta) const override;
  Tensor gradient(const Tensor& theta) const override;
  Tensor hessian(const Tensor&) const override { return a_; }
  double min_loss() const override { return 0.0; }

 private:
  Tensor a_;
};

/// Experimental regime for the convex analysis: mu is the smallest Hessian
/// eigenvalue at the minimizer, R the Hessian-continuity radius (a free knob
/// on quadratics, whose Hessian is constant), rho the clip threshold and eta
/// the step size.
struct TheorySetting {
  const SecondOrderFunction* objective = nullptr;
  double mu = 1.0;
  double radius = 1.0;  // R
  double rho = 1.0;
  double eta = 0.5;

  /// The regime of the runtime bound: eta = 1/2, rho = R / (2 sqrt(d)).
  static TheorySetting bound_regime(const SecondOrderFunction& objective, double mu, double R);
};

/// Eigendecomposition H = V' diag(values) V with eigenvector ROWS v_i.
struct EigenFactors {
  Tensor vectors;  // (d, d), row i is v_i
  Tensor values;   // (d), ascending
};

/// Dense symmetric eigendecomposition. Ties between eigenvalues resolve by
/// the solver's ordering; downstream updates are invariant to the basis
/// choice within an eigenspace.
EigenFactors eigendecompose_spd(const Tensor& hessian);

/// One step of the eigenspace-clipped Newton update
///   theta' = theta - eta V' clip(V H^{-1} grad, rho)
/// with a fresh eigendecomposition each step. Requires a positive-definite
/// Hessian (the analysis is convex-only).
Tensor clipped_newton_step(const Tensor& theta, const TheorySetting& setting);

/// Two-phase runtime bound with the explicit proof constants: a burn-in of
/// ceil(8 gap / (eta mu rho^2)) steps down to loss mu rho^2 / 8, then
/// geometric decay at rate 1 - eta (1 - eta), i.e.
/// ceil(ln((mu rho^2 / 8) / eps) / -ln(1 - eta(1-eta))) further steps (0 when
/// eps is already above the phase boundary). Fixed to eta = 1/2 and
/// rho = R / (2 sqrt(d)). The headline statement's ln(mu R^2 / (32 d eps)) is
/// the same quantity up to the constant hidden in its "<~": with
/// rho = R/(2 sqrt(d)), mu rho^2 / 8 = mu R^2 / (32 d).
int64_t theorem1_bound(double l0_gap, double mu, double R, int64_t d, double eps_target);

/// Lower bound on SignGD steps for the two-dimensional quadratic
/// L(t) = mu t1^2 / 2 + beta t2^2 / 2: any (eta, T) that brings every start
/// with loss <= delta down to eps at steps T-1 and T needs
/// T >= (sqrt(delta/eps) - sqrt(2)) sqrt(beta/mu) / 2 (floored at 0).
double signgd_lower_bound(double mu, double beta, double delta, double eps);

/// Residual of the descent inequality
///   L(theta+) - L(theta) <= -(eta - eta^2) sum_i min(rho |v_i'g|, |v_i'g|^2 / sigma_i)
/// at one step from theta; <= ~1e-10 on any convex quadratic. Requires the
/// hypothesis eta rho <= R / sqrt(d).
double verify_descent_lemma(const Tensor& theta, const TheorySetting& setting);

}  // namespace sophia
