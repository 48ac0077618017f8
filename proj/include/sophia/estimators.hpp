#pragma once

#include <cstdint>
#include <span>

#include "sophia/autodiff.hpp"
#include "sophia/problems.hpp"
#include "sophia/rng.hpp"
#include "sophia/tensor.hpp"

namespace sophia {

enum class EstimatorKind { hutchinson, gnb, gnb_squared, empirical_fisher };

const char* estimator_name(EstimatorKind kind);

/// A stochastic estimate of diag(H). Hutchinson values may carry any sign;
/// GNB values are elementwise >= 0 (a vector squared against itself).
struct HessianEstimate {
  Tensor values;
  EstimatorKind kind;
  int64_t sample_meta = 0;  // probe count, or resampled-label batch size B
};

/// Hutchinson's unbiased diagonal estimator: mean over probes of
/// u (*) H u with u ~ N(0, I).
HessianEstimate hutchinson_estimate(const TapeFn& f, const Tensor& theta, RngStream& rng,
                                    int64_t probes);

/// Gauss-Newton-Bartlett estimator: sample labels from the model's own
/// softmax, take the mini-batch gradient g on those labels, return B * g (*) g.
/// Requires the problem to expose a logits view.
HessianEstimate gnb_estimate(const Problem& model, const Tensor& theta, const Batch& batch,
                             RngStream& rng);

/// GNB output for one explicit label assignment; this is the code path
/// gnb_estimate samples into and the enumeration oracle sums over.
Tensor gnb_output_for_labels(const Problem& model, const Tensor& theta, const Batch& batch,
                             const std::vector<int32_t>& sampled_labels);

/// Exact expectation of gnb_estimate over label sampling, by enumerating all
/// V^B joint label assignments (guarded; test-scale only).
Tensor gnb_enumerated_expectation(const Problem& model, const Tensor& theta, const Batch& batch);

/// Regression-style model exposing one real-valued output per example.
class ScalarModelView {
 public:
  virtual ~ScalarModelView() = default;
  virtual Tape::NodeId build_output(Tape& tape, Tape::NodeId theta, int32_t item) const = 0;
};

/// Squared-loss GNB variant: with l(f, y) = (f - y)^2 / 2 the logit-space
/// curvature matrix is the identity, so the estimator is the diagonal of
/// (1/B) sum_b J_b J_b'.
HessianEstimate gnb_squared_loss_estimate(const ScalarModelView& model, const Tensor& theta,
                                          std::span<const int32_t> batch);

/// Per-step empirical-Fisher term: g (*) g on the true-label gradient.
Tensor empirical_fisher(const Tensor& g);

/// Oracle: exact diag(H) from d basis-vector HVPs. Guarded at d <= 5000.
Tensor exact_hessian_diag(const TapeFn& f, const Tensor& theta);

/// Oracle: exact diagonal of the mini-batch Gauss-Newton matrix by
/// enumerating all V labels per example, weighted by the model's softmax.
/// Guarded at V * B <= 10^6.
Tensor exact_gn_diag(const Problem& model, const Tensor& theta, const Batch& batch);

}  // namespace sophia
