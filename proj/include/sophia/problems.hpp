#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sophia/autodiff.hpp"
#include "sophia/rng.hpp"
#include "sophia/tape.hpp"
#include "sophia/tensor.hpp"

namespace sophia {

/// A mini-batch reference. Items are problem-specific handles: dataset
/// indices for the classifier, window offsets into the token stream for the
/// tiny LM, unused for the analytic landscapes.
struct Batch {
  std::vector<int32_t> items;
};

/// View exposed by problems whose loss is softmax cross-entropy over logits;
/// this is what the Gauss-Newton-Bartlett estimator needs.
class LogitsView {
 public:
  virtual ~LogitsView() = default;
  virtual int64_t num_classes() const = 0;
  /// Records the (B, V) logits for the batch and returns the node.
  virtual Tape::NodeId build_logits(Tape& tape, Tape::NodeId theta,
                                    const Batch& batch) const = 0;
  /// True labels for the batch (the loss targets, not sampled ones).
  virtual std::vector<int32_t> labels(const Batch& batch) const = 0;
};

/// A loss landscape: parameter dimension, batched loss evaluation through the
/// autodiff tape, and batch sampling with caller-owned generators. Problems
/// are immutable after construction.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual int64_t dim() const = 0;
  virtual Tensor init_params(uint64_t seed) const = 0;
  virtual Batch sample_batch(RngStream& rng, int64_t batch_size) const = 0;
  /// Fixed held-out batch for eval-loss telemetry.
  virtual Batch eval_batch() const = 0;
  virtual Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch& batch) const = 0;
  virtual const LogitsView* logits_view() const { return nullptr; }
};

/// Adapter: the problem's loss on a fixed batch as a tape-recordable scalar
/// function.
TapeFn loss_fn(const Problem& problem, Batch batch);

/// The two-dimensional motivating landscape
///   L(t1, t2) = 8 (t1 - 1)^2 (1.3 t1^2 + 2 t1 + 1) + (t2 - 4)^2 / 2,
/// sharp in the first coordinate, flat in the second; global minimum (1, 4).
class Toy2D : public Problem {
 public:
  int64_t dim() const override { return 2; }
  Tensor init_params(uint64_t seed) const override;
  Batch sample_batch(RngStream&, int64_t) const override { return {}; }
  Batch eval_batch() const override { return {}; }
  Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch&) const override;

  /// Initialization from which vanilla Newton demonstrably converges to a
  /// non-minimum stationary point while the clipped update reaches (1, 4);
  /// found by a grid scan (see the validation suite) and pinned here.
  static Tensor default_init();
};

/// Quadratic L(theta) = theta' A theta / 2 with lambda_min(A) = 1 and
/// lambda_max / lambda_min = kappa; eigenvalues are log-spaced in [1, kappa]
/// with both endpoints present. rotated=false keeps A diagonal (ascending).
class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(Tensor a, double kappa);

  int64_t dim() const override { return dim_; }
  Tensor init_params(uint64_t seed) const override;  // seeded direction, loss gap 1
  Batch sample_batch(RngStream&, int64_t) const override { return {}; }
  Batch eval_batch() const override { return {}; }
  Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch&) const override;

  const Tensor& matrix() const { return a_; }
  double kappa() const { return kappa_; }
  double loss_value(const Tensor& theta) const;
  Tensor gradient_value(const Tensor& theta) const;

 private:
  Tensor a_;
  int64_t dim_;
  double kappa_;
};

/// Two-layer tanh classifier on fixed synthetic Gaussian-mixture data.
class ClassifierProblem : public Problem, public LogitsView {
 public:
  ClassifierProblem(int64_t classes, int64_t d_in, int64_t hidden, int64_t n_examples,
                    uint64_t seed);

  int64_t dim() const override;
  Tensor init_params(uint64_t seed) const override;
  Batch sample_batch(RngStream& rng, int64_t batch_size) const override;
  Batch eval_batch() const override;
  Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch& batch) const override;
  const LogitsView* logits_view() const override { return this; }

  int64_t num_classes() const override { return classes_; }
  Tape::NodeId build_logits(Tape& tape, Tape::NodeId theta, const Batch& batch) const override;
  std::vector<int32_t> labels(const Batch& batch) const override;

 private:
  int64_t classes_, d_in_, hidden_, n_train_, n_eval_;
  std::vector<double> inputs_;   // (n_train + n_eval) x d_in, row-major
  std::vector<int32_t> labels_;
};

/// Tiny MLP next-token model over a seeded order-1 Markov token stream:
/// embedding lookup over the context window, one tanh hidden layer, softmax
/// cross-entropy on the next token. The source's entropy rate is computable
/// from the transition matrix and lower-bounds any achievable loss.
class TinyMLPLM : public Problem, public LogitsView {
 public:
  TinyMLPLM(int64_t vocab, int64_t context, int64_t embed, uint64_t seed);

  int64_t dim() const override;
  Tensor init_params(uint64_t seed) const override;
  Batch sample_batch(RngStream& rng, int64_t batch_size) const override;
  Batch eval_batch() const override;
  Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch& batch) const override;
  const LogitsView* logits_view() const override { return this; }

  int64_t num_classes() const override { return vocab_; }
  Tape::NodeId build_logits(Tape& tape, Tape::NodeId theta, const Batch& batch) const override;
  std::vector<int32_t> labels(const Batch& batch) const override;

  /// Entropy rate of the Markov source in nats per token.
  double source_entropy() const;
  const std::vector<int32_t>& token_stream() const { return stream_; }

 private:
  int64_t vocab_, context_, embed_;
  std::vector<double> transition_;  // V x V row-stochastic
  std::vector<int32_t> stream_;
  int64_t train_offsets_;
};

std::shared_ptr<Toy2D> make_toy2d();
std::shared_ptr<QuadraticProblem> make_quadratic(int64_t dim, double kappa, bool rotated,
                                                 uint64_t seed);
std::shared_ptr<ClassifierProblem> make_classifier(int64_t classes, int64_t d_in, int64_t hidden,
                                                   int64_t n_examples, uint64_t seed);
std::shared_ptr<TinyMLPLM> make_tiny_lm(int64_t vocab, int64_t context, int64_t embed,
                                        uint64_t seed);

}  // namespace sophia
