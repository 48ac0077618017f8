#include "sophia/problems.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

// Held-out sizes shared by the data-backed problems.
constexpr int64_t kEvalExamples = 256;
// Large enough that desk-scale runs stay far from memorizing the window pool.
constexpr int64_t kLmTrainOffsets = 131072;
constexpr int64_t kLmEvalStride = 8;
constexpr int64_t kLmParamBudget = 100000;

Tensor gaussian_tensor(std::vector<int64_t> shape, RngStream& rng, double scl) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = scl * rng.normal();
  return t;
}

}  // namespace

TapeFn loss_fn(const Problem& problem, Batch batch) {
  return [&problem, batch = std::move(batch)](Tape& tape, Tape::NodeId theta) {
    return problem.build_loss(tape, theta, batch);
  };
}

// ---------------------------------------------------------------------------
// Toy2D

Tensor Toy2D::init_params(uint64_t) const { return default_init(); }

Tensor Toy2D::default_init() { return Tensor({2}, {0.2, 0.0}); }

Tape::NodeId Toy2D::build_loss(Tape& tape, Tape::NodeId theta, const Batch&) const {
  Tape::NodeId t1 = tape.sum(tape.mul(theta, tape.constant(Tensor({2}, {1.0, 0.0}))));
  Tape::NodeId t2 = tape.sum(tape.mul(theta, tape.constant(Tensor({2}, {0.0, 1.0}))));
  Tape::NodeId a = tape.sub(t1, tape.constant_scalar(1.0));
  Tape::NodeId poly = tape.add(tape.add(tape.scale(tape.mul(t1, t1), 1.3), tape.scale(t1, 2.0)),
                               tape.constant_scalar(1.0));
  Tape::NodeId sharp = tape.scale(tape.mul(tape.mul(a, a), poly), 8.0);
  Tape::NodeId b = tape.sub(t2, tape.constant_scalar(4.0));
  Tape::NodeId flat = tape.scale(tape.mul(b, b), 0.5);
  return tape.add(sharp, flat);
}

std::shared_ptr<Toy2D> make_toy2d() { return std::make_shared<Toy2D>(); }

// ---------------------------------------------------------------------------
// QuadraticProblem

QuadraticProblem::QuadraticProblem(Tensor a, double kappa)
    : a_(std::move(a)), dim_(a_.rows()), kappa_(kappa) {}

Tensor QuadraticProblem::init_params(uint64_t seed) const {
  RngStream rng(seed, 0, RngStream::kInit);
  Tensor z = gaussian_tensor({dim_}, rng, 1.0);
  double l = loss_value(z);
  if (l <= 0.0) {
    z = Tensor::full({dim_}, 1.0);
    l = loss_value(z);
  }
  double c = std::sqrt(1.0 / l);
  for (int64_t i = 0; i < dim_; ++i) z[i] *= c;
  return z;  // loss gap exactly... to rounding: 1
}

Tape::NodeId QuadraticProblem::build_loss(Tape& tape, Tape::NodeId theta, const Batch&) const {
  Tape::NodeId col = tape.reshape(theta, {dim_, 1});
  Tape::NodeId av = tape.matmul(tape.constant(a_), col);
  return tape.scale(tape.sum(tape.mul(col, av)), 0.5);
}

double QuadraticProblem::loss_value(const Tensor& theta) const {
  return 0.5 * dot(theta, gradient_value(theta));
}

Tensor QuadraticProblem::gradient_value(const Tensor& theta) const {
  Tensor g = Tensor::zeros({dim_});
  for (int64_t i = 0; i < dim_; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < dim_; ++j) s += a_.at(i, j) * theta[j];
    g[i] = s;
  }
  return g;
}

std::shared_ptr<QuadraticProblem> make_quadratic(int64_t dim, double kappa, bool rotated,
                                                 uint64_t seed) {
  if (kappa < 1.0) throw ParameterError("condition number must be >= 1");
  if (dim < 1) throw ParameterError("dimension must be >= 1");
  if (dim == 1 && kappa != 1.0)
    throw ParameterError("a 1-d quadratic cannot carry both eigenvalue endpoints");
  std::vector<double> eigs(static_cast<size_t>(dim), 1.0);
  for (int64_t i = 0; i < dim; ++i) {
    double frac = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
    eigs[static_cast<size_t>(i)] = std::pow(kappa, frac);  // log-spaced, endpoints exact
  }
  Tensor a = Tensor::zeros({dim, dim});
  if (!rotated) {
    for (int64_t i = 0; i < dim; ++i) a.at(i, i) = eigs[static_cast<size_t>(i)];
  } else {
    RngStream rng(seed, 0, RngStream::kData);
    Eigen::MatrixXd z(dim, dim);
    for (int64_t i = 0; i < dim; ++i)
      for (int64_t j = 0; j < dim; ++j) z(i, j) = rng.normal();
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(z).householderQ();
    Eigen::MatrixXd lam = Eigen::VectorXd::Map(eigs.data(), dim).asDiagonal();
    Eigen::MatrixXd m = q * lam * q.transpose();
    m = 0.5 * (m + m.transpose());  // exact symmetry
    for (int64_t i = 0; i < dim; ++i)
      for (int64_t j = 0; j < dim; ++j) a.at(i, j) = m(i, j);
  }
  return std::make_shared<QuadraticProblem>(std::move(a), kappa);
}

// ---------------------------------------------------------------------------
// ClassifierProblem

ClassifierProblem::ClassifierProblem(int64_t classes, int64_t d_in, int64_t hidden,
                                     int64_t n_examples, uint64_t seed)
    : classes_(classes), d_in_(d_in), hidden_(hidden), n_train_(n_examples),
      n_eval_(kEvalExamples) {
  if (classes < 2 || d_in < 1 || hidden < 1 || n_examples < 1)
    throw ParameterError("classifier sizes must be positive (classes >= 2)");
  RngStream rng(seed, 0, RngStream::kData);
  std::vector<double> means(static_cast<size_t>(classes * d_in));
  for (double& m : means) m = 2.5 * rng.normal();
  int64_t total = n_train_ + n_eval_;
  inputs_.resize(static_cast<size_t>(total * d_in));
  labels_.resize(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) {
    int32_t y = static_cast<int32_t>(i % classes);  // balanced labels
    labels_[static_cast<size_t>(i)] = y;
    for (int64_t j = 0; j < d_in; ++j)
      inputs_[static_cast<size_t>(i * d_in + j)] =
          means[static_cast<size_t>(y * d_in + j)] + 0.8 * rng.normal();
  }
}

int64_t ClassifierProblem::dim() const {
  return d_in_ * hidden_ + hidden_ + hidden_ * classes_ + classes_;
}

Tensor ClassifierProblem::init_params(uint64_t seed) const {
  RngStream rng(seed, 0, RngStream::kInit);
  Tensor theta = Tensor::zeros({dim()});
  int64_t p = 0;
  double s1 = 1.0 / std::sqrt(static_cast<double>(d_in_));
  for (int64_t i = 0; i < d_in_ * hidden_; ++i) theta[p++] = s1 * rng.normal();
  p += hidden_;  // b1 = 0
  double s2 = 0.1 / std::sqrt(static_cast<double>(hidden_));
  for (int64_t i = 0; i < hidden_ * classes_; ++i) theta[p++] = s2 * rng.normal();
  return theta;  // b2 = 0
}

Batch ClassifierProblem::sample_batch(RngStream& rng, int64_t batch_size) const {
  Batch b;
  b.items.reserve(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i)
    b.items.push_back(static_cast<int32_t>(rng.below(n_train_)));
  return b;
}

Batch ClassifierProblem::eval_batch() const {
  Batch b;
  b.items.reserve(static_cast<size_t>(n_eval_));
  for (int64_t i = 0; i < n_eval_; ++i) b.items.push_back(static_cast<int32_t>(n_train_ + i));
  return b;
}

Tape::NodeId ClassifierProblem::build_logits(Tape& tape, Tape::NodeId theta,
                                             const Batch& batch) const {
  int64_t bsz = static_cast<int64_t>(batch.items.size());
  if (bsz < 1) throw ParameterError("classifier batch must be nonempty");
  Tensor x = Tensor::zeros({bsz, d_in_});
  for (int64_t r = 0; r < bsz; ++r) {
    int32_t item = batch.items[static_cast<size_t>(r)];
    for (int64_t j = 0; j < d_in_; ++j)
      x.at(r, j) = inputs_[static_cast<size_t>(item * d_in_ + j)];
  }
  int64_t p = 0;
  Tape::NodeId w1 = tape.reshape(tape.slice(theta, p, d_in_ * hidden_), {d_in_, hidden_});
  p += d_in_ * hidden_;
  Tape::NodeId b1 = tape.slice(theta, p, hidden_);
  p += hidden_;
  Tape::NodeId w2 = tape.reshape(tape.slice(theta, p, hidden_ * classes_), {hidden_, classes_});
  p += hidden_ * classes_;
  Tape::NodeId b2 = tape.slice(theta, p, classes_);

  Tape::NodeId h = tape.tanh(tape.add(tape.matmul(tape.constant(std::move(x)), w1),
                                      tape.col_broadcast(b1, bsz)));
  return tape.add(tape.matmul(h, w2), tape.col_broadcast(b2, bsz));
}

std::vector<int32_t> ClassifierProblem::labels(const Batch& batch) const {
  std::vector<int32_t> out;
  out.reserve(batch.items.size());
  for (int32_t item : batch.items) out.push_back(labels_[static_cast<size_t>(item)]);
  return out;
}

Tape::NodeId ClassifierProblem::build_loss(Tape& tape, Tape::NodeId theta,
                                           const Batch& batch) const {
  Tape::NodeId logits = build_logits(tape, theta, batch);
  return tape.cross_entropy(logits, std::make_shared<const std::vector<int32_t>>(labels(batch)));
}

std::shared_ptr<ClassifierProblem> make_classifier(int64_t classes, int64_t d_in, int64_t hidden,
                                                   int64_t n_examples, uint64_t seed) {
  return std::make_shared<ClassifierProblem>(classes, d_in, hidden, n_examples, seed);
}

// ---------------------------------------------------------------------------
// TinyMLPLM

TinyMLPLM::TinyMLPLM(int64_t vocab, int64_t context, int64_t embed, uint64_t seed)
    : vocab_(vocab), context_(context), embed_(embed), train_offsets_(kLmTrainOffsets) {
  if (vocab < 2 || context < 1 || embed < 1) throw ParameterError("tiny LM sizes must be positive");
  if (dim() > kLmParamBudget)
    throw SizeError("tiny LM parameter count " + std::to_string(dim()) + " exceeds budget " +
                    std::to_string(kLmParamBudget));
  // Skewed row-stochastic transition matrix; the skew creates the uneven
  // token frequencies (and hence uneven curvature) the optimizer benchmarks
  // care about.
  RngStream rng(seed, 0, RngStream::kData);
  transition_.resize(static_cast<size_t>(vocab * vocab));
  for (int64_t i = 0; i < vocab; ++i) {
    double z = 0.0;
    for (int64_t j = 0; j < vocab; ++j) {
      double e = std::exp(2.0 * rng.normal());
      transition_[static_cast<size_t>(i * vocab + j)] = e;
      z += e;
    }
    for (int64_t j = 0; j < vocab; ++j) transition_[static_cast<size_t>(i * vocab + j)] /= z;
  }
  int64_t length = train_offsets_ + kLmEvalStride * kEvalExamples + context_ + 1;
  stream_.resize(static_cast<size_t>(length));
  stream_[0] = static_cast<int32_t>(rng.below(vocab));
  for (int64_t k = 1; k < length; ++k) {
    const double* row = transition_.data() + stream_[static_cast<size_t>(k - 1)] * vocab;
    stream_[static_cast<size_t>(k)] =
        rng.categorical(std::span<const double>(row, static_cast<size_t>(vocab)));
  }
}

int64_t TinyMLPLM::dim() const {
  return vocab_ * embed_ + (context_ * embed_) * embed_ + embed_ + embed_ * vocab_ + vocab_;
}

Tensor TinyMLPLM::init_params(uint64_t seed) const {
  RngStream rng(seed, 0, RngStream::kInit);
  Tensor theta = Tensor::zeros({dim()});
  int64_t p = 0;
  for (int64_t i = 0; i < vocab_ * embed_; ++i) theta[p++] = 0.5 * rng.normal();
  double s1 = 1.0 / std::sqrt(static_cast<double>(context_ * embed_));
  for (int64_t i = 0; i < context_ * embed_ * embed_; ++i) theta[p++] = s1 * rng.normal();
  p += embed_;  // b1 = 0
  double s2 = 0.1 / std::sqrt(static_cast<double>(embed_));
  for (int64_t i = 0; i < embed_ * vocab_; ++i) theta[p++] = s2 * rng.normal();
  return theta;  // b2 = 0
}

Batch TinyMLPLM::sample_batch(RngStream& rng, int64_t batch_size) const {
  Batch b;
  b.items.reserve(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i)
    b.items.push_back(static_cast<int32_t>(rng.below(train_offsets_)));
  return b;
}

Batch TinyMLPLM::eval_batch() const {
  Batch b;
  b.items.reserve(static_cast<size_t>(kEvalExamples));
  for (int64_t k = 0; k < kEvalExamples; ++k)
    b.items.push_back(static_cast<int32_t>(train_offsets_ + k * kLmEvalStride));
  return b;
}

Tape::NodeId TinyMLPLM::build_logits(Tape& tape, Tape::NodeId theta, const Batch& batch) const {
  int64_t bsz = static_cast<int64_t>(batch.items.size());
  if (bsz < 1) throw ParameterError("LM batch must be nonempty");
  auto idx = std::make_shared<std::vector<int32_t>>();
  idx->reserve(static_cast<size_t>(bsz * context_));
  for (int32_t offset : batch.items)
    for (int64_t k = 0; k < context_; ++k)
      idx->push_back(stream_[static_cast<size_t>(offset + k)]);

  int64_t p = 0;
  Tape::NodeId table = tape.reshape(tape.slice(theta, p, vocab_ * embed_), {vocab_, embed_});
  p += vocab_ * embed_;
  Tape::NodeId w1 =
      tape.reshape(tape.slice(theta, p, context_ * embed_ * embed_), {context_ * embed_, embed_});
  p += context_ * embed_ * embed_;
  Tape::NodeId b1 = tape.slice(theta, p, embed_);
  p += embed_;
  Tape::NodeId w2 = tape.reshape(tape.slice(theta, p, embed_ * vocab_), {embed_, vocab_});
  p += embed_ * vocab_;
  Tape::NodeId b2 = tape.slice(theta, p, vocab_);

  Tape::NodeId x = tape.embedding(table, idx, bsz, context_);
  Tape::NodeId h = tape.tanh(tape.add(tape.matmul(x, w1), tape.col_broadcast(b1, bsz)));
  return tape.add(tape.matmul(h, w2), tape.col_broadcast(b2, bsz));
}

std::vector<int32_t> TinyMLPLM::labels(const Batch& batch) const {
  std::vector<int32_t> out;
  out.reserve(batch.items.size());
  for (int32_t offset : batch.items)
    out.push_back(stream_[static_cast<size_t>(offset + context_)]);
  return out;
}

Tape::NodeId TinyMLPLM::build_loss(Tape& tape, Tape::NodeId theta, const Batch& batch) const {
  Tape::NodeId logits = build_logits(tape, theta, batch);
  return tape.cross_entropy(logits, std::make_shared<const std::vector<int32_t>>(labels(batch)));
}

double TinyMLPLM::source_entropy() const {
  // Stationary distribution by power iteration, then the entropy rate
  // H = -sum_i pi_i sum_j P_ij ln P_ij.
  std::vector<double> pi(static_cast<size_t>(vocab_), 1.0 / static_cast<double>(vocab_));
  std::vector<double> next(static_cast<size_t>(vocab_));
  for (int iter = 0; iter < 2000; ++iter) {
    double delta = 0.0;
    for (int64_t j = 0; j < vocab_; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < vocab_; ++i)
        s += pi[static_cast<size_t>(i)] * transition_[static_cast<size_t>(i * vocab_ + j)];
      next[static_cast<size_t>(j)] = s;
    }
    for (int64_t j = 0; j < vocab_; ++j) {
      delta += std::fabs(next[static_cast<size_t>(j)] - pi[static_cast<size_t>(j)]);
      pi[static_cast<size_t>(j)] = next[static_cast<size_t>(j)];
    }
    if (delta < 1e-14) break;
  }
  double h = 0.0;
  for (int64_t i = 0; i < vocab_; ++i) {
    for (int64_t j = 0; j < vocab_; ++j) {
      double p = transition_[static_cast<size_t>(i * vocab_ + j)];
      if (p > 0.0) h -= pi[static_cast<size_t>(i)] * p * std::log(p);
    }
  }
  return h;
}

std::shared_ptr<TinyMLPLM> make_tiny_lm(int64_t vocab, int64_t context, int64_t embed,
                                        uint64_t seed) {
  return std::make_shared<TinyMLPLM>(vocab, context, embed, seed);
}

}  // namespace sophia
