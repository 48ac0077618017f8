#include "sophia/estimators.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

constexpr int64_t kExactDiagGuard = 5000;
constexpr int64_t kGnDiagGuard = 1000000;
constexpr int64_t kEnumerationGuard = 200000;

const LogitsView& require_logits(const Problem& model) {
  const LogitsView* view = model.logits_view();
  if (view == nullptr)
    throw UnsupportedEstimatorError("GNB needs a problem exposing logits");
  return *view;
}

/// Softmax probabilities of the batch logits, one row per example.
std::vector<std::vector<double>> softmax_probs(const Tensor& logits) {
  int64_t rows = logits.rows(), cols = logits.cols();
  std::vector<std::vector<double>> probs(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    auto& p = probs[static_cast<size_t>(i)];
    p.resize(static_cast<size_t>(cols));
    double m = logits.at(i, 0);
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, logits.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      p[static_cast<size_t>(j)] = std::exp(logits.at(i, j) - m);
      z += p[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < cols; ++j) p[static_cast<size_t>(j)] /= z;
  }
  return probs;
}

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::hutchinson: return "hutchinson";
    case EstimatorKind::gnb: return "gnb";
    case EstimatorKind::gnb_squared: return "gnb_squared";
    case EstimatorKind::empirical_fisher: return "empirical_fisher";
  }
  return "?";
}

HessianEstimate hutchinson_estimate(const TapeFn& f, const Tensor& theta, RngStream& rng,
                                    int64_t probes) {
  if (probes < 1) throw ParameterError("hutchinson needs probes >= 1");
  Tensor acc = Tensor::zeros(theta.shape());
  Tensor u = Tensor::zeros(theta.shape());
  for (int64_t p = 0; p < probes; ++p) {
    for (int64_t i = 0; i < u.size(); ++i) u[i] = rng.normal();
    Tensor hu = hvp(f, theta, u);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += u[i] * hu[i];
  }
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] /= static_cast<double>(probes);
  return {std::move(acc), EstimatorKind::hutchinson, probes};
}

Tensor gnb_output_for_labels(const Problem& model, const Tensor& theta, const Batch& batch,
                             const std::vector<int32_t>& sampled_labels) {
  const LogitsView& view = require_logits(model);
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId logits = view.build_logits(tape, x, batch);
  Tape::NodeId loss =
      tape.cross_entropy(logits, std::make_shared<const std::vector<int32_t>>(sampled_labels));
  auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
  const Tensor& g = tape.value(grads[0]);
  double b = static_cast<double>(batch.items.size());
  Tensor out = Tensor::zeros(g.shape());
  for (int64_t i = 0; i < g.size(); ++i) out[i] = b * g[i] * g[i];
  return out;
}

HessianEstimate gnb_estimate(const Problem& model, const Tensor& theta, const Batch& batch,
                             RngStream& rng) {
  const LogitsView& view = require_logits(model);
  if (batch.items.empty()) throw ParameterError("GNB needs B >= 1");
  // Logits forward pass just for label sampling; the gradient pass below
  // re-records with the sampled labels attached.
  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId logits = view.build_logits(tape, x, batch);
  auto probs = softmax_probs(tape.value(logits));
  std::vector<int32_t> sampled;
  sampled.reserve(probs.size());
  for (const auto& p : probs) sampled.push_back(rng.categorical(p));
  Tensor values = gnb_output_for_labels(model, theta, batch, sampled);
  return {std::move(values), EstimatorKind::gnb, static_cast<int64_t>(batch.items.size())};
}

Tensor gnb_enumerated_expectation(const Problem& model, const Tensor& theta, const Batch& batch) {
  const LogitsView& view = require_logits(model);
  int64_t v = view.num_classes();
  int64_t b = static_cast<int64_t>(batch.items.size());
  double configs = std::pow(static_cast<double>(v), static_cast<double>(b));
  if (configs > static_cast<double>(kEnumerationGuard))
    throw SizeError("label enumeration needs V^B <= " + std::to_string(kEnumerationGuard));

  Tape tape;
  Tape::NodeId x = tape.input(theta);
  auto probs = softmax_probs(tape.value(view.build_logits(tape, x, batch)));

  Tensor acc = Tensor::zeros(theta.shape());
  std::vector<int32_t> assignment(static_cast<size_t>(b), 0);
  int64_t n = static_cast<int64_t>(configs + 0.5);
  for (int64_t code = 0; code < n; ++code) {
    int64_t c = code;
    double weight = 1.0;
    for (int64_t i = 0; i < b; ++i) {
      assignment[static_cast<size_t>(i)] = static_cast<int32_t>(c % v);
      weight *= probs[static_cast<size_t>(i)][static_cast<size_t>(c % v)];
      c /= v;
    }
    Tensor out = gnb_output_for_labels(model, theta, batch, assignment);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += weight * out[i];
  }
  return acc;
}

HessianEstimate gnb_squared_loss_estimate(const ScalarModelView& model, const Tensor& theta,
                                          std::span<const int32_t> batch) {
  if (batch.empty()) throw ParameterError("squared-loss GNB needs B >= 1");
  Tensor acc = Tensor::zeros(theta.shape());
  for (int32_t item : batch) {
    Tape tape;
    Tape::NodeId x = tape.input(theta);
    Tape::NodeId out = model.build_output(tape, x, item);
    if (!tape.value(out).is_scalar())
      throw UnsupportedEstimatorError("squared-loss GNB needs a single-output model, got " +
                                      tape.value(out).shape_str());
    auto grads = tape.gradient(out, std::span<const Tape::NodeId>(&x, 1));
    const Tensor& j = tape.value(grads[0]);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += j[i] * j[i];
  }
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] /= static_cast<double>(batch.size());
  return {std::move(acc), EstimatorKind::gnb_squared, static_cast<int64_t>(batch.size())};
}

Tensor empirical_fisher(const Tensor& g) {
  Tensor out = Tensor::zeros(g.shape());
  for (int64_t i = 0; i < g.size(); ++i) out[i] = g[i] * g[i];
  return out;
}

Tensor exact_hessian_diag(const TapeFn& f, const Tensor& theta) {
  int64_t d = theta.size();
  if (d > kExactDiagGuard)
    throw SizeError("exact_hessian_diag guard: d = " + std::to_string(d) + " > " +
                    std::to_string(kExactDiagGuard));
  Tensor diag = Tensor::zeros(theta.shape());
  Tensor e = Tensor::zeros(theta.shape());
  for (int64_t i = 0; i < d; ++i) {
    e[i] = 1.0;
    diag[i] = hvp(f, theta, e)[i];
    e[i] = 0.0;
  }
  return diag;
}

Tensor exact_gn_diag(const Problem& model, const Tensor& theta, const Batch& batch) {
  const LogitsView& view = require_logits(model);
  int64_t v = view.num_classes();
  int64_t b = static_cast<int64_t>(batch.items.size());
  if (b < 1) throw ParameterError("exact_gn_diag needs B >= 1");
  if (v * b > kGnDiagGuard)
    throw SizeError("exact_gn_diag guard: V*B = " + std::to_string(v * b) + " > " +
                    std::to_string(kGnDiagGuard));

  Tensor acc = Tensor::zeros(theta.shape());
  for (int64_t e = 0; e < b; ++e) {
    Batch single{{batch.items[static_cast<size_t>(e)]}};
    Tape probe;
    Tape::NodeId px = probe.input(theta);
    auto probs = softmax_probs(probe.value(view.build_logits(probe, px, single)));
    for (int32_t y = 0; y < v; ++y) {
      Tape tape;
      Tape::NodeId x = tape.input(theta);
      Tape::NodeId logits = view.build_logits(tape, x, single);
      Tape::NodeId loss = tape.cross_entropy(
          logits, std::make_shared<const std::vector<int32_t>>(std::vector<int32_t>{y}));
      auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
      const Tensor& g = tape.value(grads[0]);
      double w = probs[0][static_cast<size_t>(y)];
      for (int64_t i = 0; i < acc.size(); ++i) acc[i] += w * g[i] * g[i];
    }
  }
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] /= static_cast<double>(b);
  return acc;
}

}  // namespace sophia
