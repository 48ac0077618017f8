#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "sophia/autodiff.hpp"
#include "sophia/errors.hpp"
#include "sophia/estimators.hpp"
#include "sophia/problems.hpp"
#include "sophia/rng.hpp"

using namespace sophia;

namespace {

/// V-class model whose logits are the parameters themselves (one example).
class IdentityLogits : public Problem, public LogitsView {
 public:
  explicit IdentityLogits(int64_t v) : v_(v) {}
  int64_t dim() const override { return v_; }
  Tensor init_params(uint64_t) const override { return Tensor::zeros({v_}); }
  Batch sample_batch(RngStream&, int64_t) const override { return {{0}}; }
  Batch eval_batch() const override { return {{0}}; }
  Tape::NodeId build_loss(Tape& tape, Tape::NodeId theta, const Batch& batch) const override {
    return tape.cross_entropy(build_logits(tape, theta, batch),
                              std::make_shared<const std::vector<int32_t>>(labels(batch)));
  }
  const LogitsView* logits_view() const override { return this; }
  int64_t num_classes() const override { return v_; }
  Tape::NodeId build_logits(Tape& tape, Tape::NodeId theta, const Batch&) const override {
    return tape.reshape(theta, {1, v_});
  }
  std::vector<int32_t> labels(const Batch&) const override { return {0}; }

 private:
  int64_t v_;
};

TapeFn quadratic_fn(const Tensor& a) {
  int64_t d = a.rows();
  return [a, d](Tape& tape, Tape::NodeId theta) {
    Tape::NodeId col = tape.reshape(theta, {d, 1});
    return tape.scale(tape.sum(tape.mul(col, tape.matmul(tape.constant(a), col))), 0.5);
  };
}

}  // namespace

TEST_CASE("hutchinson with a sign probe is exact on a diagonal quadratic") {
  // u (*) (A u) has coordinates u_i^2 A_ii = A_ii for u in {+-1}^2.
  Tensor a({2, 2}, {1.0, 0.0, 0.0, 2.0});
  TapeFn f = quadratic_fn(a);
  Tensor theta({2}, {0.3, -0.7});
  for (double u1 : {-1.0, 1.0}) {
    for (double u2 : {-1.0, 1.0}) {
      Tensor u({2}, {u1, u2});
      Tensor hu = hvp(f, theta, u);
      CHECK(u[0] * hu[0] == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(u[1] * hu[1] == doctest::Approx(2.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("hutchinson on the zero function is zero for any probe") {
  auto zero_fn = [](Tape& tape, Tape::NodeId theta) {
    return tape.scale(tape.sum(theta), 0.0);
  };
  RngStream rng(1, 0, RngStream::kEstimator);
  HessianEstimate est = hutchinson_estimate(zero_fn, Tensor({3}, {1.0, 2.0, 3.0}), rng, 3);
  for (int64_t i = 0; i < 3; ++i) CHECK(est.values[i] == 0.0);
  CHECK(est.sample_meta == 3);
}

TEST_CASE("hutchinson Monte Carlo mean approaches the exact diagonal") {
  Tensor a({2, 2}, {2.0, 1.0, 1.0, 3.0});
  TapeFn f = quadratic_fn(a);
  Tensor theta({2}, {0.5, 0.25});
  RngStream rng(77, 0, RngStream::kEstimator);
  HessianEstimate est = hutchinson_estimate(f, theta, rng, 1000000);
  CHECK(std::fabs(est.values[0] - 2.0) / 2.0 <= 0.02);
  CHECK(std::fabs(est.values[1] - 3.0) / 3.0 <= 0.02);
}

TEST_CASE("hutchinson rejects zero probes") {
  RngStream rng(1, 0, RngStream::kEstimator);
  CHECK_THROWS_AS(
      hutchinson_estimate(quadratic_fn(Tensor({1, 1}, {1.0})), Tensor({1}, {0.0}), rng, 0),
      ParameterError);
}

TEST_CASE("GNB with B=1 is the squared per-example gradient") {
  auto cls = make_classifier(3, 4, 5, 16, 2);
  Tensor theta = cls->init_params(1);
  Batch batch{{3}};
  std::vector<int32_t> label{1};

  Tensor out = gnb_output_for_labels(*cls, theta, batch, label);

  Tape tape;
  Tape::NodeId x = tape.input(theta);
  Tape::NodeId loss = tape.cross_entropy(cls->build_logits(tape, x, batch),
                                         std::make_shared<const std::vector<int32_t>>(label));
  auto grads = tape.gradient(loss, std::span<const Tape::NodeId>(&x, 1));
  const Tensor& g = tape.value(grads[0]);
  for (int64_t i = 0; i < theta.size(); ++i)
    CHECK(out[i] == doctest::Approx(g[i] * g[i]).epsilon(1e-15));
}

TEST_CASE("GNB expectation equals diag(S) for the two-class identity model") {
  IdentityLogits model(2);
  Tensor theta({2}, {0.0, 0.0});  // p = (1/2, 1/2)
  Batch batch{{0}};

  // Both labels give the same squared gradient (0.25, 0.25).
  for (int32_t y : {0, 1}) {
    Tensor out = gnb_output_for_labels(model, theta, batch, {y});
    CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(0.25).epsilon(1e-14));
  }
  Tensor expectation = gnb_enumerated_expectation(model, theta, batch);
  Tensor exact = exact_gn_diag(model, theta, batch);
  for (int64_t i = 0; i < 2; ++i) {
    CHECK(expectation[i] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(exact[i] == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("GNB output is elementwise nonnegative") {
  auto cls = make_classifier(4, 6, 7, 32, 11);
  Tensor theta = cls->init_params(5);
  RngStream batch_rng(11, 3, RngStream::kBatch);
  Batch batch = cls->sample_batch(batch_rng, 8);
  RngStream rng(9, 1, RngStream::kEstimator);
  HessianEstimate est = gnb_estimate(*cls, theta, batch, rng);
  CHECK(est.kind == EstimatorKind::gnb);
  CHECK(est.sample_meta == 8);
  for (int64_t i = 0; i < est.values.size(); ++i) CHECK(est.values[i] >= 0.0);
}

TEST_CASE("GNB sampling is deterministic given the stream") {
  auto cls = make_classifier(3, 4, 5, 16, 2);
  Tensor theta = cls->init_params(1);
  RngStream batch_rng(2, 7, RngStream::kBatch);
  Batch batch = cls->sample_batch(batch_rng, 6);
  RngStream r1(123, 5, RngStream::kEstimator);
  RngStream r2(123, 5, RngStream::kEstimator);
  Tensor a = gnb_estimate(*cls, theta, batch, r1).values;
  Tensor b = gnb_estimate(*cls, theta, batch, r2).values;
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("GNB requires a logits interface") {
  auto toy = make_toy2d();
  RngStream rng(1, 1, RngStream::kEstimator);
  CHECK_THROWS_AS(gnb_estimate(*toy, Tensor({2}, {0.0, 0.0}), Batch{{0}}, rng),
                  UnsupportedEstimatorError);
}

TEST_CASE("empirical Fisher is the squared gradient") {
  Tensor g({2}, {1.0, -2.0});
  Tensor ef = empirical_fisher(g);
  CHECK(ef[0] == 1.0);
  CHECK(ef[1] == 4.0);
  Tensor zero = empirical_fisher(Tensor::zeros({3}));
  for (int64_t i = 0; i < 3; ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("empirical Fisher differs from GNB only in the label source") {
  // Forcing GNB's sampled labels to the true ones collapses it onto
  // B * (g (*) g) with the true-label mini-batch gradient.
  auto cls = make_classifier(3, 4, 5, 16, 2);
  Tensor theta = cls->init_params(8);
  RngStream batch_rng(2, 9, RngStream::kBatch);
  Batch batch = cls->sample_batch(batch_rng, 4);

  Tensor with_true_labels = gnb_output_for_labels(*cls, theta, batch, cls->labels(batch));
  auto [loss, g] = value_and_grad(loss_fn(*cls, batch), theta);
  (void)loss;
  Tensor fisher = empirical_fisher(g);
  double b = static_cast<double>(batch.items.size());
  for (int64_t i = 0; i < theta.size(); ++i)
    CHECK(with_true_labels[i] == doctest::Approx(b * fisher[i]).epsilon(1e-12));
}

TEST_CASE("squared-loss GNB on a linear model is x (*) x") {
  struct LinearModel : ScalarModelView {
    Tape::NodeId build_output(Tape& tape, Tape::NodeId theta, int32_t) const override {
      return tape.sum(tape.mul(theta, tape.constant(Tensor({2}, {1.0, 2.0}))));
    }
  } model;
  Tensor theta({2}, {0.4, -0.9});
  std::vector<int32_t> batch{0};
  HessianEstimate est = gnb_squared_loss_estimate(model, theta, batch);
  CHECK(est.values[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(est.values[1] == doctest::Approx(4.0).epsilon(1e-15));

  // Two identical examples average to the same values.
  std::vector<int32_t> two{0, 0};
  Tensor repeated = gnb_squared_loss_estimate(model, theta, two).values;
  for (int64_t i = 0; i < 2; ++i) CHECK(repeated[i] == est.values[i]);
}

TEST_CASE("squared-loss GNB on a constant model is zero") {
  struct ConstantModel : ScalarModelView {
    Tape::NodeId build_output(Tape& tape, Tape::NodeId theta, int32_t) const override {
      return tape.add(tape.scale(tape.sum(theta), 0.0), tape.constant_scalar(3.0));
    }
  } model;
  std::vector<int32_t> batch{0};
  Tensor out = gnb_squared_loss_estimate(model, Tensor({2}, {1.0, 2.0}), batch).values;
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("squared-loss GNB rejects multi-output models") {
  struct VectorModel : ScalarModelView {
    Tape::NodeId build_output(Tape& tape, Tape::NodeId theta, int32_t) const override {
      return tape.scale(theta, 2.0);
    }
  } model;
  std::vector<int32_t> batch{0};
  CHECK_THROWS_AS(gnb_squared_loss_estimate(model, Tensor({2}, {1.0, 2.0}), batch),
                  UnsupportedEstimatorError);
}

TEST_CASE("exact Hessian diagonal of the toy landscape at the minimizer") {
  auto toy = make_toy2d();
  Tensor diag = exact_hessian_diag(loss_fn(*toy, {}), Tensor({2}, {1.0, 4.0}));
  CHECK(diag[0] == doctest::Approx(68.8).epsilon(1e-12));
  CHECK(diag[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact Hessian diagonal of a quadratic is diag(A) anywhere") {
  Tensor a({3, 3}, {4.0, 1.0, 0.0, 1.0, 5.0, 2.0, 0.0, 2.0, 6.0});
  TapeFn f = quadratic_fn(a);
  for (uint64_t s = 0; s < 3; ++s) {
    RngStream rng(s, 0, RngStream::kGeneric);
    Tensor theta({3}, {rng.normal(), rng.normal(), rng.normal()});
    Tensor diag = exact_hessian_diag(f, theta);
    CHECK(diag[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(diag[1] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(diag[2] == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_CASE("exact Hessian diagonal refuses oversized problems") {
  auto f = [](Tape& tape, Tape::NodeId theta) { return tape.sum(theta); };
  CHECK_THROWS_AS(exact_hessian_diag(f, Tensor::zeros({5001})), SizeError);
}

TEST_CASE("exact GN diagonal is near zero at saturated logits") {
  IdentityLogits model(2);
  Tensor theta({2}, {12.0, -12.0});  // p ~ (1, 4e-11)
  Tensor diag = exact_gn_diag(model, theta, Batch{{0}});
  CHECK(std::fabs(diag[0]) <= 1e-8);
  CHECK(std::fabs(diag[1]) <= 1e-8);
}

TEST_CASE("GNB enumeration matches the exact GN diagonal on a real classifier") {
  auto cls = make_classifier(3, 4, 5, 16, 6);
  Tensor theta = cls->init_params(3);
  Batch batch{{0, 1}};
  Tensor expectation = gnb_enumerated_expectation(*cls, theta, batch);
  Tensor exact = exact_gn_diag(*cls, theta, batch);
  for (int64_t i = 0; i < theta.size(); ++i)
    CHECK(std::fabs(expectation[i] - exact[i]) <= 1e-10);
}
