#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sophia/autodiff.hpp"
#include "sophia/errors.hpp"
#include "sophia/problems.hpp"
#include "sophia/rng.hpp"

using namespace sophia;

namespace {

// f(theta) = (theta1^2 + 2 theta2^2) / 2, Hessian diag(1, 2)
Tape::NodeId split_quadratic(Tape& tape, Tape::NodeId theta) {
  Tape::NodeId weights = tape.constant(Tensor({2}, {0.5, 1.0}));
  return tape.sum(tape.mul(weights, tape.mul(theta, theta)));
}

Tensor randn(int64_t n, RngStream& rng) {
  Tensor t = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) t[i] = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("toy2d value and gradient at the origin") {
  auto toy = make_toy2d();
  auto [value, grad] = value_and_grad(loss_fn(*toy, {}), Tensor({2}, {0.0, 0.0}));
  CHECK(value == doctest::Approx(16.0).epsilon(1e-14));
  CHECK(grad[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(grad[1] == doctest::Approx(-4.0).epsilon(1e-14));
}

TEST_CASE("toy2d vanishes at the global minimizer") {
  auto toy = make_toy2d();
  auto [value, grad] = value_and_grad(loss_fn(*toy, {}), Tensor({2}, {1.0, 4.0}));
  CHECK(value == 0.0);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
}

TEST_CASE("split quadratic gradient") {
  auto [value, grad] = value_and_grad(split_quadratic, Tensor({2}, {1.0, 1.0}));
  CHECK(value == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(grad[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(grad[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("hvp of the split quadratic picks Hessian columns") {
  Tensor hv = hvp(split_quadratic, Tensor({2}, {3.0, -2.0}), Tensor({2}, {1.0, 0.0}));
  CHECK(hv[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(hv[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hvp of a linear map is zero") {
  auto linear = [](Tape& tape, Tape::NodeId theta) {
    return tape.sum(tape.mul(theta, tape.constant(Tensor({3}, {2.0, -1.0, 0.5}))));
  };
  Tensor hv = hvp(linear, Tensor({3}, {1.0, 2.0, 3.0}), Tensor({3}, {4.0, 5.0, 6.0}));
  for (int64_t i = 0; i < 3; ++i) CHECK(hv[i] == 0.0);
}

TEST_CASE("hvp of theta1^2 theta2") {
  auto f = [](Tape& tape, Tape::NodeId theta) {
    Tape::NodeId t1 = tape.sum(tape.mul(theta, tape.constant(Tensor({2}, {1.0, 0.0}))));
    Tape::NodeId t2 = tape.sum(tape.mul(theta, tape.constant(Tensor({2}, {0.0, 1.0}))));
    return tape.mul(tape.mul(t1, t1), t2);
  };
  // Hessian at (1,2) is [[4,2],[2,0]]; times (1,1) gives (6,2).
  Tensor hv = hvp(f, Tensor({2}, {1.0, 2.0}), Tensor({2}, {1.0, 1.0}));
  CHECK(hv[0] == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(hv[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("non-finite intermediates raise an overflow error naming the primitive") {
  auto f = [](Tape& tape, Tape::NodeId theta) {
    return tape.sum(tape.exp(tape.scale(theta, 1000.0)));
  };
  try {
    value_and_grad(f, Tensor({2}, {1.0, 1.0}));
    FAIL("expected OverflowError");
  } catch (const OverflowError& e) {
    CHECK(std::string(e.what()).find("exp") != std::string::npos);
  }
}

TEST_CASE("hvp is linear in the probe") {
  auto cls = make_classifier(3, 4, 6, 32, 5);
  RngStream batch_rng(5, 1, RngStream::kBatch);
  Batch batch = cls->sample_batch(batch_rng, 8);
  TapeFn f = loss_fn(*cls, batch);
  Tensor theta = cls->init_params(2);

  RngStream rng(1, 0, RngStream::kGeneric);
  Tensor u = randn(theta.size(), rng);
  Tensor v = randn(theta.size(), rng);
  double a = 0.7, b = -1.3;
  Tensor combo = Tensor::zeros(theta.shape());
  for (int64_t i = 0; i < theta.size(); ++i) combo[i] = a * u[i] + b * v[i];

  Tensor lhs = hvp(f, theta, combo);
  Tensor hu = hvp(f, theta, u);
  Tensor hv = hvp(f, theta, v);
  for (int64_t i = 0; i < theta.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(a * hu[i] + b * hv[i]).epsilon(1e-12));
}

TEST_CASE("hvp is symmetric as a bilinear form") {
  auto lm = make_tiny_lm(16, 4, 8, 3);
  RngStream batch_rng(3, 1, RngStream::kBatch);
  Batch batch = lm->sample_batch(batch_rng, 8);
  TapeFn f = loss_fn(*lm, batch);
  Tensor theta = lm->init_params(4);

  RngStream rng(2, 0, RngStream::kGeneric);
  for (int rep = 0; rep < 3; ++rep) {
    Tensor u = randn(theta.size(), rng);
    Tensor v = randn(theta.size(), rng);
    double lhs = dot(hvp(f, theta, u), v);
    double rhs = dot(hvp(f, theta, v), u);
    CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, std::fabs(lhs)));
  }
}

TEST_CASE("gradient and hvp against central differences on the tiny LM") {
  auto lm = make_tiny_lm(16, 4, 8, 3);
  RngStream batch_rng(3, 2, RngStream::kBatch);
  Batch batch = lm->sample_batch(batch_rng, 8);
  TapeFn f = loss_fn(*lm, batch);
  Tensor theta = lm->init_params(4);
  const double eps = 1e-5;

  RngStream rng(5, 0, RngStream::kGeneric);
  Tensor u = randn(theta.size(), rng);
  double n = norm2(u);
  for (int64_t i = 0; i < u.size(); ++i) u[i] /= n;

  Tensor plus = theta, minus = theta;
  for (int64_t i = 0; i < theta.size(); ++i) {
    plus[i] += eps * u[i];
    minus[i] -= eps * u[i];
  }
  auto [value, grad] = value_and_grad(f, theta);
  (void)value;
  auto [vp, gp] = value_and_grad(f, plus);
  auto [vm, gm] = value_and_grad(f, minus);

  double directional = dot(grad, u);
  double fd = (vp - vm) / (2 * eps);
  CHECK(std::fabs(directional - fd) / std::max(1.0, std::fabs(directional)) <= 1e-6);

  Tensor hv = hvp(f, theta, u);
  double err = 0.0;
  for (int64_t i = 0; i < hv.size(); ++i) {
    double d = hv[i] - (gp[i] - gm[i]) / (2 * eps);
    err += d * d;
  }
  CHECK(std::sqrt(err) / std::max(1.0, norm2(hv)) <= 1e-6);
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  Tape::NodeId a = tape.input(Tensor({2}, {1.0, 2.0}));
  Tape::NodeId b = tape.input(Tensor({3}, {1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(tape.add(a, b), ShapeError);
  CHECK_THROWS_AS(hvp(split_quadratic, Tensor({2}, {0.0, 0.0}), Tensor({3}, {0.0, 0.0, 0.0})),
                  ShapeError);
}

TEST_CASE("scalar broadcasting against tensors") {
  Tape tape;
  Tape::NodeId s = tape.input(Tensor::scalar(2.0));
  Tape::NodeId t = tape.input(Tensor({3}, {1.0, 2.0, 3.0}));
  Tape::NodeId prod = tape.mul(s, t);
  CHECK(tape.value(prod)[2] == 6.0);
  auto grads = tape.gradient(tape.sum(prod), std::vector<Tape::NodeId>{s, t});
  CHECK(tape.value(grads[0]).item() == 6.0);  // sum of t
  CHECK(tape.value(grads[1])[0] == 2.0);
}

TEST_CASE("relu second derivative is zero everywhere") {
  auto f = [](Tape& tape, Tape::NodeId theta) { return tape.sum(tape.relu(theta)); };
  // First derivative is the step function; second derivative is 0 by the
  // documented convention (tests avoid probing exactly at the kink).
  Tensor hv = hvp(f, Tensor({2}, {0.5, -0.5}), Tensor({2}, {1.0, 1.0}));
  CHECK(hv[0] == 0.0);
  CHECK(hv[1] == 0.0);
}
