#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "sophia/errors.hpp"
#include "sophia/optimizers.hpp"
#include "sophia/rng.hpp"

using namespace sophia;

namespace {

Tensor randn(int64_t n, RngStream& rng, double scl = 1.0) {
  Tensor t = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) t[i] = scl * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("clip clamps elementwise") {
  Tensor a = clip(Tensor({2}, {2.0, -0.5}), 1.0);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == -0.5);
  Tensor b = clip(Tensor::zeros({4}), 0.7);
  for (int64_t i = 0; i < 4; ++i) CHECK(b[i] == 0.0);
  Tensor c = clip(Tensor({1}, {-3.0}), 1.0);
  CHECK(c[0] == -1.0);
  CHECK_THROWS_AS(clip(Tensor({1}, {1.0}), 0.0), ParameterError);
}

TEST_CASE("sophia_step scalar hand trace") {
  // beta1 = 0.9, m <- 0.02; gamma h = 0.025, ratio 0.8 (unclipped);
  // theta' = 1 - 0.1 * 0.8 = 0.92.
  SophiaConfig cfg;
  cfg.beta1 = 0.9;
  cfg.gamma = 0.05;
  cfg.weight_decay = 0.0;
  SophiaState state{Tensor::zeros({1}), Tensor({1}, {0.5}), 2};
  auto result = sophia_step(Tensor({1}, {1.0}), Tensor({1}, {0.2}), std::nullopt, state, cfg, 0.1);
  CHECK(result.theta[0] == doctest::Approx(0.92).epsilon(1e-14));
  CHECK(result.unclipped_fraction == 1.0);
  CHECK(state.t == 3);
  CHECK(state.m[0] == doctest::Approx(0.02).epsilon(1e-14));
}

TEST_CASE("negative h floors the denominator and falls back to the sign update") {
  SophiaConfig cfg;
  cfg.beta1 = 0.9;
  cfg.gamma = 0.05;
  SophiaState state{Tensor::zeros({1}), Tensor({1}, {-1.0}), 2};
  auto result = sophia_step(Tensor({1}, {1.0}), Tensor({1}, {0.2}), std::nullopt, state, cfg, 0.1);
  CHECK(result.theta[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(result.unclipped_fraction == 0.0);
}

TEST_CASE("zero gradient and zero momentum leave theta unchanged") {
  SophiaConfig cfg;
  SophiaState state{Tensor::zeros({1}), Tensor({1}, {0.3}), 2};
  auto result = sophia_step(Tensor({1}, {1.0}), Tensor::zeros({1}), std::nullopt, state, cfg, 0.1);
  CHECK(result.theta[0] == 1.0);
}

TEST_CASE("weight decay alone shrinks theta") {
  SophiaConfig cfg;
  cfg.weight_decay = 0.2;
  SophiaState state{Tensor::zeros({1}), Tensor({1}, {0.3}), 2};
  auto result = sophia_step(Tensor({1}, {1.0}), Tensor::zeros({1}), std::nullopt, state, cfg, 0.1);
  CHECK(result.theta[0] == doctest::Approx(0.98).epsilon(1e-14));
}

TEST_CASE("hessian estimate scheduling is enforced") {
  SophiaConfig cfg;
  cfg.hessian_interval = 10;
  SophiaState state = SophiaState::init(2);
  Tensor theta({2}, {1.0, -1.0});
  Tensor g({2}, {0.1, 0.2});

  // t = 1 is a Hessian step: estimate required.
  CHECK_THROWS_AS(sophia_step(theta, g, std::nullopt, state, cfg, 0.01), SchedulingError);
  HessianEstimate est{Tensor({2}, {0.4, 0.5}), EstimatorKind::hutchinson, 1};
  auto r1 = sophia_step(theta, g, est, state, cfg, 0.01);
  CHECK(state.h[0] == doctest::Approx(0.01 * 0.4).epsilon(1e-12));
  // t = 2 is off schedule: estimate rejected, h carried forward.
  CHECK_THROWS_AS(sophia_step(r1.theta, g, est, state, cfg, 0.01), SchedulingError);
  Tensor h_before = state.h;
  auto r2 = sophia_step(r1.theta, g, std::nullopt, state, cfg, 0.01);
  (void)r2;
  CHECK(state.h[0] == h_before[0]);
  CHECK(state.h[1] == h_before[1]);
}

TEST_CASE("hessian_step_due handles k=1 as every step") {
  for (int64_t t = 1; t <= 5; ++t) CHECK(hessian_step_due(t, 1));
  CHECK(hessian_step_due(1, 10));
  CHECK(!hessian_step_due(10, 10));
  CHECK(hessian_step_due(11, 10));
  CHECK(hessian_step_due(21, 10));
}

TEST_CASE("precondition modes") {
  SophiaConfig cfg;
  cfg.gamma = 0.05;
  Tensor m({2}, {0.02, -0.3});
  Tensor h({2}, {0.5, 4.0});

  SUBCASE("sophia mode reproduces the step's ratio") {
    Tensor ratio = precondition(PreconditionerMode::sophia, m, h, cfg);
    CHECK(ratio[0] == m[0] / std::max(cfg.gamma * h[0], cfg.eps));
    CHECK(ratio[1] == m[1] / std::max(cfg.gamma * h[1], cfg.eps));
  }
  SUBCASE("adahessian mode takes the root of the squared-estimate EMA") {
    // h-EMA of 4 means denominator gamma * 2.
    Tensor ratio = precondition(PreconditionerMode::adahessian_like, m, h, cfg);
    CHECK(ratio[1] == doctest::Approx(m[1] / (cfg.gamma * 2.0)).epsilon(1e-15));
  }
  SUBCASE("empirical fisher with empty history floors at eps") {
    Tensor ratio = precondition(PreconditionerMode::empirical_fisher, m, Tensor::zeros({2}), cfg);
    CHECK(std::fabs(ratio[0]) > 1.0);  // sign-like after clip
    CHECK(std::fabs(ratio[1]) > 1.0);
  }
}

TEST_CASE("empirical-fisher mode feeds h from the gradient every step") {
  SophiaConfig cfg = SophiaConfig::defaults_for(EstimatorKind::empirical_fisher);
  CHECK(cfg.mode == PreconditionerMode::empirical_fisher);
  SophiaState state = SophiaState::init(2);
  Tensor theta({2}, {1.0, 1.0});
  Tensor g({2}, {0.5, -0.2});
  auto r = sophia_step(theta, g, std::nullopt, state, cfg, 0.01);
  (void)r;
  CHECK(state.h[0] == doctest::Approx((1 - cfg.beta2) * 0.25).epsilon(1e-12));
  // Estimates are always rejected in this mode.
  HessianEstimate est{Tensor::zeros({2}), EstimatorKind::empirical_fisher, 1};
  CHECK_THROWS_AS(sophia_step(theta, g, est, state, cfg, 0.01), SchedulingError);
}

TEST_CASE("reparameterization identity") {
  RngStream rng(5, 0, RngStream::kGeneric);
  for (double gamma : {0.01, 0.05, 0.3}) {
    const double eps = 1e-12, eta = 0.13;
    Tensor m = randn(32, rng, 2.0);
    Tensor h = randn(32, rng);
    for (int64_t i = 0; i < 32; ++i) {
      double lhs = eta * std::clamp(m[i] / std::max(gamma * h[i], eps), -1.0, 1.0);
      double rhs =
          (eta / gamma) * std::clamp(m[i] / std::max(h[i], eps / gamma), -gamma, gamma);
      CHECK(std::fabs(lhs - rhs) <= 1e-15);
    }
  }
}

TEST_CASE("worst-case step bound") {
  RngStream rng(6, 0, RngStream::kGeneric);
  for (double wd : {0.0, 0.25}) {
    SophiaConfig cfg;
    cfg.weight_decay = wd;
    const double eta = 0.4;
    SophiaState state{randn(16, rng), randn(16, rng), 2};
    Tensor theta = randn(16, rng, 3.0);
    auto result = sophia_step(theta, randn(16, rng), std::nullopt, state, cfg, eta);
    double bound = eta * (1.0 + wd * norm_inf(theta)) * (1.0 + 1e-12);
    for (int64_t i = 0; i < 16; ++i)
      CHECK(std::fabs(result.theta[i] - theta[i]) <= bound);
  }
}

TEST_CASE("signgd step follows the sign rule") {
  BaselineState state = BaselineState::init(2);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::signgd);
  Tensor next = baseline_step(BaselineKind::signgd, Tensor::zeros({2}), Tensor({2}, {0.3, -2.0}),
                              state, hyper, 0.1);
  CHECK(next[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(next[1] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("adamw first step is approximately the learning rate") {
  BaselineState state = BaselineState::init(1);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::adamw);
  CHECK(hyper.beta1 == 0.9);
  CHECK(hyper.beta2 == 0.95);
  Tensor next =
      baseline_step(BaselineKind::adamw, Tensor::zeros({1}), Tensor({1}, {1.0}), state, hyper, 0.1);
  CHECK(next[0] == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(state.t == 2);
}

TEST_CASE("lion interpolates before taking the sign") {
  BaselineState state = BaselineState::init(1);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::lion);
  CHECK(hyper.beta1 == 0.95);
  CHECK(hyper.beta2 == 0.98);
  Tensor next = baseline_step(BaselineKind::lion, Tensor({1}, {0.5}), Tensor({1}, {1.0}), state,
                              hyper, 0.1);
  CHECK(next[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(state.m[0] == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("gd is the plain gradient step") {
  BaselineState state = BaselineState::init(2);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::gd);
  Tensor next = baseline_step(BaselineKind::gd, Tensor({2}, {1.0, 2.0}), Tensor({2}, {0.5, -1.0}),
                              state, hyper, 0.2);
  CHECK(next[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(next[1] == doctest::Approx(2.2).epsilon(1e-15));
}

TEST_CASE("normalize skips the update at zero momentum norm") {
  BaselineState state = BaselineState::init(2);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::normalize);
  Tensor theta({2}, {1.0, -2.0});
  Tensor next = baseline_step(BaselineKind::normalize, theta, Tensor::zeros({2}), state, hyper,
                              0.1);
  CHECK(next[0] == theta[0]);
  CHECK(next[1] == theta[1]);

  // With momentum, the step has unit direction norm.
  Tensor g({2}, {3.0, 4.0});
  Tensor after = baseline_step(BaselineKind::normalize, theta, g, state, hyper, 0.1);
  double dx = after[0] - theta[0], dy = after[1] - theta[1];
  CHECK(std::sqrt(dx * dx + dy * dy) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("sign momentum applies the EMA then the sign") {
  BaselineState state = BaselineState::init(1);
  BaselineHyper hyper = BaselineHyper::defaults_for(BaselineKind::sign_momentum);
  Tensor next = baseline_step(BaselineKind::sign_momentum, Tensor({1}, {0.0}),
                              Tensor({1}, {-2.0}), state, hyper, 0.05);
  CHECK(next[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(state.m[0] == doctest::Approx((1 - hyper.beta1) * -2.0).epsilon(1e-15));
}

TEST_CASE("sophia steps are deterministic") {
  RngStream rng(8, 0, RngStream::kGeneric);
  SophiaConfig cfg;
  Tensor theta = randn(8, rng);
  Tensor g = randn(8, rng);
  SophiaState s1{randn(8, rng), randn(8, rng), 5};
  SophiaState s2 = s1;
  auto a = sophia_step(theta, g, std::nullopt, s1, cfg, 0.07);
  auto b = sophia_step(theta, g, std::nullopt, s2, cfg, 0.07);
  CHECK(a.unclipped_fraction == b.unclipped_fraction);
  for (int64_t i = 0; i < 8; ++i) {
    CHECK(a.theta[i] == b.theta[i]);
    CHECK(s1.m[i] == s2.m[i]);
    CHECK(s1.h[i] == s2.h[i]);
  }
}
