#include "sophia/theory.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

constexpr int64_t kTheoryDimGuard = 200;

void check_dim(int64_t d) {
  if (d > kTheoryDimGuard)
    throw SizeError("theory module is restricted to d <= " + std::to_string(kTheoryDimGuard));
}

}  // namespace

QuadraticObjective::QuadraticObjective(Tensor a) : a_(std::move(a)) {
  if (a_.shape().size() != 2 || a_.rows() != a_.cols())
    throw ShapeError("quadratic objective needs a square matrix");
}

double QuadraticObjective::loss(const Tensor& theta) const {
  return 0.5 * dot(theta, gradient(theta));
}

Tensor QuadraticObjective::gradient(const Tensor& theta) const {
  int64_t d = dim();
  Tensor g = Tensor::zeros({d});
  for (int64_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += a_.at(i, j) * theta[j];
    g[i] = s;
  }
  return g;
}

TheorySetting TheorySetting::bound_regime(const SecondOrderFunction& objective, double mu,
                                          double R) {
  TheorySetting s;
  s.objective = &objective;
  s.mu = mu;
  s.radius = R;
  s.eta = 0.5;
  s.rho = R / (2.0 * std::sqrt(static_cast<double>(objective.dim())));
  return s;
}

EigenFactors eigendecompose_spd(const Tensor& hessian) {
  int64_t d = hessian.rows();
  check_dim(d);
  Eigen::MatrixXd h(d, d);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) h(i, j) = hessian.at(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw DefinitenessError("eigendecomposition failed");
  EigenFactors out{Tensor::zeros({d, d}), Tensor::zeros({d})};
  for (int64_t i = 0; i < d; ++i) {
    out.values[i] = solver.eigenvalues()(i);
    for (int64_t j = 0; j < d; ++j) out.vectors.at(i, j) = solver.eigenvectors()(j, i);
  }
  return out;
}

Tensor clipped_newton_step(const Tensor& theta, const TheorySetting& setting) {
  const SecondOrderFunction& f = *setting.objective;
  check_dim(f.dim());
  EigenFactors eig = eigendecompose_spd(f.hessian(theta));
  int64_t d = f.dim();
  for (int64_t i = 0; i < d; ++i) {
    if (eig.values[i] <= 0.0)
      throw DefinitenessError("Hessian not positive definite (eigenvalue " +
                              std::to_string(eig.values[i]) + ")");
  }
  Tensor g = f.gradient(theta);
  Tensor next = theta;
  for (int64_t i = 0; i < d; ++i) {
    double c = 0.0;
    for (int64_t j = 0; j < d; ++j) c += eig.vectors.at(i, j) * g[j];
    double w = std::max(std::min(c / eig.values[i], setting.rho), -setting.rho);
    for (int64_t j = 0; j < d; ++j) next[j] -= setting.eta * eig.vectors.at(i, j) * w;
  }
  return next;
}

int64_t theorem1_bound(double l0_gap, double mu, double R, int64_t d, double eps_target) {
  if (l0_gap <= 0.0 || mu <= 0.0 || R <= 0.0 || d <= 0 || eps_target <= 0.0)
    throw ParameterError("theorem1_bound needs positive inputs");
  double eta = 0.5;
  double rho = R / (2.0 * std::sqrt(static_cast<double>(d)));
  double phase_boundary = mu * rho * rho / 8.0;
  int64_t burn_in = static_cast<int64_t>(std::ceil(8.0 * l0_gap / (eta * mu * rho * rho)));
  int64_t geometric = 0;
  if (eps_target < phase_boundary) {
    double decay = -std::log(1.0 - eta * (1.0 - eta));
    geometric = static_cast<int64_t>(std::ceil(std::log(phase_boundary / eps_target) / decay));
  }
  return burn_in + geometric;
}

double signgd_lower_bound(double mu, double beta, double delta, double eps) {
  if (mu <= 0.0 || beta <= 0.0 || delta <= 0.0 || eps <= 0.0)
    throw ParameterError("signgd_lower_bound needs positive inputs");
  double t = 0.5 * (std::sqrt(delta / eps) - std::sqrt(2.0)) * std::sqrt(beta / mu);
  return std::max(t, 0.0);
}

double verify_descent_lemma(const Tensor& theta, const TheorySetting& setting) {
  const SecondOrderFunction& f = *setting.objective;
  int64_t d = f.dim();
  double hypothesis = setting.radius / std::sqrt(static_cast<double>(d));
  if (setting.eta * setting.rho > hypothesis * (1.0 + 1e-12))
    throw PreconditionError("descent lemma needs eta * rho <= R / sqrt(d)");
  EigenFactors eig = eigendecompose_spd(f.hessian(theta));
  Tensor g = f.gradient(theta);
  double decrement = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    double c = 0.0;
    for (int64_t j = 0; j < d; ++j) c += eig.vectors.at(i, j) * g[j];
    decrement += std::min(setting.rho * std::fabs(c), c * c / eig.values[i]);
  }
  Tensor next = clipped_newton_step(theta, setting);
  double drop = f.loss(next) - f.loss(theta);
  return drop + (setting.eta - setting.eta * setting.eta) * decrement;
}

}  // namespace sophia
