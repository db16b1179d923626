#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>

namespace keyprop::detail {

struct LmSettings {
  int max_iterations = 50;
  double initial_lambda = 1e-3;
  double step_tolerance = 1e-14;
};

// Minimizes 0.5 * |r(x)|^2 for a small dense parameter block.
//   problem.evaluate(state, residuals, jacobian) fills r (m) and J (m x N)
//   problem.plus(state, delta) returns the updated state
template <int N, typename State, typename Problem>
State levenberg_marquardt(const Problem& problem, State state, const LmSettings& settings = {}) {
  using Vector = Eigen::Matrix<double, N, 1>;
  using Normal = Eigen::Matrix<double, N, N>;

  Eigen::VectorXd residuals;
  Eigen::Matrix<double, Eigen::Dynamic, N> jacobian;
  problem.evaluate(state, residuals, jacobian);
  double cost = residuals.squaredNorm();
  double lambda = settings.initial_lambda;

  Eigen::VectorXd trial_residuals;
  Eigen::Matrix<double, Eigen::Dynamic, N> trial_jacobian;

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    const Normal jtj = jacobian.transpose() * jacobian;
    const Vector gradient = jacobian.transpose() * residuals;
    if (gradient.template lpNorm<Eigen::Infinity>() == 0.0) break;

    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      Normal damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Vector delta = -damped.ldlt().solve(gradient);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const State candidate = problem.plus(state, delta);
      problem.evaluate(candidate, trial_residuals, trial_jacobian);
      const double trial_cost = trial_residuals.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const bool tiny_step = delta.norm() < settings.step_tolerance;
        state = candidate;
        residuals.swap(trial_residuals);
        jacobian.swap(trial_jacobian);
        const double previous = cost;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (tiny_step || previous - cost <= 1e-30 * (1.0 + previous)) return state;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return state;
}

}  // namespace keyprop::detail
