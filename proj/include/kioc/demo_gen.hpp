#pragma once

#include <functional>
#include <numbers>

#include "kioc/dynamics.hpp"

namespace kioc {

/// Known feature basis phi(x, u) in R^r of a linearly weighted stage cost.
struct FeatureSpec {
  using EvalFn = std::function<Vector(const Vector&, const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&, const Vector&)>;

  Index r = 0;
  EvalFn eval;
  JacobianFn x_jacobian;  // r x n
  JacobianFn u_jacobian;  // r x m
  Vector goal;
};

struct FeatureValues {
  Vector phi;
  Matrix dphi_dx;
  Matrix dphi_du;
};

/// [(theta - theta_g)^2, (thetadot - thetadot_g)^2, |u|^2] and its Jacobians.
inline FeatureValues pendulum_features(const Vector& x, const Vector& u, const Vector& goal) {
  detail::require_size(x.size(), 2, "pendulum_features state");
  detail::require_size(goal.size(), 2, "pendulum_features goal");
  const Vector dx = x - goal;
  FeatureValues out;
  out.phi.resize(3);
  out.phi << dx(0) * dx(0), dx(1) * dx(1), u.squaredNorm();
  out.dphi_dx = Matrix::Zero(3, 2);
  out.dphi_dx(0, 0) = 2.0 * dx(0);
  out.dphi_dx(1, 1) = 2.0 * dx(1);
  out.dphi_du = Matrix::Zero(3, u.size());
  out.dphi_du.row(2) = 2.0 * u.transpose();
  return out;
}

/// Quadratic distance-to-goal features for any state dimension plus input effort; pendulum case
/// when n = 2, m = 1.
inline FeatureSpec goal_features(const Vector& goal) {
  FeatureSpec spec;
  const Index n = goal.size();
  spec.r = n + 1;
  spec.goal = goal;
  spec.eval = [goal, n](const Vector& x, const Vector& u) {
    Vector phi(n + 1);
    phi.head(n) = (x - goal).array().square().matrix();
    phi(n) = u.squaredNorm();
    return phi;
  };
  spec.x_jacobian = [goal, n](const Vector& x, const Vector&) {
    Matrix jac = Matrix::Zero(n + 1, n);
    jac.topRows(n).diagonal() = 2.0 * (x - goal);
    return jac;
  };
  spec.u_jacobian = [n](const Vector&, const Vector& u) {
    Matrix jac = Matrix::Zero(n + 1, u.size());
    jac.row(n) = 2.0 * u.transpose();
    return jac;
  };
  return spec;
}

inline FeatureSpec pendulum_feature_spec(const Vector& goal) {
  detail::require_size(goal.size(), 2, "pendulum goal");
  FeatureSpec spec;
  spec.r = 3;
  spec.goal = goal;
  spec.eval = [goal](const Vector& x, const Vector& u) { return pendulum_features(x, u, goal).phi; };
  spec.x_jacobian = [goal](const Vector& x, const Vector& u) {
    return pendulum_features(x, u, goal).dphi_dx;
  };
  spec.u_jacobian = [goal](const Vector& x, const Vector& u) {
    return pendulum_features(x, u, goal).dphi_du;
  };
  return spec;
}

inline Vector pendulum_goal() { return Vector{{std::numbers::pi, 0.0}}; }

/// sum_{t=0}^{T} w' phi(x_t, u_t)
inline double eval_objective(const Trajectory& traj, const FeatureSpec& feat, const Vector& weights) {
  traj.validate();
  detail::require_size(weights.size(), feat.r, "eval_objective weights");
  double total = 0.0;
  for (Index t = 0; t <= traj.horizon(); ++t) {
    const Vector phi = feat.eval(traj.states.col(t), traj.inputs.col(t));
    detail::require_size(phi.size(), feat.r, "feature vector");
    total += weights.dot(phi);
  }
  return total;
}

/// Costates of the objective along a trajectory together with dJ/du_t.
struct AdjointSweep {
  Matrix costates;  // n x (T+1), lambda_t
  Matrix gradient;  // m x (T+1)
};

/// Backward recursion lambda_T = phi_x' w, lambda_t = phi_x' w + f_x' lambda_{t+1};
/// dJ/du_t = phi_u' w + f_u' lambda_{t+1} (t < T), dJ/du_T = phi_u' w.
inline AdjointSweep adjoint_sweep(const Trajectory& traj, const SystemSpec& spec,
                                  const FeatureSpec& feat, const Vector& weights) {
  traj.validate();
  detail::require_size(traj.n(), spec.n, "adjoint_sweep state dim");
  detail::require_size(traj.m(), spec.m, "adjoint_sweep input dim");
  detail::require_size(weights.size(), feat.r, "adjoint_sweep weights");
  const Index horizon = traj.horizon();
  AdjointSweep out;
  out.costates.resize(spec.n, horizon + 1);
  out.gradient.resize(spec.m, horizon + 1);
  const Vector x_last = traj.states.col(horizon);
  const Vector u_last = traj.inputs.col(horizon);
  out.costates.col(horizon) = feat.x_jacobian(x_last, u_last).transpose() * weights;
  out.gradient.col(horizon) = feat.u_jacobian(x_last, u_last).transpose() * weights;
  for (Index t = horizon - 1; t >= 0; --t) {
    const Vector x = traj.states.col(t);
    const Vector u = traj.inputs.col(t);
    const Vector next = out.costates.col(t + 1);
    out.gradient.col(t) = feat.u_jacobian(x, u).transpose() * weights +
                          spec.input_jacobian(x, u).transpose() * next;
    out.costates.col(t) = feat.x_jacobian(x, u).transpose() * weights +
                          spec.state_jacobian(x, u).transpose() * next;
  }
  return out;
}

/// max_t |phi_u' w + f_u' lambda_{t+1}| over t = 0..T-1 with costates from the backward recursion.
inline double pmp_residual(const Trajectory& traj, const SystemSpec& spec, const FeatureSpec& feat,
                           const Vector& weights) {
  const AdjointSweep sweep = adjoint_sweep(traj, spec, feat, weights);
  double worst = 0.0;
  for (Index t = 0; t < traj.horizon(); ++t) worst = std::max(worst, sweep.gradient.col(t).norm());
  return worst;
}

struct OcSettings {
  double grad_tol = 1e-9;
  double pmp_tol = 1e-8;
  int max_iters = 20000;
  double initial_step = 1.0;
  double armijo = 1e-4;
  double min_step = 1e-16;
};

struct OcSolution {
  Trajectory trajectory;
  Vector weights;
  double objective = 0.0;
  double grad_norm = 0.0;
  double pmp_residual = 0.0;
  int iterations = 0;
};

/// Minimizes the weighted objective over the stacked input sequence by gradient descent with
/// backtracking, starting from zero inputs. Gradients come from the adjoint sweep; the first trial
/// step of each line search is the Barzilai-Borwein step of the previous iteration.
inline OcSolution solve_oc(const SystemSpec& spec, const FeatureSpec& feat, const Vector& weights,
                           const Vector& x0, Index horizon, const OcSettings& cfg = {}) {
  detail::require_size(weights.size(), feat.r, "solve_oc weights");
  detail::require_size(x0.size(), spec.n, "solve_oc x0");
  if ((weights.array() < 0.0).any() || (weights.array() == 0.0).all()) {
    throw std::invalid_argument("solve_oc: weights must be nonnegative and not all zero");
  }
  if (horizon < 2) throw std::invalid_argument("solve_oc: horizon must be at least 2");

  const auto rollout = [&](const Matrix& inputs) {
    Trajectory traj = simulate(spec, x0, inputs);
    if (!traj.states.allFinite()) throw NumericalError("solve_oc: NaN during rollout");
    return traj;
  };

  Matrix inputs = Matrix::Zero(spec.m, horizon + 1);
  Trajectory traj = rollout(inputs);
  double cost = eval_objective(traj, feat, weights);
  Matrix grad = adjoint_sweep(traj, spec, feat, weights).gradient;
  double grad_norm = grad.norm();
  double step = cfg.initial_step;
  int iter = 0;

  for (; iter < cfg.max_iters && grad_norm > cfg.grad_tol; ++iter) {
    const double slope = grad.squaredNorm();
    double trial_step = step;
    bool accepted = false;
    Matrix trial_inputs;
    Trajectory trial;
    double trial_cost = 0.0;
    while (trial_step >= cfg.min_step) {
      trial_inputs = inputs - trial_step * grad;
      trial = rollout(trial_inputs);
      trial_cost = eval_objective(trial, feat, weights);
      if (trial_cost <= cost - cfg.armijo * trial_step * slope) {
        accepted = true;
        break;
      }
      // The predicted decrease is below the rounding level of the objective; judge the step by
      // the gradient norm instead.
      if (cfg.armijo * trial_step * slope <= 4.0 * std::numeric_limits<double>::epsilon() *
                                                 std::max(1.0, std::abs(cost))) {
        const Matrix trial_grad = adjoint_sweep(trial, spec, feat, weights).gradient;
        if (trial_grad.norm() < grad_norm) {
          accepted = true;
          break;
        }
      }
      trial_step *= 0.5;
    }
    if (!accepted) break;
    const Matrix s = trial_inputs - inputs;
    Matrix next_grad = adjoint_sweep(trial, spec, feat, weights).gradient;
    const double sy = (s.array() * (next_grad - grad).array()).sum();
    inputs = std::move(trial_inputs);
    traj = std::move(trial);
    cost = trial_cost;
    grad = std::move(next_grad);
    grad_norm = grad.norm();
    step = sy > 0.0 ? std::min(s.squaredNorm() / sy, 1e6) : std::min(2.0 * trial_step, 1e6);
  }

  OcSolution sol;
  sol.weights = weights;
  sol.objective = cost;
  sol.grad_norm = grad_norm;
  sol.iterations = iter;
  sol.pmp_residual = pmp_residual(traj, spec, feat, weights);
  sol.trajectory = std::move(traj);
  if (!(grad_norm <= cfg.grad_tol) || !(sol.pmp_residual <= cfg.pmp_tol)) {
    throw ConvergenceError("solve_oc: stopped after " + std::to_string(iter) +
                               " iterations with gradient norm " + std::to_string(grad_norm),
                           grad_norm);
  }
  return sol;
}

}  // namespace kioc
