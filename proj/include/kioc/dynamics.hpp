#pragma once

#include <functional>
#include <numbers>
#include <vector>

#include "kioc/common.hpp"

namespace kioc {

/// Discrete-time system x_{t+1} = step(x_t, u_t) with analytic Jacobians.
struct SystemSpec {
  using StepFn = std::function<Vector(const Vector&, const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&, const Vector&)>;

  Index n = 0;
  Index m = 0;
  StepFn step;
  JacobianFn state_jacobian;  // n x n
  JacobianFn input_jacobian;  // n x m
};

/// Point-mass pendulum swinging in a vertical plane, explicit Euler discretization.
struct PendulumParams {
  double mass = 1.0;      // kg
  double length = 10.0;   // m
  double gravity = 10.0;  // m/s^2
  double dt = 0.001;      // s

  void validate() const {
    if (!(mass > 0.0) || !(length > 0.0) || !(gravity > 0.0) || !(dt > 0.0)) {
      throw std::invalid_argument("PendulumParams: all parameters must be strictly positive");
    }
  }
};

/// x + dt * [thetadot, (u - m g l sin(theta)) / (m l^2)]
inline Vector pendulum_step(const Vector& x, const Vector& u, const PendulumParams& p) {
  p.validate();
  detail::require_size(x.size(), 2, "pendulum_step state");
  detail::require_size(u.size(), 1, "pendulum_step input");
  if (!x.allFinite() || !u.allFinite()) {
    throw NumericalError("pendulum_step: non-finite state or input");
  }
  const double inertia = p.mass * p.length * p.length;
  Vector next(2);
  next(0) = x(0) + p.dt * x(1);
  next(1) = x(1) + p.dt * (u(0) - p.mass * p.gravity * p.length * std::sin(x(0))) / inertia;
  return next;
}

inline SystemSpec pendulum_system(const PendulumParams& p) {
  p.validate();
  SystemSpec spec;
  spec.n = 2;
  spec.m = 1;
  spec.step = [p](const Vector& x, const Vector& u) { return pendulum_step(x, u, p); };
  spec.state_jacobian = [p](const Vector& x, const Vector&) {
    Matrix jac(2, 2);
    jac << 1.0, p.dt, -p.dt * p.gravity / p.length * std::cos(x(0)), 1.0;
    return jac;
  };
  spec.input_jacobian = [p](const Vector&, const Vector&) {
    Matrix jac(2, 1);
    jac << 0.0, p.dt / (p.mass * p.length * p.length);
    return jac;
  };
  return spec;
}

/// x_{t+1} = A x_t + B u_t
inline SystemSpec linear_system(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw DimensionError("linear_system: A must be n x n and B n x m");
  }
  SystemSpec spec;
  spec.n = a.rows();
  spec.m = b.cols();
  spec.step = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
  spec.state_jacobian = [a](const Vector&, const Vector&) -> Matrix { return a; };
  spec.input_jacobian = [b](const Vector&, const Vector&) -> Matrix { return b; };
  return spec;
}

/// States x_0..x_T and inputs u_0..u_T stored column-wise. u_T enters only the objective.
struct Trajectory {
  Matrix states;  // n x (T+1)
  Matrix inputs;  // m x (T+1)

  Index n() const { return states.rows(); }
  Index m() const { return inputs.rows(); }
  Index horizon() const { return states.cols() - 1; }

  void validate() const {
    if (states.cols() < 1 || inputs.cols() != states.cols()) {
      throw DimensionError("Trajectory: states and inputs must both hold T+1 columns");
    }
  }
};

/// Step-index window [start, end] of a trajectory.
struct Window {
  Index start = 0;
  Index end = 0;

  Index length() const { return end - start; }
  friend bool operator==(const Window&, const Window&) = default;
};

/// Contiguous slice x_{start..end}, u_{start..end} of a demonstration.
struct Segment {
  Window window;
  Matrix states;  // n x (end-start+1)
  Matrix inputs;  // m x (end-start+1)

  Index start() const { return window.start; }
  Index end() const { return window.end; }
  Index tau() const { return window.length(); }
  Index n() const { return states.rows(); }
  Index m() const { return inputs.rows(); }

  /// State at absolute step index t.
  Vector state_at(Index t) const { return states.col(t - window.start); }
  Vector input_at(Index t) const { return inputs.col(t - window.start); }
};

using Dataset = std::vector<Segment>;

/// Rolls the system forward from x0. inputs holds T+1 columns; the last one is not applied.
inline Trajectory simulate(const SystemSpec& spec, const Vector& x0, const Matrix& inputs) {
  detail::require_size(x0.size(), spec.n, "simulate x0");
  detail::require_size(inputs.rows(), spec.m, "simulate input rows");
  if (inputs.cols() < 1) throw DimensionError("simulate: need at least one input column");
  Trajectory traj;
  traj.inputs = inputs;
  traj.states.resize(spec.n, inputs.cols());
  traj.states.col(0) = x0;
  for (Index t = 0; t + 1 < inputs.cols(); ++t) {
    Vector next = spec.step(traj.states.col(t), inputs.col(t));
    detail::require_size(next.size(), spec.n, "simulate step output");
    if (!next.allFinite()) {
      throw NumericalError("simulate: non-finite state at step " + std::to_string(t + 1));
    }
    traj.states.col(t + 1) = next;
  }
  return traj;
}

inline Segment make_segment(const Trajectory& traj, Window w) {
  traj.validate();
  if (w.start < 0 || w.end > traj.horizon() || w.end <= w.start) {
    throw std::out_of_range("segment window [" + std::to_string(w.start) + ", " +
                            std::to_string(w.end) + "] outside trajectory of horizon " +
                            std::to_string(traj.horizon()));
  }
  Segment seg;
  seg.window = w;
  seg.states = traj.states.middleCols(w.start, w.length() + 1);
  seg.inputs = traj.inputs.middleCols(w.start, w.length() + 1);
  return seg;
}

inline Dataset slice_segments(const Trajectory& traj, const std::vector<Window>& windows) {
  Dataset out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(make_segment(traj, w));
  return out;
}

/// Windows of `length` steps every `stride` steps that fit inside [0, horizon].
inline std::vector<Window> sliding_windows(Index horizon, Index length, Index stride) {
  if (length < 1 || stride < 1) throw std::invalid_argument("sliding_windows: bad length/stride");
  std::vector<Window> out;
  for (Index s = 0; s + length <= horizon; s += stride) out.push_back({s, s + length});
  return out;
}

}  // namespace kioc
