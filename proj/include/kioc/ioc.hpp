#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kioc/demo_gen.hpp"
#include "kioc/koopman.hpp"

namespace kioc {

enum class Provenance { Koopman, TrueDynamics };

inline std::string to_string(Provenance p) { return p == Provenance::Koopman ? "koopman" : "true"; }

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "koopman") return Provenance::Koopman;
  if (s == "true") return Provenance::TrueDynamics;
  throw std::invalid_argument("unknown provenance '" + s + "' (expected koopman or true)");
}

/// Where the dynamics Jacobians in the optimality conditions come from.
struct DynamicsDerivatives {
  Provenance provenance = Provenance::TrueDynamics;
  std::function<Matrix(const Vector&, const Vector&)> state_jacobian;
  std::function<Matrix(const Vector&, const Vector&)> input_jacobian;
};

inline DynamicsDerivatives true_derivatives(const SystemSpec& spec) {
  return {Provenance::TrueDynamics, spec.state_jacobian, spec.input_jacobian};
}

/// df/dx = C K_x dpsi/dx and df/du = C K_u of the learned representation.
inline DynamicsDerivatives koopman_derivatives(const KoopmanModel& model, const Observable& obs) {
  std::shared_ptr<const Observable> psi = obs.clone();
  const Matrix ckx = model.c * model.kx();
  const Matrix cku = model.input_jacobian();
  return {Provenance::Koopman,
          [psi, ckx](const Vector& x, const Vector&) -> Matrix { return ckx * psi->state_jacobian(x); },
          [cku](const Vector&, const Vector&) -> Matrix { return cku; }};
}

/// Unknowns of one segment inside the column layout of F.
struct SegmentColumns {
  Window window;
  Index lambda_offset = 0;    // lambda_{start+1 .. end}, n * tau columns
  Index lambda_count = 0;
  Index terminal_offset = 0;  // lambda_{end+1}, n columns
};

/// Linear system F nu = 0 relating costates and weights to demonstration data.
///
/// Single segment layout: nu = [lambda_{start+1..end}; w; lambda_{end+1}], and
///   F = [ A  -Phi_x  -V ]
///       [ B   Phi_u   0 ].
struct PmpSystem {
  Matrix f;
  Index n = 0;
  Index m = 0;
  Index r = 0;
  Index omega_offset = 0;
  std::vector<SegmentColumns> segments;
  Provenance provenance = Provenance::TrueDynamics;

  // Blocks of a single-segment assembly; empty after stacking.
  Matrix a;
  Matrix b;
  Matrix phi_x;
  Matrix phi_u;
  Matrix v;
};

inline PmpSystem assemble_pmp(const Segment& seg, const FeatureSpec& feat,
                              const DynamicsDerivatives& dyn) {
  const Index tau = seg.tau();
  const Index n = seg.n();
  const Index m = seg.m();
  const Index r = feat.r;
  if (tau < 2) throw DimensionError("assemble_pmp: segment must span at least two steps");
  if (!dyn.state_jacobian || !dyn.input_jacobian) {
    throw std::invalid_argument("assemble_pmp: missing dynamics Jacobians");
  }

  PmpSystem sys;
  sys.n = n;
  sys.m = m;
  sys.r = r;
  sys.provenance = dyn.provenance;
  sys.a = Matrix::Identity(n * tau, n * tau);
  sys.v = Matrix::Zero(n * tau, n);
  sys.phi_x.resize(n * tau, r);
  sys.b = Matrix::Zero(m * tau, n * tau);
  sys.phi_u.resize(m * tau, r);

  // Costate rows for t = start+1 .. end.
  for (Index k = 0; k < tau; ++k) {
    const Index t = seg.start() + 1 + k;
    const Vector x = seg.state_at(t);
    const Vector u = seg.input_at(t);
    const Matrix fx = dyn.state_jacobian(x, u);
    detail::require_shape(fx, n, n, "state Jacobian");
    const Matrix phix = feat.x_jacobian(x, u);
    detail::require_shape(phix, r, n, "feature state Jacobian");
    if (k + 1 < tau) {
      sys.a.block(n * k, n * (k + 1), n, n) = -fx.transpose();
    } else {
      sys.v.bottomRows(n) = fx.transpose();
    }
    sys.phi_x.middleRows(n * k, n) = phix.transpose();
  }
  // Stationarity rows for t = start .. end-1.
  for (Index k = 0; k < tau; ++k) {
    const Index t = seg.start() + k;
    const Vector x = seg.state_at(t);
    const Vector u = seg.input_at(t);
    const Matrix fu = dyn.input_jacobian(x, u);
    detail::require_shape(fu, n, m, "input Jacobian");
    const Matrix phiu = feat.u_jacobian(x, u);
    detail::require_shape(phiu, r, m, "feature input Jacobian");
    sys.b.block(m * k, n * k, m, n) = fu.transpose();
    sys.phi_u.middleRows(m * k, m) = phiu.transpose();
  }

  const Index rows = (n + m) * tau;
  const Index cols = n * tau + r + n;
  sys.f = Matrix::Zero(rows, cols);
  sys.f.topLeftCorner(n * tau, n * tau) = sys.a;
  sys.f.block(0, n * tau, n * tau, r) = -sys.phi_x;
  sys.f.block(0, n * tau + r, n * tau, n) = -sys.v;
  sys.f.bottomLeftCorner(m * tau, n * tau) = sys.b;
  sys.f.block(n * tau, n * tau, m * tau, r) = sys.phi_u;
  sys.omega_offset = n * tau;
  sys.segments.push_back({seg.window, 0, n * tau, n * tau + r});
  return sys;
}

/// Block-diagonal over per-segment costates, weights shared. Layout
/// [lambda blocks of every segment | w | terminal costates of every segment].
inline PmpSystem stack_segments(const std::vector<PmpSystem>& systems) {
  if (systems.empty()) throw std::invalid_argument("stack_segments: nothing to stack");
  const auto& first = systems.front();
  Index rows = 0;
  Index lambda_cols = 0;
  Index terminal_cols = 0;
  for (const auto& s : systems) {
    if (s.r != first.r || s.n != first.n || s.m != first.m) {
      throw DimensionError("stack_segments: systems disagree on n, m or r");
    }
    rows += s.f.rows();
    for (const auto& sc : s.segments) {
      lambda_cols += sc.lambda_count;
      terminal_cols += s.n;
    }
  }
  if (systems.size() == 1) return first;

  PmpSystem out;
  out.n = first.n;
  out.m = first.m;
  out.r = first.r;
  out.provenance = first.provenance;
  out.omega_offset = lambda_cols;
  out.f = Matrix::Zero(rows, lambda_cols + first.r + terminal_cols);
  Index row = 0;
  Index lambda_at = 0;
  Index terminal_at = lambda_cols + first.r;
  for (const auto& s : systems) {
    out.f.block(row, out.omega_offset, s.f.rows(), s.r) = s.f.middleCols(s.omega_offset, s.r);
    for (const auto& sc : s.segments) {
      out.f.block(row, lambda_at, s.f.rows(), sc.lambda_count) =
          s.f.middleCols(sc.lambda_offset, sc.lambda_count);
      out.f.block(row, terminal_at, s.f.rows(), s.n) = s.f.middleCols(sc.terminal_offset, s.n);
      out.segments.push_back({sc.window, lambda_at, sc.lambda_count, terminal_at});
      lambda_at += sc.lambda_count;
      terminal_at += s.n;
    }
    row += s.f.rows();
  }
  return out;
}

struct WeightEstimate {
  Vector omega;           // sum = 1
  Vector omega_rescaled;  // sum = reference sum (truth's sum when supplied)
  Vector nu;              // full minimizer in the layout of F
  Vector costates;        // nu without the weight entries
  double residual = 0.0;  // |F nu|
  std::optional<double> weight_error;
  double condition_number = 0.0;
  Index rank = 0;
  Provenance provenance = Provenance::TrueDynamics;
  Index segments_used = 0;
};

inline double weight_error(const Vector& estimate, const Vector& truth) {
  detail::require_size(estimate.size(), truth.size(), "weight_error");
  return (estimate - truth).norm();
}

/// Minimizes |F nu|^2 subject to sum(w) = 1.
///
/// The constraint is eliminated with a Householder reflector that maps the constraint normal to
/// e_1; the remaining unconstrained least-squares problem is solved by complete orthogonal
/// decomposition, which yields the minimum-norm minimizer when F is degenerate. Columns are
/// equilibrated first so that costate and weight columns of very different magnitude do not
/// drown each other.
inline WeightEstimate solve_weights(const PmpSystem& sys,
                                    const std::optional<Vector>& truth = std::nullopt) {
  const Index cols = sys.f.cols();
  if (sys.r < 1 || sys.omega_offset + sys.r > cols) {
    throw NumericalError("solve_weights: no weight columns to normalize");
  }
  if (truth) detail::require_size(truth->size(), sys.r, "solve_weights truth");

  Vector scale(cols);
  for (Index j = 0; j < cols; ++j) {
    const double norm = sys.f.col(j).norm();
    scale(j) = norm > 0.0 ? 1.0 / norm : 1.0;
  }
  const Matrix fs = sys.f * scale.asDiagonal();
  Vector constraint = Vector::Zero(cols);
  constraint.segment(sys.omega_offset, sys.r) = scale.segment(sys.omega_offset, sys.r);

  // Householder H with H c = -sign(c_0) |c| e_1.
  const double c_norm = constraint.norm();
  Vector house = constraint;
  const double alpha = constraint(0) >= 0.0 ? -c_norm : c_norm;
  house(0) -= alpha;
  const double house_sq = house.squaredNorm();
  Matrix fh = fs;
  if (house_sq > 0.0) fh -= (2.0 / house_sq) * (fs * house) * house.transpose();
  const double first = 1.0 / alpha;  // y_0 from c' H y = alpha y_0 = 1

  Vector y = Vector::Zero(cols);
  y(0) = first;
  Index rank = 0;
  double condition = std::numeric_limits<double>::infinity();
  if (cols > 1) {
    const Matrix reduced = fh.rightCols(cols - 1);
    const Vector rhs = -first * fh.col(0);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(reduced);
    y.tail(cols - 1) = cod.solve(rhs);
    rank = cod.rank();
    Eigen::JacobiSVD<Matrix> svd(reduced);
    const Vector sv = svd.singularValues();
    if (sv.size() > 0 && sv(sv.size() - 1) > 0.0) condition = sv(0) / sv(sv.size() - 1);
  }
  Vector nu_scaled = y;
  if (house_sq > 0.0) nu_scaled -= (2.0 / house_sq) * house.dot(y) * house;
  Vector nu = scale.asDiagonal() * nu_scaled;

  const double sum = nu.segment(sys.omega_offset, sys.r).sum();
  if (!std::isfinite(sum) || sum == 0.0) {
    throw NumericalError("solve_weights: normalization constraint is infeasible");
  }
  nu /= sum;

  WeightEstimate est;
  est.nu = nu;
  est.omega = nu.segment(sys.omega_offset, sys.r);
  est.costates.resize(cols - sys.r);
  est.costates << nu.head(sys.omega_offset), nu.tail(cols - sys.omega_offset - sys.r);
  est.residual = (sys.f * nu).norm();
  est.condition_number = condition;
  est.rank = rank;
  est.provenance = sys.provenance;
  est.segments_used = static_cast<Index>(sys.segments.size());
  const double reference = truth ? truth->sum() : 1.0;
  est.omega_rescaled = est.omega * reference;
  if (truth) est.weight_error = weight_error(est.omega_rescaled, *truth);
  return est;
}

}  // namespace kioc
