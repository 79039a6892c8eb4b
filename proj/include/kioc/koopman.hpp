#pragma once

#include <limits>
#include <vector>

#include <json.hpp>

#include "kioc/dynamics.hpp"
#include "kioc/observables.hpp"

namespace kioc {

/// Snapshot matrices of one segment, tau = end - start columns each.
struct DataMatrices {
  Matrix psi_x;       // N x tau, psi(x_start .. x_{end-1})
  Matrix psi_x_next;  // N x tau, psi(x_{start+1} .. x_end)
  Matrix inputs;      // m x tau
  Matrix z;           // (N+m) x tau, [psi_x; inputs]
  Matrix states;      // n x tau, x_start .. x_{end-1}

  Index tau() const { return z.cols(); }
};

inline DataMatrices build_matrices(const Segment& seg, const Observable& obs) {
  detail::require_size(seg.n(), obs.state_dim(), "build_matrices state dim");
  const Index tau = seg.tau();
  if (tau < 1) throw DimensionError("build_matrices: segment needs at least two points");
  const Index big_n = obs.dim();
  DataMatrices dm;
  dm.psi_x.resize(big_n, tau);
  dm.psi_x_next.resize(big_n, tau);
  for (Index k = 0; k < tau; ++k) {
    dm.psi_x.col(k) = obs.forward(seg.states.col(k));
    dm.psi_x_next.col(k) = obs.forward(seg.states.col(k + 1));
  }
  dm.inputs = seg.inputs.leftCols(tau);
  dm.states = seg.states.leftCols(tau);
  dm.z.resize(big_n + seg.m(), tau);
  dm.z << dm.psi_x, dm.inputs;
  return dm;
}

inline DataMatrices concatenate(const std::vector<DataMatrices>& parts) {
  if (parts.empty()) throw std::invalid_argument("concatenate: no data");
  Index total = 0;
  for (const auto& p : parts) total += p.tau();
  DataMatrices out;
  const auto& f = parts.front();
  out.psi_x.resize(f.psi_x.rows(), total);
  out.psi_x_next.resize(f.psi_x_next.rows(), total);
  out.inputs.resize(f.inputs.rows(), total);
  out.z.resize(f.z.rows(), total);
  out.states.resize(f.states.rows(), total);
  Index col = 0;
  for (const auto& p : parts) {
    out.psi_x.middleCols(col, p.tau()) = p.psi_x;
    out.psi_x_next.middleCols(col, p.tau()) = p.psi_x_next;
    out.inputs.middleCols(col, p.tau()) = p.inputs;
    out.z.middleCols(col, p.tau()) = p.z;
    out.states.middleCols(col, p.tau()) = p.states;
    col += p.tau();
  }
  return out;
}

namespace detail {

/// Factorization of gram + ridge * I. With ridge = 0 a numerically singular Gram is an error.
class GramFactor {
 public:
  GramFactor(const Matrix& gram, double ridge) {
    const Index dim = gram.rows();
    Matrix shifted = gram;
    shifted.diagonal().array() += ridge;
    if (ridge <= 0.0) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(shifted, Eigen::EigenvaluesOnly);
      const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
      const double floor = static_cast<double>(dim) * std::numeric_limits<double>::epsilon() * top;
      if (dim > 0 && !(eig.eigenvalues().minCoeff() > floor)) {
        throw NumericalError("singular Gram matrix without ridge (rank-deficient data)");
      }
    }
    ldlt_.compute(shifted);
    if (ldlt_.info() != Eigen::Success || !ldlt_.isPositive()) {
      throw NumericalError("Gram matrix is not positive definite");
    }
  }

  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return ldlt_.solve(rhs);
  }

 private:
  Eigen::LDLT<Matrix> ldlt_;
};

}  // namespace detail

/// K = Psi_{x+1} Z' (Z Z' + ridge I)^{-1}
inline Matrix solve_K(const DataMatrices& dm, double ridge) {
  const Matrix gram = dm.z * dm.z.transpose();
  const detail::GramFactor factor(gram, ridge);
  return factor.solve(dm.z * dm.psi_x_next.transpose()).transpose();
}

struct ReconstructionSolve {
  Matrix c;
  Index rank = 0;
  /// Psi_x lacked full row rank; C is the minimum-norm least-squares solution.
  bool rank_deficient = false;
};

/// C = X Psi_x^+ (Moore-Penrose pseudoinverse).
inline ReconstructionSolve solve_C(const DataMatrices& dm) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(dm.psi_x.transpose());
  ReconstructionSolve out;
  out.c = cod.solve(dm.states.transpose()).transpose();
  out.rank = cod.rank();
  out.rank_deficient = out.rank < dm.psi_x.rows();
  return out;
}

/// Operator K = [K_x | K_u], reconstruction C and the Gram matrices of all data seen so far.
struct KoopmanModel {
  Matrix k;        // N x (N+m)
  Matrix c;        // n x N
  Matrix gram_z;   // (N+m) x (N+m), sum Z Z'
  Matrix gram_psi; // N x N, sum Psi_x Psi_x'
  double ridge = 1e-8;
  int batches = 0;

  Index observable_dim() const { return k.rows(); }
  Index input_dim() const { return k.cols() - k.rows(); }
  auto kx() const { return k.leftCols(k.rows()); }
  auto ku() const { return k.rightCols(k.cols() - k.rows()); }

  /// x_hat_{t+1} = C K [psi(x); u]
  Vector predict(const Observable& obs, const Vector& x, const Vector& u) const {
    Vector z(k.cols());
    z << obs.forward(x), u;
    return c * (k * z);
  }
  /// d f_hat / dx = C K_x d psi / dx
  Matrix state_jacobian(const Observable& obs, const Vector& x) const {
    return c * kx() * obs.state_jacobian(x);
  }
  /// d f_hat / du = C K_u
  Matrix input_jacobian() const { return c * ku(); }
};

/// Analytic K and C on the first batch.
inline KoopmanModel init_model(const DataMatrices& dm, double ridge) {
  KoopmanModel model;
  model.ridge = ridge;
  model.k = solve_K(dm, ridge);
  model.c = solve_C(dm).c;
  model.gram_z = dm.z * dm.z.transpose();
  model.gram_psi = dm.psi_x * dm.psi_x.transpose();
  model.batches = 1;
  return model;
}

namespace detail {

/// Recursive least-squares step for target ~ W * regressors given the Gram of earlier regressors:
/// W + (target - W R) (I + R' G^{-1} R)^{-1} R' G^{-1}.
inline Matrix rls_step(const Matrix& w, const Matrix& gram, double ridge, const Matrix& regressors,
                       const Matrix& target) {
  const GramFactor factor(gram, ridge);
  const Matrix ginv_r = factor.solve(regressors);  // G^{-1} R
  Matrix gamma_inv = regressors.transpose() * ginv_r;
  gamma_inv.diagonal().array() += 1.0;
  const Matrix innovation = target - w * regressors;
  const Matrix gain = gamma_inv.ldlt().solve(ginv_r.transpose());  // gamma R' G^{-1}
  return w + innovation * gain;
}

}  // namespace detail

inline KoopmanModel update_K(KoopmanModel model, const DataMatrices& dm) {
  detail::require_shape(dm.z, model.k.cols(), dm.tau(), "update_K Z");
  model.k = detail::rls_step(model.k, model.gram_z, model.ridge, dm.z, dm.psi_x_next);
  model.gram_z += dm.z * dm.z.transpose();
  return model;
}

/// Innovation is taken against the raw states X, the reconstruction target of C.
inline KoopmanModel update_C(KoopmanModel model, const DataMatrices& dm) {
  detail::require_shape(dm.psi_x, model.c.cols(), dm.tau(), "update_C Psi_x");
  model.c = detail::rls_step(model.c, model.gram_psi, model.ridge, dm.psi_x, dm.states);
  model.gram_psi += dm.psi_x * dm.psi_x.transpose();
  return model;
}

inline KoopmanModel update_model(KoopmanModel model, const DataMatrices& dm) {
  model = update_K(std::move(model), dm);
  model = update_C(std::move(model), dm);
  ++model.batches;
  return model;
}

/// (1/tau) sum |psi(x_{t+1}) - K z_t|^2
inline double loss_K(const KoopmanModel& model, const Segment& seg, const Observable& obs) {
  const DataMatrices dm = build_matrices(seg, obs);
  detail::require_shape(model.k, dm.psi_x.rows(), dm.z.rows(), "loss_K operator");
  return (dm.psi_x_next - model.k * dm.z).squaredNorm() / static_cast<double>(dm.tau());
}

/// (1/tau) sum |x_t - C psi(x_t)|^2
inline double loss_C(const KoopmanModel& model, const Segment& seg, const Observable& obs) {
  const DataMatrices dm = build_matrices(seg, obs);
  detail::require_shape(model.c, dm.states.rows(), dm.psi_x.rows(), "loss_C reconstruction");
  return (dm.states - model.c * dm.psi_x).squaredNorm() / static_cast<double>(dm.tau());
}

/// sum over segments of loss_K + loss_C with K and C held fixed.
inline double total_loss(const KoopmanModel& model, const Dataset& data, const Observable& obs) {
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double l = loss_K(model, data[j], obs) + loss_C(model, data[j], obs);
    if (!std::isfinite(l)) {
      throw NumericalError("non-finite DKR loss on batch " + std::to_string(j));
    }
    total += l;
  }
  return total;
}

/// Gradient of total_loss with respect to the observable parameters.
inline Vector total_loss_gradient(const KoopmanModel& model, const Dataset& data,
                                  const Observable& obs) {
  Vector grad = Vector::Zero(obs.param_count());
  if (grad.size() == 0) return grad;
  const Matrix kx = model.kx();
  const Matrix ku = model.ku();
  for (const auto& seg : data) {
    const double scale = 2.0 / static_cast<double>(seg.tau());
    for (Index k = 0; k < seg.tau(); ++k) {
      const Vector x = seg.states.col(k);
      const Vector x_next = seg.states.col(k + 1);
      const Vector psi = obs.forward(x);
      const Vector dyn_residual = obs.forward(x_next) - kx * psi - ku * seg.inputs.col(k);
      const Vector recon_residual = x - model.c * psi;
      const Vector sens_x = -(kx.transpose() * dyn_residual) - model.c.transpose() * recon_residual;
      grad += scale * (obs.param_gradient(x_next, dyn_residual) + obs.param_gradient(x, sens_x));
    }
  }
  return grad;
}

struct ThetaSettings {
  int max_steps = 200;
  double initial_rate = 1e-2;
  double armijo = 1e-4;
  double min_rate = 1e-14;
};

struct ThetaTrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps_taken = 0;
};

/// Gradient descent with backtracking on the observable parameters; the loss never increases.
inline ThetaTrainResult train_theta(const KoopmanModel& model, const Dataset& data, Observable& obs,
                                    const ThetaSettings& cfg = {}) {
  ThetaTrainResult out;
  out.initial_loss = total_loss(model, data, obs);
  out.final_loss = out.initial_loss;
  if (obs.param_count() == 0) return out;

  Vector theta = obs.params();
  double loss = out.initial_loss;
  double rate = cfg.initial_rate;
  for (int step = 0; step < cfg.max_steps; ++step) {
    const Vector grad = total_loss_gradient(model, data, obs);
    const double slope = grad.squaredNorm();
    if (!std::isfinite(slope)) throw NumericalError("non-finite observable gradient");
    if (slope == 0.0) break;
    bool accepted = false;
    while (rate >= cfg.min_rate) {
      const Vector trial = theta - rate * grad;
      obs.set_params(trial);
      double trial_loss = std::numeric_limits<double>::infinity();
      try {
        trial_loss = total_loss(model, data, obs);
      } catch (const NumericalError&) {
        trial_loss = std::numeric_limits<double>::infinity();
      }
      if (trial_loss <= loss - cfg.armijo * rate * slope) {
        theta = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
      rate *= 0.5;
    }
    if (!accepted) {
      obs.set_params(theta);
      break;
    }
    ++out.steps_taken;
    rate *= 2.0;
  }
  obs.set_params(theta);
  out.final_loss = loss;
  return out;
}

/// Reconstruction and one-step error diagnostics for a fitted representation on a dataset.
struct ReconDiagnostics {
  double recon_max = 0.0;        // max_t |x_t - C psi(x_t)|
  double state_step_max = 0.0;   // mu_x, max |x_{t+1} - x_t|
  double input_step_max = 0.0;   // mu_u, max |u_{t+1} - u_t|
  double lipschitz = 0.0;        // mu_g, empirical Lipschitz constant of psi
  double norm_ckx = 0.0;         // |C K_x|_2
  double norm_cku = 0.0;         // |C K_u|_2
  double bound = 0.0;            // (|C K_x| mu_g + 1) mu_x + |C K_u| mu_u + recon_max
  double one_step_error_max = 0.0;
};

inline ReconDiagnostics dkr_max_recon_error(const KoopmanModel& model, const Dataset& data,
                                            const Observable& obs, Index lipschitz_samples = 64,
                                            std::uint64_t seed = 0) {
  if (data.empty()) throw std::invalid_argument("dkr_max_recon_error: empty dataset");
  ReconDiagnostics d;
  Vector lower = data.front().states.col(0);
  Vector upper = lower;
  for (const auto& seg : data) {
    for (Index k = 0; k <= seg.tau(); ++k) {
      const Vector x = seg.states.col(k);
      lower = lower.cwiseMin(x);
      upper = upper.cwiseMax(x);
      d.recon_max = std::max(d.recon_max, (x - model.c * obs.forward(x)).norm());
      if (k < seg.tau()) {
        const Vector next = seg.states.col(k + 1);
        d.state_step_max = std::max(d.state_step_max, (next - x).norm());
        d.input_step_max =
            std::max(d.input_step_max, (seg.inputs.col(k + 1) - seg.inputs.col(k)).norm());
        d.one_step_error_max = std::max(
            d.one_step_error_max, (model.predict(obs, x, seg.inputs.col(k)) - next).norm());
      }
    }
  }
  if ((upper - lower).maxCoeff() > 0.0) {
    d.lipschitz = empirical_lipschitz(obs, {lower, upper}, lipschitz_samples, seed);
  }
  d.norm_ckx = detail::spectral_norm(model.c * model.kx());
  d.norm_cku = detail::spectral_norm(model.c * model.ku());
  d.bound = (d.norm_ckx * d.lipschitz + 1.0) * d.state_step_max + d.norm_cku * d.input_step_max +
            d.recon_max;
  return d;
}

}  // namespace kioc
