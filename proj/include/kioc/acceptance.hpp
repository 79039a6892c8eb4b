#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kioc/harness.hpp"
#include "kioc/report.hpp"

namespace kioc::acceptance {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline CheckResult timed(int id, std::string name, const std::function<bool(std::ostream&)>& body,
                         double budget_seconds = 0.0) {
  CheckResult res;
  res.id = id;
  res.name = std::move(name);
  std::ostringstream detail;
  const auto start = std::chrono::steady_clock::now();
  try {
    res.passed = body(detail);
  } catch (const std::exception& e) {
    res.passed = false;
    detail << "exception: " << e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_seconds > 0.0 && res.seconds > budget_seconds) {
    res.passed = false;
    detail << " runtime " << res.seconds << " s exceeds " << budget_seconds << " s";
  }
  res.detail = detail.str();
  return res;
}

inline double rel_err(const Matrix& approx, const Matrix& exact) {
  const double scale = std::max(exact.norm(), 1e-12);
  return (approx - exact).norm() / scale;
}

/// Stable 2x2 A with spectral radius 0.9 and a 2x1 B from a seeded stream.
inline std::pair<Matrix, Matrix> random_linear_system(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(2, 2);
  Matrix b(2, 1);
  for (Index i = 0; i < 4; ++i) a(i) = normal(rng);
  for (Index i = 0; i < 2; ++i) b(i) = normal(rng);
  const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
  a *= 0.9 / radius;
  return {a, b};
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

}  // namespace detail

inline CheckResult oracle_recovery(const ExperimentConfig& cfg) {
  return detail::timed(
      1, "oracle IOC recovery (true dynamics, one segment)",
      [&](std::ostream& out) {
        const OcSolution demo = make_demonstration(cfg);
        const Segment seg = make_segment(demo.trajectory, {0, cfg.horizon});
        const WeightEstimate est =
            solve_weights(assemble_pmp(seg, pendulum_feature_spec(cfg.goal),
                                       true_derivatives(pendulum_system(cfg.pendulum))),
                          cfg.omega_true);
        out << "pmp_residual=" << detail::sci(demo.pmp_residual)
            << " weight_error=" << detail::sci(*est.weight_error);
        return demo.pmp_residual < 1e-8 && *est.weight_error < 1e-4;
      },
      10.0);
}

inline CheckResult linear_exactness() {
  return detail::timed(
      2, "linear-system exactness with identity observables",
      [](std::ostream& out) {
        const auto [a, b] = detail::random_linear_system(11);
        const SystemSpec sys = linear_system(a, b);
        std::mt19937_64 rng(12);
        const Matrix excitation = detail::random_matrix(1, 31, rng);
        const Trajectory probe = simulate(sys, Vector{{1.0, -0.5}}, excitation);
        const auto obs = identity_observable(2);
        const KoopmanModel model =
            init_model(build_matrices(make_segment(probe, {0, probe.horizon()}), *obs), 0.0);
        Matrix ab(2, 3);
        ab << a, b;
        const double k_err = (model.k - ab).norm();
        const double c_err = (model.c - Matrix::Identity(2, 2)).norm();

        const Vector goal{{1.0, -1.0}};
        const FeatureSpec feat = goal_features(goal);
        const Vector truth{{2.0, 1.0, 1.0}};
        OcSettings oc;
        oc.grad_tol = 1e-12;
        oc.pmp_tol = 1e-10;
        const OcSolution demo = solve_oc(sys, feat, truth, Vector{{0.0, 0.0}}, 20, oc);
        const Dataset data = slice_segments(demo.trajectory, sliding_windows(20, 4, 2));
        const WeightEstimate koop =
            estimate_weights(data, feat, koopman_derivatives(model, *obs), truth);
        const WeightEstimate exact = estimate_weights(data, feat, true_derivatives(sys), truth);
        const double w_gap = (koop.omega - exact.omega).norm();
        out << "|K-[A B]|=" << detail::sci(k_err) << " |C-I|=" << detail::sci(c_err)
            << " |w_koopman-w_true|=" << detail::sci(w_gap);
        return k_err < 1e-8 && c_err < 1e-8 && w_gap < 1e-6;
      },
      5.0);
}

inline CheckResult recursive_equals_batch() {
  return detail::timed(
      3, "recursive updates equal batch solves",
      [](std::ostream& out) {
        std::mt19937_64 rng(21);
        constexpr Index big_n = 4;
        constexpr Index n = 2;
        constexpr Index m = 1;
        std::vector<DataMatrices> batches;
        for (Index tau : {9, 7, 8}) {
          DataMatrices dm;
          dm.psi_x = detail::random_matrix(big_n, tau, rng);
          dm.psi_x_next = detail::random_matrix(big_n, tau, rng);
          dm.inputs = detail::random_matrix(m, tau, rng);
          dm.z.resize(big_n + m, tau);
          dm.z << dm.psi_x, dm.inputs;
          dm.states = detail::random_matrix(n, tau, rng);
          batches.push_back(std::move(dm));
        }
        KoopmanModel rec = init_model(batches[0], 0.0);
        rec = update_model(std::move(rec), batches[1]);
        rec = update_model(std::move(rec), batches[2]);
        const KoopmanModel batch = init_model(concatenate(batches), 0.0);
        const double k_rel = detail::rel_err(rec.k, batch.k);
        const double c_rel = detail::rel_err(rec.c, batch.c);
        out << "K rel=" << detail::sci(k_rel) << " C rel=" << detail::sci(c_rel);
        return k_rel < 1e-6 && c_rel < 1e-6;
      },
      1.0);
}

inline CheckResult derivative_suite() {
  return detail::timed(4, "MLP and adjoint derivatives against central differences",
                       [](std::ostream& out) {
    MlpConfig cfg;
    cfg.hidden = {16};
    cfg.output_dim = 8;
    cfg.bias_scale = 0.5;
    cfg.seed = 31;
    MlpObservable mlp(cfg);
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst_jac = 0.0;
    double worst_grad = 0.0;
    const Vector theta = mlp.params();
    for (int p = 0; p < 50; ++p) {
      const Vector x{{unit(rng), unit(rng)}};
      const Matrix jac = mlp.state_jacobian(x);
      Matrix fd(jac.rows(), jac.cols());
      const double h = 1e-5;
      for (Index j = 0; j < 2; ++j) {
        Vector xp = x;
        Vector xm = x;
        xp(j) += h;
        xm(j) -= h;
        fd.col(j) = (mlp.forward(xp) - mlp.forward(xm)) / (2 * h);
      }
      worst_jac = std::max(worst_jac, detail::rel_err(jac, fd));

      Vector s(mlp.dim());
      for (Index i = 0; i < s.size(); ++i) s(i) = normal(rng);
      const Vector grad = mlp.param_gradient(x, s);
      Vector fd_grad(theta.size());
      for (Index k = 0; k < theta.size(); ++k) {
        Vector tp = theta;
        Vector tm = theta;
        tp(k) += h;
        tm(k) -= h;
        mlp.set_params(tp);
        const double fp = s.dot(mlp.forward(x));
        mlp.set_params(tm);
        const double fm = s.dot(mlp.forward(x));
        fd_grad(k) = (fp - fm) / (2 * h);
      }
      mlp.set_params(theta);
      worst_grad = std::max(worst_grad, detail::rel_err(grad, fd_grad));
    }

    const PendulumParams pp{1.0, 10.0, 10.0, 0.1};
    const SystemSpec sys = pendulum_system(pp);
    const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
    const Vector w{{2.0, 1.0, 1.0}};
    const Matrix inputs = detail::random_matrix(1, 11, rng);
    const Vector x0{{0.3, -0.2}};
    const Matrix adj = adjoint_sweep(simulate(sys, x0, inputs), sys, feat, w).gradient;
    Matrix fd_adj(adj.rows(), adj.cols());
    const double h = 1e-6;
    for (Index t = 0; t < inputs.cols(); ++t) {
      Matrix up = inputs;
      Matrix um = inputs;
      up(0, t) += h;
      um(0, t) -= h;
      fd_adj(0, t) = (eval_objective(simulate(sys, x0, up), feat, w) -
                      eval_objective(simulate(sys, x0, um), feat, w)) /
                     (2 * h);
    }
    const double adj_err = detail::rel_err(adj, fd_adj);
    out << "jacobian rel=" << detail::sci(worst_jac) << " theta-gradient rel="
        << detail::sci(worst_grad) << " adjoint rel=" << detail::sci(adj_err);
    return worst_jac < 1e-5 && worst_grad < 1e-4 && adj_err < 1e-4;
  });
}

inline CheckResult one_step_bound(const ExperimentConfig& cfg) {
  return detail::timed(5, "one-step prediction error within the reconstruction bound",
                       [&](std::ostream& out) {
    const OcSolution demo = make_demonstration(cfg);
    const Dataset data = experiment_dataset(cfg, demo.trajectory);
    double worst_slack = std::numeric_limits<double>::infinity();
    int checked = 0;
    for (const auto seed : cfg.seeds) {
      const Algorithm1Output run = run_experiment(cfg, demo.trajectory, seed);
      for (std::size_t i = 1; i <= data.size(); ++i) {
        const Dataset prefix(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(i));
        const ReconDiagnostics d =
            dkr_max_recon_error(run.model, prefix, *run.observable, cfg.lipschitz_samples, seed);
        worst_slack = std::min(worst_slack, d.bound + 1e-9 - d.one_step_error_max);
        ++checked;
      }
    }
    out << checked << " datasets, min(bound - error)=" << detail::sci(worst_slack);
    return checked > 0 && worst_slack >= 0.0;
  });
}

inline CheckResult weight_error_anchors() {
  return detail::timed(6, "weight-error arithmetic anchors", [](std::ostream& out) {
    const Vector truth{{2.0, 1.0, 1.0}};
    const double e1 = weight_error(Vector{{1.92, 1.12, 0.96}}, truth);
    const double e2 = weight_error(Vector{{1.96, 1.05, 0.98}}, truth);
    out << "row a=" << e1 << " row b=" << e2;
    return e1 >= 0.14 && e1 <= 0.16 && e2 >= 0.06 && e2 <= 0.08;
  });
}

inline CheckResult trend_reproduction(const ExperimentConfig& cfg) {
  return detail::timed(
      7, "median weight error non-increasing across both grids",
      [&](std::ostream& out) {
        const Trajectory demo = make_demonstration(cfg).trajectory;
        const TableResult t1 = run_table1(cfg, demo);
        const TableResult t2 = run_table2(cfg, demo);
        const auto describe = [&](const TableResult& t) {
          out << t.name << " medians:";
          for (const auto& m : t.medians) {
            out << ' ' << io::format_double(m.grid_value) << "->"
                << (m.reached ? detail::sci(m.weight_error) : std::string("unreached"));
          }
          out << " (traj trend " << (t.traj_trend_ok ? "ok" : "violated")
              << ", spearman " << detail::sci(t.spearman) << "); ";
        };
        describe(t1);
        describe(t2);
        const auto final_ok = [](const TableResult& t) {
          return !t.medians.empty() && t.medians.back().reached &&
                 t.medians.back().weight_error <= 0.6;
        };
        return t1.trend_checked && t1.weight_trend_ok && t2.trend_checked && t2.weight_trend_ok &&
               final_ok(t1) && final_ok(t2);
      },
      900.0);
}

inline CheckResult determinism(const ExperimentConfig& cfg) {
  return detail::timed(8, "identical runs give byte-identical traces", [&](std::ostream& out) {
    const Trajectory demo = make_demonstration(cfg).trajectory;
    const std::uint64_t seed = cfg.seeds.front();
    const std::string first = run_to_json(run_experiment(cfg, demo, seed).result).dump(2);
    const std::string second = run_to_json(run_experiment(cfg, demo, seed).result).dump(2);
    out << first.size() << " bytes";
    return first == second;
  });
}

inline std::vector<CheckResult> run_all(const ExperimentConfig& cfg) {
  return {oracle_recovery(cfg),   linear_exactness(),       recursive_equals_batch(),
          derivative_suite(),     one_step_bound(cfg),      weight_error_anchors(),
          trend_reproduction(cfg), determinism(cfg)};
}

inline std::string format(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << r.detail << " ("
      << detail::sci(r.seconds) << " s)";
  return out.str();
}

}  // namespace kioc::acceptance
