#pragma once

#include <algorithm>
#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kioc/demo_gen.hpp"
#include "kioc/ioc.hpp"
#include "kioc/koopman.hpp"
#include "kioc/observables.hpp"

namespace kioc {

/// Pendulum experiment: demonstration, segmentation, representation and grids.
struct ExperimentConfig {
  PendulumParams pendulum{1.0, 10.0, 10.0, 0.1};
  Index horizon = 10;
  Vector x0 = Vector::Zero(2);
  Vector goal = pendulum_goal();
  Vector omega_true = Vector{{2.0, 1.0, 1.0}};
  /// Explicit windows; when empty, windows of segment_steps steps every segment_stride steps.
  std::vector<Window> windows;
  Index segment_steps = 4;
  Index segment_stride = 2;

  MlpConfig mlp{2, {64}, 32, Activation::Tanh, 0, 1.0, 0.0};
  double ridge = 1e-16;
  ThetaSettings theta{};
  OcSettings oc{1e-12, 1e-10, 20000, 1.0, 1e-4, 1e-16};
  Index lipschitz_samples = 64;

  std::vector<double> recon_grid = {1e-4, 1e-5, 1e-6};
  std::vector<Index> hidden_grid = {64, 128, 256};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  /// Extra theta-training rounds allowed while chasing a reconstruction threshold.
  int refine_rounds = 20;
  std::string output_dir = "out";

  std::vector<Window> segment_windows() const {
    return windows.empty() ? sliding_windows(horizon, segment_steps, segment_stride) : windows;
  }

  void validate() const {
    pendulum.validate();
    if (horizon < 2) throw std::invalid_argument("ExperimentConfig: horizon must be >= 2");
    detail::require_size(x0.size(), 2, "ExperimentConfig x0");
    detail::require_size(goal.size(), 2, "ExperimentConfig goal");
    detail::require_size(omega_true.size(), 3, "ExperimentConfig omega_true");
    mlp.validate();
    if (recon_grid.empty() || hidden_grid.empty() || seeds.empty()) {
      throw std::invalid_argument("ExperimentConfig: grids must be nonempty");
    }
    auto sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("ExperimentConfig: seeds must be distinct");
    }
  }
};

/// Demonstration for an experiment: forward-optimal trajectory under the true weights.
inline OcSolution make_demonstration(const ExperimentConfig& cfg) {
  return solve_oc(pendulum_system(cfg.pendulum), pendulum_feature_spec(cfg.goal), cfg.omega_true,
                  cfg.x0, cfg.horizon, cfg.oc);
}

struct IterationRecord {
  int iteration = 0;  // segments 1..i incorporated
  double loss_k = 0.0;
  double loss_c = 0.0;
  double recon_max = 0.0;
  Vector omega;
  Vector omega_rescaled;
  double residual = 0.0;
};

struct RunResult {
  std::vector<IterationRecord> iterations;
  WeightEstimate estimate;
  ReconDiagnostics diagnostics;
  std::optional<double> trajectory_error;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

struct Algorithm1Settings {
  double ridge = 1e-16;
  ThetaSettings theta{};
  std::optional<Vector> truth;
  Index lipschitz_samples = 64;
};

struct Algorithm1Output {
  RunResult result;
  KoopmanModel model;
  std::unique_ptr<Observable> observable;
};

/// Totals of the two DKR losses over a dataset.
inline std::pair<double, double> loss_totals(const KoopmanModel& model, const Dataset& data,
                                             const Observable& obs) {
  double lk = 0.0;
  double lc = 0.0;
  for (const auto& seg : data) {
    lk += loss_K(model, seg, obs);
    lc += loss_C(model, seg, obs);
  }
  return {lk, lc};
}

inline WeightEstimate estimate_weights(const Dataset& data, const FeatureSpec& feat,
                                       const DynamicsDerivatives& dyn,
                                       const std::optional<Vector>& truth) {
  std::vector<PmpSystem> systems;
  systems.reserve(data.size());
  for (const auto& seg : data) systems.push_back(assemble_pmp(seg, feat, dyn));
  return solve_weights(stack_segments(systems), truth);
}

/// Joint identification and weight estimation over segments in the given order:
/// analytic K, C on the first segment; then per new segment a recursive operator update,
/// an observable-parameter solve, and a weight estimate over all segments so far.
inline Algorithm1Output run_algorithm1(const Dataset& data, const FeatureSpec& feat,
                                       std::unique_ptr<Observable> obs,
                                       const Algorithm1Settings& cfg) {
  if (data.size() < 2) throw std::invalid_argument("run_algorithm1: need at least two segments");
  const auto started = std::chrono::steady_clock::now();
  Algorithm1Output out;
  out.model = init_model(build_matrices(data.front(), *obs), cfg.ridge);

  for (std::size_t i = 1; i < data.size(); ++i) {
    const int iteration = static_cast<int>(i) + 1;
    try {
      out.model = update_model(std::move(out.model), build_matrices(data[i], *obs));
      const Dataset seen(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      train_theta(out.model, seen, *obs, cfg.theta);
      const WeightEstimate est =
          estimate_weights(seen, feat, koopman_derivatives(out.model, *obs), cfg.truth);
      const auto [lk, lc] = loss_totals(out.model, seen, *obs);
      IterationRecord rec;
      rec.iteration = iteration;
      rec.loss_k = lk;
      rec.loss_c = lc;
      rec.recon_max = dkr_max_recon_error(out.model, seen, *obs, 2).recon_max;
      rec.omega = est.omega;
      rec.omega_rescaled = est.omega_rescaled;
      rec.residual = est.residual;
      out.result.iterations.push_back(std::move(rec));
      out.result.estimate = est;
    } catch (const NumericalError& e) {
      throw NumericalError("run_algorithm1 iteration " + std::to_string(iteration) + ": " + e.what());
    }
  }
  out.result.diagnostics = dkr_max_recon_error(out.model, data, *obs, cfg.lipschitz_samples);
  out.observable = std::move(obs);
  out.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Representation learning only: the operator and observable steps of run_algorithm1.
inline Algorithm1Output train_dkr(const Dataset& data, std::unique_ptr<Observable> obs,
                                  const Algorithm1Settings& cfg) {
  if (data.empty()) throw std::invalid_argument("train_dkr: empty dataset");
  const auto started = std::chrono::steady_clock::now();
  Algorithm1Output out;
  out.model = init_model(build_matrices(data.front(), *obs), cfg.ridge);
  for (std::size_t i = 1; i < data.size(); ++i) {
    out.model = update_model(std::move(out.model), build_matrices(data[i], *obs));
    const Dataset seen(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    train_theta(out.model, seen, *obs, cfg.theta);
    const auto [lk, lc] = loss_totals(out.model, seen, *obs);
    IterationRecord rec;
    rec.iteration = static_cast<int>(i) + 1;
    rec.loss_k = lk;
    rec.loss_c = lc;
    rec.recon_max = dkr_max_recon_error(out.model, seen, *obs, 2).recon_max;
    out.result.iterations.push_back(std::move(rec));
  }
  out.result.diagnostics = dkr_max_recon_error(out.model, data, *obs, cfg.lipschitz_samples);
  out.observable = std::move(obs);
  out.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

inline Algorithm1Settings algorithm1_settings(const ExperimentConfig& cfg) {
  return {cfg.ridge, cfg.theta, cfg.omega_true, cfg.lipschitz_samples};
}

/// 2-norm of the stacked state-input difference between the demonstration and the trajectory
/// that is optimal under the estimated weights (true dynamics, same x0 and horizon).
inline double traj_error(const Vector& omega_rescaled, const ExperimentConfig& cfg,
                         const Trajectory& demo) {
  if (!omega_rescaled.allFinite()) throw NumericalError("traj_error: non-finite weights");
  const SystemSpec spec = pendulum_system(cfg.pendulum);
  const FeatureSpec feat = pendulum_feature_spec(cfg.goal);
  if ((omega_rescaled.array() < 0.0).any() || !(omega_rescaled.array() > 0.0).any()) {
    throw ConvergenceError("traj_error: estimated weights do not define a bounded objective", 0.0);
  }
  const OcSolution sol = solve_oc(spec, feat, omega_rescaled, cfg.x0, cfg.horizon, cfg.oc);
  const double ds = (sol.trajectory.states - demo.states).squaredNorm();
  const double du = (sol.trajectory.inputs - demo.inputs).squaredNorm();
  return std::sqrt(ds + du);
}

/// Builds the experiment dataset from a demonstration.
inline Dataset experiment_dataset(const ExperimentConfig& cfg, const Trajectory& demo) {
  return slice_segments(demo, cfg.segment_windows());
}

inline MlpConfig mlp_for(const ExperimentConfig& cfg, std::uint64_t seed,
                         std::optional<Index> hidden = std::nullopt) {
  MlpConfig m = cfg.mlp;
  m.seed = seed;
  if (hidden) m.hidden = std::vector<Index>(m.hidden.size(), *hidden);
  return m;
}

/// run_algorithm1 on the experiment dataset with an MLP observable, plus the trajectory error.
inline Algorithm1Output run_experiment(const ExperimentConfig& cfg, const Trajectory& demo,
                                       std::uint64_t seed,
                                       std::optional<Index> hidden = std::nullopt) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg, demo);
  Algorithm1Output out = run_algorithm1(data, pendulum_feature_spec(cfg.goal),
                                        mlp_observable(mlp_for(cfg, seed, hidden)),
                                        algorithm1_settings(cfg));
  out.result.seed = seed;
  try {
    out.result.trajectory_error = traj_error(out.result.estimate.omega_rescaled, cfg, demo);
  } catch (const std::runtime_error&) {
    out.result.trajectory_error.reset();
  }
  return out;
}

struct TableRow {
  double grid_value = 0.0;
  std::optional<std::uint64_t> seed;  // empty for the median row
  Vector omega_rescaled;
  double weight_error = 0.0;
  double traj_error = std::numeric_limits<double>::quiet_NaN();
  double recon_max = 0.0;
  bool reached = true;
};

struct TableResult {
  std::string name;
  std::string grid_label;
  std::vector<TableRow> rows;     // one per grid point and seed
  std::vector<TableRow> medians;  // one per grid point
  bool weight_trend_ok = true;
  bool traj_trend_ok = true;
  bool trend_checked = false;
  /// Rank correlation between weight error and trajectory error over reached seed rows.
  double spearman = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline TableRow median_row(double grid_value, const std::vector<TableRow>& rows) {
  TableRow med;
  med.grid_value = grid_value;
  std::vector<const TableRow*> reached;
  for (const auto& r : rows) {
    if (r.grid_value == grid_value && r.seed && r.reached) reached.push_back(&r);
  }
  med.reached = !reached.empty();
  if (!med.reached) return med;
  const Index dim = reached.front()->omega_rescaled.size();
  med.omega_rescaled.resize(dim);
  for (Index i = 0; i < dim; ++i) {
    std::vector<double> comp;
    for (const auto* r : reached) comp.push_back(r->omega_rescaled(i));
    med.omega_rescaled(i) = median(comp);
  }
  std::vector<double> we;
  std::vector<double> te;
  std::vector<double> rc;
  for (const auto* r : reached) {
    we.push_back(r->weight_error);
    te.push_back(r->traj_error);
    rc.push_back(r->recon_max);
  }
  med.weight_error = median(we);
  med.traj_error = median(te);
  med.recon_max = median(rc);
  return med;
}

/// Median weight error non-increasing along the grid (reached points only), and the trajectory
/// error non-increasing on every step where the weight error did not increase.
inline void check_trend(TableResult& table) {
  std::vector<const TableRow*> pts;
  for (const auto& m : table.medians) {
    if (m.reached) pts.push_back(&m);
  }
  table.trend_checked = pts.size() >= 2;
  table.weight_trend_ok = true;
  table.traj_trend_ok = true;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const bool weight_ok = pts[i]->weight_error <= pts[i - 1]->weight_error;
    table.weight_trend_ok = table.weight_trend_ok && weight_ok;
    if (weight_ok && !(pts[i]->traj_error <= pts[i - 1]->traj_error)) table.traj_trend_ok = false;
  }
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation with average ranks for ties; NaN when either side is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

inline double table_spearman(const TableResult& table) {
  std::vector<double> we;
  std::vector<double> te;
  for (const auto& r : table.rows) {
    if (r.reached && std::isfinite(r.traj_error)) {
      we.push_back(r.weight_error);
      te.push_back(r.traj_error);
    }
  }
  return spearman(we, te);
}

inline TableRow row_from(const RunResult& run, double grid_value) {
  TableRow row;
  row.grid_value = grid_value;
  row.seed = run.seed;
  row.omega_rescaled = run.estimate.omega_rescaled;
  row.weight_error = run.estimate.weight_error.value_or(std::numeric_limits<double>::quiet_NaN());
  row.traj_error = run.trajectory_error.value_or(std::numeric_limits<double>::infinity());
  row.recon_max = run.diagnostics.recon_max;
  return row;
}

}  // namespace detail

/// Weight-estimation quality against the reconstruction error reached by observable training.
///
/// Each seed trains one representation; after run_algorithm1, further theta rounds (each followed by
/// an analytic re-solve of K and C on all segments) run until the maximum reconstruction error
/// drops below each threshold in turn. Thresholds are visited from loosest to tightest.
inline TableResult run_table1(const ExperimentConfig& cfg, const Trajectory& demo) {
  cfg.validate();
  TableResult table;
  table.name = "table1";
  table.grid_label = "recon_max_threshold";
  auto grid = cfg.recon_grid;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const Dataset data = experiment_dataset(cfg, demo);
  const FeatureSpec feat = pendulum_feature_spec(cfg.goal);

  for (const auto seed : cfg.seeds) {
    Algorithm1Output run = run_experiment(cfg, demo, seed);
    RunResult current = run.result;
    int rounds = 0;
    for (const double threshold : grid) {
      while (current.diagnostics.recon_max > threshold && rounds < cfg.refine_rounds) {
        ++rounds;
        train_theta(run.model, data, *run.observable, cfg.theta);
        std::vector<DataMatrices> parts;
        for (const auto& seg : data) parts.push_back(build_matrices(seg, *run.observable));
        run.model = init_model(concatenate(parts), cfg.ridge);
        run.model.batches = static_cast<int>(data.size());
        current.estimate = estimate_weights(data, feat, koopman_derivatives(run.model, *run.observable),
                                            cfg.omega_true);
        current.diagnostics =
            dkr_max_recon_error(run.model, data, *run.observable, cfg.lipschitz_samples);
        try {
          current.trajectory_error = traj_error(current.estimate.omega_rescaled, cfg, demo);
        } catch (const std::runtime_error&) {
          current.trajectory_error.reset();
        }
      }
      TableRow row = detail::row_from(current, threshold);
      row.reached = current.diagnostics.recon_max <= threshold;
      table.rows.push_back(std::move(row));
    }
  }
  for (const double g : grid) table.medians.push_back(detail::median_row(g, table.rows));
  detail::check_trend(table);
  table.spearman = detail::table_spearman(table);
  return table;
}

/// Weight-estimation quality against the hidden width of the observable network, fixed budget.
inline TableResult run_table2(const ExperimentConfig& cfg, const Trajectory& demo) {
  cfg.validate();
  TableResult table;
  table.name = "table2";
  table.grid_label = "hidden_nodes";
  auto grid = cfg.hidden_grid;
  std::sort(grid.begin(), grid.end());
  for (const Index width : grid) {
    for (const auto seed : cfg.seeds) {
      const Algorithm1Output run = run_experiment(cfg, demo, seed, width);
      table.rows.push_back(detail::row_from(run.result, static_cast<double>(width)));
    }
  }
  for (const Index width : grid) {
    table.medians.push_back(detail::median_row(static_cast<double>(width), table.rows));
  }
  detail::check_trend(table);
  table.spearman = detail::table_spearman(table);
  return table;
}

}  // namespace kioc
