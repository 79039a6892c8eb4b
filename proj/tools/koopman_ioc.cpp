#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kioc/acceptance.hpp"
#include "kioc/report.hpp"

namespace fs = std::filesystem;
using namespace kioc;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string provenance = "koopman";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "observable initialization seed");
  cmd->add_option("--out", c.out, "output directory");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  io::write_file(path.string(), j.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
}

Trajectory demonstration(const ExperimentConfig& cfg, const std::string& demo_path) {
  if (demo_path.empty()) return make_demonstration(cfg).trajectory;
  const std::string text = io::read_file(demo_path);
  if (fs::path(demo_path).extension() == ".csv") return trajectory_from_csv(text);
  return trajectory_from_json(json::parse(text));
}

int cmd_demo(const Common& c, const std::optional<Index>& horizon, const std::vector<double>& x0,
             const std::vector<double>& goal, const std::vector<double>& weights,
             const std::optional<double>& grad_tol, const std::optional<double>& pmp_tol) {
  ExperimentConfig cfg = load(c);
  if (horizon) cfg.horizon = *horizon;
  if (!x0.empty()) cfg.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Index>(x0.size()));
  if (!goal.empty()) cfg.goal = Eigen::Map<const Vector>(goal.data(), static_cast<Index>(goal.size()));
  if (!weights.empty()) {
    cfg.omega_true = Eigen::Map<const Vector>(weights.data(), static_cast<Index>(weights.size()));
  }
  if (grad_tol) cfg.oc.grad_tol = *grad_tol;
  if (pmp_tol) cfg.oc.pmp_tol = *pmp_tol;
  cfg.validate();
  const OcSolution sol = make_demonstration(cfg);
  const fs::path dir = out_dir(cfg);
  write_json(dir / "demo.json", trajectory_to_json(sol.trajectory));
  io::write_file((dir / "demo.csv").string(), trajectory_to_csv(sol.trajectory));
  std::cout << "wrote " << (dir / "demo.csv").string() << "\n";
  json meta;
  meta["weights"] = io::to_json(sol.weights);
  meta["objective"] = sol.objective;
  meta["grad_norm"] = sol.grad_norm;
  meta["pmp_residual"] = sol.pmp_residual;
  meta["iterations"] = sol.iterations;
  meta["seed"] = cfg.seeds.front();
  meta["settings"] = config_to_json(cfg);
  write_json(dir / "demo.meta.json", meta);
  return 0;
}

int cmd_train(const Common& c, const std::string& demo_path) {
  const ExperimentConfig cfg = load(c);
  const Dataset data = experiment_dataset(cfg, demonstration(cfg, demo_path));
  const fs::path dir = out_dir(cfg);
  for (const auto seed : cfg.seeds) {
    Algorithm1Output run = train_dkr(data, mlp_observable(mlp_for(cfg, seed)), algorithm1_settings(cfg));
    run.result.seed = seed;
    const std::string tag = "seed" + std::to_string(seed);
    write_json(dir / ("model_" + tag + ".json"), model_to_json(run.model, *run.observable));
    json trace = run_to_json(run.result);
    trace.erase("estimate");
    trace.erase("trajectory_error");
    write_json(dir / ("train_" + tag + ".json"), trace);
  }
  return 0;
}

int cmd_estimate(const Common& c, const std::string& demo_path, const std::string& model_path) {
  const ExperimentConfig cfg = load(c);
  const Provenance prov = provenance_from_string(c.provenance);
  const Trajectory demo = demonstration(cfg, demo_path);
  const Dataset data = experiment_dataset(cfg, demo);
  const FeatureSpec feat = pendulum_feature_spec(cfg.goal);
  WeightEstimate est;
  if (prov == Provenance::TrueDynamics) {
    est = estimate_weights(data, feat, true_derivatives(pendulum_system(cfg.pendulum)), cfg.omega_true);
  } else {
    if (model_path.empty()) throw std::invalid_argument("estimate: --model is required for koopman provenance");
    const LoadedModel loaded = model_from_json(json::parse(io::read_file(model_path)));
    est = estimate_weights(data, feat, koopman_derivatives(loaded.model, *loaded.observable),
                           cfg.omega_true);
  }
  json report = estimate_to_json(est);
  try {
    report["trajectory_error"] = traj_error(est.omega_rescaled, cfg, demo);
  } catch (const std::runtime_error& e) {
    report["trajectory_error"] = nullptr;
    std::cerr << "trajectory error unavailable: " << e.what() << "\n";
  }
  write_json(out_dir(cfg) / ("estimate_" + to_string(prov) + ".json"), report);
  return 0;
}

int cmd_run(const Common& c, const std::string& demo_path) {
  const ExperimentConfig cfg = load(c);
  const Trajectory demo = demonstration(cfg, demo_path);
  const fs::path dir = out_dir(cfg);
  for (const auto seed : cfg.seeds) {
    const Algorithm1Output run = run_experiment(cfg, demo, seed);
    const std::string tag = "seed" + std::to_string(seed);
    write_json(dir / ("run_" + tag + ".json"), run_to_json(run.result));
    write_json(dir / ("model_" + tag + ".json"), model_to_json(run.model, *run.observable));
    std::cout << "seed " << seed << ": weight error "
              << run.result.estimate.weight_error.value_or(std::nan("")) << ", "
              << run.result.wall_seconds << " s\n";
  }
  return 0;
}

int cmd_table(const Common& c, bool first) {
  const ExperimentConfig cfg = load(c);
  const Trajectory demo = make_demonstration(cfg).trajectory;
  const TableResult table = first ? run_table1(cfg, demo) : run_table2(cfg, demo);
  const fs::path dir = out_dir(cfg);
  io::write_file((dir / (table.name + ".csv")).string(), table_to_csv(table));
  io::write_file((dir / (table.name + ".svg")).string(), table_to_svg(table));
  write_json(dir / (table.name + ".json"), table_to_json(table));
  std::cout << table_to_csv(table);
  const bool ok = !table.trend_checked || (table.weight_trend_ok && table.traj_trend_ok);
  std::cout << table.name << " trend " << (table.trend_checked ? (ok ? "holds" : "violated") : "not checked")
            << "\n";
  return ok ? 0 : 1;
}

int cmd_validate(const Common& c) {
  const ExperimentConfig cfg = load(c);
  bool all = true;
  for (const auto& r : acceptance::run_all(cfg)) {
    std::cout << acceptance::format(r) << std::endl;
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman-representation inverse optimal control"};
  app.require_subcommand(1);
  Common common;

  auto* demo = app.add_subcommand("demo", "generate an optimal demonstration");
  add_common(demo, common);
  std::optional<Index> horizon;
  std::vector<double> x0;
  std::vector<double> goal;
  std::vector<double> weights;
  std::optional<double> grad_tol;
  std::optional<double> pmp_tol;
  demo->add_option("--horizon", horizon, "number of steps T");
  demo->add_option("--x0", x0, "initial state")->expected(2);
  demo->add_option("--goal", goal, "goal state")->expected(2);
  demo->add_option("--weights", weights, "objective weights")->expected(3);
  demo->add_option("--grad-tol", grad_tol, "gradient-norm tolerance");
  demo->add_option("--pmp-tol", pmp_tol, "optimality-residual tolerance");

  std::string demo_path;
  std::string model_path;
  auto* train = app.add_subcommand("train", "learn the Koopman representation only");
  add_common(train, common);
  train->add_option("--demo", demo_path, "demonstration JSON or CSV")->check(CLI::ExistingFile);

  auto* estimate = app.add_subcommand("estimate", "estimate weights from data and a model");
  add_common(estimate, common);
  estimate->add_option("--demo", demo_path, "demonstration JSON or CSV")->check(CLI::ExistingFile);
  estimate->add_option("--model", model_path, "model checkpoint JSON")->check(CLI::ExistingFile);
  estimate->add_option("--provenance", common.provenance, "dynamics derivatives source")
      ->check(CLI::IsMember({"koopman", "true"}));

  auto* run = app.add_subcommand("run", "joint identification and weight estimation");
  add_common(run, common);
  run->add_option("--demo", demo_path, "demonstration JSON or CSV")->check(CLI::ExistingFile);

  auto* table1 = app.add_subcommand("table1", "weight error against reconstruction threshold");
  add_common(table1, common);
  auto* table2 = app.add_subcommand("table2", "weight error against hidden width");
  add_common(table2, common);
  auto* validate = app.add_subcommand("validate", "run the acceptance checks");
  add_common(validate, common);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*demo) return cmd_demo(common, horizon, x0, goal, weights, grad_tol, pmp_tol);
    if (*train) return cmd_train(common, demo_path);
    if (*estimate) return cmd_estimate(common, demo_path, model_path);
    if (*run) return cmd_run(common, demo_path);
    if (*table1) return cmd_table(common, true);
    if (*table2) return cmd_table(common, false);
    if (*validate) return cmd_validate(common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
