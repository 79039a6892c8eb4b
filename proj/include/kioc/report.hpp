#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "kioc/harness.hpp"
#include "kioc/trajectory_io.hpp"

namespace kioc {

namespace detail {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_vector_if(const json& j, const char* key, Vector& out) {
  if (j.contains(key)) out = io::vector_from_json(j.at(key));
}

}  // namespace detail

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["pendulum"] = {{"mass", cfg.pendulum.mass},
                   {"length", cfg.pendulum.length},
                   {"gravity", cfg.pendulum.gravity},
                   {"dt", cfg.pendulum.dt}};
  j["horizon"] = cfg.horizon;
  j["x0"] = io::to_json(cfg.x0);
  j["goal"] = io::to_json(cfg.goal);
  j["omega_true"] = io::to_json(cfg.omega_true);
  json windows = json::array();
  for (const auto& w : cfg.windows) windows.push_back({w.start, w.end});
  j["windows"] = windows;
  j["segment_steps"] = cfg.segment_steps;
  j["segment_stride"] = cfg.segment_stride;
  j["observable"] = {{"hidden", cfg.mlp.hidden},
                     {"output_dim", cfg.mlp.output_dim},
                     {"activation", to_string(cfg.mlp.activation)},
                     {"weight_scale", cfg.mlp.weight_scale},
                     {"bias_scale", cfg.mlp.bias_scale}};
  j["ridge"] = cfg.ridge;
  j["theta"] = {{"max_steps", cfg.theta.max_steps},
                {"initial_rate", cfg.theta.initial_rate},
                {"armijo", cfg.theta.armijo},
                {"min_rate", cfg.theta.min_rate}};
  j["oc"] = {{"grad_tol", cfg.oc.grad_tol},   {"pmp_tol", cfg.oc.pmp_tol},
             {"max_iters", cfg.oc.max_iters}, {"initial_step", cfg.oc.initial_step},
             {"armijo", cfg.oc.armijo},       {"min_step", cfg.oc.min_step}};
  j["lipschitz_samples"] = cfg.lipschitz_samples;
  j["recon_grid"] = cfg.recon_grid;
  j["hidden_grid"] = cfg.hidden_grid;
  j["seeds"] = cfg.seeds;
  j["refine_rounds"] = cfg.refine_rounds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

/// Missing keys keep their defaults.
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("pendulum")) {
    const auto& p = j.at("pendulum");
    detail::read_if(p, "mass", cfg.pendulum.mass);
    detail::read_if(p, "length", cfg.pendulum.length);
    detail::read_if(p, "gravity", cfg.pendulum.gravity);
    detail::read_if(p, "dt", cfg.pendulum.dt);
  }
  detail::read_if(j, "horizon", cfg.horizon);
  detail::read_vector_if(j, "x0", cfg.x0);
  detail::read_vector_if(j, "goal", cfg.goal);
  detail::read_vector_if(j, "omega_true", cfg.omega_true);
  if (j.contains("windows")) {
    cfg.windows.clear();
    for (const auto& w : j.at("windows")) {
      cfg.windows.push_back({w.at(0).get<Index>(), w.at(1).get<Index>()});
    }
  }
  detail::read_if(j, "segment_steps", cfg.segment_steps);
  detail::read_if(j, "segment_stride", cfg.segment_stride);
  if (j.contains("observable")) {
    const auto& o = j.at("observable");
    detail::read_if(o, "hidden", cfg.mlp.hidden);
    detail::read_if(o, "output_dim", cfg.mlp.output_dim);
    if (o.contains("activation")) {
      cfg.mlp.activation = activation_from_string(o.at("activation").get<std::string>());
    }
    detail::read_if(o, "weight_scale", cfg.mlp.weight_scale);
    detail::read_if(o, "bias_scale", cfg.mlp.bias_scale);
  }
  detail::read_if(j, "ridge", cfg.ridge);
  if (j.contains("theta")) {
    const auto& t = j.at("theta");
    detail::read_if(t, "max_steps", cfg.theta.max_steps);
    detail::read_if(t, "initial_rate", cfg.theta.initial_rate);
    detail::read_if(t, "armijo", cfg.theta.armijo);
    detail::read_if(t, "min_rate", cfg.theta.min_rate);
  }
  if (j.contains("oc")) {
    const auto& o = j.at("oc");
    detail::read_if(o, "grad_tol", cfg.oc.grad_tol);
    detail::read_if(o, "pmp_tol", cfg.oc.pmp_tol);
    detail::read_if(o, "max_iters", cfg.oc.max_iters);
    detail::read_if(o, "initial_step", cfg.oc.initial_step);
    detail::read_if(o, "armijo", cfg.oc.armijo);
    detail::read_if(o, "min_step", cfg.oc.min_step);
  }
  detail::read_if(j, "lipschitz_samples", cfg.lipschitz_samples);
  detail::read_if(j, "recon_grid", cfg.recon_grid);
  detail::read_if(j, "hidden_grid", cfg.hidden_grid);
  detail::read_if(j, "seeds", cfg.seeds);
  detail::read_if(j, "refine_rounds", cfg.refine_rounds);
  detail::read_if(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  return config_from_json(json::parse(io::read_file(path)));
}

inline json estimate_to_json(const WeightEstimate& est) {
  json j;
  j["omega_hat"] = io::to_json(est.omega);
  j["omega_rescaled"] = io::to_json(est.omega_rescaled);
  j["residual"] = est.residual;
  j["weight_error"] = est.weight_error ? json(*est.weight_error) : json(nullptr);
  j["segments_used"] = est.segments_used;
  j["provenance"] = to_string(est.provenance);
  j["condition_number"] = std::isfinite(est.condition_number) ? json(est.condition_number)
                                                                : json(nullptr);
  return j;
}

inline json diagnostics_to_json(const ReconDiagnostics& d) {
  return {{"recon_max", d.recon_max},
          {"state_step_max", d.state_step_max},
          {"input_step_max", d.input_step_max},
          {"lipschitz", d.lipschitz},
          {"norm_ckx", d.norm_ckx},
          {"norm_cku", d.norm_cku},
          {"bound", d.bound},
          {"one_step_error_max", d.one_step_error_max}};
}

/// Run trace without wall time, so identical runs serialize identically.
inline json run_to_json(const RunResult& run) {
  json iters = json::array();
  for (const auto& rec : run.iterations) {
    iters.push_back({{"iteration", rec.iteration},
                     {"loss_k", rec.loss_k},
                     {"loss_c", rec.loss_c},
                     {"recon_max", rec.recon_max},
                     {"omega_hat", io::to_json(rec.omega)},
                     {"omega_rescaled", io::to_json(rec.omega_rescaled)},
                     {"residual", rec.residual}});
  }
  json j;
  j["seed"] = run.seed;
  j["iterations"] = iters;
  j["estimate"] = estimate_to_json(run.estimate);
  j["diagnostics"] = diagnostics_to_json(run.diagnostics);
  j["trajectory_error"] = run.trajectory_error ? json(*run.trajectory_error) : json(nullptr);
  return j;
}

/// {K, C, G_Z, G_Psi, ridge, batches, observable}
inline json model_to_json(const KoopmanModel& model, const Observable& obs) {
  json j;
  j["K"] = io::to_json(model.k);
  j["C"] = io::to_json(model.c);
  j["G_Z"] = io::to_json(model.gram_z);
  j["G_Psi"] = io::to_json(model.gram_psi);
  j["ridge"] = model.ridge;
  j["batches"] = model.batches;
  if (const auto* mlp = dynamic_cast<const MlpObservable*>(&obs)) {
    j["observable"] = mlp_to_json(*mlp);
  } else if (const auto* lin = dynamic_cast<const LinearObservable*>(&obs)) {
    j["observable"] = {{"kind", "linear"}, {"map", io::to_json(lin->map())}};
  } else {
    throw std::invalid_argument("model_to_json: unsupported observable kind " + obs.kind());
  }
  return j;
}

struct LoadedModel {
  KoopmanModel model;
  std::unique_ptr<Observable> observable;
};

inline LoadedModel model_from_json(const json& j) {
  LoadedModel out;
  out.model.k = io::matrix_from_json(j.at("K"));
  out.model.c = io::matrix_from_json(j.at("C"));
  out.model.gram_z = io::matrix_from_json(j.at("G_Z"));
  out.model.gram_psi = io::matrix_from_json(j.at("G_Psi"));
  out.model.ridge = j.at("ridge").get<double>();
  out.model.batches = j.at("batches").get<int>();
  const auto& o = j.at("observable");
  if (o.value("kind", std::string{"mlp"}) == "linear") {
    out.observable = std::make_unique<LinearObservable>(io::matrix_from_json(o.at("map")));
  } else {
    out.observable = std::make_unique<MlpObservable>(mlp_from_json(o));
  }
  const Index big_n = out.model.k.rows();
  if (out.observable->dim() != big_n || out.model.c.cols() != big_n ||
      out.model.gram_psi.rows() != big_n || out.model.gram_z.rows() != out.model.k.cols()) {
    throw DimensionError("model checkpoint: inconsistent shapes");
  }
  return out;
}

inline std::string table_to_csv(const TableResult& table) {
  std::ostringstream out;
  out << table.grid_label << ",seed,omega1,omega2,omega3,weight_error,traj_error,recon_max,reached\n";
  const auto emit = [&](const TableRow& row) {
    out << io::format_double(row.grid_value) << ',' << (row.seed ? std::to_string(*row.seed) : "median");
    for (Index i = 0; i < 3; ++i) {
      out << ',' << (i < row.omega_rescaled.size() ? io::format_double(row.omega_rescaled(i)) : "");
    }
    out << ',' << io::format_double(row.weight_error) << ',' << io::format_double(row.traj_error)
        << ',' << io::format_double(row.recon_max) << ',' << (row.reached ? 1 : 0) << '\n';
  };
  for (const auto& row : table.rows) emit(row);
  for (const auto& row : table.medians) emit(row);
  return out.str();
}

inline json table_to_json(const TableResult& table) {
  const auto row_json = [](const TableRow& r) {
    json j{{"grid_value", r.grid_value},
           {"omega_rescaled", io::to_json(r.omega_rescaled)},
           {"weight_error", r.weight_error},
           {"traj_error", std::isfinite(r.traj_error) ? json(r.traj_error) : json(nullptr)},
           {"recon_max", r.recon_max},
           {"reached", r.reached}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return j;
  };
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back(row_json(r));
  json medians = json::array();
  for (const auto& r : table.medians) medians.push_back(row_json(r));
  return {{"name", table.name},
          {"grid_label", table.grid_label},
          {"rows", rows},
          {"medians", medians},
          {"trend_checked", table.trend_checked},
          {"weight_trend_ok", table.weight_trend_ok},
          {"traj_trend_ok", table.traj_trend_ok},
          {"spearman", std::isfinite(table.spearman) ? json(table.spearman) : json(nullptr)}};
}

/// Median weight and trajectory error against grid position, log-scaled y axis, as SVG.
inline std::string table_to_svg(const TableResult& table) {
  constexpr double width = 640.0;
  constexpr double height = 400.0;
  constexpr double margin = 60.0;
  std::vector<double> ys;
  for (const auto& m : table.medians) {
    for (double v : {m.weight_error, m.traj_error}) {
      if (m.reached && std::isfinite(v) && v > 0.0) ys.push_back(std::log10(v));
    }
  }
  double lo = ys.empty() ? -1.0 : *std::min_element(ys.begin(), ys.end());
  double hi = ys.empty() ? 0.0 : *std::max_element(ys.begin(), ys.end());
  lo = std::floor(lo);
  hi = std::ceil(hi);
  if (hi <= lo) hi = lo + 1.0;
  const std::size_t count = table.medians.size();
  const auto px = [&](std::size_t i) {
    return count < 2 ? width / 2.0
                     : margin + (width - 2 * margin) * static_cast<double>(i) /
                                    static_cast<double>(count - 1);
  };
  const auto py = [&](double v) {
    return height - margin - (height - 2 * margin) * (std::log10(v) - lo) / (hi - lo);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (double e = lo; e <= hi; e += 1.0) {
    const double y = py(std::pow(10.0, e));
    svg << "<text x=\"" << margin - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e"
        << static_cast<int>(e) << "</text>\n";
  }
  for (std::size_t i = 0; i < count; ++i) {
    svg << "<text x=\"" << px(i) << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"middle\">" << io::format_double(table.medians[i].grid_value)
        << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << table.grid_label << "</text>\n";

  const auto series = [&](auto field, const char* colour, const char* label, double label_y) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = field(table.medians[i]);
      if (!table.medians[i].reached || !std::isfinite(v) || v <= 0.0) continue;
      pts << px(i) << ',' << py(v) << ' ';
      svg << "<circle cx=\"" << px(i) << "\" cy=\"" << py(v) << "\" r=\"3\" fill=\"" << colour
          << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"" << pts.str() << "\"/>\n";
    svg << "<text x=\"" << width - margin << "\" y=\"" << label_y << "\" text-anchor=\"end\" fill=\""
        << colour << "\">" << label << "</text>\n";
  };
  series([](const TableRow& r) { return r.weight_error; }, "#1f77b4", "median weight error", 24);
  series([](const TableRow& r) { return r.traj_error; }, "#d62728", "median trajectory error", 40);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace kioc
