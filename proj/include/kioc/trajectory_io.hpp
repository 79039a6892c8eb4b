#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kioc/dynamics.hpp"

namespace kioc {

using json = nlohmann::json;

namespace io {

inline json to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

/// Row-major nested arrays.
inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows == 0 ? Index{0} : static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Index>(row.size()) != cols) throw DimensionError("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace io

/// {"n", "m", "T", "states": [[x_0], ...], "inputs": [[u_0], ...]}; one inner array per step.
inline json trajectory_to_json(const Trajectory& traj) {
  traj.validate();
  json j;
  j["n"] = traj.n();
  j["m"] = traj.m();
  j["T"] = traj.horizon();
  j["states"] = io::to_json(Matrix(traj.states.transpose()));
  j["inputs"] = io::to_json(Matrix(traj.inputs.transpose()));
  return j;
}

inline Trajectory trajectory_from_json(const json& j) {
  Trajectory traj;
  const auto n = j.at("n").get<Index>();
  const auto m = j.at("m").get<Index>();
  const auto horizon = j.at("T").get<Index>();
  traj.states = io::matrix_from_json(j.at("states")).transpose();
  traj.inputs = io::matrix_from_json(j.at("inputs")).transpose();
  if (traj.states.rows() != n || traj.inputs.rows() != m || traj.states.cols() != horizon + 1) {
    throw DimensionError("trajectory JSON: header does not match data");
  }
  traj.validate();
  return traj;
}

/// Header `t,x1..xn,u1..um`, one row per step.
inline std::string trajectory_to_csv(const Trajectory& traj) {
  traj.validate();
  std::string out = "t";
  for (Index i = 0; i < traj.n(); ++i) out += ",x" + std::to_string(i + 1);
  for (Index i = 0; i < traj.m(); ++i) out += ",u" + std::to_string(i + 1);
  out += '\n';
  for (Index t = 0; t <= traj.horizon(); ++t) {
    out += std::to_string(t);
    for (Index i = 0; i < traj.n(); ++i) out += ',' + io::format_double(traj.states(i, t));
    for (Index i = 0; i < traj.m(); ++i) out += ',' + io::format_double(traj.inputs(i, t));
    out += '\n';
  }
  return out;
}

inline Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory CSV: empty");
  Index n = 0;
  Index m = 0;
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (!cell.empty() && cell[0] == 'x') ++n;
      if (!cell.empty() && cell[0] == 'u') ++m;
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    std::getline(row, cell, ',');  // t
    if (std::stol(cell) != static_cast<long>(rows.size())) {
      throw std::runtime_error("trajectory CSV: steps must be consecutive from 0");
    }
    while (std::getline(row, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
    if (static_cast<Index>(values.size()) != n + m) {
      throw DimensionError("trajectory CSV: row has wrong column count");
    }
    rows.push_back(std::move(values));
  }
  Trajectory traj;
  const auto steps = static_cast<Index>(rows.size());
  traj.states.resize(n, steps);
  traj.inputs.resize(m, steps);
  for (Index t = 0; t < steps; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    for (Index i = 0; i < n; ++i) traj.states(i, t) = r[static_cast<std::size_t>(i)];
    for (Index i = 0; i < m; ++i) traj.inputs(i, t) = r[static_cast<std::size_t>(n + i)];
  }
  traj.validate();
  return traj;
}

}  // namespace kioc
