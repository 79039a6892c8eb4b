#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kioc/common.hpp"

namespace kioc {

/// Observable map psi(., theta): R^n -> R^N with exact derivatives.
///
/// Evaluation is const and may run concurrently; set_params must not overlap with reads.
class Observable {
 public:
  virtual ~Observable() = default;

  virtual Index state_dim() const = 0;
  virtual Index dim() const = 0;
  virtual Vector forward(const Vector& x) const = 0;
  /// N x n
  virtual Matrix state_jacobian(const Vector& x) const = 0;

  virtual Index param_count() const { return 0; }
  virtual Vector params() const { return {}; }
  virtual void set_params(const Vector& theta) {
    detail::require_size(theta.size(), 0, "set_params on a fixed observable");
  }
  /// (d psi / d theta)' * sensitivity, i.e. the gradient of sensitivity' psi(x) w.r.t. theta.
  virtual Vector param_gradient(const Vector& x, const Vector& sensitivity) const {
    detail::require_size(sensitivity.size(), dim(), "param_gradient sensitivity");
    (void)x;
    return {};
  }

  virtual std::unique_ptr<Observable> clone() const = 0;
  virtual std::string kind() const = 0;
};

/// psi(x) = M x for a fixed matrix M; identity when M = I.
class LinearObservable final : public Observable {
 public:
  explicit LinearObservable(Matrix map) : map_(std::move(map)) {}

  Index state_dim() const override { return map_.cols(); }
  Index dim() const override { return map_.rows(); }
  Vector forward(const Vector& x) const override {
    detail::require_size(x.size(), state_dim(), "observable input");
    return map_ * x;
  }
  Matrix state_jacobian(const Vector& x) const override {
    detail::require_size(x.size(), state_dim(), "observable input");
    return map_;
  }
  std::unique_ptr<Observable> clone() const override {
    return std::make_unique<LinearObservable>(*this);
  }
  std::string kind() const override { return "linear"; }

  const Matrix& map() const { return map_; }

 private:
  Matrix map_;
};

inline std::unique_ptr<Observable> identity_observable(Index n) {
  if (n < 1) throw std::invalid_argument("identity_observable: n must be positive");
  return std::make_unique<LinearObservable>(Matrix::Identity(n, n));
}

enum class Activation { Tanh, Sigmoid };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "sigmoid"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MlpConfig {
  Index input_dim = 2;
  std::vector<Index> hidden = {64};
  Index output_dim = 32;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  /// Weights are drawn from N(0, weight_scale^2 / fan_in).
  double weight_scale = 1.0;
  /// Hidden-layer biases are drawn from N(0, bias_scale^2); output biases start at zero.
  double bias_scale = 0.0;

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("MlpConfig: bad dimensions");
    if (hidden.empty()) throw std::invalid_argument("MlpConfig: need at least one hidden layer");
    for (Index h : hidden) {
      if (h < 1) throw std::invalid_argument("MlpConfig: hidden layer sizes must be positive");
    }
    if (!(weight_scale > 0.0) || bias_scale < 0.0) {
      throw std::invalid_argument("MlpConfig: bad initialization scale");
    }
  }
};

/// Fully connected network: smooth activation on hidden layers, affine output layer.
class MlpObservable final : public Observable {
 public:
  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };

  explicit MlpObservable(const MlpConfig& cfg) : activation_(cfg.activation), seed_(cfg.seed) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Index fan_in = cfg.input_dim;
    std::vector<Index> sizes = cfg.hidden;
    sizes.push_back(cfg.output_dim);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const bool output = k + 1 == sizes.size();
      Layer layer;
      layer.weight.resize(sizes[k], fan_in);
      const double std_dev = cfg.weight_scale / std::sqrt(static_cast<double>(fan_in));
      for (Index r = 0; r < layer.weight.rows(); ++r) {
        for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = std_dev * normal(rng);
      }
      layer.bias = Vector::Zero(sizes[k]);
      if (!output && cfg.bias_scale > 0.0) {
        for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = cfg.bias_scale * normal(rng);
      }
      layers_.push_back(std::move(layer));
      fan_in = sizes[k];
    }
  }

  MlpObservable(std::vector<Layer> layers, Activation activation, std::uint64_t seed)
      : layers_(std::move(layers)), activation_(activation), seed_(seed) {
    if (layers_.size() < 2) throw std::invalid_argument("MlpObservable: need a hidden layer");
    for (std::size_t k = 1; k < layers_.size(); ++k) {
      if (layers_[k].weight.cols() != layers_[k - 1].weight.rows()) {
        throw DimensionError("MlpObservable: layer sizes do not chain");
      }
    }
    for (const auto& l : layers_) {
      if (l.bias.size() != l.weight.rows()) throw DimensionError("MlpObservable: bias size");
    }
  }

  Index state_dim() const override { return layers_.front().weight.cols(); }
  Index dim() const override { return layers_.back().weight.rows(); }

  Vector forward(const Vector& x) const override {
    detail::require_size(x.size(), state_dim(), "observable input");
    Vector a = x;
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
      a = activate(layers_[k].weight * a + layers_[k].bias);
    }
    return layers_.back().weight * a + layers_.back().bias;
  }

  Matrix state_jacobian(const Vector& x) const override {
    detail::require_size(x.size(), state_dim(), "observable input");
    Vector a = x;
    Matrix jac = Matrix::Identity(state_dim(), state_dim());
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
      const Vector pre = layers_[k].weight * a + layers_[k].bias;
      a = activate(pre);
      jac = derivative(pre).asDiagonal() * (layers_[k].weight * jac);
    }
    return layers_.back().weight * jac;
  }

  Index param_count() const override {
    Index q = 0;
    for (const auto& l : layers_) q += l.weight.size() + l.bias.size();
    return q;
  }

  /// Layer by layer: weight entries column-major, then bias.
  Vector params() const override {
    Vector theta(param_count());
    Index offset = 0;
    for (const auto& l : layers_) {
      theta.segment(offset, l.weight.size()) = l.weight.reshaped();
      offset += l.weight.size();
      theta.segment(offset, l.bias.size()) = l.bias;
      offset += l.bias.size();
    }
    return theta;
  }

  void set_params(const Vector& theta) override {
    detail::require_size(theta.size(), param_count(), "MlpObservable::set_params");
    Index offset = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = theta.segment(offset, l.weight.size());
      offset += l.weight.size();
      l.bias = theta.segment(offset, l.bias.size());
      offset += l.bias.size();
    }
  }

  Vector param_gradient(const Vector& x, const Vector& sensitivity) const override {
    detail::require_size(x.size(), state_dim(), "observable input");
    detail::require_size(sensitivity.size(), dim(), "param_gradient sensitivity");
    const std::size_t depth = layers_.size();
    std::vector<Vector> inputs(depth);
    std::vector<Vector> preacts(depth);
    Vector a = x;
    for (std::size_t k = 0; k < depth; ++k) {
      inputs[k] = a;
      preacts[k] = layers_[k].weight * a + layers_[k].bias;
      a = k + 1 < depth ? activate(preacts[k]) : preacts[k];
    }

    Vector grad(param_count());
    std::vector<Index> offsets(depth);
    Index offset = 0;
    for (std::size_t k = 0; k < depth; ++k) {
      offsets[k] = offset;
      offset += layers_[k].weight.size() + layers_[k].bias.size();
    }

    Vector delta = sensitivity;  // d(s' psi) / d(pre-activation of layer k)
    for (std::size_t k = depth; k-- > 0;) {
      const auto& l = layers_[k];
      Matrix dw = delta * inputs[k].transpose();
      grad.segment(offsets[k], l.weight.size()) = dw.reshaped();
      grad.segment(offsets[k] + l.weight.size(), l.bias.size()) = delta;
      if (k > 0) {
        delta = (l.weight.transpose() * delta).cwiseProduct(derivative(preacts[k - 1]));
      }
    }
    return grad;
  }

  std::unique_ptr<Observable> clone() const override {
    return std::make_unique<MlpObservable>(*this);
  }
  std::string kind() const override { return "mlp"; }

  const std::vector<Layer>& layers() const { return layers_; }
  Activation activation() const { return activation_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Vector activate(const Vector& z) const {
    if (activation_ == Activation::Tanh) return z.array().tanh().matrix();
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }

  Vector derivative(const Vector& z) const {
    if (activation_ == Activation::Tanh) return (1.0 - z.array().tanh().square()).matrix();
    const Eigen::ArrayXd s = 1.0 / (1.0 + (-z.array()).exp());
    return (s * (1.0 - s)).matrix();
  }

  std::vector<Layer> layers_;
  Activation activation_;
  std::uint64_t seed_;
};

inline std::unique_ptr<Observable> mlp_observable(const MlpConfig& cfg) {
  return std::make_unique<MlpObservable>(cfg);
}

/// {"layers": [{"rows", "cols", "w" (row-major), "b"}], "activation", "seed"}
inline nlohmann::json mlp_to_json(const MlpObservable& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : mlp.layers()) {
    nlohmann::json entry;
    entry["rows"] = l.weight.rows();
    entry["cols"] = l.weight.cols();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    entry["w"] = std::move(w);
    entry["b"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(entry));
  }
  nlohmann::json j;
  j["layers"] = std::move(layers);
  j["activation"] = to_string(mlp.activation());
  j["seed"] = mlp.seed();
  return j;
}

inline MlpObservable mlp_from_json(const nlohmann::json& j) {
  std::vector<MlpObservable::Layer> layers;
  for (const auto& entry : j.at("layers")) {
    const auto rows = entry.at("rows").get<Index>();
    const auto cols = entry.at("cols").get<Index>();
    const auto w = entry.at("w").get<std::vector<double>>();
    const auto b = entry.at("b").get<std::vector<double>>();
    if (static_cast<Index>(w.size()) != rows * cols || static_cast<Index>(b.size()) != rows) {
      throw DimensionError("MLP checkpoint: layer data does not match its shape");
    }
    MlpObservable::Layer layer;
    layer.weight.resize(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    }
    layer.bias = Eigen::Map<const Vector>(b.data(), rows);
    layers.push_back(std::move(layer));
  }
  return MlpObservable(std::move(layers), activation_from_string(j.at("activation").get<std::string>()),
                       j.value("seed", std::uint64_t{0}));
}

/// Axis-aligned box [lower, upper] in state space.
struct StateBox {
  Vector lower;
  Vector upper;
};

/// max over sampled pairs of |psi(x) - psi(y)| / |x - y| with points drawn uniformly from the box.
/// Points come from one seeded stream, so more samples only extend the set.
inline double empirical_lipschitz(const Observable& obs, const StateBox& box, Index samples,
                                  std::uint64_t seed = 0) {
  if (samples < 2) throw std::invalid_argument("empirical_lipschitz: need at least two samples");
  detail::require_size(box.lower.size(), obs.state_dim(), "box lower");
  detail::require_size(box.upper.size(), obs.state_dim(), "box upper");
  const Vector width = box.upper - box.lower;
  if ((width.array() < 0.0).any() || !(width.maxCoeff() > 0.0)) {
    throw std::invalid_argument("empirical_lipschitz: degenerate region");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> points;
  std::vector<Vector> values;
  points.reserve(static_cast<std::size_t>(samples));
  for (Index s = 0; s < samples; ++s) {
    Vector x(obs.state_dim());
    for (Index i = 0; i < x.size(); ++i) x(i) = box.lower(i) + width(i) * unit(rng);
    values.push_back(obs.forward(x));
    points.push_back(std::move(x));
  }
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dx = (points[i] - points[j]).norm();
      if (dx > 0.0) best = std::max(best, (values[i] - values[j]).norm() / dx);
    }
  }
  return best;
}

}  // namespace kioc
