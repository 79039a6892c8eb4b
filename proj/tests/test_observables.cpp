#include <gtest/gtest.h>

#include "kioc/observables.hpp"
#include "test_util.hpp"

using namespace kioc;

namespace {

MlpConfig small_config(std::uint64_t seed) {
  MlpConfig cfg;
  cfg.hidden = {16, 12};
  cfg.output_dim = 6;
  cfg.bias_scale = 0.5;
  cfg.seed = seed;
  return cfg;
}

class ConstantObservable final : public Observable {
 public:
  Index state_dim() const override { return 2; }
  Index dim() const override { return 3; }
  Vector forward(const Vector&) const override { return Vector{{1.0, 2.0, 3.0}}; }
  Matrix state_jacobian(const Vector&) const override { return Matrix::Zero(3, 2); }
  std::unique_ptr<Observable> clone() const override { return std::make_unique<ConstantObservable>(); }
  std::string kind() const override { return "constant"; }
};

}  // namespace

TEST(IdentityObservable, Basics) {
  const auto obs = identity_observable(2);
  EXPECT_EQ(obs->forward(Vector{{1.5, -2.0}}), (Vector{{1.5, -2.0}}));
  EXPECT_EQ(obs->state_jacobian(Vector{{7.0, 3.0}}), Matrix::Identity(2, 2));
  EXPECT_EQ(obs->param_count(), 0);
}

TEST(MlpObservable, SameSeedSameNetwork) {
  const MlpObservable a(small_config(9));
  const MlpObservable b(small_config(9));
  const MlpObservable c(small_config(10));
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  const Vector x{{0.3, -0.8}};
  EXPECT_EQ(a.forward(x), b.forward(x));
}

TEST(MlpObservable, ZeroInputWithZeroBiasesGivesOutputBias) {
  MlpConfig cfg = small_config(1);
  cfg.bias_scale = 0.0;
  const MlpObservable mlp(cfg);
  EXPECT_EQ(mlp.forward(Vector::Zero(2)), mlp.layers().back().bias);
  EXPECT_TRUE(mlp.layers().back().bias.isZero(0.0));
}

TEST(MlpObservable, StateJacobianMatchesCentralDifferences) {
  for (Activation act : {Activation::Tanh, Activation::Sigmoid}) {
    MlpConfig cfg = small_config(2);
    cfg.activation = act;
    const MlpObservable mlp(cfg);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = test::gaussian(2, rng, 1.5);
      const Matrix fd = test::central_jacobian([&](const Vector& xx) { return mlp.forward(xx); }, x, 1e-6);
      EXPECT_LT(test::rel_err(mlp.state_jacobian(x), fd), 1e-5) << to_string(act);
    }
  }
}

TEST(MlpObservable, ParamGradientMatchesCentralDifferences) {
  MlpObservable mlp(small_config(4));
  const Vector theta = mlp.params();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = test::gaussian(2, rng);
    const Vector s = test::gaussian(mlp.dim(), rng);
    const Vector grad = mlp.param_gradient(x, s);
    const Matrix fd = test::central_jacobian(
        [&](const Vector& t) {
          mlp.set_params(t);
          return Vector::Constant(1, s.dot(mlp.forward(x)));
        },
        theta, 1e-6);
    mlp.set_params(theta);
    EXPECT_LT(test::rel_err(grad, fd.transpose()), 1e-4);
  }
}

TEST(MlpObservable, ParamsRoundTrip) {
  MlpObservable mlp(small_config(6));
  std::mt19937_64 rng(7);
  const Vector theta = test::gaussian(mlp.param_count(), rng);
  mlp.set_params(theta);
  EXPECT_EQ(mlp.params(), theta);
  EXPECT_THROW(mlp.set_params(Vector::Zero(3)), std::invalid_argument);
}

TEST(MlpObservable, ForwardFiniteOnLargeInputs) {
  const MlpObservable mlp(small_config(8));
  EXPECT_TRUE(mlp.forward(Vector{{1e8, -1e8}}).allFinite());
  EXPECT_TRUE(mlp.state_jacobian(Vector{{1e8, -1e8}}).allFinite());
}

TEST(MlpObservable, JsonCheckpointRoundTrip) {
  const MlpObservable mlp(small_config(11));
  const MlpObservable back = mlp_from_json(nlohmann::json::parse(mlp_to_json(mlp).dump()));
  EXPECT_EQ(back.params(), mlp.params());
  EXPECT_EQ(back.activation(), mlp.activation());
  EXPECT_EQ(back.seed(), mlp.seed());
  const Vector x{{0.2, 0.9}};
  EXPECT_EQ(back.forward(x), mlp.forward(x));
}

TEST(MlpConfig, RejectsBadShapes) {
  MlpConfig cfg;
  cfg.hidden = {};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.hidden = {0};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(activation_from_string("relu"), std::invalid_argument);
}

TEST(EmpiricalLipschitz, IdentityIsAtMostOne) {
  const auto obs = identity_observable(2);
  const double l = empirical_lipschitz(*obs, {Vector{{-3.0, -1.0}}, Vector{{2.0, 4.0}}}, 40);
  EXPECT_LE(l, 1.0 + 1e-12);
  EXPECT_GT(l, 0.99);
}

TEST(EmpiricalLipschitz, ConstantIsZero) {
  const ConstantObservable obs;
  EXPECT_EQ(empirical_lipschitz(obs, {Vector{{0.0, 0.0}}, Vector{{1.0, 1.0}}}, 20), 0.0);
}

TEST(EmpiricalLipschitz, NondecreasingInSampleCount) {
  const MlpObservable mlp(small_config(12));
  const StateBox box{Vector{{-1.0, -1.0}}, Vector{{1.0, 1.0}}};
  double previous = 0.0;
  for (Index samples : {4, 8, 16, 32, 64}) {
    const double l = empirical_lipschitz(mlp, box, samples, 13);
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GE(l, previous);
    previous = l;
  }
}

TEST(EmpiricalLipschitz, DegenerateRegionThrows) {
  const auto obs = identity_observable(2);
  EXPECT_THROW(empirical_lipschitz(*obs, {Vector{{1.0, 1.0}}, Vector{{1.0, 1.0}}}, 10),
               std::invalid_argument);
}
