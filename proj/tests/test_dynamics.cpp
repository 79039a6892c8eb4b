#include <gtest/gtest.h>

#include <numbers>

#include "kioc/dynamics.hpp"
#include "kioc/trajectory_io.hpp"
#include "test_util.hpp"

using namespace kioc;
using std::numbers::pi;

TEST(PendulumStep, EquilibriaAreFixed) {
  const PendulumParams p;
  const Vector zero = Vector::Zero(1);
  EXPECT_EQ(pendulum_step(Vector{{0.0, 0.0}}, zero, p), (Vector{{0.0, 0.0}}));
  // sin of the double nearest pi is about 1.2e-16, not zero.
  const Vector up = pendulum_step(Vector{{pi, 0.0}}, zero, p);
  EXPECT_EQ(up(0), pi);
  EXPECT_LT(std::abs(up(1)), p.dt * (p.gravity / p.length) * 1.3e-16);
}

TEST(PendulumStep, HandEvaluatedEulerStep) {
  const PendulumParams p;  // m=1, l=10, g=10, dt=0.001
  const Vector next = pendulum_step(Vector{{pi / 2, 0.0}}, Vector::Zero(1), p);
  const double accel = (0.0 - 1.0 * 10.0 * 10.0 * std::sin(pi / 2)) / (1.0 * 10.0 * 10.0);
  EXPECT_DOUBLE_EQ(next(0), pi / 2);
  EXPECT_NEAR(next(1), 0.001 * accel, 1e-15);
  EXPECT_NEAR(next(1), -0.001, 1e-15);
}

TEST(PendulumStep, RejectsBadInput) {
  const PendulumParams p;
  EXPECT_THROW(pendulum_step(Vector{{std::nan(""), 0.0}}, Vector::Zero(1), p), NumericalError);
  EXPECT_THROW(pendulum_step(Vector{{0.0}}, Vector::Zero(1), p), std::invalid_argument);
  PendulumParams bad;
  bad.length = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PendulumSystem, JacobiansMatchCentralDifferences) {
  PendulumParams p;
  p.dt = 0.05;
  const SystemSpec sys = pendulum_system(p);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = test::gaussian(2, rng, 2.0);
    const Vector u = test::gaussian(1, rng, 5.0);
    const Matrix fdx = test::central_jacobian([&](const Vector& xx) { return sys.step(xx, u); }, x, 1e-6);
    const Matrix fdu = test::central_jacobian([&](const Vector& uu) { return sys.step(x, uu); }, u, 1e-6);
    EXPECT_LT((sys.state_jacobian(x, u) - fdx).norm() / (1.0 + fdx.norm()), 1e-5);
    EXPECT_LT((sys.input_jacobian(x, u) - fdu).norm() / (1.0 + fdu.norm()), 1e-5);
  }
}

TEST(Simulate, ZeroHorizonAndEquilibrium) {
  const SystemSpec sys = pendulum_system({});
  const Trajectory single = simulate(sys, Vector{{0.3, 0.1}}, Matrix::Zero(1, 1));
  EXPECT_EQ(single.horizon(), 0);
  EXPECT_EQ(single.states.col(0), (Vector{{0.3, 0.1}}));

  const Trajectory rest = simulate(sys, Vector::Zero(2), Matrix::Zero(1, 6));
  EXPECT_EQ(rest.horizon(), 5);
  EXPECT_TRUE(rest.states.isZero(0.0));
}

TEST(Simulate, MatchesChainedSteps) {
  const PendulumParams p;
  const SystemSpec sys = pendulum_system(p);
  const Vector x0{{pi / 2, 0.0}};
  const Trajectory traj = simulate(sys, x0, Matrix::Zero(1, 3));
  const Vector x1 = pendulum_step(x0, Vector::Zero(1), p);
  const Vector x2 = pendulum_step(x1, Vector::Zero(1), p);
  EXPECT_EQ(traj.states.col(1), x1);
  EXPECT_EQ(traj.states.col(2), x2);
}

TEST(Simulate, Deterministic) {
  const SystemSpec sys = pendulum_system({});
  std::mt19937_64 rng(2);
  const Matrix u = test::gaussian(1, 20, rng);
  const Trajectory a = simulate(sys, Vector{{0.1, 0.2}}, u);
  const Trajectory b = simulate(sys, Vector{{0.1, 0.2}}, u);
  EXPECT_EQ(a.states, b.states);
}

TEST(LinearSystem, StepAndJacobians) {
  const Matrix a{{0.9, 0.1}, {0.0, 0.8}};
  const Matrix b{{0.0}, {1.0}};
  const SystemSpec sys = linear_system(a, b);
  const Vector x{{1.0, 2.0}};
  const Vector u{{3.0}};
  EXPECT_TRUE(sys.step(x, u).isApprox(a * x + b * u));
  EXPECT_EQ(sys.state_jacobian(x, u), a);
  EXPECT_EQ(sys.input_jacobian(x, u), b);
  EXPECT_THROW(linear_system(a, Matrix::Zero(3, 1)), std::invalid_argument);
}

class Slicing : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(3);
    PendulumParams p;
    p.dt = 0.1;
    traj = simulate(pendulum_system(p), Vector{{0.2, 0.0}}, test::gaussian(1, 11, rng));
  }
  Trajectory traj;
};

TEST_F(Slicing, WholeTrajectory) {
  const Dataset data = slice_segments(traj, {{0, 10}});
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].states, traj.states);
  EXPECT_EQ(data[0].inputs, traj.inputs);
}

TEST_F(Slicing, DisjointWindows) {
  const Dataset data = slice_segments(traj, {{0, 3}, {3, 6}});
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].states.cols(), 4);
  EXPECT_EQ(data[1].states.cols(), 4);
  EXPECT_EQ(data[1].states.col(0), traj.states.col(3));
}

TEST_F(Slicing, OverlapSharesEntries) {
  const Dataset data = slice_segments(traj, {{0, 4}, {2, 6}});
  ASSERT_EQ(data.size(), 2u);
  for (Index t = 2; t <= 4; ++t) {
    EXPECT_EQ(data[0].state_at(t), data[1].state_at(t));
    EXPECT_EQ(data[0].input_at(t), data[1].input_at(t));
  }
}

TEST_F(Slicing, OutOfRangeWindowsThrow) {
  EXPECT_THROW(make_segment(traj, {0, 11}), std::out_of_range);
  EXPECT_THROW(make_segment(traj, {-1, 3}), std::out_of_range);
  EXPECT_THROW(make_segment(traj, {4, 4}), std::out_of_range);
}

TEST(SlidingWindows, CoverHorizon) {
  const auto w = sliding_windows(10, 4, 2);
  const std::vector<Window> expected{{0, 4}, {2, 6}, {4, 8}, {6, 10}};
  EXPECT_EQ(w, expected);
}

TEST(TrajectoryIo, JsonAndCsvRoundTripExactly) {
  std::mt19937_64 rng(4);
  PendulumParams p;
  p.dt = 0.1;
  const Trajectory traj = simulate(pendulum_system(p), Vector{{0.1, -0.3}}, test::gaussian(1, 8, rng));
  const Trajectory from_json = trajectory_from_json(json::parse(trajectory_to_json(traj).dump()));
  EXPECT_EQ(from_json.states, traj.states);
  EXPECT_EQ(from_json.inputs, traj.inputs);
  const Trajectory from_csv = trajectory_from_csv(trajectory_to_csv(traj));
  EXPECT_EQ(from_csv.states, traj.states);
  EXPECT_EQ(from_csv.inputs, traj.inputs);
}

TEST(TrajectoryIo, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, pi, -2.5e-300, 1e308, 0.0}) {
    EXPECT_EQ(std::strtod(io::format_double(v).c_str(), nullptr), v);
  }
}
