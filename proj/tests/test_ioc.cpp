#include <gtest/gtest.h>

#include "kioc/harness.hpp"
#include "test_util.hpp"

using namespace kioc;

namespace {

PendulumParams coarse() {
  PendulumParams p;
  p.dt = 0.1;
  return p;
}

OcSettings tight() {
  OcSettings s;
  s.grad_tol = 1e-12;
  s.pmp_tol = 1e-10;
  return s;
}

const Vector kTruth{{2.0, 1.0, 1.0}};

Trajectory pendulum_demo() {
  return solve_oc(pendulum_system(coarse()), pendulum_feature_spec(pendulum_goal()), kTruth,
                  Vector::Zero(2), 10, tight())
      .trajectory;
}

}  // namespace

TEST(AssemblePmp, ShapesAndBlockPattern) {
  const Trajectory demo = pendulum_demo();
  const SystemSpec sys = pendulum_system(coarse());
  const Segment seg = make_segment(demo, {3, 5});
  const PmpSystem pmp = assemble_pmp(seg, pendulum_feature_spec(pendulum_goal()), true_derivatives(sys));
  EXPECT_EQ(pmp.f.rows(), 6);
  EXPECT_EQ(pmp.f.cols(), 9);
  EXPECT_EQ(pmp.a.block(0, 0, 2, 2), Matrix::Identity(2, 2));
  EXPECT_EQ(pmp.a.block(2, 2, 2, 2), Matrix::Identity(2, 2));
  EXPECT_TRUE(pmp.a.block(2, 0, 2, 2).isZero(0.0));
  EXPECT_EQ(pmp.a.block(0, 2, 2, 2), -sys.state_jacobian(seg.state_at(4), seg.input_at(4)).transpose());
  EXPECT_TRUE(pmp.v.topRows(2).isZero(0.0));
  EXPECT_EQ(pmp.v.bottomRows(2), sys.state_jacobian(seg.state_at(5), seg.input_at(5)).transpose());
  EXPECT_EQ(pmp.b.block(0, 0, 1, 2), sys.input_jacobian(seg.state_at(3), seg.input_at(3)).transpose());
  EXPECT_TRUE(pmp.b.block(0, 2, 1, 2).isZero(0.0));
  EXPECT_EQ(pmp.omega_offset, 4);
}

TEST(AssemblePmp, ShapeFormulaProperty) {
  const Trajectory demo = pendulum_demo();
  const DynamicsDerivatives dyn = true_derivatives(pendulum_system(coarse()));
  const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
  for (Index start = 0; start < 8; ++start) {
    for (Index end = start + 2; end <= 10; ++end) {
      const PmpSystem pmp = assemble_pmp(make_segment(demo, {start, end}), feat, dyn);
      const Index tau = end - start;
      EXPECT_EQ(pmp.f.rows(), 3 * tau);
      EXPECT_EQ(pmp.f.cols(), 2 * tau + 3 + 2);
    }
  }
}

TEST(AssemblePmp, ConstantFeaturesGiveZeroFeatureBlocks) {
  FeatureSpec feat;
  feat.r = 2;
  feat.eval = [](const Vector&, const Vector&) { return Vector{{1.0, 2.0}}; };
  feat.x_jacobian = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 2)); };
  feat.u_jacobian = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 1)); };
  const PmpSystem pmp = assemble_pmp(make_segment(pendulum_demo(), {0, 4}), feat,
                                     true_derivatives(pendulum_system(coarse())));
  EXPECT_TRUE(pmp.phi_x.isZero(0.0));
  EXPECT_TRUE(pmp.phi_u.isZero(0.0));
}

TEST(AssemblePmp, RejectsShortSegmentsAndMissingJacobians) {
  const Trajectory demo = pendulum_demo();
  const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
  EXPECT_THROW(assemble_pmp(make_segment(demo, {0, 1}), feat, true_derivatives(pendulum_system(coarse()))),
               DimensionError);
  EXPECT_THROW(assemble_pmp(make_segment(demo, {0, 4}), feat, DynamicsDerivatives{}), std::invalid_argument);
}

TEST(SolveWeights, OracleRecoveryOnOptimalSegment) {
  const Trajectory demo = pendulum_demo();
  const PmpSystem pmp = assemble_pmp(make_segment(demo, {0, 10}), pendulum_feature_spec(pendulum_goal()),
                                     true_derivatives(pendulum_system(coarse())));
  const WeightEstimate est = solve_weights(pmp, kTruth);
  EXPECT_LT((est.omega - Vector{{0.5, 0.25, 0.25}}).norm(), 1e-6);
  EXPECT_LT(est.residual, 1e-8);
  EXPECT_LT(*est.weight_error, 1e-4);
  EXPECT_NEAR(est.omega.sum(), 1.0, 1e-12);
  EXPECT_NEAR(est.omega_rescaled.sum(), 4.0, 1e-9);
  EXPECT_EQ(est.provenance, Provenance::TrueDynamics);
}

TEST(SolveWeights, CostatesMatchAdjointSweep) {
  const Trajectory demo = pendulum_demo();
  const SystemSpec sys = pendulum_system(coarse());
  const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
  const PmpSystem pmp = assemble_pmp(make_segment(demo, {2, 8}), feat, true_derivatives(sys));
  const WeightEstimate est = solve_weights(pmp);
  const Matrix lambda = adjoint_sweep(demo, sys, feat, Vector{{0.5, 0.25, 0.25}}).costates;
  for (Index k = 0; k < 6; ++k) {
    EXPECT_LT((est.nu.segment(2 * k, 2) - lambda.col(3 + k)).norm(), 1e-6 * (1.0 + lambda.norm()));
  }
  EXPECT_LT((est.nu.tail(2) - lambda.col(9)).norm(), 1e-6 * (1.0 + lambda.norm()));
}

TEST(SolveWeights, PlantedNullVector) {
  std::mt19937_64 rng(1);
  PmpSystem sys;
  sys.r = 3;
  sys.omega_offset = 4;
  Vector planted = test::gaussian(9, rng);
  planted.segment(4, 3) = Vector{{0.2, 0.3, 0.5}};
  Matrix f = test::gaussian(12, 9, rng);
  f -= (f * planted) * planted.transpose() / planted.squaredNorm();
  sys.f = f;
  const WeightEstimate est = solve_weights(sys);
  EXPECT_LT((est.nu - planted).norm(), 1e-10);
  EXPECT_LT(est.residual, 1e-12);
}

TEST(SolveWeights, ScalingInvariance) {
  const PmpSystem pmp = assemble_pmp(make_segment(pendulum_demo(), {0, 6}),
                                     pendulum_feature_spec(pendulum_goal()),
                                     true_derivatives(pendulum_system(coarse())));
  const WeightEstimate base = solve_weights(pmp);
  for (double s : {10.0, 1e-3, 7.5}) {
    PmpSystem scaled = pmp;
    scaled.f *= s;
    EXPECT_LT((solve_weights(scaled).omega - base.omega).norm(), 1e-6);
  }
  // Power-of-two scaling is exact in floating point, so the result is bitwise identical.
  for (double s : {0.25, 8.0, 1024.0}) {
    PmpSystem scaled = pmp;
    scaled.f *= s;
    EXPECT_EQ(solve_weights(scaled).omega, base.omega);
  }
}

TEST(SolveWeights, Deterministic) {
  const PmpSystem pmp = assemble_pmp(make_segment(pendulum_demo(), {0, 6}),
                                     pendulum_feature_spec(pendulum_goal()),
                                     true_derivatives(pendulum_system(coarse())));
  EXPECT_EQ(solve_weights(pmp).nu, solve_weights(pmp).nu);
}

TEST(SolveWeights, NoWeightColumnsIsAnError) {
  PmpSystem sys;
  sys.f = Matrix::Identity(3, 3);
  sys.r = 0;
  EXPECT_THROW(solve_weights(sys), NumericalError);
}

TEST(SolveWeights, LiteralFineTimeStepIsIllConditioned) {
  // At dt = 0.001 over ten steps the pendulum barely moves and the data cannot separate the weights.
  const PendulumParams fine;
  const SystemSpec sys = pendulum_system(fine);
  const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
  const OcSolution sol = solve_oc(sys, feat, kTruth, Vector::Zero(2), 10, tight());
  const WeightEstimate est =
      solve_weights(assemble_pmp(make_segment(sol.trajectory, {0, 10}), feat, true_derivatives(sys)), kTruth);
  const PmpSystem coarse_pmp = assemble_pmp(make_segment(pendulum_demo(), {0, 10}), feat,
                                            true_derivatives(pendulum_system(coarse())));
  EXPECT_GT(est.condition_number, 100.0 * solve_weights(coarse_pmp).condition_number);
}

TEST(StackSegments, SingleSystemUnchanged) {
  const PmpSystem pmp = assemble_pmp(make_segment(pendulum_demo(), {0, 4}),
                                     pendulum_feature_spec(pendulum_goal()),
                                     true_derivatives(pendulum_system(coarse())));
  const PmpSystem stacked = stack_segments({pmp});
  EXPECT_EQ(stacked.f, pmp.f);
  EXPECT_EQ(stacked.omega_offset, pmp.omega_offset);
}

TEST(StackSegments, DuplicateSegmentSameEstimate) {
  const PmpSystem pmp = assemble_pmp(make_segment(pendulum_demo(), {1, 7}),
                                     pendulum_feature_spec(pendulum_goal()),
                                     true_derivatives(pendulum_system(coarse())));
  const PmpSystem twice = stack_segments({pmp, pmp});
  EXPECT_EQ(twice.f.rows(), 2 * pmp.f.rows());
  EXPECT_EQ(twice.f.cols(), 2 * pmp.f.cols() - 3);
  EXPECT_LT((solve_weights(twice).omega - solve_weights(pmp).omega).norm(), 1e-6);
}

TEST(StackSegments, DistinctSegmentsAgree) {
  const Trajectory demo = pendulum_demo();
  const FeatureSpec feat = pendulum_feature_spec(pendulum_goal());
  const DynamicsDerivatives dyn = true_derivatives(pendulum_system(coarse()));
  const PmpSystem a = assemble_pmp(make_segment(demo, {0, 5}), feat, dyn);
  const PmpSystem b = assemble_pmp(make_segment(demo, {5, 10}), feat, dyn);
  const WeightEstimate joint = solve_weights(stack_segments({a, b}));
  EXPECT_LT(joint.residual, 1e-8);
  EXPECT_LT((joint.omega - solve_weights(a).omega).norm(), 1e-6);
  EXPECT_EQ(joint.segments_used, 2);
}

TEST(StackSegments, MismatchedFeatureCountsThrow) {
  const Trajectory demo = pendulum_demo();
  const DynamicsDerivatives dyn = true_derivatives(pendulum_system(coarse()));
  const PmpSystem a = assemble_pmp(make_segment(demo, {0, 4}), pendulum_feature_spec(pendulum_goal()), dyn);
  FeatureSpec two;
  two.r = 2;
  two.x_jacobian = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 2)); };
  two.u_jacobian = [](const Vector&, const Vector& u) { return Matrix(Matrix::Constant(2, 1, u(0))); };
  const PmpSystem b = assemble_pmp(make_segment(demo, {0, 4}), two, dyn);
  EXPECT_THROW(stack_segments({a, b}), DimensionError);
  EXPECT_THROW(stack_segments({}), std::invalid_argument);
}

TEST(KoopmanProvenance, ExactLinearRepresentationMatchesTrueDynamics) {
  const Matrix a{{0.9, 0.2}, {-0.1, 0.8}};
  const Matrix b{{0.0}, {0.5}};
  const SystemSpec sys = linear_system(a, b);
  std::mt19937_64 rng(2);
  const Trajectory probe = simulate(sys, Vector{{1.0, 0.0}}, test::gaussian(1, 25, rng));
  const auto obs = identity_observable(2);
  const KoopmanModel model = init_model(build_matrices(make_segment(probe, {0, 24}), *obs), 0.0);
  const FeatureSpec feat = goal_features(Vector{{1.0, -1.0}});
  const Trajectory demo = solve_oc(sys, feat, kTruth, Vector::Zero(2), 12, tight()).trajectory;
  const Segment seg = make_segment(demo, {0, 12});
  const PmpSystem koop = assemble_pmp(seg, feat, koopman_derivatives(model, *obs));
  const PmpSystem exact = assemble_pmp(seg, feat, true_derivatives(sys));
  EXPECT_LT((koop.f - exact.f).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(koop.provenance, Provenance::Koopman);
  EXPECT_LT((solve_weights(koop).omega - solve_weights(exact).omega).norm(), 1e-6);
}

TEST(WeightError, Anchors) {
  EXPECT_NEAR(weight_error(Vector{{1.92, 1.12, 0.96}}, kTruth), std::sqrt(0.0224), 1e-12);
  EXPECT_NEAR(weight_error(Vector{{1.92, 1.12, 0.96}}, kTruth), 0.146, 0.01);
  EXPECT_NEAR(weight_error(Vector{{1.96, 1.05, 0.98}}, kTruth), 0.070, 0.01);
  EXPECT_EQ(weight_error(kTruth, kTruth), 0.0);
  EXPECT_THROW(weight_error(Vector{{1.0}}, kTruth), DimensionError);
}

TEST(Provenance, StringRoundTrip) {
  for (Provenance p : {Provenance::Koopman, Provenance::TrueDynamics}) {
    EXPECT_EQ(provenance_from_string(to_string(p)), p);
  }
  EXPECT_THROW(provenance_from_string("learned"), std::invalid_argument);
}
