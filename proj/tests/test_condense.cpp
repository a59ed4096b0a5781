#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

#include "oracles.hpp"
#include "spmpc/condense.hpp"

using namespace spmpc;

namespace {

DiscretePlant random_discrete(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p, Eigen::Index m) {
  return DiscretePlant{oracle::random_matrix(rng, n, n, -0.6, 0.6), oracle::random_matrix(rng, n, p),
                       oracle::random_matrix(rng, m, n), MatrixXd::Zero(m, p), 0.1};
}

MpcProblem box_problem(const DiscretePlant& plant, int N_p, int N_c, double ub, double yb) {
  MpcProblem mpc;
  mpc.plant = plant;
  mpc.N_p = N_p;
  mpc.N_c = N_c;
  const auto p = plant.inputs(), m = plant.outputs();
  mpc.Q = MatrixXd::Identity(m * N_p, m * N_p);
  mpc.u_min = VectorXd::Constant(p, -ub);
  mpc.u_max = VectorXd::Constant(p, ub);
  mpc.y_min = VectorXd::Constant(m, -yb);
  mpc.y_max = VectorXd::Constant(m, yb);
  mpc.r = VectorXd::Zero(m);
  return mpc;
}

}  // namespace

TEST(BuildPrediction, ScalarPowersOfTwo) {
  const DiscretePlant d{MatrixXd::Constant(1, 1, 2.0), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                        MatrixXd::Zero(1, 1), 0.1};
  const Prediction pr = build_prediction(d, 3, 2);
  MatrixXd phi(3, 2);
  phi << 1, 0, 2, 1, 4, 2;
  EXPECT_EQ(pr.Phi, phi);
  EXPECT_EQ(pr.F, Eigen::Vector3d(2, 4, 8));
}

TEST(BuildPrediction, SingleStep) {
  std::mt19937_64 rng(31);
  const DiscretePlant d = random_discrete(rng, 3, 2, 2);
  const Prediction pr = build_prediction(d, 1, 1);
  EXPECT_LE((pr.Phi - d.C * d.B_d).norm(), 1e-15);
  EXPECT_LE((pr.F - d.C * d.A_d).norm(), 1e-15);
}

TEST(BuildPrediction, RejectsBadHorizons) {
  std::mt19937_64 rng(32);
  const DiscretePlant d = random_discrete(rng, 2, 1, 1);
  EXPECT_THROW(build_prediction(d, 3, 4), DomainError);
  EXPECT_THROW(build_prediction(d, 3, 0), DomainError);
}

TEST(BuildPrediction, MatchesRecursion) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 5, p = 1 + trial % 3, m = 1 + trial % 4;
    const DiscretePlant d = random_discrete(rng, n, p, m);
    const int N_p = 1 + static_cast<int>(rng() % 10);
    const int N_c = 1 + static_cast<int>(rng() % static_cast<unsigned>(N_p));
    const Prediction pr = build_prediction(d, N_p, N_c);
    const VectorXd x = oracle::random_vector(rng, n);
    const VectorXd u = oracle::random_vector(rng, p * N_c);
    const VectorXd expect = oracle::predict_by_recursion(d.A_d, d.B_d, d.C, x, u, N_p, N_c);
    EXPECT_LE((pr.Phi * u + pr.F * x - expect).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(Condense, ConstraintRowCount) {
  std::mt19937_64 rng(34);
  const MpcProblem mpc = box_problem(random_discrete(rng, 7, 4, 7), 10, 10, 1.0, 10.0);
  const CondensedMpc c = condense(mpc);
  EXPECT_EQ(c.constraint_rows(), 220);
  EXPECT_EQ(c.decision_size(), 40);
}

TEST(Condense, ConstraintRhsAtOrigin) {
  std::mt19937_64 rng(35);
  const MpcProblem mpc = box_problem(random_discrete(rng, 3, 2, 2), 4, 3, 1.0, 10.0);
  const CondensedMpc c = condense(mpc);
  const Constraints k = build_constraints(mpc, c, VectorXd::Zero(3));
  VectorXd expect(2 * 6 + 2 * 8);
  expect << VectorXd::Ones(12), VectorXd::Constant(16, 10.0);
  EXPECT_EQ(k.Ncal, expect);
}

TEST(Condense, FeasibleSetMatchesElementwiseBounds) {
  std::mt19937_64 rng(36);
  const MpcProblem mpc = box_problem(random_discrete(rng, 3, 2, 2), 5, 3, 1.0, 2.0);
  const CondensedMpc c = condense(mpc);
  const VectorXd x = oracle::random_vector(rng, 3, -0.5, 0.5);
  const Constraints k = build_constraints(mpc, c, x);
  int feasible = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const VectorXd u = oracle::random_vector(rng, 6, -1.5, 1.5);
    const bool in_set = ((k.Mcal * u).array() <= k.Ncal.array()).all();
    const VectorXd y = oracle::predict_by_recursion(mpc.plant.A_d, mpc.plant.B_d, mpc.plant.C, x, u, 5, 3);
    const bool direct = (u.array().abs() <= 1.0).all() && (y.array().abs() <= 2.0 + 1e-12).all();
    if (in_set) {
      ++feasible;
      EXPECT_TRUE((u.array() >= -1.0).all() && (u.array() <= 1.0).all());
    }
    // Away from the boundary the two descriptions agree.
    if ((y.array().abs() - 2.0).abs().minCoeff() > 1e-9) {
      EXPECT_EQ(in_set, direct);
    }
  }
  EXPECT_GT(feasible, 0);
}

TEST(ConstraintProperty, NegationFlipsBlocks) {
  std::mt19937_64 rng(37);
  const DiscretePlant d = random_discrete(rng, 3, 2, 2);
  MpcProblem mpc = box_problem(d, 4, 2, 1.0, 3.0);
  mpc.u_min << -0.5, -2.0;
  mpc.u_max << 1.5, 0.25;
  mpc.y_min << -3.0, -1.0;
  mpc.y_max << 2.0, 4.0;
  MpcProblem neg = mpc;
  neg.u_min = -mpc.u_max;
  neg.u_max = -mpc.u_min;
  neg.y_min = -mpc.y_max;
  neg.y_max = -mpc.y_min;
  const VectorXd x = oracle::random_vector(rng, 3);
  const VectorXd a = constraint_rhs(condense(mpc), x);
  const VectorXd b = constraint_rhs(condense(neg), -x);
  const Eigen::Index nu = 4, ny = 8;
  EXPECT_EQ(a.segment(0, nu), b.segment(nu, nu));
  EXPECT_EQ(a.segment(nu, nu), b.segment(0, nu));
  EXPECT_LE((a.segment(2 * nu, ny) - b.segment(2 * nu + ny, ny)).norm(), 1e-15);
  EXPECT_LE((a.segment(2 * nu + ny, ny) - b.segment(2 * nu, ny)).norm(), 1e-15);
}

TEST(TrackingForm, IdentityExample) {
  MpcProblem mpc;
  mpc.plant = DiscretePlant{MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3),
                            MatrixXd::Zero(3, 3), 0.1};
  mpc.N_p = mpc.N_c = 1;
  mpc.Q = MatrixXd::Identity(3, 3);
  mpc.u_min = VectorXd::Constant(3, -1);
  mpc.u_max = VectorXd::Constant(3, 1);
  mpc.y_min = VectorXd::Constant(3, -1);
  mpc.y_max = VectorXd::Constant(3, 1);
  mpc.r = Eigen::Vector3d(0.5, -0.25, 2.0);
  const CondensedMpc c = condense(mpc);
  const TrackingForm tf = build_tracking_form(mpc, c, VectorXd::Zero(3));
  EXPECT_EQ(tf.H, MatrixXd::Identity(3, 3));
  EXPECT_EQ(tf.g_lin, -mpc.r);
  EXPECT_EQ(tf.gradient(mpc.r), VectorXd::Zero(3));
}

TEST(TrackingForm, ValueMatchesDirectEvaluation) {
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 20; ++trial) {
    const DiscretePlant d = random_discrete(rng, 4, 2, 3);
    MpcProblem mpc = box_problem(d, 6, 4, 1.0, 5.0);
    const MatrixXd g = oracle::random_matrix(rng, 18, 18);
    mpc.Q = g * g.transpose() + 0.5 * MatrixXd::Identity(18, 18);
    mpc.r = oracle::random_vector(rng, 3);
    const CondensedMpc c = condense(mpc);
    const VectorXd x = oracle::random_vector(rng, 4);
    const VectorXd u = oracle::random_vector(rng, 8);
    const TrackingForm tf = build_tracking_form(mpc, c, x);
    const VectorXd e = oracle::predict_by_recursion(d.A_d, d.B_d, d.C, x, u, 6, 4) - mpc.r.replicate(6, 1);
    const double direct = 0.5 * e.dot(mpc.Q * e);
    EXPECT_NEAR(tf.value(u), direct, 1e-12 * std::max(1.0, direct));
  }
}

TEST(TrackingForm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(39);
  const DiscretePlant d = random_discrete(rng, 3, 2, 2);
  MpcProblem mpc = box_problem(d, 5, 3, 1.0, 5.0);
  mpc.r = oracle::random_vector(rng, 2);
  const CondensedMpc c = condense(mpc);
  const TrackingForm tf = build_tracking_form(mpc, c, oracle::random_vector(rng, 3));
  const VectorXd u = oracle::random_vector(rng, 6);
  const VectorXd grad = tf.gradient(u);
  VectorXd fd(6);
  const double step = 1e-5;
  for (int i = 0; i < 6; ++i) {
    VectorXd up = u, dn = u;
    up(i) += step;
    dn(i) -= step;
    fd(i) = (tf.value(up) - tf.value(dn)) / (2 * step);
  }
  EXPECT_LE((grad - fd).norm(), 1e-6 * grad.norm());
}

TEST(TrackingForm, HessianIsSymmetricPsd) {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const DiscretePlant d = random_discrete(rng, 4, 3, 2);
    MpcProblem mpc = box_problem(d, 8, 8, 1.0, 5.0);
    const MatrixXd g = oracle::random_matrix(rng, 16, 16);
    mpc.Q = g * g.transpose() + 1e-3 * MatrixXd::Identity(16, 16);
    const CondensedMpc c = condense(mpc);
    EXPECT_EQ(c.H, c.H.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(c.H).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(MpcValidation, RejectsInvalidProblems) {
  std::mt19937_64 rng(41);
  const DiscretePlant d = random_discrete(rng, 2, 1, 2);
  MpcProblem mpc = box_problem(d, 3, 3, 1.0, 1.0);
  EXPECT_NO_THROW(mpc.validate());
  MpcProblem bad = mpc;
  bad.N_c = 4;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = mpc;
  bad.Q(0, 1) = 0.5;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = mpc;
  bad.Q(0, 0) = -1.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = mpc;
  bad.u_min(0) = 2.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = mpc;
  bad.r = VectorXd::Zero(3);
  EXPECT_THROW(bad.validate(), DimensionError);
  bad = mpc;
  bad.Q = MatrixXd::Identity(5, 5);
  EXPECT_THROW(bad.validate(), DimensionError);
}
