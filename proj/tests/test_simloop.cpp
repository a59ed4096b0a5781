#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "instances.hpp"
#include "spmpc/config.hpp"
#include "spmpc/simloop.hpp"

using namespace spmpc;

namespace {

Scenario scalar_scenario(double a, double sigma) {
  Scenario s;
  s.plant = ContinuousPlant{MatrixXd::Constant(1, 1, a), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                            MatrixXd::Zero(1, 1), 0.1};
  s.mpc.N_p = s.mpc.N_c = 5;
  s.mpc.Q = MatrixXd::Identity(5, 5);
  s.mpc.sigma = sigma;
  s.mpc.u_min = VectorXd::Constant(1, -5.0);
  s.mpc.u_max = VectorXd::Constant(1, 5.0);
  s.mpc.y_min = VectorXd::Constant(1, -INFINITY);
  s.mpc.y_max = VectorXd::Constant(1, INFINITY);
  s.mpc.r = VectorXd::Zero(1);
  MpcProblem d = s.mpc;
  d.plant = zoh_discretize(s.plant);
  s.solver.lambda_u = testing_instances::lambda_max(condense(d).H);
  s.solver.max_iters = 400;
  s.x0 = VectorXd::Ones(1);
  s.steps = 200;
  return s;
}

SimulationTrace synthetic_trace(int n, const std::function<double(int)>& x_of_k) {
  SimulationTrace tr;
  tr.reference = VectorXd::Zero(1);
  for (int k = 0; k < n; ++k) {
    TraceRow row;
    row.step = k;
    row.x = VectorXd::Constant(1, x_of_k(k));
    row.y = row.x;
    row.u = VectorXd::Zero(1);
    row.zeros_in_u = 1;
    tr.rows.push_back(row);
  }
  return tr;
}

double trajectory_rms_gap(const SimulationTrace& a, const SimulationTrace& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.rows.size(); ++k) acc += (a.rows[k].x - b.rows[k].x).squaredNorm();
  return std::sqrt(acc / static_cast<double>(a.rows.size()));
}

}  // namespace

TEST(ClosedLoop, ZeroStateStaysAtRest) {
  Scenario s = default_run_config().scenario();
  s.x0.setZero();
  s.steps = 50;
  const SimulationTrace tr = run_closed_loop(s);
  ASSERT_EQ(tr.rows.size(), 50u);
  for (const auto& row : tr.rows) {
    EXPECT_EQ(row.x, VectorXd::Zero(7));
    EXPECT_EQ(row.u, VectorXd::Zero(4));
    EXPECT_EQ(row.zeros_in_u, 4);
  }
  const MetricsReport m = compute_metrics(tr);
  EXPECT_EQ(m.rms_err, 0.0);
  EXPECT_EQ(m.settle_step, 0);
  EXPECT_EQ(m.sparsity, 1.0);
}

TEST(ClosedLoop, StableScalarPlantIsRegulated) {
  const SimulationTrace tr = run_closed_loop(scalar_scenario(-0.5, 0.0));
  EXPECT_LE(std::abs(tr.rows.back().x(0)), 1e-3);
  EXPECT_LT(tr.rows.front().u(0), 0.0);
  EXPECT_DOUBLE_EQ(tr.rows[3].t, 0.3);
}

TEST(ClosedLoop, UnstableScalarPlantIsStabilized) {
  const SimulationTrace tr = run_closed_loop(scalar_scenario(0.5, 0.0));
  EXPECT_LE(std::abs(tr.rows.back().x(0)), 1e-3);
  EXPECT_GE(compute_metrics(tr).settle_step, 0);
}

TEST(ClosedLoop, TimeAndStepColumns) {
  Scenario s = scalar_scenario(-0.5, 0.2);
  s.steps = 10;
  const SimulationTrace tr = run_closed_loop(s);
  for (std::size_t k = 0; k < tr.rows.size(); ++k) {
    EXPECT_EQ(tr.rows[k].step, static_cast<int>(k));
    EXPECT_DOUBLE_EQ(tr.rows[k].t, 0.1 * static_cast<double>(k));
  }
}

TEST(ClosedLoop, StateFollowsPlantModel) {
  Scenario s = default_run_config().scenario();
  s.steps = 30;
  const SimulationTrace tr = run_closed_loop(s);
  const DiscretePlant d = zoh_discretize(s.plant);
  for (std::size_t k = 0; k + 1 < tr.rows.size(); ++k) {
    const StepResult r = plant_step(d, tr.rows[k].x, tr.rows[k].u);
    EXPECT_EQ(r.x_next, tr.rows[k + 1].x);
    EXPECT_EQ(r.y, tr.rows[k].y);
  }
}

TEST(ClosedLoop, Deterministic) {
  Scenario s = default_run_config().scenario(matched_format(28), 1.5);
  s.steps = 80;
  const SimulationTrace a = run_closed_loop(s);
  const SimulationTrace b = run_closed_loop(s);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].x, b.rows[k].x);
    EXPECT_EQ(a.rows[k].u, b.rows[k].u);
    EXPECT_EQ(a.rows[k].eps_inf, b.rows[k].eps_inf);
    EXPECT_EQ(a.rows[k].iters, b.rows[k].iters);
  }
}

TEST(ClosedLoop, WideFormatTracksExact) {
  const RunConfig cfg = default_run_config();
  Scenario exact = cfg.scenario(std::nullopt, 1.5);
  Scenario wide = cfg.scenario(matched_format(64), 1.5);
  exact.steps = wide.steps = 150;
  const SimulationTrace a = run_closed_loop(exact);
  const SimulationTrace b = run_closed_loop(wide);
  EXPECT_LE(trajectory_rms_gap(a, b), 1e-6);
  EXPECT_FALSE(b.any_divergent());
}

TEST(ClosedLoop, AppliedControlRespectsBox) {
  for (auto method : {SolverMethod::AxPgd, SolverMethod::WlmAdmm}) {
    for (int w : {28, 64}) {
      Scenario s = default_run_config().scenario(matched_format(w), 0.5);
      s.solver.method = method;
      s.mpc.u_min = VectorXd::Constant(4, -0.3);
      s.mpc.u_max = VectorXd::Constant(4, 0.3);
      s.steps = 60;
      for (const auto& row : run_closed_loop(s).rows) {
        EXPECT_TRUE((row.u.array().abs() <= 0.3).all());
      }
    }
  }
}

TEST(ClosedLoop, EpsColumnsReflectArithmetic) {
  Scenario s = default_run_config().scenario(std::nullopt, 1.5);
  s.steps = 20;
  for (const auto& row : run_closed_loop(s).rows) EXPECT_EQ(row.eps_norm, 0.0);
  s.solver.fxp = matched_format(28);
  double peak = 0.0;
  for (const auto& row : run_closed_loop(s).rows) {
    EXPECT_LE(row.eps_inf, row.eps_norm);
    peak = std::max(peak, row.eps_inf);
  }
  EXPECT_GT(peak, 0.0);
}

TEST(ClosedLoop, DivergentStepHoldsPreviousControl) {
  Scenario s = scalar_scenario(-0.5, 0.0);
  s.solver.lambda_u = 1e-300;
  s.steps = 5;
  const SimulationTrace tr = run_closed_loop(s);
  EXPECT_TRUE(tr.any_divergent());
  for (const auto& row : tr.rows) {
    EXPECT_TRUE(row.divergent);
    EXPECT_EQ(row.u(0), 0.0);
  }
  EXPECT_TRUE(compute_metrics(tr).divergent);
}

TEST(ClosedLoop, RejectsBadScenario) {
  Scenario s = scalar_scenario(-0.5, 0.0);
  s.x0 = VectorXd::Ones(2);
  EXPECT_THROW(run_closed_loop(s), DimensionError);
  s = scalar_scenario(-0.5, 0.0);
  s.steps = 0;
  EXPECT_THROW(run_closed_loop(s), DomainError);
}

TEST(Metrics, SparsityFraction) {
  SimulationTrace tr = synthetic_trace(4, [](int) { return 0.0; });
  for (auto& row : tr.rows) {
    row.u = Eigen::Vector4d(0.0, 0.0, 0.0, 0.7);
    row.zeros_in_u = 3;
  }
  EXPECT_EQ(compute_metrics(tr).sparsity, 0.75);
}

TEST(Metrics, AllZeroTrace) {
  const MetricsReport m = compute_metrics(synthetic_trace(100, [](int) { return 0.0; }));
  EXPECT_EQ(m.rms_err, 0.0);
  EXPECT_EQ(m.settle_step, 0);
  EXPECT_EQ(m.osc_index, 0.0);
  EXPECT_EQ(m.sparsity, 1.0);
  EXPECT_FALSE(m.divergent);
}

TEST(Metrics, GrowingOscillationIndexAboveOne) {
  const MetricsReport m =
      compute_metrics(synthetic_trace(400, [](int k) { return std::pow(1.01, k) * std::sin(0.7 * k); }));
  EXPECT_GT(m.osc_index, 1.0);
  EXPECT_EQ(m.settle_step, -1);
}

TEST(Metrics, DecayingOscillationIndexBelowOne) {
  const MetricsReport m =
      compute_metrics(synthetic_trace(400, [](int k) { return std::pow(0.99, k) * std::sin(0.7 * k); }));
  EXPECT_LT(m.osc_index, 1.0);
  EXPECT_NEAR(m.osc_index, std::pow(0.99, 100), 0.05);
}

TEST(Metrics, SettleStepAndFinalWindowError) {
  const MetricsReport m = compute_metrics(synthetic_trace(40, [](int k) { return k < 10 ? 1.0 : 0.5 * 1e-3; }));
  EXPECT_EQ(m.settle_step, 10);
  EXPECT_DOUBLE_EQ(m.rms_err, 0.5e-3);
  EXPECT_DOUBLE_EQ(m.max_state_final, 0.5e-3);
}
