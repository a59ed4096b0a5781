#pragma once

// Receding-horizon closed loop: solve from the measured state, apply the
// first control block to the double-precision plant, log, repeat.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spmpc/condense.hpp"
#include "spmpc/plant.hpp"
#include "spmpc/solver.hpp"

namespace spmpc {

struct Scenario {
  ContinuousPlant plant;
  MpcProblem mpc;  ///< mpc.plant is replaced by the discretized `plant`
  SolverConfig solver;
  VectorXd x0;
  int steps = 400;
  std::uint64_t seed = 0;

  void validate() const {
    plant.validate();
    if (steps < 1) throw DomainError("scenario: steps must be at least 1");
    if (x0.size() != plant.states()) throw DimensionError("scenario: x0 must have length n");
    solver.validate();
  }
};

struct TraceRow {
  int step = 0;
  double t = 0.0;
  VectorXd x;  ///< state at the start of the step
  VectorXd y;  ///< output C x + D u
  VectorXd u;  ///< applied control
  bool clamped = false;
  bool divergent = false;
  int iters = 0;
  double residual = 0.0;
  double eps_norm = 0.0;  ///< peak ||eps^k||_2 over the step's iterations
  double eps_inf = 0.0;   ///< peak ||eps^k||_inf over the step's iterations
  int zeros_in_u = 0;
};

struct SimulationTrace {
  std::vector<TraceRow> rows;
  // run metadata
  std::optional<FxpFormat> format;
  double sigma = 0.0;
  SparsityNorm norm = SparsityNorm::L1;
  int N_p = 0;
  int N_c = 0;
  double h = 0.0;
  VectorXd reference;
  VectorXd u_min, u_max;

  bool any_divergent() const {
    return std::any_of(rows.begin(), rows.end(), [](const TraceRow& r) { return r.divergent; });
  }
};

/// Discretizes the plant once, then runs `steps` receding-horizon steps.
/// Deterministic for a given scenario.
inline SimulationTrace run_closed_loop(const Scenario& scn) {
  scn.validate();
  MpcProblem mpc = scn.mpc;
  mpc.plant = zoh_discretize(scn.plant);
  const CondensedMpc cond = condense(mpc);
  const auto p = mpc.plant.inputs();

  SimulationTrace trace;
  trace.format = scn.solver.fxp;
  trace.sigma = mpc.sigma;
  trace.norm = mpc.norm;
  trace.N_p = mpc.N_p;
  trace.N_c = mpc.N_c;
  trace.h = mpc.plant.h;
  trace.reference = mpc.r;
  trace.u_min = mpc.u_min;
  trace.u_max = mpc.u_max;
  trace.rows.reserve(static_cast<std::size_t>(scn.steps));

  VectorXd x = scn.x0;
  VectorXd warm = VectorXd::Zero(cond.decision_size());
  VectorXd last_applied = VectorXd::Zero(p);

  for (int k = 0; k < scn.steps; ++k) {
    TraceRow row;
    row.step = k;
    row.t = k * mpc.plant.h;
    row.x = x;
    VectorXd first;
    try {
      const SolveResult res = solve(mpc, cond, x, scn.solver, warm);
      first = res.u_sequence.head(p);
      row.iters = res.state.iter;
      row.residual = res.state.residuals.empty() ? 0.0 : res.state.residuals.back();
      for (std::size_t i = 0; i < res.state.eps_history.size(); ++i) {
        row.eps_norm = std::max(row.eps_norm, res.state.eps_history[i]);
        row.eps_inf = std::max(row.eps_inf, res.state.eps_inf_history[i]);
      }
      warm = shift_warm_start(res.u_sequence, p);
    } catch (const Divergence&) {
      // Hold the previous output, as a real controller would.
      row.divergent = true;
      row.iters = scn.solver.max_iters;
      row.residual = std::numeric_limits<double>::infinity();
      first = last_applied;
      warm.setZero();
    }
    const VectorXd applied = first.cwiseMax(mpc.u_min).cwiseMin(mpc.u_max);
    row.clamped = applied != first;
    row.u = applied;
    row.zeros_in_u = static_cast<int>((applied.array() == 0.0).count());
    const StepResult next = plant_step(mpc.plant, x, applied);
    row.y = next.y;
    x = next.x_next;
    last_applied = applied;
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

struct MetricsReport {
  double rms_err = 0.0;          ///< RMS of ||y - r||_2 over the final window
  int settle_step = -1;          ///< first step after which ||x||_inf stays below the threshold
  double sparsity = 0.0;         ///< fraction of exactly-zero applied control entries
  double eps_peak = 0.0;         ///< peak ||eps||_inf over the run
  double osc_index = 0.0;        ///< RMS ||x|| final window / RMS ||x|| mid window
  double rms_state_final = 0.0;  ///< RMS of ||x||_2 over the final window
  double max_state_final = 0.0;  ///< max ||x||_inf over the final window
  bool divergent = false;
};

/// Final window is the last quarter of the run, mid window the quarter before.
inline MetricsReport compute_metrics(const SimulationTrace& trace, double settle_threshold = 1e-2) {
  MetricsReport m;
  const auto n = static_cast<int>(trace.rows.size());
  if (n == 0) return m;
  const int quarter = std::max(1, n / 4);
  const int final_begin = n - quarter;
  const int mid_begin = std::max(0, final_begin - quarter);

  const auto rms_state = [&](int begin, int end) {
    if (end <= begin) return 0.0;
    double acc = 0.0;
    for (int k = begin; k < end; ++k) acc += trace.rows[static_cast<std::size_t>(k)].x.squaredNorm();
    return std::sqrt(acc / (end - begin));
  };

  double err = 0.0;
  for (int k = final_begin; k < n; ++k) {
    const auto& row = trace.rows[static_cast<std::size_t>(k)];
    const VectorXd e = trace.reference.size() == row.y.size() ? VectorXd(row.y - trace.reference) : row.y;
    err += e.squaredNorm();
    m.max_state_final = std::max(m.max_state_final, row.x.lpNorm<Eigen::Infinity>());
  }
  m.rms_err = std::sqrt(err / (n - final_begin));
  m.rms_state_final = rms_state(final_begin, n);
  const double mid = rms_state(mid_begin, final_begin);
  if (mid > 0.0) {
    m.osc_index = m.rms_state_final / mid;
  } else {
    m.osc_index = m.rms_state_final > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }

  int settle = n;
  while (settle > 0 &&
         trace.rows[static_cast<std::size_t>(settle - 1)].x.lpNorm<Eigen::Infinity>() < settle_threshold) {
    --settle;
  }
  m.settle_step = settle < n ? settle : -1;

  long zeros = 0, total = 0;
  for (const auto& row : trace.rows) {
    zeros += row.zeros_in_u;
    total += row.u.size();
    m.eps_peak = std::max(m.eps_peak, row.eps_inf);
    m.divergent = m.divergent || row.divergent;
  }
  m.sparsity = total > 0 ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
  return m;
}

}  // namespace spmpc
