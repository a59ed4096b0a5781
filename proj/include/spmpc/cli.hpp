#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "spmpc/config.hpp"
#include "spmpc/io.hpp"
#include "spmpc/simloop.hpp"

namespace spmpc {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

/// step, t, x1..xn, y1..ym, u1..up, clamped, iters, residual, eps_norm, zeros_in_u.
/// eps_norm is the peak ||eps^k||_inf over the step's solver iterations.
inline std::string trace_csv(const SimulationTrace& trace) {
  std::string out;
  const auto& first = trace.rows.empty() ? TraceRow{} : trace.rows.front();
  out += "step,t";
  for (Eigen::Index i = 0; i < first.x.size(); ++i) out += ",x" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < first.y.size(); ++i) out += ",y" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < first.u.size(); ++i) out += ",u" + std::to_string(i + 1);
  out += ",clamped,iters,residual,eps_norm,zeros_in_u\n";
  for (const auto& row : trace.rows) {
    out += std::to_string(row.step);
    out += ',' + format_number(row.t);
    for (Eigen::Index i = 0; i < row.x.size(); ++i) out += ',' + format_number(row.x(i));
    for (Eigen::Index i = 0; i < row.y.size(); ++i) out += ',' + format_number(row.y(i));
    for (Eigen::Index i = 0; i < row.u.size(); ++i) out += ',' + format_number(row.u(i));
    out += row.clamped ? ",1," : ",0,";
    out += std::to_string(row.iters);
    out += ',' + format_number(row.residual);
    out += ',' + format_number(row.eps_inf);
    out += ',' + std::to_string(row.zeros_in_u);
    out += '\n';
  }
  return out;
}

inline std::string metrics_summary(const MetricsReport& m) {
  std::ostringstream os;
  os << "rms_err " << format_number(m.rms_err) << "\n"
     << "settle_step " << m.settle_step << "\n"
     << "sparsity " << format_number(m.sparsity) << "\n"
     << "eps_peak " << format_number(m.eps_peak) << "\n"
     << "osc_index " << format_number(m.osc_index) << "\n"
     << "rms_state_final " << format_number(m.rms_state_final) << "\n"
     << "max_state_final " << format_number(m.max_state_final) << "\n"
     << "divergent " << (m.divergent ? 1 : 0) << "\n";
  return os.str();
}

/// One combination of a sweep. word_width = frac_width = 0 denotes exact arithmetic.
struct SweepPoint {
  int word_width = 0;
  int frac_width = 0;
  double sigma = 0.0;

  std::optional<FxpFormat> format(const RunConfig& cfg) const {
    if (word_width == 0) return std::nullopt;
    return make_format(word_width, frac_width, cfg.fxp.rounding, cfg.fxp.overflow);
  }
  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
  friend bool operator<(const SweepPoint& a, const SweepPoint& b) {
    return std::tie(a.word_width, a.frac_width, a.sigma) < std::tie(b.word_width, b.frac_width, b.sigma);
  }
};

struct SweepRow {
  SweepPoint point;
  MetricsReport metrics;
};

/// Cartesian product of formats and sigmas, sorted, duplicates removed with
/// one warning line each on `warn`.
inline std::vector<SweepPoint> sweep_points(const RunConfig& cfg, std::ostream& warn) {
  std::vector<std::pair<int, int>> formats = cfg.sweep.formats;
  if (formats.empty()) {
    formats.emplace_back(cfg.fxp.enabled ? cfg.fxp.word_width : 0, cfg.fxp.enabled ? cfg.fxp.frac_width : 0);
  }
  std::vector<double> sigmas = cfg.sweep.sigmas;
  if (sigmas.empty()) sigmas.push_back(cfg.mpc.sigma);

  std::vector<SweepPoint> pts;
  for (const auto& [w, f] : formats)
    for (double s : sigmas) pts.push_back({w, f, s});
  std::stable_sort(pts.begin(), pts.end());
  std::vector<SweepPoint> unique;
  for (const auto& p : pts) {
    if (!unique.empty() && unique.back() == p) {
      warn << "warning: duplicate sweep entry W=" << p.word_width << " F=" << p.frac_width
           << " sigma=" << format_number(p.sigma) << " ignored\n";
      continue;
    }
    unique.push_back(p);
  }
  return unique;
}

inline MetricsReport run_point(const RunConfig& cfg, const SweepPoint& pt) {
  try {
    return compute_metrics(run_closed_loop(cfg.scenario(pt.format(cfg), pt.sigma)));
  } catch (const OverflowError&) {
    MetricsReport m;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.rms_err = m.sparsity = m.eps_peak = m.osc_index = m.rms_state_final = m.max_state_final = nan;
    m.divergent = true;
    return m;
  }
}

/// Runs every point on at most `jobs` threads; rows come back in point order.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, const std::vector<SweepPoint>& pts, int jobs) {
  std::vector<SweepRow> rows(pts.size());
  std::vector<std::exception_ptr> errors(pts.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < pts.size(); i = next++) {
      try {
        rows[i] = {pts[i], run_point(cfg, pts[i])};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, pts.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "word_width,frac_width,sigma,rms_err,settle_step,sparsity,eps_peak,osc_index,divergent\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += std::to_string(r.point.word_width) + ',' + std::to_string(r.point.frac_width) + ',' +
           format_number(r.point.sigma) + ',' + format_number(m.rms_err) + ',' + std::to_string(m.settle_step) +
           ',' + format_number(m.sparsity) + ',' + format_number(m.eps_peak) + ',' + format_number(m.osc_index) +
           ',' + (m.divergent ? "1" : "0") + '\n';
  }
  return out;
}

/// Runs the configured closed loop and writes its trace to [run] out.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SimulationTrace trace = run_closed_loop(cfg.scenario());
  try {
    write_file_atomic(cfg.run.out, trace_csv(trace));
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  const MetricsReport m = compute_metrics(trace);
  if (cfg.run.verbosity > 0) out << metrics_summary(m);
  if (trace.any_divergent()) {
    err << "error: solver diverged on at least one step (trace written to " << cfg.run.out << ")\n";
    return kExitDivergence;
  }
  return kExitOk;
}

/// Runs every sweep combination and writes the summary table to [run] out.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto pts = sweep_points(cfg, err);
  const auto rows = run_sweep(cfg, pts, cfg.run.jobs);
  const std::string csv = sweep_csv(rows);
  try {
    write_file_atomic(cfg.run.out, csv);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  if (cfg.run.verbosity > 0) out << csv;
  return kExitOk;
}

/// Solves one MPC instance from x and prints the result.
inline int cmd_solve(const RunConfig& cfg, const VectorXd& x, std::ostream& out, std::ostream& /*err*/) {
  Scenario scn = cfg.scenario();
  if (x.size() != scn.plant.states()) {
    throw ConfigError("state needs " + std::to_string(scn.plant.states()) + " values, got " +
                      std::to_string(x.size()));
  }
  MpcProblem mpc = scn.mpc;
  mpc.plant = zoh_discretize(scn.plant);
  const CondensedMpc cond = condense(mpc);
  const SolveResult res = solve(mpc, cond, x, scn.solver);
  const auto p = mpc.plant.inputs();

  double eps2 = 0.0, eps_inf = 0.0;
  for (std::size_t i = 0; i < res.state.eps_history.size(); ++i) {
    eps2 = std::max(eps2, res.state.eps_history[i]);
    eps_inf = std::max(eps_inf, res.state.eps_inf_history[i]);
  }
  for (int k = 0; k < mpc.N_c; ++k) {
    out << "u[" << k << "] =";
    for (Eigen::Index j = 0; j < p; ++j) out << ' ' << format_number(res.u_sequence(k * p + j));
    out << "\n";
  }
  out << "objective " << format_number(res.objective) << "\n"
      << "residual " << format_number(res.state.residuals.empty() ? 0.0 : res.state.residuals.back()) << "\n"
      << "iterations " << res.state.iter << "\n"
      << "converged " << (res.state.converged ? 1 : 0) << "\n"
      << "eps_norm_peak " << format_number(eps2) << "\n"
      << "eps_inf_peak " << format_number(eps_inf) << "\n";
  return kExitOk;
}

/// Prints the zero-order-hold matrices of the configured plant.
inline int cmd_discretize(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
  const DiscretePlant d = zoh_discretize(cfg.plant.build());
  const auto print = [&](const char* name, const MatrixXd& m) {
    out << name << " (" << m.rows() << "x" << m.cols() << ")\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_number(m(i, j));
      out << "\n";
    }
  };
  out << "h " << format_number(d.h) << "\n";
  print("A_d", d.A_d);
  print("B_d", d.B_d);
  return kExitOk;
}

}  // namespace spmpc
