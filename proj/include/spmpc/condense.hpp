#pragma once

// Condensed (input-only) form of the finite-horizon tracking problem.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <limits>
#include <string>

#include "spmpc/errors.hpp"
#include "spmpc/plant.hpp"
#include "spmpc/prox.hpp"

namespace spmpc {

struct MpcProblem {
  DiscretePlant plant;
  int N_p = 10;  ///< prediction horizon [steps]
  int N_c = 10;  ///< control horizon [steps]
  MatrixXd Q;    ///< (m N_p) x (m N_p) output weight, SPD
  double sigma = 1.5;
  SparsityNorm norm = SparsityNorm::L1;
  VectorXd u_min, u_max;  ///< p-vectors
  VectorXd y_min, y_max;  ///< m-vectors, may be infinite
  VectorXd r;             ///< m-vector reference, constant over the horizon

  void validate() const;
};

/// Expands a per-step weight into the block-diagonal horizon weight.
inline MatrixXd block_diagonal(const MatrixXd& q_step, int copies) {
  const auto m = q_step.rows();
  MatrixXd out = MatrixXd::Zero(m * copies, m * copies);
  for (int i = 0; i < copies; ++i) out.block(i * m, i * m, m, m) = q_step;
  return out;
}

inline void MpcProblem::validate() const {
  const auto n = plant.states(), p = plant.inputs(), m = plant.outputs();
  if (N_c < 1 || N_c > N_p) {
    throw DomainError("horizons must satisfy 1 <= N_c <= N_p (got N_c=" + std::to_string(N_c) +
                      ", N_p=" + std::to_string(N_p) + ")");
  }
  if (n < 1 || p < 1 || m < 1) throw DimensionError("mpc: plant is empty");
  if (Q.rows() != m * N_p || Q.cols() != m * N_p) throw DimensionError("mpc: Q must be (m N_p) square");
  if (!Q.isApprox(Q.transpose(), 1e-12)) throw DomainError("mpc: Q must be symmetric");
  if (Eigen::LLT<MatrixXd>(Q).info() != Eigen::Success) throw DomainError("mpc: Q must be positive definite");
  if (!(sigma >= 0.0)) throw DomainError("mpc: sigma must be non-negative");
  if (u_min.size() != p || u_max.size() != p) throw DimensionError("mpc: input bounds must have length p");
  if (y_min.size() != m || y_max.size() != m) throw DimensionError("mpc: output bounds must have length m");
  if (r.size() != m) throw DimensionError("mpc: reference must have length m");
  if (!(u_min.array() < u_max.array()).all()) throw DomainError("mpc: need u_min < u_max");
  if (!(y_min.array() < y_max.array()).all()) throw DomainError("mpc: need y_min < y_max");
}

struct CondensedMpc {
  MatrixXd Phi;   ///< (m N_p) x (p N_c)
  MatrixXd F;     ///< (m N_p) x n
  VectorXd R_s;   ///< stacked reference
  MatrixXd Mcal;  ///< [-I; I; -Phi; Phi]
  VectorXd Ncal_template;  ///< Ncal at x = 0
  MatrixXd H;     ///< Phi^T Q Phi
  MatrixXd G_x;   ///< Phi^T Q F, so that g_lin = G_x x - g_r
  VectorXd g_r;   ///< Phi^T Q R_s

  Eigen::Index decision_size() const { return Phi.cols(); }
  Eigen::Index constraint_rows() const { return Mcal.rows(); }
};

struct Prediction {
  MatrixXd Phi;
  MatrixXd F;
};

/// Block (i, j) of Phi is C A_d^(i-j) B_d for i >= j; block i of F is C A_d^i
/// (1-indexed). Inputs beyond N_c are zero.
inline Prediction build_prediction(const DiscretePlant& plant, int N_p, int N_c) {
  if (N_c < 1 || N_c > N_p) throw DomainError("build_prediction: need 1 <= N_c <= N_p");
  const auto n = plant.states(), p = plant.inputs(), m = plant.outputs();
  Prediction out{MatrixXd::Zero(m * N_p, p * N_c), MatrixXd::Zero(m * N_p, n)};

  // markov[k] = C A_d^k B_d
  std::vector<MatrixXd> markov;
  markov.reserve(static_cast<std::size_t>(N_p));
  MatrixXd c_pow = plant.C;  // C A_d^k
  for (int k = 0; k < N_p; ++k) {
    markov.push_back(c_pow * plant.B_d);
    c_pow = c_pow * plant.A_d;
    out.F.block(k * m, 0, m, n) = c_pow;
  }
  for (int i = 0; i < N_p; ++i) {
    for (int j = 0; j <= i && j < N_c; ++j) {
      out.Phi.block(i * m, j * p, m, p) = markov[static_cast<std::size_t>(i - j)];
    }
  }
  return out;
}

inline VectorXd replicate(const VectorXd& v, int copies) { return v.replicate(copies, 1); }

inline CondensedMpc condense(const MpcProblem& mpc) {
  mpc.validate();
  auto [phi, f] = build_prediction(mpc.plant, mpc.N_p, mpc.N_c);
  const auto nu = phi.cols(), ny = phi.rows();

  CondensedMpc c;
  c.R_s = replicate(mpc.r, mpc.N_p);
  c.Mcal = MatrixXd::Zero(2 * nu + 2 * ny, nu);
  c.Mcal.topRows(nu) = -MatrixXd::Identity(nu, nu);
  c.Mcal.middleRows(nu, nu) = MatrixXd::Identity(nu, nu);
  c.Mcal.middleRows(2 * nu, ny) = -phi;
  c.Mcal.bottomRows(ny) = phi;
  c.Ncal_template.resize(c.Mcal.rows());
  c.Ncal_template << -replicate(mpc.u_min, mpc.N_c), replicate(mpc.u_max, mpc.N_c),
      -replicate(mpc.y_min, mpc.N_p), replicate(mpc.y_max, mpc.N_p);

  const MatrixXd phit_q = phi.transpose() * mpc.Q;
  const MatrixXd h = phit_q * phi;
  c.H = 0.5 * (h + h.transpose());
  c.G_x = phit_q * f;
  c.g_r = phit_q * c.R_s;
  c.Phi = std::move(phi);
  c.F = std::move(f);
  return c;
}

struct Constraints {
  MatrixXd Mcal;
  VectorXd Ncal;
};

/// x-dependent right-hand side of Mcal u <= Ncal.
inline VectorXd constraint_rhs(const CondensedMpc& cond, const VectorXd& x) {
  if (x.size() != cond.F.cols()) throw DimensionError("constraint_rhs: state has the wrong length");
  const auto nu = cond.Phi.cols(), ny = cond.Phi.rows();
  VectorXd ncal = cond.Ncal_template;
  const VectorXd fx = cond.F * x;
  ncal.segment(2 * nu, ny) += fx;
  ncal.tail(ny) -= fx;
  return ncal;
}

/// Mcal u <= Ncal encodes the input and output bounds at state x.
inline Constraints build_constraints(const MpcProblem& /*mpc*/, const CondensedMpc& cond,
                                     const VectorXd& x) {
  return {cond.Mcal, constraint_rhs(cond, x)};
}

struct TrackingForm {
  MatrixXd H;
  VectorXd g_lin;
  double c0 = 0.0;

  double value(const VectorXd& u) const { return 0.5 * u.dot(H * u) + g_lin.dot(u) + c0; }
  VectorXd gradient(const VectorXd& u) const { return H * u + g_lin; }
};

/// 1/2 (Phi u + F x - R_s)^T Q (Phi u + F x - R_s) = 1/2 u^T H u + g_lin^T u + c0.
inline TrackingForm build_tracking_form(const MpcProblem& mpc, const CondensedMpc& cond, const VectorXd& x) {
  if (x.size() != cond.F.cols()) throw DimensionError("build_tracking_form: state has the wrong length");
  const VectorXd e = cond.F * x - cond.R_s;
  return {cond.H, cond.G_x * x - cond.g_r, 0.5 * e.dot(mpc.Q * e)};
}

}  // namespace spmpc
