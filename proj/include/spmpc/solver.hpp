#pragma once

// Weighted-metric ADMM for the sparse condensed MPC problem
//
//   min_u  1/2 u^T H u + g^T u + sigma ||u||_p + indicator(Mcal u <= Ncal)
//
// split as A u = z with A = [I; Mcal] (or A = I without constraints), and its
// proximal-gradient special case. Both run either in double precision or with
// the online arithmetic routed through the fixed-point emulation.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spmpc/condense.hpp"
#include "spmpc/errors.hpp"
#include "spmpc/fxp.hpp"
#include "spmpc/prox.hpp"

namespace spmpc {

enum class SolverMethod { WlmAdmm, AxPgd };

/// Which computations pass through the fixed-point fabric.
enum class QuantizeScope {
  GradientOnly,  ///< only the online matrix-vector evaluation is quantized
  AllIterates,   ///< iterates are also stored in the fixed-point format
};

struct SolverConfig {
  SolverMethod method = SolverMethod::AxPgd;
  double lambda_u = 5000.0;  ///< AxPGD step is s = 1 / lambda_u
  double lambda_z = 5000.0;
  VectorXd L;    ///< diagonal of L over z; empty means identity
  VectorXd M_u;  ///< diagonal of M_u over u; empty means zero
  VectorXd M_z;  ///< diagonal of M_z over z; empty means zero
  bool constrained = true;  ///< WLM-ADMM: include the Mcal block in A
  int max_iters = 400;
  std::optional<double> tol_primal;  ///< default: 1e-8 exact, 2^(2-F) quantized
  std::optional<FxpFormat> fxp;      ///< empty means exact arithmetic
  QuantizeScope scope = QuantizeScope::GradientOnly;

  double step() const { return 1.0 / lambda_u; }
  double tolerance() const {
    if (tol_primal) return *tol_primal;
    return fxp ? std::ldexp(1.0, 2 - fxp->frac_width) : 1e-8;
  }
  void validate() const {
    if (!(lambda_u > 0.0) || !(lambda_z > 0.0)) throw DomainError("solver: lambda_u, lambda_z must be positive");
    if (L.size() > 0 && !(L.array() > 0.0).all()) throw DomainError("solver: L must have a positive diagonal");
    if (M_u.size() > 0 && !(M_u.array() >= 0.0).all()) throw DomainError("solver: M_u must be PSD");
    if (M_z.size() > 0 && !(M_z.array() >= 0.0).all()) throw DomainError("solver: M_z must be PSD");
    if (max_iters < 1) throw DomainError("solver: max_iters must be at least 1");
    if (tol_primal && !(*tol_primal >= 0.0)) throw DomainError("solver: tol_primal must be non-negative");
    if (fxp) fxp->validate();
  }
};

struct SolverState {
  VectorXd u;
  VectorXd z;
  VectorXd v;
  int iter = 0;
  bool converged = false;
  std::vector<double> eps_history;      ///< ||eps^k||_2 per iteration
  std::vector<double> eps_inf_history;  ///< ||eps^k||_inf per iteration
  std::vector<double> residuals;        ///< ||A u - z|| (ADMM) or ||u^{k+1} - u^k|| (AxPGD)
};

struct SolveResult {
  VectorXd u_sequence;  ///< full horizon control
  SolverState state;
  double objective = 0.0;  ///< tracking cost + sigma ||u||_p at u_sequence
};

/// sigma ||u||_p for the selected norm.
inline double sparsity_penalty(const VectorXd& u, double sigma, SparsityNorm norm) {
  if (norm == SparsityNorm::L1) return sigma * u.lpNorm<1>();
  return sigma * static_cast<double>((u.array() != 0.0).count());
}

/// Shifts a horizon control sequence one block forward and zero-pads the tail.
inline VectorXd shift_warm_start(const VectorXd& u, Eigen::Index block) {
  VectorXd out = VectorXd::Zero(u.size());
  if (u.size() > block) out.head(u.size() - block) = u.tail(u.size() - block);
  return out;
}

/// Evaluates  M w + offset  on the fixed-point fabric: M is stored quantized,
/// w is quantized on entry, the products run through the MAC chain and the
/// offset is quantized and added last. The error it reports is the fabric
/// result minus the exact value of  M_q w_q + offset, i.e. the rounding and
/// saturation introduced by the datapath itself.
class FabricMatvec {
 public:
  FabricMatvec() = default;
  FabricMatvec(const MatrixXd& m, const FxpFormat& fmt)
      : fmt_(fmt), m_(m, fmt), w_raw_(static_cast<std::size_t>(m.cols())),
        out_raw_(static_cast<std::size_t>(m.rows())), dev_(static_cast<std::size_t>(m.rows())) {}

  const FxpFormat& format() const { return fmt_; }
  const QuantizedMatrix& matrix() const { return m_; }

  /// w given as mantissas already in the format.
  void evaluate_raw(std::span<const std::int64_t> w_raw, const VectorXd& offset, VectorXd& value,
                    VectorXd& error, std::span<std::int64_t> value_raw = {}) {
    mac_matvec_raw(m_, w_raw, out_raw_, dev_);
    value.resize(m_.rows());
    error.resize(m_.rows());
    const int frac = fmt_.frac_width;
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const std::int64_t off = fxp_detail::quantize_raw(offset(i), fmt_);
      const std::int64_t sum = fxp_detail::add_raw(out_raw_[k], off, fmt_);
      const long double exact_sum = fxp_detail::raw_to_real(out_raw_[k], frac) +
                                    fxp_detail::raw_to_real(off, frac);
      const long double result = fxp_detail::raw_to_real(sum, frac);
      value(i) = static_cast<double>(result);
      // (result - exact_sum) is the final add's saturation; dev_ is the MAC
      // chain's deviation; (off - offset) is the offset's rounding.
      error(i) = static_cast<double>((result - exact_sum) + dev_[k] +
                                     (fxp_detail::raw_to_real(off, frac) - static_cast<long double>(offset(i))));
      if (!value_raw.empty()) value_raw[k] = sum;
    }
  }

  void evaluate(const VectorXd& w, const VectorXd& offset, VectorXd& value, VectorXd& error) {
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      w_raw_[static_cast<std::size_t>(j)] = fxp_detail::quantize_raw(w(j), fmt_);
    }
    evaluate_raw(w_raw_, offset, value, error);
  }

 private:
  FxpFormat fmt_{};
  QuantizedMatrix m_;
  std::vector<std::int64_t> w_raw_;
  std::vector<std::int64_t> out_raw_;
  std::vector<long double> dev_;
};

namespace solver_detail {

inline void record_eps(SolverState& st, const VectorXd& eps) {
  st.eps_history.push_back(eps.norm());
  st.eps_inf_history.push_back(eps.size() ? eps.lpNorm<Eigen::Infinity>() : 0.0);
}

inline void require_finite(const VectorXd& v, const char* what, int iter) {
  if (!v.allFinite()) {
    throw Divergence(std::string("non-finite ") + what + " iterate at iteration " + std::to_string(iter));
  }
}

}  // namespace solver_detail

/// Everything the WLM-ADMM iteration needs that does not change between
/// iterations of one MPC step: the splitting matrix A, the metrics, and the
/// Cholesky factor of H + Lambda_1 (always formed in double precision).
class WlmAdmmWorkspace {
 public:
  WlmAdmmWorkspace(const CondensedMpc& cond, const SolverConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    nu_ = cond.decision_size();
    const auto nc = cfg.constrained ? cond.constraint_rows() : 0;
    nz_ = nu_ + nc;
    A_ = MatrixXd::Zero(nz_, nu_);
    A_.topRows(nu_).setIdentity();
    if (nc > 0) A_.bottomRows(nc) = cond.Mcal;

    L_ = cfg.L.size() ? cfg.L : VectorXd::Ones(nz_);
    Mu_ = cfg.M_u.size() ? cfg.M_u : VectorXd::Zero(nu_);
    Mz_ = cfg.M_z.size() ? cfg.M_z : VectorXd::Zero(nz_);
    if (L_.size() != nz_ || Mu_.size() != nu_ || Mz_.size() != nz_) {
      throw DimensionError("WLM-ADMM: metric diagonals do not match the split (nz=" + std::to_string(nz_) + ")");
    }
    lambda1_ = A_.transpose() * L_.asDiagonal() * A_ / cfg.lambda_u;
    lambda1_.diagonal() += Mu_;
    alpha_ = L_ / cfg.lambda_z + Mz_;
    if (!(alpha_.array() > 0.0).all()) throw SingularSystem("WLM-ADMM: Lambda_2 must be positive");

    const MatrixXd system = cond.H + lambda1_;
    llt_.compute(system);
    if (llt_.info() != Eigen::Success) {
      throw SingularSystem("WLM-ADMM: H + Lambda_1 is not positive definite");
    }
    // gamma_1 = [ (1/lambda_u) A^T L | M_u ] [ z - v ; u ]
    gamma1_map_.resize(nu_, nz_ + nu_);
    gamma1_map_.leftCols(nz_) = A_.transpose() * L_.asDiagonal() / cfg.lambda_u;
    gamma1_map_.rightCols(nu_) = Mu_.asDiagonal();
    if (cfg.fxp) fabric_ = FabricMatvec(gamma1_map_, *cfg.fxp);
  }

  Eigen::Index nu() const { return nu_; }
  Eigen::Index nz() const { return nz_; }
  const MatrixXd& A() const { return A_; }
  const MatrixXd& lambda1() const { return lambda1_; }
  const VectorXd& alpha() const { return alpha_; }
  const VectorXd& L() const { return L_; }
  const VectorXd& M_u() const { return Mu_; }
  const VectorXd& M_z() const { return Mz_; }
  const SolverConfig& config() const { return cfg_; }

  VectorXd gamma1(const SolverState& st) const {
    return Mu_.cwiseProduct(st.u) + A_.transpose() * L_.cwiseProduct(st.z - st.v) / cfg_.lambda_u;
  }

  VectorXd gamma2(const SolverState& st) const {
    return Mz_.cwiseProduct(st.z) + L_.cwiseProduct(A_ * st.u + st.v) / cfg_.lambda_z;
  }

  /// Solves (H + Lambda_1) u = -g + gamma_1. In fixed-point mode the
  /// right-hand side is produced by the fabric and its error is recorded.
  VectorXd u_update(SolverState& st, const VectorXd& g_lin) {
    if (!cfg_.fxp) return llt_.solve(gamma1(st) - g_lin);
    VectorXd w(nz_ + nu_);
    w << st.z - st.v, st.u;
    VectorXd rhs, eps;
    fabric_.evaluate(w, -g_lin, rhs, eps);
    solver_detail::record_eps(st, eps);
    return llt_.solve(rhs);
  }

  VectorXd z_update(const SolverState& st, double sigma, SparsityNorm norm, const VectorXd& ncal_active) const {
    return prox_z(gamma2(st), alpha_, sigma, norm, ncal_active, nu_);
  }

 private:
  SolverConfig cfg_;
  Eigen::Index nu_ = 0, nz_ = 0;
  MatrixXd A_;
  VectorXd L_, Mu_, Mz_, alpha_;
  MatrixXd lambda1_;
  MatrixXd gamma1_map_;
  Eigen::LLT<MatrixXd> llt_;
  FabricMatvec fabric_;
};

/// v <- v + A u - z.
inline VectorXd v_update(const SolverState& st, const MatrixXd& A) { return st.v + A * st.u - st.z; }

/// Runs WLM-ADMM from state x. u0 seeds u (z0 = A u0, v0 = 0).
inline SolveResult wlm_admm_solve(const MpcProblem& mpc, const CondensedMpc& cond, const VectorXd& x,
                                  const SolverConfig& cfg, const std::optional<VectorXd>& u0 = std::nullopt) {
  WlmAdmmWorkspace ws(cond, cfg);
  const TrackingForm tf = build_tracking_form(mpc, cond, x);
  const VectorXd ncal_full = constraint_rhs(cond, x);
  const VectorXd ncal = cfg.constrained ? ncal_full : VectorXd();
  const double tol = cfg.tolerance();
  const bool round_iterates = cfg.fxp && cfg.scope == QuantizeScope::AllIterates;

  SolverState st;
  st.u = u0 ? *u0 : VectorXd::Zero(ws.nu());
  if (st.u.size() != ws.nu()) throw DimensionError("wlm_admm_solve: warm start has the wrong length");
  if (round_iterates) st.u = round_to_format(st.u, *cfg.fxp);
  st.z = ws.A() * st.u;
  st.v = VectorXd::Zero(ws.nz());

  for (int k = 0; k < cfg.max_iters; ++k) {
    st.u = ws.u_update(st, tf.g_lin);
    if (round_iterates) st.u = round_to_format(st.u, *cfg.fxp);
    solver_detail::require_finite(st.u, "u", k);
    st.z = ws.z_update(st, mpc.sigma, mpc.norm, ncal);
    if (round_iterates) st.z = round_to_format(st.z, *cfg.fxp);
    st.v = v_update(st, ws.A());
    if (round_iterates) st.v = round_to_format(st.v, *cfg.fxp);
    solver_detail::require_finite(st.v, "v", k);
    if (!cfg.fxp) solver_detail::record_eps(st, VectorXd::Zero(ws.nu()));
    const double res = (ws.A() * st.u - st.z).norm();
    st.residuals.push_back(res);
    st.iter = k + 1;
    if (res <= tol) {
      st.converged = true;
      break;
    }
  }

  SolveResult out;
  out.u_sequence = st.u;
  if (cfg.constrained) {
    // Emit the control projected onto its box, as the z-block does.
    const VectorXd lo = replicate(mpc.u_min, mpc.N_c), hi = replicate(mpc.u_max, mpc.N_c);
    out.u_sequence = out.u_sequence.cwiseMax(lo).cwiseMin(hi);
  }
  out.objective = tf.value(out.u_sequence) + sparsity_penalty(out.u_sequence, mpc.sigma, mpc.norm);
  out.state = std::move(st);
  return out;
}

/// Proximal-gradient iteration  u <- T_{sigma s}(u - s (H u + g + eps)),
/// T the soft (l1) or hard (l0) thresholding and eps the arithmetic error.
class AxPgdIteration {
 public:
  AxPgdIteration(const MpcProblem& mpc, const CondensedMpc& cond, const SolverConfig& cfg)
      : cfg_(cfg), sigma_(mpc.sigma), norm_(mpc.norm), H_(cond.H) {
    cfg.validate();
    if (cfg.fxp) fabric_ = FabricMatvec(cond.H, *cfg.fxp);
  }

  double threshold() const {
    const double s = cfg_.step();
    return norm_ == SparsityNorm::L1 ? sigma_ * s : std::sqrt(2.0 * sigma_ * s);
  }

  /// Exact-arithmetic step.
  VectorXd step_exact(const VectorXd& u, const VectorXd& g_lin) const {
    return shrink(u - cfg_.step() * (H_ * u + g_lin), threshold());
  }

  /// Gradient evaluated on the fabric (u quantized on entry); eps receives
  /// the datapath error.
  VectorXd fabric_gradient(const VectorXd& u, const VectorXd& g_lin, VectorXd& eps) {
    VectorXd grad;
    fabric_.evaluate(u, g_lin, grad, eps);
    return grad;
  }

  /// Gradient-only step: fabric gradient, double-precision update.
  VectorXd step_gradient_only(const VectorXd& u, const VectorXd& g_lin, VectorXd& eps) {
    const VectorXd grad = fabric_gradient(u, g_lin, eps);
    return shrink(u - cfg_.step() * grad, threshold());
  }

  /// All-iterates step on mantissas: the step size, the product s * grad,
  /// the difference and the threshold all live in the format.
  void step_all_iterates(std::vector<std::int64_t>& u_raw, const VectorXd& g_lin, VectorXd& eps) {
    const FxpFormat& fmt = *cfg_.fxp;
    grad_raw_.resize(u_raw.size());
    VectorXd grad;
    fabric_.evaluate_raw(u_raw, g_lin, grad, eps, grad_raw_);
    const std::int64_t s_raw = fxp_detail::quantize_raw(cfg_.step(), fmt);
    const std::int64_t t_raw = fxp_detail::quantize_raw(threshold(), fmt);
    for (std::size_t i = 0; i < u_raw.size(); ++i) {
      const std::int64_t delta = fxp_detail::mul_raw(s_raw, grad_raw_[i], fmt);
      const std::int64_t w = fxp_detail::fit(static_cast<fxp_detail::wide_t>(u_raw[i]) - delta, fmt);
      u_raw[i] = shrink_raw(w, t_raw);
    }
  }

 private:
  VectorXd shrink(const VectorXd& w, double t) const {
    VectorXd out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      out(i) = norm_ == SparsityNorm::L1 ? soft_threshold(w(i), t) : hard_threshold(w(i), t);
    }
    return out;
  }

  std::int64_t shrink_raw(std::int64_t w, std::int64_t t) const {
    if (norm_ == SparsityNorm::L1) {
      if (w >= t) return w - t;
      if (w <= -t) return w + t;
      return 0;
    }
    return (w > t || w < -t) ? w : 0;
  }

  SolverConfig cfg_;
  double sigma_;
  SparsityNorm norm_;
  MatrixXd H_;
  FabricMatvec fabric_;
  std::vector<std::int64_t> grad_raw_;
};

/// Approximate proximal-gradient descent from state x, seeded with u0.
inline SolveResult axpgd_solve(const MpcProblem& mpc, const CondensedMpc& cond, const VectorXd& x,
                               const SolverConfig& cfg, const std::optional<VectorXd>& u0 = std::nullopt) {
  AxPgdIteration it(mpc, cond, cfg);
  const TrackingForm tf = build_tracking_form(mpc, cond, x);
  const double tol = cfg.tolerance();
  const auto nu = cond.decision_size();

  SolverState st;
  st.u = u0 ? *u0 : VectorXd::Zero(nu);
  if (st.u.size() != nu) throw DimensionError("axpgd_solve: warm start has the wrong length");

  VectorXd eps = VectorXd::Zero(nu);
  if (cfg.fxp && cfg.scope == QuantizeScope::AllIterates) {
    const FxpFormat& fmt = *cfg.fxp;
    std::vector<std::int64_t> u_raw(static_cast<std::size_t>(nu));
    for (Eigen::Index i = 0; i < nu; ++i) u_raw[static_cast<std::size_t>(i)] = fxp_detail::quantize_raw(st.u(i), fmt);
    std::vector<std::int64_t> prev;
    for (int k = 0; k < cfg.max_iters; ++k) {
      prev = u_raw;
      it.step_all_iterates(u_raw, tf.g_lin, eps);
      solver_detail::record_eps(st, eps);
      long double diff2 = 0.0L;
      for (std::size_t i = 0; i < u_raw.size(); ++i) {
        const long double d = fxp_detail::raw_to_real(u_raw[i], fmt.frac_width) -
                              fxp_detail::raw_to_real(prev[i], fmt.frac_width);
        diff2 += d * d;
      }
      const double res = static_cast<double>(std::sqrt(diff2));
      st.residuals.push_back(res);
      st.iter = k + 1;
      if (res <= tol) {
        st.converged = true;
        break;
      }
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
      st.u(i) = static_cast<double>(fxp_detail::raw_to_real(u_raw[static_cast<std::size_t>(i)], fmt.frac_width));
    }
  } else {
    for (int k = 0; k < cfg.max_iters; ++k) {
      VectorXd next = cfg.fxp ? it.step_gradient_only(st.u, tf.g_lin, eps) : it.step_exact(st.u, tf.g_lin);
      solver_detail::require_finite(next, "u", k);
      solver_detail::record_eps(st, eps);
      const double res = (next - st.u).norm();
      st.u = std::move(next);
      st.residuals.push_back(res);
      st.iter = k + 1;
      if (res <= tol) {
        st.converged = true;
        break;
      }
    }
  }
  st.z = st.u;
  st.v = VectorXd::Zero(nu);

  SolveResult out;
  out.u_sequence = st.u;
  out.objective = tf.value(st.u) + sparsity_penalty(st.u, mpc.sigma, mpc.norm);
  out.state = std::move(st);
  return out;
}

/// Dispatches on cfg.method.
inline SolveResult solve(const MpcProblem& mpc, const CondensedMpc& cond, const VectorXd& x,
                         const SolverConfig& cfg, const std::optional<VectorXd>& u0 = std::nullopt) {
  return cfg.method == SolverMethod::WlmAdmm ? wlm_admm_solve(mpc, cond, x, cfg, u0)
                                             : axpgd_solve(mpc, cond, x, cfg, u0);
}

}  // namespace spmpc
