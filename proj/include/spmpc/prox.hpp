#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "spmpc/errors.hpp"

namespace spmpc {

/// Sparsity-promoting penalty on the control sequence.
enum class SparsityNorm { L0, L1 };

inline void require_threshold(double t) {
  if (!(t >= 0.0)) throw DomainError("threshold must be non-negative");
}

/// Soft thresholding: v - t for v >= t, v + t for v <= -t, zero in between.
inline double soft_threshold(double v, double t) {
  require_threshold(t);
  if (v >= t) return v - t;
  if (v <= -t) return v + t;
  return 0.0;
}

/// Hard thresholding: keeps v when |v| > t, zero otherwise (ties go to zero).
inline double hard_threshold(double v, double t) {
  require_threshold(t);
  return std::abs(v) > t ? v : 0.0;
}

/// Euclidean projection onto { w : w <= ncal } (componentwise min).
inline Eigen::VectorXd project_halfspace_box(const Eigen::VectorXd& w, const Eigen::VectorXd& ncal) {
  if (w.size() != ncal.size()) throw DimensionError("project_halfspace_box: length mismatch");
  return w.cwiseMin(ncal);
}

/// Prox of sigma*||z0||_p + indicator(z1 <= ncal) in the diagonal metric
/// `alpha`. The minimizer of  h(z) + 1/2 ||z - c||^2_alpha  is evaluated at
/// c = gamma ./ alpha; the first `sparse_len` entries form z0 and the rest z1.
inline Eigen::VectorXd prox_z(const Eigen::VectorXd& gamma, const Eigen::VectorXd& alpha, double sigma,
                              SparsityNorm norm, const Eigen::VectorXd& ncal, Eigen::Index sparse_len) {
  if (alpha.size() != gamma.size()) throw DimensionError("prox_z: metric length mismatch");
  if (sparse_len < 0 || sparse_len > gamma.size() || gamma.size() - sparse_len != ncal.size()) {
    throw DimensionError("prox_z: split sizes do not match gamma (" + std::to_string(gamma.size()) +
                         " = " + std::to_string(sparse_len) + " + " + std::to_string(ncal.size()) + ")");
  }
  if (!(alpha.array() > 0.0).all()) throw DomainError("prox_z: metric entries must be positive");
  if (!(sigma >= 0.0)) throw DomainError("prox_z: sigma must be non-negative");

  const Eigen::VectorXd c = gamma.cwiseQuotient(alpha);
  Eigen::VectorXd z(c.size());
  for (Eigen::Index i = 0; i < sparse_len; ++i) {
    z(i) = norm == SparsityNorm::L1 ? soft_threshold(c(i), sigma / alpha(i))
                                    : hard_threshold(c(i), std::sqrt(2.0 * sigma / alpha(i)));
  }
  const auto tail = c.size() - sparse_len;
  if (tail > 0) z.tail(tail) = project_halfspace_box(c.tail(tail), ncal);
  return z;
}

}  // namespace spmpc
