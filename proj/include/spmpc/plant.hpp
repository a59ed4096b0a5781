#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "spmpc/errors.hpp"

namespace spmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Continuous-time model  x' = A x + B u,  y = C x + D u,  sampled every h seconds.
struct ContinuousPlant {
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;
  MatrixXd D;
  double h = 0.1;  ///< sampling period [s]

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  void validate() const;
};

/// Zero-order-hold equivalent of a ContinuousPlant.
struct DiscretePlant {
  MatrixXd A_d;
  MatrixXd B_d;
  MatrixXd C;
  MatrixXd D;
  double h = 0.1;

  Eigen::Index states() const { return A_d.rows(); }
  Eigen::Index inputs() const { return B_d.cols(); }
  Eigen::Index outputs() const { return C.rows(); }
};

namespace plant_detail {

inline void require_finite(const MatrixXd& m, const char* name) {
  if (!m.allFinite()) throw DomainError(std::string(name) + " has non-finite entries");
}

}  // namespace plant_detail

inline void ContinuousPlant::validate() const {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n) throw DimensionError("plant: A must be square and non-empty");
  if (B.rows() != n || B.cols() < 1) throw DimensionError("plant: B must be n x p with p >= 1");
  if (C.cols() != n || C.rows() < 1) throw DimensionError("plant: C must be m x n with m >= 1");
  if (D.rows() != C.rows() || D.cols() != B.cols()) throw DimensionError("plant: D must be m x p");
  plant_detail::require_finite(A, "A");
  plant_detail::require_finite(B, "B");
  plant_detail::require_finite(C, "C");
  plant_detail::require_finite(D, "D");
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("plant: sampling period must be positive");
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade kernel.
inline MatrixXd expm(const MatrixXd& a) {
  if (a.rows() != a.cols()) throw DimensionError("expm: matrix must be square");
  plant_detail::require_finite(a, "expm argument");
  const auto n = a.rows();
  if (n == 0) return a;

  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
      129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
      1323241920.0,        40840800.0,          960960.0,           16380.0,
      182.0,               1.0};
  // Largest 1-norm for which the unscaled degree-13 approximant is accurate.
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return MatrixXd::Identity(n, n);
  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const MatrixXd as = a / std::ldexp(1.0, squarings);

  const MatrixXd id = MatrixXd::Identity(n, n);
  const MatrixXd a2 = as * as;
  const MatrixXd a4 = a2 * a2;
  const MatrixXd a6 = a4 * a2;
  const MatrixXd u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                           b[3] * a2 + b[1] * id;
  const MatrixXd u = as * u_inner;
  const MatrixXd v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

  MatrixXd result = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) result = result * result;
  return result;
}

/// A_d = e^{Ah} and B_d = int_0^h e^{At} B dt, read off one exponential of
/// the augmented matrix [[A, B], [0, 0]] h.
inline DiscretePlant zoh_discretize(const ContinuousPlant& plant) {
  plant.validate();
  const auto n = plant.states();
  const auto p = plant.inputs();
  MatrixXd aug = MatrixXd::Zero(n + p, n + p);
  aug.topLeftCorner(n, n) = plant.A * plant.h;
  aug.topRightCorner(n, p) = plant.B * plant.h;
  const MatrixXd e = expm(aug);
  return DiscretePlant{e.topLeftCorner(n, n), e.topRightCorner(n, p), plant.C, plant.D, plant.h};
}

struct StepResult {
  VectorXd x_next;
  VectorXd y;
};

/// One step of the true plant, always in double precision.
inline StepResult plant_step(const DiscretePlant& plant, const VectorXd& x, const VectorXd& u) {
  if (x.size() != plant.states() || u.size() != plant.inputs()) {
    throw DimensionError("plant_step: state or input has the wrong length");
  }
  return {plant.A_d * x + plant.B_d * u, plant.C * x + plant.D * u};
}

/// Physical constants of the stand-in attitude model. These are documented
/// defaults chosen for out-of-box runs, not identified from a real vehicle.
struct SatelliteParameters {
  std::array<double, 3> inertia{4.0, 5.0, 6.0};  ///< principal inertias [kg m^2]
  double thruster_gain = 0.5;                    ///< body torque per input volt [N m / V]
  double wheel_inertia = 0.05;                   ///< reaction wheel inertia [kg m^2]
  double wheel_gain = 2.0;                       ///< wheel acceleration per volt [rad/s^2 / V]
  double wheel_time_constant = 5.0;              ///< wheel friction time constant [s]
  double h = 0.1;                                ///< sampling period [s]
};

/// Linearized rigid-body attitude model with a reaction wheel on the yaw axis.
///
/// States: roll, pitch, yaw, w1, w2, w3, ww. Inputs: tau1, tau2, tau3, tauw.
/// Small-angle kinematics make angle rates equal body rates; the wheel is a
/// first-order speed loop whose reaction torque acts on the yaw axis.
/// C = I and D = 0.
inline ContinuousPlant default_satellite_plant(const SatelliteParameters& prm = {}) {
  constexpr int n = 7;
  constexpr int p = 4;
  MatrixXd a = MatrixXd::Zero(n, n);
  MatrixXd b = MatrixXd::Zero(n, p);
  for (int i = 0; i < 3; ++i) {
    a(i, 3 + i) = 1.0;
    b(3 + i, i) = prm.thruster_gain / prm.inertia[static_cast<std::size_t>(i)];
  }
  const double friction = 1.0 / prm.wheel_time_constant;
  a(6, 6) = -friction;
  b(6, 3) = prm.wheel_gain;
  // Wheel reaction: J3 w3' = k tau3 - Jw ww'.
  const double ratio = prm.wheel_inertia / prm.inertia[2];
  a(5, 6) = ratio * friction;
  b(5, 3) = -ratio * prm.wheel_gain;
  return ContinuousPlant{a, b, MatrixXd::Identity(n, n), MatrixXd::Zero(n, p), prm.h};
}

}  // namespace spmpc
