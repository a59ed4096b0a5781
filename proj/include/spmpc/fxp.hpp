#pragma once

// Bit-accurate signed fixed-point emulation.
//
// A format (W, F) holds integers k with -2^(W-1) <= k <= 2^(W-1)-1 and
// represents k * 2^-F. Mantissas live in int64_t; products and sums are
// formed exactly in __int128 before rounding and the overflow policy apply.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spmpc/errors.hpp"

namespace spmpc {

enum class Rounding {
  NearestTiesAway,  ///< round to nearest, ties away from zero
  Floor,            ///< truncate toward negative infinity
};

enum class OverflowPolicy {
  Saturate,
  Error,
};

struct FxpFormat {
  int word_width = 32;
  int frac_width = 16;
  Rounding rounding = Rounding::NearestTiesAway;
  OverflowPolicy overflow = OverflowPolicy::Saturate;

  /// Throws DomainError unless 2 <= W <= 64 and 0 <= F <= W-1.
  void validate() const {
    if (word_width < 2 || word_width > 64) {
      throw DomainError("fixed-point word width must lie in [2, 64], got " +
                        std::to_string(word_width));
    }
    if (frac_width < 0 || frac_width > word_width - 1) {
      throw DomainError("fixed-point fraction width must lie in [0, W-1], got " +
                        std::to_string(frac_width) + " for W=" + std::to_string(word_width));
    }
  }

  std::int64_t max_raw() const {
    return word_width == 64 ? INT64_MAX : (std::int64_t{1} << (word_width - 1)) - 1;
  }
  std::int64_t min_raw() const {
    return word_width == 64 ? INT64_MIN : -(std::int64_t{1} << (word_width - 1));
  }
  /// Weight of the least significant bit, 2^-F.
  double ulp() const { return std::ldexp(1.0, -frac_width); }

  friend bool operator==(const FxpFormat&, const FxpFormat&) = default;
};

inline FxpFormat make_format(int word_width, int frac_width,
                             Rounding rounding = Rounding::NearestTiesAway,
                             OverflowPolicy overflow = OverflowPolicy::Saturate) {
  FxpFormat fmt{word_width, frac_width, rounding, overflow};
  fmt.validate();
  return fmt;
}

namespace fxp_detail {

using wide_t = __int128;

/// Applies the overflow policy to an exact mantissa.
inline std::int64_t fit(wide_t raw, const FxpFormat& fmt) {
  const auto hi = static_cast<wide_t>(fmt.max_raw());
  const auto lo = static_cast<wide_t>(fmt.min_raw());
  if (raw > hi || raw < lo) {
    if (fmt.overflow == OverflowPolicy::Error) {
      throw OverflowError("fixed-point overflow in Q" + std::to_string(fmt.word_width) + "." +
                          std::to_string(fmt.frac_width));
    }
    return static_cast<std::int64_t>(raw > hi ? hi : lo);
  }
  return static_cast<std::int64_t>(raw);
}

/// Divides an exact value by 2^shift with the format's rounding rule.
inline wide_t shift_round(wide_t value, int shift, Rounding rounding) {
  if (shift == 0) return value;
  if (rounding == Rounding::Floor) return value >> shift;
  const wide_t half = wide_t{1} << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

/// Mantissa of the representable value selected for x.
inline std::int64_t quantize_raw(long double x, const FxpFormat& fmt) {
  if (!std::isfinite(x)) throw DomainError("cannot quantize a non-finite value");
  const long double scaled = std::ldexp(x, fmt.frac_width);
  const long double rounded =
      fmt.rounding == Rounding::Floor ? std::floor(scaled) : std::round(scaled);
  const long double bound = std::ldexp(1.0L, fmt.word_width - 1);
  if (rounded >= bound) return fit(static_cast<wide_t>(fmt.max_raw()) + 1, fmt);
  if (rounded < -bound) return fit(static_cast<wide_t>(fmt.min_raw()) - 1, fmt);
  return static_cast<std::int64_t>(rounded);
}

inline std::int64_t mul_raw(std::int64_t a, std::int64_t b, const FxpFormat& fmt) {
  const wide_t product = static_cast<wide_t>(a) * static_cast<wide_t>(b);
  return fit(shift_round(product, fmt.frac_width, fmt.rounding), fmt);
}

inline std::int64_t add_raw(std::int64_t a, std::int64_t b, const FxpFormat& fmt) {
  return fit(static_cast<wide_t>(a) + static_cast<wide_t>(b), fmt);
}

inline long double raw_to_real(std::int64_t raw, int frac_width) {
  // x87 long double carries a 64-bit significand, so this is exact.
  return std::ldexp(static_cast<long double>(raw), -frac_width);
}

}  // namespace fxp_detail

/// A fixed-point number: mantissa plus the format it lives in.
class FxpValue {
 public:
  FxpValue() = default;

  /// Wraps an existing mantissa; throws DomainError when it is out of range.
  static FxpValue from_raw(std::int64_t raw, const FxpFormat& fmt) {
    fmt.validate();
    if (raw > fmt.max_raw() || raw < fmt.min_raw()) {
      throw DomainError("mantissa outside the range of the format");
    }
    return FxpValue(raw, fmt);
  }

  std::int64_t raw() const { return raw_; }
  const FxpFormat& format() const { return fmt_; }

  /// Exact value raw * 2^-F.
  long double to_real() const { return fxp_detail::raw_to_real(raw_, fmt_.frac_width); }
  double to_double() const { return static_cast<double>(to_real()); }

  friend bool operator==(const FxpValue&, const FxpValue&) = default;

 private:
  FxpValue(std::int64_t raw, const FxpFormat& fmt) : raw_(raw), fmt_(fmt) {}

  std::int64_t raw_ = 0;
  FxpFormat fmt_{};

  friend FxpValue quantize(long double, const FxpFormat&);
  friend FxpValue q_add(const FxpValue&, const FxpValue&);
  friend FxpValue q_mul(const FxpValue&, const FxpValue&);
};

inline FxpValue quantize(long double x, const FxpFormat& fmt) {
  fmt.validate();
  return FxpValue(fxp_detail::quantize_raw(x, fmt), fmt);
}

inline FxpValue q_add(const FxpValue& a, const FxpValue& b) {
  if (!(a.format() == b.format())) throw FormatMismatch("q_add: operands use different formats");
  return FxpValue(fxp_detail::add_raw(a.raw_, b.raw_, a.fmt_), a.fmt_);
}

inline FxpValue q_mul(const FxpValue& a, const FxpValue& b) {
  if (!(a.format() == b.format())) throw FormatMismatch("q_mul: operands use different formats");
  return FxpValue(fxp_detail::mul_raw(a.raw_, b.raw_, a.fmt_), a.fmt_);
}

/// Row-major matrix of mantissas, quantized once and reused across products.
class QuantizedMatrix {
 public:
  QuantizedMatrix() = default;
  QuantizedMatrix(const Eigen::MatrixXd& m, const FxpFormat& fmt)
      : rows_(m.rows()), cols_(m.cols()), fmt_(fmt), raw_(static_cast<std::size_t>(m.size())) {
    fmt.validate();
    for (Eigen::Index i = 0; i < rows_; ++i) {
      for (Eigen::Index j = 0; j < cols_; ++j) {
        raw_[static_cast<std::size_t>(i * cols_ + j)] = fxp_detail::quantize_raw(m(i, j), fmt);
      }
    }
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const FxpFormat& format() const { return fmt_; }
  std::int64_t raw(Eigen::Index i, Eigen::Index j) const {
    return raw_[static_cast<std::size_t>(i * cols_ + j)];
  }
  /// The stored coefficients as reals.
  Eigen::MatrixXd to_matrix() const {
    Eigen::MatrixXd out(rows_, cols_);
    for (Eigen::Index i = 0; i < rows_; ++i)
      for (Eigen::Index j = 0; j < cols_; ++j)
        out(i, j) = static_cast<double>(fxp_detail::raw_to_real(raw(i, j), fmt_.frac_width));
    return out;
  }

 private:
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  FxpFormat fmt_{};
  std::vector<std::int64_t> raw_;
};

/// Multiply-accumulate chain on mantissas. Row i is evaluated as
/// acc = q(m_i0 v_0); acc = q(acc + q(m_ij v_j)) for j = 1..n-1, strictly in
/// order. When `deviation` is non-empty it receives, per row, the exact
/// difference between the chain result and the exact dot product of the
/// stored operands.
inline void mac_matvec_raw(const QuantizedMatrix& m, std::span<const std::int64_t> v,
                           std::span<std::int64_t> out, std::span<long double> deviation = {}) {
  using fxp_detail::wide_t;
  const FxpFormat& fmt = m.format();
  if (static_cast<Eigen::Index>(v.size()) != m.cols() ||
      static_cast<Eigen::Index>(out.size()) != m.rows()) {
    throw DimensionError("q_matvec: dimension mismatch");
  }
  const bool track = !deviation.empty();
  if (track && static_cast<Eigen::Index>(deviation.size()) != m.rows()) {
    throw DimensionError("q_matvec: deviation buffer has the wrong length");
  }
  const int frac = fmt.frac_width;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::int64_t acc = 0;
    // Deviation in units of 2^-2F. Exact while it fits; saturation can push
    // it past 128 bits, in which case it continues in long double.
    wide_t dev = 0;
    long double dev_spill = 0.0L;
    const auto add_dev = [&](wide_t d) {
      if (__builtin_add_overflow(dev, d, &dev)) dev_spill += static_cast<long double>(d);
    };
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const wide_t exact = static_cast<wide_t>(m.raw(i, j)) * static_cast<wide_t>(v[static_cast<std::size_t>(j)]);
      const std::int64_t prod = fxp_detail::fit(fxp_detail::shift_round(exact, frac, fmt.rounding), fmt);
      if (track) add_dev((static_cast<wide_t>(prod) << frac) - exact);
      if (j == 0) {
        acc = prod;
      } else {
        const wide_t sum = static_cast<wide_t>(acc) + prod;
        acc = fxp_detail::fit(sum, fmt);
        if (track && acc != sum) add_dev((static_cast<wide_t>(acc) - sum) << frac);
      }
    }
    out[static_cast<std::size_t>(i)] = acc;
    if (track) {
      deviation[static_cast<std::size_t>(i)] =
          std::ldexp(static_cast<long double>(dev) + dev_spill, -2 * frac);
    }
  }
}

/// Quantized matrix-vector product; M is quantized to fmt on entry.
inline std::vector<FxpValue> q_matvec(const Eigen::MatrixXd& m, std::span<const FxpValue> v,
                                      const FxpFormat& fmt) {
  fmt.validate();
  if (m.cols() != static_cast<Eigen::Index>(v.size())) {
    throw DimensionError("q_matvec: matrix has " + std::to_string(m.cols()) +
                         " columns but vector has " + std::to_string(v.size()) + " entries");
  }
  std::vector<std::int64_t> vraw(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!(v[j].format() == fmt)) throw FormatMismatch("q_matvec: vector entry format differs");
    vraw[j] = v[j].raw();
  }
  const QuantizedMatrix qm(m, fmt);
  std::vector<std::int64_t> oraw(static_cast<std::size_t>(m.rows()));
  mac_matvec_raw(qm, vraw, oraw);
  std::vector<FxpValue> out;
  out.reserve(oraw.size());
  for (auto r : oraw) out.push_back(FxpValue::from_raw(r, fmt));
  return out;
}

/// Componentwise quantization of a real vector.
inline std::vector<FxpValue> quantize(const Eigen::VectorXd& x, const FxpFormat& fmt) {
  std::vector<FxpValue> out;
  out.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) out.push_back(quantize(x(i), fmt));
  return out;
}

inline Eigen::VectorXd to_vector(std::span<const FxpValue> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i].to_double();
  return out;
}

/// Rounds every entry of x to the nearest value representable in fmt.
inline Eigen::VectorXd round_to_format(const Eigen::VectorXd& x, const FxpFormat& fmt) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = static_cast<double>(
        fxp_detail::raw_to_real(fxp_detail::quantize_raw(x(i), fmt), fmt.frac_width));
  }
  return out;
}

}  // namespace spmpc
