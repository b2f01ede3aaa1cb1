#pragma once

// Exact dyadic rationals and log-domain positive reals.

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace phicascade {

using BigInt = boost::multiprecision::cpp_int;

/// Extended real used for logarithms (113-bit significand).
using Real = __float128;

/// A binary rational m * 2^e held in canonical form: m odd, or m == 0 with e == 0.
/// Every operation is exact.
class DyadicRational {
 public:
  DyadicRational() = default;
  DyadicRational(long long m) : DyadicRational(BigInt(m), 0) {}  // NOLINT(implicit)
  DyadicRational(BigInt m, std::int64_t e);

  static DyadicRational pow2(std::int64_t e) { return {BigInt(1), e}; }

  /// Parses `m*2^e`, `2^e`, `-2^e` or a plain integer. Decimals are rejected.
  static DyadicRational parse(std::string_view text);

  const BigInt& mantissa() const { return m_; }
  std::int64_t exponent() const { return e_; }

  bool is_zero() const { return m_.is_zero(); }
  int sign() const { return m_.sign(); }

  DyadicRational operator-() const { return {-m_, e_}; }
  friend DyadicRational operator+(const DyadicRational& a, const DyadicRational& b);
  friend DyadicRational operator-(const DyadicRational& a, const DyadicRational& b);
  friend DyadicRational operator*(const DyadicRational& a, const DyadicRational& b);
  DyadicRational& operator+=(const DyadicRational& o) { return *this = *this + o; }
  DyadicRational& operator-=(const DyadicRational& o) { return *this = *this - o; }

  /// Multiplication by 2^n.
  DyadicRational scaled(std::int64_t n) const;

  friend bool operator==(const DyadicRational& a, const DyadicRational& b) {
    return a.e_ == b.e_ && a.m_ == b.m_;
  }
  friend std::strong_ordering operator<=>(const DyadicRational& a, const DyadicRational& b);

  /// Largest integer <= value.
  BigInt floor() const;
  /// Smallest integer >= value.
  BigInt ceil() const;

  double to_double() const;
  Real to_real() const;
  /// Natural logarithm of a positive value, accurate to the precision of Real.
  Real ln() const;

  /// Literal in the CLI syntax, e.g. `3*2^-5`.
  std::string to_string() const;
  /// Decimal mantissa, for serialization.
  std::string mantissa_string() const;

  std::size_t hash() const;

 private:
  void canonicalize();

  BigInt m_{0};
  std::int64_t e_{0};
};

DyadicRational abs(const DyadicRational& x);
DyadicRational min(const DyadicRational& a, const DyadicRational& b);
DyadicRational max(const DyadicRational& a, const DyadicRational& b);

/// Positive real stored as its natural logarithm, with an explicit exact zero.
class LogPositive {
 public:
  LogPositive() = default;  // exact zero

  static LogPositive zero() { return {}; }
  static LogPositive one() { return from_ln(0); }
  static LogPositive from_ln(Real ln);
  static LogPositive from_value(double v);

  bool is_zero() const { return zero_; }
  Real ln() const { return ln_; }
  double ln_double() const { return zero_ ? -HUGE_VAL : static_cast<double>(ln_); }
  /// exp(ln); underflows to 0 and overflows to +inf like std::exp.
  double value() const;

  friend LogPositive operator*(LogPositive a, LogPositive b);
  friend LogPositive operator/(LogPositive a, LogPositive b);
  LogPositive pow(Real k) const;

  friend bool operator==(const LogPositive& a, const LogPositive& b) {
    return a.zero_ == b.zero_ && (a.zero_ || a.ln_ == b.ln_);
  }
  friend std::partial_ordering operator<=>(const LogPositive& a, const LogPositive& b);

 private:
  Real ln_{0};
  bool zero_{true};
};

/// ln(e^a + e^b) by max-factoring. Symmetric in its arguments bit for bit.
LogPositive log_add(LogPositive a, LogPositive b);

/// Sum of a sequence; the result does not depend on the input order. Empty -> zero.
LogPositive log_sum(std::span<const LogPositive> xs);

/// ln(e^a - e^b) for a >= b; returns zero when a == b. Throws std::domain_error when a < b.
LogPositive log_sub(LogPositive a, LogPositive b);

/// Half-open interval [left, right) with dyadic endpoints.
class IntervalD {
 public:
  IntervalD(DyadicRational left, DyadicRational right);

  const DyadicRational& left() const { return left_; }
  const DyadicRational& right() const { return right_; }
  DyadicRational length() const { return right_ - left_; }
  DyadicRational midpoint() const { return (left_ + right_).scaled(-1); }

  bool contains(const DyadicRational& x) const { return left_ <= x && x < right_; }
  bool contains(const IntervalD& o) const { return left_ <= o.left_ && o.right_ <= right_; }
  IntervalD reflected() const { return {-right_, -left_}; }

  friend bool operator==(const IntervalD&, const IntervalD&) = default;
  std::size_t hash() const;
  std::string to_string() const;

 private:
  DyadicRational left_;
  DyadicRational right_;
};

/// Format a Real with full precision ("%.36Qg").
std::string real_to_string(Real x);
/// Round-trippable hexadecimal form ("%Qa").
std::string real_to_hex(Real x);
Real real_from_string(const std::string& s);

void to_json(nlohmann::json& j, const DyadicRational& d);
void from_json(const nlohmann::json& j, DyadicRational& d);
void to_json(nlohmann::json& j, const LogPositive& x);
void from_json(const nlohmann::json& j, LogPositive& x);
void to_json(nlohmann::json& j, const IntervalD& iv);
IntervalD interval_from_json(const nlohmann::json& j);

}  // namespace phicascade

template <>
struct std::hash<phicascade::DyadicRational> {
  std::size_t operator()(const phicascade::DyadicRational& d) const { return d.hash(); }
};
template <>
struct std::hash<phicascade::IntervalD> {
  std::size_t operator()(const phicascade::IntervalD& d) const { return d.hash(); }
};
