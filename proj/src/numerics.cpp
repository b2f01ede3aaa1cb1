#include "phicascade/numerics.hpp"

#include <nlohmann/json.hpp>

extern "C" {
#include <quadmath.h>
}

#include <algorithm>
#include <charconv>
#include <stdexcept>
#include <vector>

namespace phicascade {

namespace {

using boost::multiprecision::lsb;
using boost::multiprecision::msb;

std::int64_t checked_shift_amount(std::int64_t n) {
  if (n < 0 || n > (1 << 24)) throw std::overflow_error("dyadic exponent difference too large");
  return n;
}

// |m| reduced to at most `bits` significant bits (truncating), with the exponent adjustment.
std::pair<BigInt, std::int64_t> top_bits(const BigInt& m, unsigned bits) {
  BigInt a = boost::multiprecision::abs(m);
  const auto width = static_cast<std::int64_t>(msb(a)) + 1;
  if (width <= static_cast<std::int64_t>(bits)) return {a, 0};
  const std::int64_t drop = width - bits;
  return {a >> static_cast<unsigned>(drop), drop};
}

Real big_to_real(const BigInt& a) {
  // a < 2^128
  const BigInt mask64 = (BigInt(1) << 64) - 1;
  const auto lo = static_cast<std::uint64_t>(a & mask64);
  const auto hi = static_cast<std::uint64_t>(a >> 64);
  return ldexpq(static_cast<Real>(hi), 64) + static_cast<Real>(lo);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::int64_t parse_int64(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("malformed dyadic literal '" + std::string(whole) + "'");
  }
  return v;
}

BigInt parse_bigint(std::string_view s, std::string_view whole) {
  std::string_view digits = s;
  if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) digits.remove_prefix(1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument("malformed dyadic literal '" + std::string(whole) + "'");
  }
  BigInt v{std::string(digits)};
  return (s.front() == '-') ? BigInt(-v) : v;
}

}  // namespace

// ---------------------------------------------------------------------------
// DyadicRational

DyadicRational::DyadicRational(BigInt m, std::int64_t e) : m_(std::move(m)), e_(e) { canonicalize(); }

void DyadicRational::canonicalize() {
  if (m_.is_zero()) {
    e_ = 0;
    return;
  }
  const auto tz = lsb(boost::multiprecision::abs(m_));
  if (tz > 0) {
    m_ >>= tz;  // exact: the low tz bits are zero, sign is preserved by cpp_int
    e_ += static_cast<std::int64_t>(tz);
  }
}

DyadicRational DyadicRational::parse(std::string_view text) {
  const std::string_view s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty dyadic literal");
  if (s.find_first_of(".eE") != std::string_view::npos) {
    throw std::invalid_argument("decimal literal '" + std::string(s) +
                                "' rejected; use m*2^e or 2^-k");
  }
  const auto caret = s.find('^');
  if (caret == std::string_view::npos) return {parse_bigint(s, s), 0};

  const std::string_view exp_part = s.substr(caret + 1);
  std::string_view base_part = s.substr(0, caret);
  BigInt m = 1;
  const auto star = base_part.find('*');
  if (star != std::string_view::npos) {
    m = parse_bigint(trim(base_part.substr(0, star)), s);
    base_part = trim(base_part.substr(star + 1));
  } else if (!base_part.empty() && base_part.front() == '-') {
    m = -1;
    base_part.remove_prefix(1);
  }
  if (trim(base_part) != "2") throw std::invalid_argument("malformed dyadic literal '" + std::string(s) + "'");
  std::string_view ep = trim(exp_part);
  if (ep.size() >= 2 && ep.front() == '(' && ep.back() == ')') ep = ep.substr(1, ep.size() - 2);
  return {m, parse_int64(ep, s)};
}

DyadicRational operator+(const DyadicRational& a, const DyadicRational& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (a.e_ == b.e_) return {a.m_ + b.m_, a.e_};
  if (a.e_ < b.e_) {
    return {a.m_ + (b.m_ << static_cast<unsigned>(checked_shift_amount(b.e_ - a.e_))), a.e_};
  }
  return {(a.m_ << static_cast<unsigned>(checked_shift_amount(a.e_ - b.e_))) + b.m_, b.e_};
}

DyadicRational operator-(const DyadicRational& a, const DyadicRational& b) { return a + (-b); }

DyadicRational operator*(const DyadicRational& a, const DyadicRational& b) {
  return {a.m_ * b.m_, a.e_ + b.e_};
}

DyadicRational DyadicRational::scaled(std::int64_t n) const {
  if (is_zero()) return *this;
  DyadicRational r = *this;
  r.e_ += n;
  return r;
}

std::strong_ordering operator<=>(const DyadicRational& a, const DyadicRational& b) {
  if (a == b) return std::strong_ordering::equal;
  const int sa = a.sign();
  const int sb = b.sign();
  if (sa != sb) return sa <=> sb;
  // Same sign, both nonzero: compare magnitudes by bit length first.
  const auto wa = static_cast<std::int64_t>(msb(boost::multiprecision::abs(a.m_))) + a.e_;
  const auto wb = static_cast<std::int64_t>(msb(boost::multiprecision::abs(b.m_))) + b.e_;
  if (wa != wb) return sa > 0 ? wa <=> wb : wb <=> wa;
  return (a - b).sign() <=> 0;
}

BigInt DyadicRational::floor() const {
  if (e_ >= 0) return m_ << static_cast<unsigned>(checked_shift_amount(e_));
  const auto sh = static_cast<unsigned>(checked_shift_amount(-e_));
  if (m_.sign() >= 0) return m_ >> sh;
  BigInt a = -m_;
  // m is odd, so the value is never an integer here
  return -((a >> sh) + 1);
}

BigInt DyadicRational::ceil() const {
  if (e_ >= 0) return floor();
  return (-*this).floor() * -1;
}

double DyadicRational::to_double() const {
  if (is_zero()) return 0.0;
  auto [a, adj] = top_bits(m_, 120);
  const Real r = big_to_real(a);
  const double v = std::ldexp(static_cast<double>(r), static_cast<int>(std::clamp<std::int64_t>(e_ + adj, -100000, 100000)));
  return m_.sign() < 0 ? -v : v;
}

Real DyadicRational::to_real() const {
  if (is_zero()) return 0;
  auto [a, adj] = top_bits(m_, 124);
  const Real v = ldexpq(big_to_real(a), static_cast<int>(std::clamp<std::int64_t>(e_ + adj, -100000, 100000)));
  return m_.sign() < 0 ? -v : v;
}

Real DyadicRational::ln() const {
  if (m_.sign() <= 0) throw std::domain_error("ln of a non-positive dyadic");
  auto [a, adj] = top_bits(m_, 124);
  const auto k = static_cast<std::int64_t>(msb(a));
  const Real frac = ldexpq(big_to_real(a), -static_cast<int>(k));  // in [1,2)
  return logq(frac) + static_cast<Real>(k + adj + e_) * M_LN2q;
}

std::string DyadicRational::mantissa_string() const { return m_.str(); }

std::string DyadicRational::to_string() const {
  if (e_ == 0) return m_.str();
  if (m_ == 1) return "2^" + std::to_string(e_);
  if (m_ == -1) return "-2^" + std::to_string(e_);
  return m_.str() + "*2^" + std::to_string(e_);
}

std::size_t DyadicRational::hash() const {
  const std::size_t h = std::hash<BigInt>{}(m_);
  return h ^ (std::hash<std::int64_t>{}(e_) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

DyadicRational abs(const DyadicRational& x) { return x.sign() < 0 ? -x : x; }
DyadicRational min(const DyadicRational& a, const DyadicRational& b) { return b < a ? b : a; }
DyadicRational max(const DyadicRational& a, const DyadicRational& b) { return a < b ? b : a; }

// ---------------------------------------------------------------------------
// LogPositive

LogPositive LogPositive::from_ln(Real ln) {
  if (isnanq(ln)) throw std::domain_error("LogPositive from NaN");
  LogPositive x;
  x.ln_ = ln;
  x.zero_ = false;
  return x;
}

LogPositive LogPositive::from_value(double v) {
  if (v < 0 || std::isnan(v)) throw std::domain_error("LogPositive requires a non-negative value");
  if (v == 0) return zero();
  return from_ln(logq(static_cast<Real>(v)));
}

double LogPositive::value() const { return zero_ ? 0.0 : static_cast<double>(expq(ln_)); }

LogPositive operator*(LogPositive a, LogPositive b) {
  if (a.zero_ || b.zero_) return LogPositive::zero();
  return LogPositive::from_ln(a.ln_ + b.ln_);
}

LogPositive operator/(LogPositive a, LogPositive b) {
  if (b.zero_) throw std::domain_error("division by an exact-zero LogPositive");
  if (a.zero_) return LogPositive::zero();
  return LogPositive::from_ln(a.ln_ - b.ln_);
}

LogPositive LogPositive::pow(Real k) const {
  if (zero_) return zero();
  return from_ln(ln_ * k);
}

std::partial_ordering operator<=>(const LogPositive& a, const LogPositive& b) {
  if (a.zero_ || b.zero_) return (!a.zero_) <=> (!b.zero_);
  if (a.ln_ < b.ln_) return std::partial_ordering::less;
  if (a.ln_ > b.ln_) return std::partial_ordering::greater;
  if (a.ln_ == b.ln_) return std::partial_ordering::equivalent;
  return std::partial_ordering::unordered;
}

LogPositive log_add(LogPositive a, LogPositive b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  const Real hi = a.ln() >= b.ln() ? a.ln() : b.ln();
  const Real lo = a.ln() >= b.ln() ? b.ln() : a.ln();
  return LogPositive::from_ln(hi + log1pq(expq(lo - hi)));
}

LogPositive log_sub(LogPositive a, LogPositive b) {
  if (b.is_zero()) return a;
  if (a < b) throw std::domain_error("log_sub: minuend smaller than subtrahend");
  if (a == b) return LogPositive::zero();
  return LogPositive::from_ln(a.ln() + log1pq(-expq(b.ln() - a.ln())));
}

LogPositive log_sum(std::span<const LogPositive> xs) {
  std::vector<Real> lns;
  lns.reserve(xs.size());
  for (const auto& x : xs) {
    if (!x.is_zero()) lns.push_back(x.ln());
  }
  if (lns.empty()) return LogPositive::zero();
  std::sort(lns.begin(), lns.end());
  const Real top = lns.back();
  Real acc = 0;
  for (const Real v : lns) acc += expq(v - top);
  return LogPositive::from_ln(top + logq(acc));
}

// ---------------------------------------------------------------------------
// IntervalD

IntervalD::IntervalD(DyadicRational left, DyadicRational right) : left_(std::move(left)), right_(std::move(right)) {
  if (!(left_ < right_)) {
    throw std::invalid_argument("empty interval [" + left_.to_string() + ", " + right_.to_string() + ")");
  }
}

std::size_t IntervalD::hash() const {
  const std::size_t h = left_.hash();
  return h ^ (right_.hash() + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

std::string IntervalD::to_string() const { return "[" + left_.to_string() + ", " + right_.to_string() + ")"; }

// ---------------------------------------------------------------------------
// Formatting and JSON

std::string real_to_string(Real x) {
  char buf[128];
  quadmath_snprintf(buf, sizeof buf, "%.36Qg", x);
  return buf;
}

std::string real_to_hex(Real x) {
  char buf[128];
  quadmath_snprintf(buf, sizeof buf, "%Qa", x);
  return buf;
}

Real real_from_string(const std::string& s) {
  char* end = nullptr;
  const Real v = strtoflt128(s.c_str(), &end);
  if (end == s.c_str()) throw std::invalid_argument("not a real number: '" + s + "'");
  return v;
}

void to_json(nlohmann::json& j, const DyadicRational& d) {
  j = nlohmann::json{{"m", d.mantissa_string()}, {"e", d.exponent()}};
}

void from_json(const nlohmann::json& j, DyadicRational& d) {
  const auto m = j.at("m").get<std::string>();
  d = DyadicRational(parse_bigint(m, m), j.at("e").get<std::int64_t>());
}

void to_json(nlohmann::json& j, const LogPositive& x) {
  if (x.is_zero()) {
    j = nlohmann::json{{"zero", true}};
  } else {
    j = nlohmann::json{{"ln", x.ln_double()}};
  }
}

void from_json(const nlohmann::json& j, LogPositive& x) {
  if (j.contains("zero") && j.at("zero").get<bool>()) {
    x = LogPositive::zero();
  } else {
    x = LogPositive::from_ln(j.at("ln").get<double>());
  }
}

void to_json(nlohmann::json& j, const IntervalD& iv) { j = nlohmann::json{{"left", iv.left()}, {"right", iv.right()}}; }

IntervalD interval_from_json(const nlohmann::json& j) {
  return {j.at("left").get<DyadicRational>(), j.at("right").get<DyadicRational>()};
}

}  // namespace phicascade
