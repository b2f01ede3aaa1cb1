#include "phicascade/weight.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

extern "C" {
#include <quadmath.h>
}

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace phicascade {

namespace {

constexpr double kResidualCutoff = 80.0;  // e^{-80} is far below any usable tolerance
constexpr double kMinTol = 1e-15;

// Adaptive Gauss-Kronrod on [0, width]. Boost 1.74's own adaptive driver compares an
// unscaled panel error with a scaled tolerance, which forces full-depth recursion on narrow
// panels, so only its fixed 31-point rule is used and subdivision happens here.
template <class F>
double integrate_panels(F f, double width, double tol, double* err_out) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  constexpr double kRoundoff = 8 * std::numeric_limits<double>::epsilon();
  constexpr int kMaxPanels = 1 << 14;
  std::vector<std::pair<double, double>> stack{{0.0, width}};
  double total = 0;
  double err_total = 0;
  int panels = 0;
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    double raw_err = 0;
    const double est = GK::integrate(f, a, b, 0, 0.0, &raw_err);
    const double err = raw_err * (b - a) / 2;
    const bool narrow = (b - a) < width * 0x1.0p-40;
    if (err <= std::max(0.5 * tol, kRoundoff) * std::fabs(est) || narrow || ++panels > kMaxPanels) {
      total += est;
      err_total += err;
    } else {
      const double mid = 0.5 * (a + b);
      stack.emplace_back(mid, b);
      stack.emplace_back(a, mid);
    }
  }
  *err_out = err_total;
  return total;
}

// ln int_{u1}^{u1+w} e^{-u} u^{-2} du for u1 >= 1, w > 0 (w may be +inf).
Real ln_tail(Real u1, Real ln_u1, Real w, double tol) {
  const double u1d = static_cast<double>(u1);
  const double width = (isinfq(w) || w > kResidualCutoff) ? kResidualCutoff : static_cast<double>(w);
  auto integrand = [u1d](double s) {
    const double q = 1.0 + s / u1d;
    return std::exp(-s) / (q * q);
  };
  double err = 0;
  const double residual = integrate_panels(integrand, width, tol, &err);
  if (!(residual > 0) || err > tol * residual) {
    std::ostringstream os;
    os << "phi quadrature did not converge: u1=" << u1d << " width=" << width << " estimate=" << residual
       << " error=" << err << " (target relative " << tol << ")";
    throw std::runtime_error(os.str());
  }
  return -u1 - 2 * ln_u1 + logq(static_cast<Real>(residual));
}

// ln int_a^b e^{1/(t-1)} dt for 0 <= a < b <= 1 (unnormalized).
Real ln_right_integral(const DyadicRational& a, const DyadicRational& b, double tol) {
  const DyadicRational one_minus_a = DyadicRational(1) - a;
  const DyadicRational one_minus_b = DyadicRational(1) - b;
  const Real ln_u1 = -one_minus_a.ln();
  const Real u1 = 1 / one_minus_a.to_real();
  Real w;
  if (one_minus_b.is_zero()) {
    w = HUGE_VALQ;
  } else {
    w = (b - a).to_real() / (one_minus_a.to_real() * one_minus_b.to_real());
  }
  return ln_tail(u1, ln_u1, w, tol);
}

void check_tol(double tol) {
  if (!(tol >= kMinTol && tol <= 1e-6)) {
    throw std::invalid_argument("quad_rel_tol must lie in [1e-15, 1e-6]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PhiCache

std::optional<LogPositive> PhiCache::find(const IntervalD& iv) const {
  std::shared_lock lock(mu_);
  auto it = map_.find(iv);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void PhiCache::insert(const IntervalD& iv, LogPositive value) {
  std::unique_lock lock(mu_);
  map_.emplace(iv, value);
}

std::size_t PhiCache::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

void PhiCache::clear() {
  std::unique_lock lock(mu_);
  map_.clear();
}

void PhiCache::save(const std::filesystem::path& path, double quad_rel_tol) const {
  std::shared_lock lock(mu_);
  // Sorted output keeps cache files reproducible.
  std::vector<std::pair<std::string, std::string>> lines;
  lines.reserve(map_.size());
  for (const auto& [iv, v] : map_) {
    nlohmann::json rec;
    rec["interval"] = iv;
    if (v.is_zero()) {
      rec["zero"] = true;
    } else {
      rec["ln"] = v.ln_double();
      rec["ln_q"] = real_to_hex(v.ln());
    }
    std::string s = rec.dump();
    lines.emplace_back(iv.to_string(), std::move(s));
  }
  std::sort(lines.begin(), lines.end());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp);
    nlohmann::json header{{"format", "phicascade-phi-cache"},
                          {"version", kFormatVersion},
                          {"quad_rel_tol", quad_rel_tol},
                          {"records", lines.size()}};
    out << header.dump() << '\n';
    for (const auto& [key, line] : lines) out << line << '\n';
    if (!out) throw std::runtime_error("failed writing cache file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

bool PhiCache::load(const std::filesystem::path& path, double quad_rel_tol) {
  std::ifstream in(path);
  if (!in) return false;
  std::unordered_map<IntervalD, LogPositive> staged;
  try {
    std::string line;
    if (!std::getline(in, line)) return false;
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "phicascade-phi-cache" || header.at("version") != kFormatVersion ||
        header.at("quad_rel_tol").get<double>() != quad_rel_tol) {
      return false;
    }
    const auto expected = header.at("records").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      IntervalD iv = interval_from_json(rec.at("interval"));
      LogPositive v;
      if (rec.contains("zero") && rec.at("zero").get<bool>()) {
        v = LogPositive::zero();
      } else if (rec.contains("ln_q")) {
        v = LogPositive::from_ln(real_from_string(rec.at("ln_q").get<std::string>()));
      } else {
        v = LogPositive::from_ln(rec.at("ln").get<double>());
      }
      staged.emplace(std::move(iv), v);
    }
    if (staged.size() != expected) return false;
  } catch (const std::exception&) {
    return false;
  }
  std::unique_lock lock(mu_);
  map_ = std::move(staged);
  return true;
}

// ---------------------------------------------------------------------------
// phi

LogPositive normalization_constant(double quad_rel_tol) {
  check_tol(quad_rel_tol);
  // 1/c = int_{-1}^{1} e^{1/(|t|-1)} dt = 2 int_1^inf e^{-u} u^{-2} du
  const Real ln_half = ln_tail(1, 0, HUGE_VALQ, quad_rel_tol);
  return LogPositive::from_ln(-(M_LN2q + ln_half));
}

PhiConfig make_phi_config(double quad_rel_tol, std::shared_ptr<PhiCache> cache) {
  PhiConfig cfg;
  cfg.quad_rel_tol = quad_rel_tol;
  cfg.ln_c = normalization_constant(quad_rel_tol);
  cfg.cache = cache ? std::move(cache) : std::make_shared<PhiCache>();
  return cfg;
}

LogPositive phi_eval(const DyadicRational& t, const PhiConfig& cfg) {
  const DyadicRational gap = DyadicRational(1) - abs(t);
  if (gap.sign() < 0) throw std::domain_error("phi_eval: |t| > 1 (t = " + t.to_string() + ")");
  if (gap.is_zero()) return LogPositive::zero();
  return LogPositive::from_ln(cfg.ln_c.ln() - 1 / gap.to_real());
}

LogPositive phi_eval(double t, const PhiConfig& cfg) {
  if (!(std::fabs(t) <= 1.0)) throw std::domain_error("phi_eval: |t| > 1");
  const Real gap = 1 - fabsq(static_cast<Real>(t));
  if (gap == 0) return LogPositive::zero();
  return LogPositive::from_ln(cfg.ln_c.ln() - 1 / gap);
}

LogPositive log_phi_integral(const IntervalD& iv, const PhiConfig& cfg) {
  const DyadicRational one(1);
  if (iv.left() < -one || iv.right() > one) {
    throw std::domain_error("log_phi_integral: " + iv.to_string() + " is not inside [-1, 1)");
  }
  if (cfg.cache) {
    if (auto hit = cfg.cache->find(iv)) return *hit;
  }
  const double tol = cfg.quad_rel_tol;
  const DyadicRational& a = iv.left();
  const DyadicRational& b = iv.right();
  LogPositive raw;
  if (a.sign() >= 0) {
    raw = LogPositive::from_ln(ln_right_integral(a, b, tol));
  } else if (b.sign() <= 0) {
    raw = LogPositive::from_ln(ln_right_integral(-b, -a, tol));
  } else {
    raw = log_add(LogPositive::from_ln(ln_right_integral(0, -a, tol)),
                  LogPositive::from_ln(ln_right_integral(0, b, tol)));
  }
  const LogPositive result = raw * cfg.ln_c;
  if (cfg.cache) cfg.cache->insert(iv, result);
  return result;
}

LogPositive phi_edge_mass(Real a, const PhiConfig& cfg) {
  if (!(a > 0 && a <= 1)) throw std::domain_error("phi_edge_mass: edge length must lie in (0, 1]");
  const Real u1 = 1 / a;
  return LogPositive::from_ln(cfg.ln_c.ln() + ln_tail(u1, -logq(a), HUGE_VALQ, cfg.quad_rel_tol));
}

GRatio g_ratio(double C, double epsilon, const PhiConfig& cfg) {
  if (!(C >= 1) || !(epsilon > 0)) throw std::domain_error("g_ratio: need C >= 1 and eps > 0");
  const Real wide = static_cast<Real>(C) * static_cast<Real>(epsilon);
  if (wide > 1) throw std::domain_error("g_ratio: C * eps exceeds 1");
  GRatio g;
  g.C = C;
  g.epsilon = epsilon;
  if (C == 1) {
    g.ln_G = 0;
    return g;
  }
  g.ln_G = (phi_edge_mass(wide, cfg) / phi_edge_mass(static_cast<Real>(epsilon), cfg)).ln();
  return g;
}

double g_ratio_lower_bound(double C, double epsilon, double D) {
  if (!(D > 1 && D < C)) throw std::domain_error("g_ratio_lower_bound: need 1 < D < C");
  return std::log(C - D) + (D - 1) / (D * epsilon);
}

ShiftProbe shift_ratio_probe(const IntervalD& iv, double M, int N, const PhiConfig& cfg, int direction) {
  if (!(M > 1) || N < 1) throw std::invalid_argument("shift_ratio_probe: need M > 1 and N >= 1");
  if (direction != 1 && direction != -1) throw std::invalid_argument("shift_ratio_probe: direction must be +-1");
  const DyadicRational len = iv.length();
  const DyadicRational step = direction > 0 ? len : -len;
  auto translate = [&](int n) {
    const DyadicRational shift = step * DyadicRational(n);
    const IntervalD moved(iv.left() + shift, iv.right() + shift);
    if (moved.left() < DyadicRational(-1) || moved.right() > DyadicRational(1)) {
      throw std::domain_error("shift_ratio_probe: translate " + moved.to_string() + " leaves [-1, 1)");
    }
    return moved;
  };
  translate(N + 1);  // validates the whole configuration up front

  ShiftProbe p{iv, direction, M, N, 0, {}, 0, false, false};
  std::vector<LogPositive> masses;
  masses.reserve(static_cast<std::size_t>(N) + 2);
  for (int n = 0; n <= N + 1; ++n) masses.push_back(log_phi_integral(translate(n), cfg));
  p.ln_hypothesis = (masses[1] / masses[0]).ln();
  p.ln_threshold = logq(static_cast<Real>(M)) / 8 - M_LN2q;
  p.hypothesis_met = p.ln_hypothesis > logq(static_cast<Real>(M));
  bool all = true;
  for (int n = 1; n <= N; ++n) {
    const Real r = (masses[n + 1] / masses[n]).ln();
    p.ln_conclusions.push_back(r);
    all = all && r > p.ln_threshold;
  }
  p.implication_holds = !p.hypothesis_met || all;
  return p;
}

ShiftThreshold empirical_shift_threshold(double M, int N, int max_exponent, const PhiConfig& cfg,
                                         int positions_per_length) {
  ShiftThreshold out;
  out.M = M;
  out.N = N;
  out.max_exponent = max_exponent;
  for (std::int64_t j = 1; j <= max_exponent; ++j) {
    // Left-aligned intervals [-1 + k 2^-j, -1 + (k+1) 2^-j) whose translates stay in [-1, 1).
    const std::int64_t slots = (std::int64_t{2} << j) - (N + 1);
    if (slots <= 0) {
      continue;
    }
    const std::int64_t stride = std::max<std::int64_t>(1, slots / positions_per_length);
    bool ok = true;
    for (std::int64_t k = 0; k < slots && ok; k += (k < 16 ? 1 : stride)) {
      const DyadicRational left = DyadicRational(-1) + DyadicRational(BigInt(k), -j);
      const IntervalD iv(left, left + DyadicRational::pow2(-j));
      ok = shift_ratio_probe(iv, M, N, cfg).implication_holds;
    }
    if (!ok) out.failing_exponents.push_back(j);
  }
  const std::int64_t last_fail = out.failing_exponents.empty() ? 0 : out.failing_exponents.back();
  if (last_fail < max_exponent) out.threshold_exponent = last_fail + 1;
  return out;
}

}  // namespace phicascade
