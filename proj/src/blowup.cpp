#include "phicascade/blowup.hpp"

extern "C" {
#include <quadmath.h>
}

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace phicascade {

namespace {

Real ratio_ln(LogPositive num, LogPositive den) {
  if (den.is_zero()) return num.is_zero() ? Real(0) : HUGE_VALQ;
  if (num.is_zero()) return -HUGE_VALQ;
  return num.ln() - den.ln();
}

LogPositive ratio(LogPositive num, LogPositive den) {
  if (num.is_zero() || den.is_zero()) return LogPositive::zero();
  return num / den;
}

double to_double_or_inf(Real ln) { return ln > 709 ? HUGE_VAL : static_cast<double>(expq(ln)); }

// Closed-ball inclusion [x - r, x + r] inside the half-open [a, b).
bool closed_ball_inside(const DyadicRational& x, const DyadicRational& r, const IntervalD& iv) {
  return iv.left() <= x - r && x + r < iv.right();
}

// Half-open [a, b) inside the closed ball [x - r, x + r].
bool inside_closed_ball(const IntervalD& iv, const DyadicRational& x, const DyadicRational& r) {
  return x - r <= iv.left() && iv.right() <= x + r;
}

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

BlowupScale blowup_scale(const DyadicRational& x, const DyadicRational& r, const PhiConfig& cfg) {
  if (!IntervalD(-1, 1).contains(x)) throw std::domain_error("blowup_scale: x must lie in [-1, 1)");
  if (r.sign() <= 0 || r > DyadicRational(1)) throw std::invalid_argument("blowup_scale: need 0 < r <= 1");
  BlowupScale s;
  s.x = x;
  s.r = r;

  // Every I_k with l(I_k) <= r lies inside B(x, r), so the search stops there.
  ConstructionInterval node = root_interval();
  ConstructionInterval last_outside;
  while (true) {
    const std::int64_t h = length_exponent(node.generation + 1);
    node = child_at(node, (x - node.extent.left()).scaled(-h).floor().convert_to<std::int64_t>(), cfg);
    if (!inside_closed_ball(node.extent, x, r)) {
      s.K_candidate = node.generation;
      last_outside = node;
    }
    if (node.extent.length() <= r) break;
  }
  if (s.K_candidate < 0) {
    s.reason = "B(x, r) already contains I_0";
    return s;
  }
  s.I_K = last_outside;
  s.ell_K = last_outside.extent.length();
  s.rho = static_cast<double>(s.ell_K.to_real() / r.to_real());
  if (!closed_ball_inside(x, r * DyadicRational(5), s.I_K.extent)) {
    s.reason = "5r exceeds I_K: B(x, 5r) is not inside I_K";
    return s;
  }
  s.K = s.K_candidate;

  const std::int64_t h = length_exponent(s.K_candidate + 1);
  const DyadicRational& a = s.I_K.extent.left();
  auto grid = [&](const DyadicRational& y) { return (y - a).scaled(-h); };
  const BigInt lo_floor = grid(x - r).floor();
  const BigInt lo_ceil = grid(x - r).ceil();
  const BigInt hi_floor = grid(x + r).floor();
  s.N = static_cast<std::int64_t>(hi_floor - lo_floor + 1);
  s.packed = std::max<std::int64_t>(0, static_cast<std::int64_t>(hi_floor - lo_ceil));
  return s;
}

EPointSet detect_E(const BlowupScale& scale, const PhiConfig&) {
  if (!scale.valid()) throw std::invalid_argument("detect_E: the scale has no valid K (" + scale.reason + ")");
  EPointSet e;
  e.scale = scale;
  if (scale.packed == 0) return e;
  const std::int64_t h = length_exponent(*scale.K + 1);
  const DyadicRational& a = scale.I_K.extent.left();
  const BigInt first = (scale.x - scale.r - a).scaled(-h).ceil();
  const Real rr = scale.r.to_real();
  for (std::int64_t j = 0; j <= scale.packed; ++j) {
    const DyadicRational p = a + DyadicRational(BigInt(first + j), h);
    e.points.push_back(p);
    e.normalized.push_back(static_cast<double>((p - scale.x).to_real() / rr));
  }
  return e;
}

DensityProfile density_profile(const DyadicRational& x, const DyadicRational& r, const DyadicRational& R, int m,
                               const DyadicRational& delta, const PhiConfig& cfg, const EvalOptions& opt,
                               std::optional<DyadicRational> exclusion_radius) {
  if (m < 1 || (m > 1 && !is_power_of_two(m - 1))) {
    throw std::invalid_argument("density_profile: grid size m must be 1 or 2^p + 1");
  }
  if (!(delta.sign() > 0 && delta < DyadicRational(1))) throw std::invalid_argument("density_profile: need 0 < delta < 1");
  if (R.sign() <= 0) throw std::invalid_argument("density_profile: R must be positive");
  DensityProfile prof;
  prof.scale = blowup_scale(x, r, cfg);
  prof.R = R;
  prof.delta = delta;
  prof.exclusion_radius = exclusion_radius.value_or(delta.scaled(1));
  prof.denominator = mass_of_ball(x, r, opt.rel_gap, opt.max_gen, cfg);
  if (prof.scale.valid()) prof.E_normalized = detect_E(prof.scale, cfg).normalized;

  std::vector<DyadicRational> zs;
  if (m == 1) {
    zs.push_back(DyadicRational(0));
  } else {
    const DyadicRational step = R.scaled(1 - std::countr_zero(static_cast<unsigned>(m - 1)));
    for (int j = 0; j < m; ++j) zs.push_back(-R + step * DyadicRational(j));
  }
  prof.points.resize(zs.size());
  const DyadicRational radius = delta * r;
  const Real two_delta = 2 * delta.to_real();
  const Real excl = prof.exclusion_radius.to_real();
  parallel_for(zs.size(), opt.threads, [&](std::size_t j) {
    ProfilePoint pp;
    pp.z = zs[j];
    const MassEnclosure num = mass_of_ball(x + r * zs[j], radius, opt.rel_gap, opt.max_gen, cfg);
    const MassEnclosure& den = prof.denominator;
    if (num.exact() && num.lower.is_zero()) {
      pp.nu = pp.nu_lower = pp.nu_upper = LogPositive::zero();
    } else {
      pp.nu = ratio(num.midpoint(), den.midpoint());
      pp.nu_lower = ratio(num.lower, den.upper);
      pp.nu_upper = den.lower.is_zero() ? LogPositive::from_ln(HUGE_VALQ) : ratio(num.upper, den.lower);
      pp.degenerate = !num.converged || !den.converged;
    }
    pp.density = pp.nu.is_zero() ? 0.0 : to_double_or_inf(pp.nu.ln() - logq(two_delta));
    pp.enclosure_gap = std::max(num.gap(), den.gap());
    const Real zr = zs[j].to_real();
    for (double e : prof.E_normalized) {
      if (fabsq(zr - static_cast<Real>(e)) < excl) pp.near_E = true;
    }
    prof.points[j] = std::move(pp);
  });
  return prof;
}

LogPositive profile_normalization(const DensityProfile& profile, const PhiConfig& cfg, const EvalOptions& opt) {
  const MassEnclosure num = mass_of_ball(profile.scale.x, profile.scale.r, opt.rel_gap, opt.max_gen, cfg);
  return ratio(num.midpoint(), profile.denominator.midpoint());
}

FlatnessSummary profile_flatness(const DensityProfile& profile) {
  FlatnessSummary f;
  const Real limit = 1 - profile.delta.to_real();
  f.max_density = 0;
  f.min_density = HUGE_VAL;
  for (const auto& p : profile.points) {
    if (fabsq(p.z.to_real()) > limit) continue;
    if (p.near_E || p.degenerate) {
      ++f.excluded;
      continue;
    }
    ++f.used;
    f.max_density = std::max(f.max_density, p.density);
    f.min_density = std::min(f.min_density, p.density);
  }
  if (f.used == 0) {
    f.min_density = 0;
    f.ratio = 0;
  } else {
    f.ratio = f.min_density > 0 ? f.max_density / f.min_density : HUGE_VAL;
  }
  return f;
}

FlatnessSeries flatness_series(const DyadicRational& x, int count, const DyadicRational& delta, int m,
                               const PhiConfig& cfg, const EvalOptions& opt, int lead, int max_depth, double noise) {
  if (count < 1) throw std::invalid_argument("flatness_series: count must be positive");
  if (max_depth < 0 || max_depth + 1 > kMaxGeneration) throw std::invalid_argument("flatness_series: max_depth out of range");
  FlatnessSeries s;
  s.x = x;
  const auto ch = chain(x, max_depth + 1, cfg);
  for (int d = 0; d <= max_depth && static_cast<int>(s.rows.size()) < count; ++d) {
    const DyadicRational r = ch[d + 1].extent.length().scaled(lead);
    if (r > DyadicRational(1)) continue;
    FlatnessSeriesRow row;
    row.depth = d;
    row.r = r;
    row.scale = blowup_scale(x, r, cfg);
    if (!row.scale.valid()) continue;
    row.flatness = profile_flatness(density_profile(x, r, 1, m, delta, cfg, opt));
    s.rows.push_back(std::move(row));
  }
  const std::size_t n = s.rows.size();
  std::vector<double> y;
  for (const auto& row : s.rows) {
    s.max_ratio = std::max(s.max_ratio, row.flatness.ratio);
    y.push_back(std::log(row.flatness.ratio));
  }
  if (n >= 2) {
    const double xbar = static_cast<double>(n - 1) / 2;
    double ybar = 0;
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(n);
    double sxy = 0, sxx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      sxy += (static_cast<double>(j) - xbar) * (y[j] - ybar);
      sxx += (static_cast<double>(j) - xbar) * (static_cast<double>(j) - xbar);
    }
    s.slope = sxy / sxx;
    s.strictly_increasing = true;
    for (std::size_t j = 1; j < n; ++j) {
      if (!(y[j] > y[j - 1])) s.strictly_increasing = false;
    }
  }
  s.trend_ok = n >= 2 && std::isfinite(s.slope) && s.slope * static_cast<double>(n - 1) <= std::log1p(noise) &&
               !s.strictly_increasing;
  return s;
}

Condition64Report check_condition_64(const DyadicRational& x, const std::vector<DyadicRational>& scales,
                                     const DyadicRational& z, const std::vector<DyadicRational>& deltas,
                                     const PhiConfig& cfg, const EvalOptions& opt, double quantile) {
  if (!(abs(z) < DyadicRational(1))) throw std::invalid_argument("check_condition_64: need |z| < 1");
  for (const auto& d : deltas) {
    if (!(d.sign() > 0 && d + abs(z) < DyadicRational(1))) {
      throw std::invalid_argument("check_condition_64: need 0 < delta < 1 - |z|, got delta = " + d.to_string());
    }
  }
  if (!(quantile > 0 && quantile <= 1)) throw std::invalid_argument("check_condition_64: quantile must lie in (0, 1]");
  Condition64Report rep;
  rep.z = z;
  rep.quantile = quantile;
  rep.entries.resize(scales.size() * deltas.size());
  parallel_for(scales.size(), opt.threads, [&](std::size_t s) {
    const DyadicRational& r = scales[s];
    const MassEnclosure den = mass_of_ball(x, r, opt.rel_gap, opt.max_gen, cfg);
    for (std::size_t d = 0; d < deltas.size(); ++d) {
      Condition64Entry e;
      e.r = r;
      e.delta = deltas[d];
      const MassEnclosure num = mass_of_ball(x + r * z, deltas[d] * r, opt.rel_gap, opt.max_gen, cfg);
      e.ln_ratio = ratio_ln(num.midpoint(), den.midpoint());
      const Real ln_delta = deltas[d].ln();
      e.c_star = to_double_or_inf(fabsq(e.ln_ratio - ln_delta));
      rep.entries[s * deltas.size() + d] = e;
    }
  });
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    std::vector<double> cs;
    for (std::size_t s = 0; s < scales.size(); ++s) cs.push_back(rep.entries[s * deltas.size() + d].c_star);
    std::sort(cs.begin(), cs.end());
    double c = 0;
    if (!cs.empty()) {
      const auto need = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(cs.size())));
      c = cs[std::max<std::size_t>(need, 1) - 1];
    }
    rep.c_at_quantile.push_back(c);
    rep.c_z_estimate = std::max(rep.c_z_estimate, c);
  }
  return rep;
}

double PreissRow::ratio() const { return to_double_or_inf(ln_ratio); }

std::vector<PreissRow> preiss_crosscheck(const DyadicRational& x, const DyadicRational& R,
                                         const std::vector<DyadicRational>& scales, const PhiConfig& cfg,
                                         const EvalOptions& opt) {
  if (R < DyadicRational(1)) throw std::invalid_argument("preiss_crosscheck: need R >= 1");
  std::vector<PreissRow> rows(scales.size());
  parallel_for(scales.size(), opt.threads, [&](std::size_t j) {
    PreissRow row;
    row.r = scales[j];
    row.inner = mass_of_ball(x, scales[j], opt.rel_gap, opt.max_gen, cfg);
    row.outer = R == DyadicRational(1) ? row.inner
                                       : mass_of_ball(x, R * scales[j], opt.rel_gap, opt.max_gen, cfg);
    row.ln_ratio = ratio_ln(row.outer.midpoint(), row.inner.midpoint());
    row.ln_ratio_lower = ratio_ln(row.outer.lower, row.inner.upper);
    if (R == DyadicRational(1)) row.ln_ratio_lower = 0;
    rows[j] = row;
  });
  return rows;
}

std::vector<PreissRow> preiss_crosscheck(const NonDoublingPoint& point, const DyadicRational& R,
                                         const PhiConfig& cfg, const EvalOptions& opt) {
  std::vector<DyadicRational> scales;
  for (const auto& w : point.witnesses) scales.push_back(w.distance);
  return preiss_crosscheck(point.x, R, scales, cfg, opt);
}

}  // namespace phicascade
