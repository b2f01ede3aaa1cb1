#include "commands.hpp"

#include <boost/math/special_functions/expint.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace phicascade::cli {

namespace {

Check make_check(std::string name, bool pass, double value, double limit, std::string detail = {}) {
  return {std::move(name), pass, value, limit, std::move(detail)};
}

double rel_diff(Real a, Real b) { return static_cast<double>(fabsq(expq(a - b) - 1)); }

// Random dyadic point k 2^-bits with k uniform in [lo 2^bits, hi 2^bits).
DyadicRational random_dyadic(std::mt19937_64& rng, long lo, long hi, int bits) {
  const long long span = (hi - lo) * (1LL << bits);
  std::uniform_int_distribution<long long> d(0, span - 1);
  return DyadicRational(BigInt(d(rng) + lo * (1LL << bits)), -bits);
}

IntervalD random_subinterval(std::mt19937_64& rng, const DyadicRational& a, const DyadicRational& b, int bits) {
  const DyadicRational len = b - a;
  while (true) {
    const DyadicRational p = a + len * random_dyadic(rng, 0, 1, bits);
    const DyadicRational q = a + len * random_dyadic(rng, 0, 1, bits);
    if (p != q) return p < q ? IntervalD(p, q) : IntervalD(q, p);
  }
}

}  // namespace

std::vector<Check> verify_phi(const RunConfig& cfg, const PhiConfig& phi) {
  std::vector<Check> out;
  const double tol = cfg.quad_rel_tol;
  std::mt19937_64 rng(cfg.seed);

  const long double ref_c = 1 / (2 * boost::math::expint(2, 1.0L));
  const double c_err = std::fabs(static_cast<double>(expq(phi.ln_c.ln()) / static_cast<Real>(ref_c) - 1));
  out.push_back(make_check("normalization_constant_vs_expint", c_err <= 1e-8, c_err, 1e-8,
                           "c = " + format_double(phi.ln_c.value())));

  const Real ln_half = logq(0.5Q);
  const Real ln_left = log_phi_integral(IntervalD(-1, 0), phi).ln();
  const Real ln_right = log_phi_integral(IntervalD(0, 1), phi).ln();
  const double sym = std::max(rel_diff(ln_left, ln_half), rel_diff(ln_right, ln_half));
  out.push_back(make_check("halves_equal_one_half", sym <= 10 * tol, sym, 10 * tol));

  const double phi0 = std::fabs(static_cast<double>(expq(phi_eval(0.0, phi).ln() - phi.ln_c.ln() + 1) - 1));
  out.push_back(make_check("phi_at_zero_is_c_over_e", phi0 <= 1e-15, phi0, 1e-15));

  bool mono = true;
  LogPositive prev = phi_eval(DyadicRational(-1), phi);
  for (int j = -1023; j <= 1024; ++j) {
    const LogPositive cur = phi_eval(DyadicRational(BigInt(j), -10), phi);
    if (j <= 0 && !(cur > prev)) mono = false;
    if (j > 0 && !(cur < prev)) mono = false;
    prev = cur;
  }
  out.push_back(make_check("monotone_on_each_half", mono, mono, 1, "grid 2^-10"));

  double worst_sandwich = 0;
  bool sandwich = true;
  for (int n = 0; n < 200; ++n) {
    const bool right = n % 2 == 0;
    const IntervalD iv = right ? random_subinterval(rng, DyadicRational(0), DyadicRational(1), 30)
                               : random_subinterval(rng, DyadicRational(-1), DyadicRational(0), 30);
    const LogPositive v = log_phi_integral(iv, phi);
    const LogPositive fa = phi_eval(iv.left(), phi);
    const LogPositive fb = phi_eval(iv.right(), phi);
    const Real ln_len = iv.length().ln();
    const Real lo = (fa < fb ? fa : fb).is_zero() ? -HUGE_VALQ : (fa < fb ? fa : fb).ln() + ln_len;
    const Real hi = (fa < fb ? fb : fa).ln() + ln_len;
    const Real slack = tol;
    if (v.ln() < lo - slack || v.ln() > hi + slack) sandwich = false;
    worst_sandwich = std::max(worst_sandwich, static_cast<double>(std::max(lo - v.ln(), v.ln() - hi)));
  }
  out.push_back(make_check("monotone_sandwich_200_intervals", sandwich, worst_sandwich, tol));

  double worst_add = 0;
  for (int n = 0; n < 200; ++n) {
    const IntervalD whole = random_subinterval(rng, DyadicRational(-1), DyadicRational(1), 24);
    const DyadicRational mid = whole.left() + whole.length() * random_dyadic(rng, 0, 1, 20);
    if (mid == whole.left()) continue;
    const LogPositive sum = log_add(log_phi_integral(IntervalD(whole.left(), mid), phi),
                                    log_phi_integral(IntervalD(mid, whole.right()), phi));
    worst_add = std::max(worst_add, rel_diff(sum.ln(), log_phi_integral(whole, phi).ln()));
  }
  out.push_back(make_check("additivity_200_pairs", worst_add <= 10 * tol, worst_add, 10 * tol));

  bool bracket = true;
  for (int q : {1, 2, 3}) {
    const DyadicRational tau(BigInt(q), -2);
    const LogPositive lo = phi_eval(tau, phi);
    const LogPositive hi = phi_eval(0.0, phi);
    for (int n = 0; n < 200; ++n) {
      const IntervalD iv = random_subinterval(rng, -tau, tau, 30);
      const Real ln_len = iv.length().ln();
      const Real v = log_phi_integral(iv, phi).ln();
      if (v < lo.ln() + ln_len - tol || v > hi.ln() + ln_len + tol) bracket = false;
    }
  }
  out.push_back(make_check("interior_bracket_tau_quarter_half_three_quarters", bracket, bracket, 1));

  const double g1 = static_cast<double>(g_ratio(1, 0.3, phi).ln_G);
  out.push_back(make_check("G_1_is_one", g1 == 0, g1, 0));
  const double g201 = std::exp(static_cast<double>(g_ratio(2, 0.1, phi).ln_G));
  out.push_back(make_check("G_2_0.1_near_520.3", std::fabs(g201 / 520.3 - 1) <= 0.01, g201, 520.3));
  const double lng2001 = static_cast<double>(g_ratio(2, 0.01, phi).ln_G);
  out.push_back(make_check("G_2_0.01_exceeds_1e15", lng2001 > 15 * std::log(10.0), lng2001, 15 * std::log(10.0),
                           "natural log"));

  bool grid_ok = true;
  Real prev_g = -HUGE_VALQ;
  for (int j = 3; j <= 40; ++j) {
    const double eps = std::ldexp(1.0, -j);
    const Real g = g_ratio(2, eps, phi).ln_G;
    if (g < prev_g) grid_ok = false;
    if (static_cast<double>(g) < g_ratio_lower_bound(2, eps, 1.5)) grid_ok = false;
    prev_g = g;
  }
  out.push_back(make_check("G_2_grid_monotone_and_above_proof_bound", grid_ok, static_cast<double>(prev_g), 0,
                           "ln G at eps = 2^-40"));

  const ShiftProbe vac = shift_ratio_probe(IntervalD(DyadicRational::parse("-13*2^-7"), DyadicRational::parse("-2^-4")),
                                           10, 1, phi);
  out.push_back(make_check("shift_probe_vacuous_case", !vac.hypothesis_met && vac.implication_holds,
                           static_cast<double>(vac.ln_hypothesis), std::log(10.0)));
  const ShiftProbe edge = shift_ratio_probe(
      IntervalD(DyadicRational(-1) + DyadicRational::pow2(-12), DyadicRational(-1) + DyadicRational::pow2(-11)), 2, 3,
      phi);
  out.push_back(make_check("shift_probe_edge_case", edge.hypothesis_met && edge.implication_holds,
                           static_cast<double>(edge.ln_hypothesis), std::log(2.0)));
  return out;
}

std::vector<Check> verify_mu(const RunConfig& cfg, const PhiConfig& phi) {
  std::vector<Check> out;
  const EvalOptions opt = cfg.eval_options();
  const int depth = std::min(cfg.max_gen, 8);

  // Conservation and tiling at every node along sampled chains.
  double worst = 0;
  bool tiling = true;
  for (const auto& p : sample_mu(MuSampler{cfg.seed, depth + 1}, 20, phi)) {
    ConstructionInterval node = root_interval();
    for (int g = 0; g <= depth; ++g) {
      const auto kids = children(node, phi);
      std::vector<LogPositive> masses;
      DyadicRational edge = node.extent.left();
      for (const auto& k : kids) {
        masses.push_back(k.ln_mass);
        if (k.extent.left() != edge) tiling = false;
        edge = k.extent.right();
      }
      if (edge != node.extent.right()) tiling = false;
      worst = std::max(worst, rel_diff(log_sum(masses).ln(), node.ln_mass.ln()));
      node = kids[static_cast<std::size_t>(ordinal_to_position(p.index.path()[static_cast<std::size_t>(g)], g))];
    }
  }
  out.push_back(make_check("mass_conservation_sampled_chains", worst <= 1e-12, worst, 1e-12,
                           "20 chains to generation " + std::to_string(depth)));
  out.push_back(make_check("children_tile_parent", tiling, tiling, 1));

  double worst_reflect = 0;
  bool reflect_extent = true;
  for (const auto& p : sample_mu(MuSampler{cfg.seed + 1, depth + 1}, 20, phi)) {
    const ConstructionInterval a = interval_at(p.index, phi);
    const ConstructionInterval b = interval_at(p.index.reflected(), phi);
    if (b.extent != a.extent.reflected()) reflect_extent = false;
    worst_reflect = std::max(worst_reflect, rel_diff(a.ln_mass.ln(), b.ln_mass.ln()));
  }
  out.push_back(make_check("reflection_symmetry", reflect_extent && worst_reflect <= 1e-12, worst_reflect, 1e-12));

  // Enclosures of unions of generation-3 intervals against the sum of their exact masses.
  std::vector<ConstructionInterval> level{root_interval()};
  for (int g = 0; g <= 3; ++g) {
    std::vector<ConstructionInterval> next;
    for (const auto& n : level) {
      for (auto& k : children(n, phi)) next.push_back(std::move(k));
    }
    level = std::move(next);
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, level.size());
  bool sound = true;
  bool tight = true;
  double worst_gap = 0;
  for (int n = 0; n < 50; ++n) {
    std::size_t a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    std::vector<LogPositive> parts;
    for (std::size_t j = a; j < b; ++j) parts.push_back(level[j].ln_mass);
    const LogPositive exact = log_sum(parts);
    const IntervalD J(level[a].extent.left(), b < level.size() ? level[b].extent.left() : DyadicRational(1));
    const MassEnclosure e = mass_of_interval(J, opt.rel_gap, opt.max_gen, phi);
    const Real fuzz = 1e-13Q;
    if (exact.ln() < e.lower.ln() - fuzz || exact.ln() > e.upper.ln() + fuzz) sound = false;
    if (e.converged && e.gap() > opt.rel_gap) tight = false;
    worst_gap = std::max(worst_gap, e.gap());
  }
  out.push_back(make_check("enclosure_contains_exact_unions", sound, sound, 1, "50 unions of generation-3 intervals"));
  out.push_back(make_check("enclosure_gap_within_rel_gap", tight, worst_gap, opt.rel_gap));

  bool monotone = true;
  for (int n = 0; n < 50; ++n) {
    const IntervalD outer = random_subinterval(rng, DyadicRational(-1), DyadicRational(1), 40);
    const IntervalD inner = random_subinterval(rng, outer.left(), outer.right(), 20);
    const MassEnclosure eo = mass_of_interval(outer, opt.rel_gap, opt.max_gen, phi);
    const MassEnclosure ei = mass_of_interval(inner, opt.rel_gap, opt.max_gen, phi);
    if (!(ei.lower <= eo.upper)) monotone = false;
    if (!ei.upper.is_zero() && ei.upper.ln() > eo.upper.ln() + log1pq(2 * opt.rel_gap)) monotone = false;
  }
  out.push_back(make_check("enclosure_monotone_under_inclusion", monotone, monotone, 1));

  const MassEnclosure whole = mass_of_interval(IntervalD(-1, 1), opt.rel_gap, opt.max_gen, phi);
  out.push_back(make_check("total_mass_exactly_one", whole.exact() && whole.lower.ln() == 0, whole.lower.ln_double(), 0));

  const int n = 10000;
  int right = 0;
  for (const auto& p : sample_mu(MuSampler{cfg.seed, 4}, n, phi)) right += p.x.sign() >= 0;
  const double freq = static_cast<double>(right) / n;
  const double band = 3 * std::sqrt(0.25 / n);
  out.push_back(make_check("sampler_half_frequency", std::fabs(freq - 0.5) <= band, freq, band));
  return out;
}

std::vector<Check> verify_tangent(const RunConfig& cfg, const PhiConfig& phi) {
  std::vector<Check> out;
  const EvalOptions opt = cfg.eval_options();
  const DyadicRational delta = DyadicRational::pow2(-6);

  const auto pts = sample_mu(MuSampler{cfg.seed, 16}, 3, phi);
  const DyadicRational r0 = locate(pts[0].x, 7, phi).extent.length().scaled(3);
  const DensityProfile prof = density_profile(pts[0].x, r0, 1, 257, delta, phi, opt);
  const LogPositive norm = profile_normalization(prof, phi, opt);
  out.push_back(make_check("normalization_exactly_one", !norm.is_zero() && norm.ln() == 0, norm.ln_double(), 0));

  const DensityProfile sym = density_profile(DyadicRational(0), DyadicRational::pow2(-8), 1, 257, delta, phi, opt);
  double worst_sym = 0;
  for (std::size_t j = 0; j < sym.points.size(); ++j) {
    const auto& a = sym.points[j];
    const auto& b = sym.points[sym.points.size() - 1 - j];
    if (a.nu.is_zero() != b.nu.is_zero()) {
      worst_sym = HUGE_VAL;
    } else if (!a.nu.is_zero()) {
      worst_sym = std::max(worst_sym, rel_diff(a.nu.ln(), b.nu.ln()));
    }
  }
  out.push_back(make_check("profile_symmetric_at_zero", worst_sym <= 1e-10, worst_sym, 1e-10, "r = 2^-8"));

  bool flat = true;
  double worst_ratio = 0;
  double worst_slope = -HUGE_VAL;
  for (const auto& p : pts) {
    const FlatnessSeries s = flatness_series(p.x, 5, delta, 257, phi, opt);
    if (s.rows.size() < 5 || !s.trend_ok || s.max_ratio > 100) flat = false;
    worst_ratio = std::max(worst_ratio, s.max_ratio);
    worst_slope = std::max(worst_slope, s.slope);
  }
  out.push_back(make_check("flatness_ratio_at_most_100", flat && worst_ratio <= 100, worst_ratio, 100,
                           "3 sampled points, 5 chain depths, r = 8 l(I_{d+1})"));
  out.push_back(make_check("flatness_trend_not_increasing", flat, worst_slope, std::log1p(0.2) / 4,
                           "largest least-squares slope of ln ratio per depth"));
  return out;
}

}  // namespace phicascade::cli
