// Acceptance run: one PASS/FAIL line per criterion. Tolerances, seeds and runtime limits are
// fixed here; the process exits non-zero if any criterion fails.

#include "oracle.hpp"
#include "phicascade/blowup.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace phicascade;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; <= 0 means no limit
  std::function<Outcome()> body;
};

const PhiConfig& cfg() {
  static const PhiConfig c = make_phi_config(1e-12);
  return c;
}

DyadicRational dy(const char* s) { return DyadicRational::parse(s); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome normalization() {
  const double c = normalization_constant(1e-12).value();
  const long double ref = oracle::normalization_c();
  const double err = static_cast<double>(std::fabs(c - ref) / ref);
  return {err <= 1e-8, fmt("c = %.16g, oracle = %.16Lg, rel err %.2e (<= 1e-8)", c, ref, err)};
}

Outcome conservation() {
  double worst = 0;
  std::size_t nodes = 0;
  for (const auto& p : sample_mu(MuSampler{2, 8}, 100, cfg())) {
    const auto ch = chain(p.x, 7, cfg());
    for (const auto& node : ch) {
      const auto kids = children(node, cfg());
      std::vector<LogPositive> masses;
      masses.reserve(kids.size());
      for (const auto& k : kids) masses.push_back(k.ln_mass);
      const double d = static_cast<double>(fabsq(log_sum(masses).ln() - node.ln_mass.ln()));
      worst = std::max(worst, d);
      ++nodes;
    }
  }
  return {worst <= 1e-12, fmt("%zu nodes, max |log_sum(children) - parent| = %.2e (<= 1e-12)", nodes, worst)};
}

Outcome oracle_equivalence() {
  const oracle::GridMasses G(5);
  const std::uint64_t n5 = G.count(5);
  const std::int64_t e5 = oracle::GridMasses::length_exponent(5);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> pick(0, n5);
  // Relative rounding allowance for the long double oracle sum.
  const Real oracle_slack = 1e-14Q;
  int tested = 0, outside = 0;
  double worst_gap = 0;
  while (tested < 100) {
    std::uint64_t a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    ++tested;
    const IntervalD J(DyadicRational(-1) + DyadicRational(BigInt(a), e5), DyadicRational(-1) + DyadicRational(BigInt(b), e5));
    const MassEnclosure e = mass_of_interval(J, 1e-8, 18, cfg());
    const Real lr = logq(static_cast<Real>(G.sum(5, a, b)));
    if (e.lower.ln() > lr + oracle_slack || e.upper.ln() < lr - oracle_slack) ++outside;
    worst_gap = std::max(worst_gap, e.gap());
  }
  return {outside == 0 && worst_gap <= 1e-8,
          fmt("%d intervals, %d outside enclosure, max gap %.2e (<= 1e-8)", tested, outside, worst_gap)};
}

Outcome g_ratio_growth() {
  bool monotone = true, above_bound = true;
  int first_large = -1;
  Real prev = -1;
  const double D = 1.5;
  int predicted = -1;
  for (int j = 3; j <= 40; ++j) {
    const double eps = std::ldexp(1.0, -j);
    const Real ln_g = g_ratio(2, eps, cfg()).ln_G;
    if (ln_g < prev) monotone = false;
    prev = ln_g;
    const double bound = g_ratio_lower_bound(2, eps, D);
    if (static_cast<double>(ln_g) < bound) above_bound = false;
    if (first_large < 0 && ln_g > logq(1e15Q)) first_large = j;
    if (predicted < 0 && bound > std::log(1e15)) predicted = j;
  }
  const Real g1 = g_ratio(1, 0.1, cfg()).ln_G;
  const double g2 = std::exp(static_cast<double>(g_ratio(2, 0.1, cfg()).ln_G));
  const Real g3 = g_ratio(2, 0.01, cfg()).ln_G;
  const bool spots = g1 == 0 && std::fabs(g2 / 520.3 - 1) <= 0.01 && g3 > logq(1e15Q);
  const bool early = first_large >= 0 && first_large <= predicted;
  return {monotone && above_bound && early && spots,
          fmt("monotone %d, above ln(C-D)+(D-1)/(D eps) %d, G > 1e15 from j = %d (bound predicts %d), "
              "G_{2,0.1} = %.4f, ln G_{2,0.01} = %.2f",
              monotone, above_bound, first_large, predicted, g2, static_cast<double>(g3))};
}

Outcome nondoubling_exhibit() {
  const EvalOptions opt{1e-8, 18, 1};
  const NonDoublingPoint pt = build_nondoubling_point(parse_schedule("2,3;3,6;4,9;5,12;6,15"), cfg());
  const auto rows = nondoubling_scan(pt, cfg(), opt);
  bool bands = true, bounds = true;
  std::ostringstream detail;
  for (const auto& row : rows) {
    const BandWitness& w = row.witness;
    const DyadicRational d = min(pt.x - w.interval.extent.left(), w.interval.extent.right() - pt.x);
    const DyadicRational l = w.interval.extent.length();
    const bool band = d == w.distance && l.scaled(-w.entry.i) <= d && d <= l.scaled(1 - w.entry.i);
    bands = bands && band;
    // lambda = l(J)/l(I) exactly; G_{9/8, 4 lambda} from phi integrals clamped to [-1, 1].
    const std::int64_t e = length_exponent(w.interval.generation);
    const DyadicRational eps = row.lambda_num.scaled(2 - e);
    auto clamp = [](const DyadicRational& t) { return min(t, DyadicRational(1)); };
    const DyadicRational a(-1);
    const Real ln_G = log_phi_integral(IntervalD(a, clamp(a + (eps * DyadicRational(9)).scaled(-3))), cfg()).ln() -
                      log_phi_integral(IntervalD(a, clamp(a + eps)), cfg()).ln();
    const bool ok = row.scan.ln_ratio17_lower >= ln_G && row.scan.gap_ok;
    bounds = bounds && ok;
    detail << fmt("[i=%d k=%d ln17=%.2f lnG=%.2f] ", w.entry.i, w.entry.k, static_cast<double>(row.scan.ln_ratio17_lower),
                  static_cast<double>(ln_G));
  }
  const bool big = !rows.empty() && rows.back().scan.ln_ratio17_lower > logq(1e3Q);
  return {bands && bounds && big, fmt("bands %d, ratio17 >= G %d, final > 1e3 %d ", bands, bounds, big) + detail.str()};
}

Outcome mu_lemma_instances() {
  const EvalOptions opt{};
  const auto pts = sample_mu(MuSampler{99, 12}, 200, cfg());
  std::mt19937_64 rng(6);
  double max_c_star = 0, min_slack3 = HUGE_VAL;
  int fail1 = 0, fail2 = 0, fail3 = 0, n1 = 0, n2 = 0, n3 = 0;
  for (std::size_t t = 0; t < pts.size(); ++t) {
    const int k = 6 + static_cast<int>(t % 5);
    const ConstructionInterval Ik = locate(pts[t].x, k, cfg());
    const std::int64_t nchild = sibling_count(k + 1);
    const std::int64_t units = nchild * 8;  // unit = h / 8, h the child length
    const std::int64_t ue = length_exponent(k + 1) - 3;
    const DyadicRational left = Ik.extent.left();
    auto at = [&](std::int64_t u) { return left + DyadicRational(BigInt(u), ue); };

    // Part (1): J away from the boundary by l/4, at least two children long.
    while (true) {
      std::uniform_int_distribution<std::int64_t> d(units / 4, units - units / 4);
      std::int64_t a = d(rng), b = d(rng);
      if (a > b) std::swap(a, b);
      if (b - a < 16) continue;
      const ComparabilityReport r = check_mu_lemma_1(IntervalD(at(a), at(b)), Ik, 0.25, 4.0, cfg(), opt);
      max_c_star = std::max(max_c_star, r.C_star);
      if (r.C_star > 4) ++fail1;
      ++n1;
      break;
    }

    // Part (2): l(J)/l(I_k) < 1/20 with 5J inside I_k.
    {
      std::int64_t hi = nchild / 20;
      if (hi * 20 == nchild) --hi;
      const std::int64_t n = std::uniform_int_distribution<std::int64_t>(2, hi)(rng);
      const std::int64_t L = 8 * n;
      const std::int64_t s = std::uniform_int_distribution<std::int64_t>(2 * L, units - 3 * L)(rng);
      const MuLemma2Report r = check_mu_lemma_2(IntervalD(at(s), at(s + L)), Ik, 4.0, cfg(), opt);
      if (!(r.ln_D_empirical <= r.ln_D_theory)) ++fail2;
      ++n2;
    }

    // Part (3): J at an end of I_k, J* nine times as long on the same side.
    {
      const std::int64_t L = std::uniform_int_distribution<std::int64_t>(8, units / 9)(rng);
      IntervalD J(at(0), at(L)), Js(at(0), at(9 * L));
      if (rng() & 1) {
        J = IntervalD(at(units - L), at(units));
        Js = IntervalD(at(units - 9 * L), at(units));
      }
      const MuLemma3Report r = check_mu_lemma_3(J, Js, Ik, cfg(), opt);
      min_slack3 = std::min(min_slack3, static_cast<double>(r.ln_ratio_lower - r.ln_G));
      if (!(r.ln_ratio_lower >= r.ln_G)) ++fail3;
      ++n3;
    }
  }
  return {fail1 + fail2 + fail3 == 0,
          fmt("part1 %d/%d (max C* %.3f <= 4), part2 %d/%d empirical > theory, part3 %d/%d below G (min ln slack %.3f)",
              fail1, n1, max_c_star, fail2, n2, fail3, n3, min_slack3)};
}

Outcome porosity() {
  const EvalOptions opt{};
  const EvalOptions tight{1e-9, 18, 1};
  int hits = 0;
  const auto pts = sample_mu(MuSampler{7, 10}, 100, cfg());
  for (const auto& p : pts) {
    const auto ch = chain(p.x, 8, cfg());
    for (int k = 0; k <= 8; ++k) {
      const DyadicRational r = ch[static_cast<std::size_t>(k + 1)].extent.length().scaled(-1);
      const PorosityResult res = porosity_search(p.x, r, 1e-3, 4, cfg(), opt);
      if (res.delta() >= 0.1 && verify_porosity(res, cfg(), tight)) {
        ++hits;
        break;
      }
    }
  }
  return {hits >= 90, fmt("%d/100 points with a certified delta >= 0.1 at eps = 1e-3 (>= 90)", hits)};
}

Outcome tangent_flatness() {
  const EvalOptions opt{};
  const DyadicRational delta = dy("2^-6");
  double worst = 0;
  int bad_trend = 0, short_rows = 0;
  for (const auto& p : sample_mu(MuSampler{20261015, 16}, 10, cfg())) {
    const FlatnessSeries s = flatness_series(p.x, 5, delta, 257, cfg(), opt);
    if (s.rows.size() != 5) ++short_rows;
    worst = std::max(worst, s.max_ratio);
    if (!s.trend_ok) ++bad_trend;
  }
  const DensityProfile unit = density_profile(dy("3*2^-7"), dy("2^-6"), dy("1"), 1, dy("2^-1"), cfg(), opt);
  const bool normalized = profile_normalization(unit, cfg(), opt) == LogPositive::one();
  const DensityProfile sym = density_profile(DyadicRational(0), dy("2^-8"), dy("1"), 257, delta, cfg(), opt);
  double asym = 0;
  for (std::size_t j = 0; j < sym.points.size(); ++j) {
    const double a = sym.points[j].density, b = sym.points[sym.points.size() - 1 - j].density;
    asym = std::max(asym, std::fabs(a - b) / std::max(1.0, std::max(a, b)));
  }
  return {worst <= 100 && bad_trend == 0 && short_rows == 0 && normalized && asym <= 1e-10,
          fmt("max flatness %.3f (<= 100), increasing trends %d, short series %d, nu(B(0,1)) = 1 %d, "
              "asymmetry %.1e (<= 1e-10)",
              worst, bad_trend, short_rows, normalized, asym)};
}

Outcome preiss_contrast() {
  const EvalOptions opt{};
  const DyadicRational R(9);
  const NonDoublingPoint pt = build_nondoubling_point(parse_schedule("2,3;3,6;4,9;5,12;6,15"), cfg());
  const auto rows = preiss_crosscheck(pt, R, cfg(), opt);
  bool growing = true;
  for (std::size_t j = 1; j < rows.size(); ++j) growing = growing && rows[j].ln_ratio > rows[j - 1].ln_ratio;
  const bool large = !rows.empty() && rows.back().ln_ratio_lower > logq(1e3Q);

  // Generic points: scales eight child lengths wide along the chain, where K is valid.
  double lo = HUGE_VAL, hi = 0;
  std::int64_t max_n = 0;
  for (const auto& p : sample_mu(MuSampler{20261015, 16}, 3, cfg())) {
    const auto ch = chain(p.x, 15, cfg());
    std::vector<DyadicRational> scales;
    for (int d = 0; d <= 14 && scales.size() < 5; ++d) {
      const DyadicRational r = ch[static_cast<std::size_t>(d + 1)].extent.length().scaled(3);
      if (r > DyadicRational(1)) continue;
      const BlowupScale s = blowup_scale(p.x, r, cfg());
      if (!s.valid()) continue;
      max_n = std::max(max_n, s.N);
      scales.push_back(r);
    }
    for (const auto& row : preiss_crosscheck(p.x, R, scales, cfg(), opt)) {
      lo = std::min(lo, row.ratio());
      hi = std::max(hi, row.ratio());
    }
  }
  const bool generic = lo >= 1 && hi <= 100;
  return {growing && large && generic,
          fmt("steered: growing %d, final ratio %.3g (> 1e3); generic: ratio in [%.3f, %.3f] (within [1, 100]), max N %lld",
              growing, rows.empty() ? 0.0 : rows.back().ratio(), lo, hi, static_cast<long long>(max_n))};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "normalization", 1, normalization},
      {2, "mass conservation", 30, conservation},
      {3, "oracle equivalence", 60, oracle_equivalence},
      {4, "G-ratio growth", 0, g_ratio_growth},
      {5, "non-doubling exhibit", 300, nondoubling_exhibit},
      {6, "mu-lemma instances", 0, mu_lemma_instances},
      {7, "porosity", 600, porosity},
      {8, "tangent flatness", 0, tangent_flatness},
      {9, "R-ball contrast", 0, preiss_contrast},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit <= 0 || secs < c.time_limit;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::string limit = c.time_limit > 0 ? fmt(" (limit %.0f s)", c.time_limit) : "";
    std::printf("criterion %d %-22s %s  %.2f s%s  %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs, limit.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
