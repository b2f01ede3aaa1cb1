#include "common.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace test;

namespace {

IntervalD random_interval(std::mt19937_64& rng, const DyadicRational& a, const DyadicRational& b) {
  std::uniform_int_distribution<long long> d(0, (1LL << 30) - 1);
  while (true) {
    const DyadicRational p = a + (b - a) * DyadicRational(BigInt(d(rng)), -30);
    const DyadicRational q = a + (b - a) * DyadicRational(BigInt(d(rng)), -30);
    if (p != q) return p < q ? IntervalD(p, q) : IntervalD(q, p);
  }
}

}  // namespace

TEST_SUITE("weight") {
  TEST_CASE("phi at the edges and centre") {
    CHECK(phi_eval(1.0, cfg()).is_zero());
    CHECK(phi_eval(DyadicRational(-1), cfg()).is_zero());
    CHECK(rel_err(phi_eval(0.0, cfg()).ln(), oracle::phi(0)) <= 1e-12);
    CHECK(rel_err(phi_eval(dy("2^-1"), cfg()).ln(), oracle::phi(0.5L)) <= 1e-12);
    CHECK(phi_eval(0.0, cfg()).value() == doctest::Approx(1.2386888).epsilon(1e-7));
    CHECK(phi_eval(0.5, cfg()).value() == doctest::Approx(0.45569).epsilon(1e-4));
    CHECK_THROWS_AS(phi_eval(1.5, cfg()), std::domain_error);
    CHECK_THROWS_AS(phi_eval(dy("-3*2^-1"), cfg()), std::domain_error);
  }

  TEST_CASE("normalization constant") {
    const LogPositive c = normalization_constant(1e-10);
    CHECK(rel_err(c.ln(), oracle::normalization_c()) <= 1e-10);
    CHECK(c.value() == doctest::Approx(3.36710525).epsilon(1e-8));
    const LogPositive c2 = normalization_constant(5e-11);
    CHECK(rel_err_ln(c.ln(), c2.ln()) < 1e-10);
    CHECK(rel_err(cfg().ln_c.ln(), oracle::normalization_c()) <= 1e-12);
    CHECK_THROWS(normalization_constant(1e-3));
    CHECK_THROWS(normalization_constant(0));
  }

  TEST_CASE("halves and symmetry") {
    const Real half = logq(0.5Q);
    CHECK(rel_err_ln(log_phi_integral(IntervalD(-1, 0), cfg()).ln(), half) <= 1e-12);
    CHECK(rel_err_ln(log_phi_integral(IntervalD(0, 1), cfg()).ln(), half) <= 1e-12);
    CHECK(rel_err_ln(log_phi_integral(IntervalD(-1, 1), cfg()).ln(), 0) <= 1e-12);
  }

  TEST_CASE("integral examples against exponential integrals") {
    CHECK(rel_err(log_phi_integral(IntervalD(dy("0"), dy("2^-1")), cfg()).ln(),
                  std::exp(oracle::ln_phi_integral(0, 0.5L))) <= 1e-12);
    CHECK(std::exp(static_cast<double>(log_phi_integral(IntervalD(dy("0"), dy("2^-1")), cfg()).ln())) ==
          doctest::Approx(0.436809).epsilon(1e-6));
    // [1 - 10^-3, 1): the edge length is not dyadic, so the real-valued edge integral is used.
    const Real a = 1e-3Q;
    const long double ref = oracle::ln_phi_integral(1 - 1e-3L, 1);
    const double got = static_cast<double>(phi_edge_mass(a, cfg()).ln());
    CHECK(got == doctest::Approx(-1012.6).epsilon(1e-4));
    CHECK(std::fabs(got - static_cast<double>(ref)) <= 1e-12 * std::fabs(static_cast<double>(ref)));
    CHECK_THROWS_AS(log_phi_integral(IntervalD(dy("2^-1"), dy("3*2^-1")), cfg()), std::domain_error);
  }

  TEST_CASE("random intervals match the oracle") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 200; ++n) {
      const IntervalD iv = random_interval(rng, DyadicRational(-1), DyadicRational(1));
      // Narrow intervals lose digits to cancellation inside the long double oracle.
      if (iv.length() < DyadicRational::pow2(-8)) continue;
      const long double ref = oracle::ln_phi_integral(iv.left().to_double(), iv.right().to_double());
      const double ln_got = static_cast<double>(log_phi_integral(iv, cfg()).ln());
      // The endpoints are exact doubles, so both sides integrate the same interval.
      CHECK(std::fabs(std::expm1(ln_got - static_cast<double>(ref))) <= 1e-11);
    }
  }

  TEST_CASE("monotone on each half") {
    LogPositive prev = phi_eval(DyadicRational(-1), cfg());
    for (int j = -511; j <= 512; ++j) {
      const LogPositive cur = phi_eval(DyadicRational(BigInt(j), -9), cfg());
      if (j <= 0) CHECK(cur > prev);
      else CHECK(cur < prev);
      prev = cur;
    }
  }

  TEST_CASE("monotone-function sandwich") {
    std::mt19937_64 rng(6);
    for (int n = 0; n < 200; ++n) {
      const IntervalD iv = n % 2 ? random_interval(rng, DyadicRational(0), DyadicRational(1))
                                 : random_interval(rng, DyadicRational(-1), DyadicRational(0));
      const LogPositive fa = phi_eval(iv.left(), cfg()), fb = phi_eval(iv.right(), cfg());
      const LogPositive lo = fa < fb ? fa : fb, hi = fa < fb ? fb : fa;
      const Real ln_len = iv.length().ln();
      const Real v = log_phi_integral(iv, cfg()).ln();
      if (!lo.is_zero()) CHECK(v >= lo.ln() + ln_len - 1e-12Q);
      CHECK(v <= hi.ln() + ln_len + 1e-12Q);
    }
  }

  TEST_CASE("interior bracket for tau in {1/4, 1/2, 3/4}") {
    std::mt19937_64 rng(7);
    for (int q : {1, 2, 3}) {
      const DyadicRational tau(BigInt(q), -2);
      const Real lo = phi_eval(tau, cfg()).ln(), hi = phi_eval(0.0, cfg()).ln();
      for (int n = 0; n < 200; ++n) {
        const IntervalD iv = random_interval(rng, -tau, tau);
        const Real ln_len = iv.length().ln();
        const Real v = log_phi_integral(iv, cfg()).ln();
        CHECK(v >= lo + ln_len - 1e-12Q);
        CHECK(v <= hi + ln_len + 1e-12Q);
      }
    }
  }

  TEST_CASE("additivity over adjacent intervals") {
    std::mt19937_64 rng(8);
    for (int n = 0; n < 200; ++n) {
      const IntervalD whole = random_interval(rng, DyadicRational(-1), DyadicRational(1));
      const IntervalD left = random_interval(rng, whole.left(), whole.right());
      const IntervalD a(whole.left(), left.right());
      const IntervalD b(left.right(), whole.right());
      const LogPositive sum = log_add(log_phi_integral(a, cfg()), log_phi_integral(b, cfg()));
      CHECK(rel_err_ln(sum.ln(), log_phi_integral(whole, cfg()).ln()) <= 10 * cfg().quad_rel_tol);
    }
  }

  TEST_CASE("G ratio spot values") {
    CHECK(g_ratio(1, 0.37, cfg()).ln_G == 0);
    CHECK(g_ratio(1, 1e-9, cfg()).ln_G == 0);
    const double g = std::exp(static_cast<double>(g_ratio(2, 0.1, cfg()).ln_G));
    CHECK(g == doctest::Approx(520.3).epsilon(0.01));
    const long double ref = std::exp(oracle::ln_phi_integral(-1, -0.8L) - oracle::ln_phi_integral(-1, -0.9L));
    CHECK(g == doctest::Approx(static_cast<double>(ref)).epsilon(1e-10));
    const double big = static_cast<double>(g_ratio(2, 0.01, cfg()).ln_G);
    CHECK(big > 15 * std::log(10.0));
    CHECK(big >= g_ratio_lower_bound(2, 0.01, 1.5));
    CHECK(g_ratio_lower_bound(2, 0.01, 1.5) == doctest::Approx(32.64).epsilon(1e-3));
    CHECK_THROWS_AS(g_ratio(2, 0.6, cfg()), std::domain_error);
    CHECK_THROWS_AS(g_ratio(0.5, 0.1, cfg()), std::domain_error);
  }

  TEST_CASE("G ratio dominates the proof's bound and grows as eps shrinks") {
    for (double C : {1.125, 2.0, 4.0}) {
      Real prev = -HUGE_VALQ;
      for (int j = 3; j <= 40; ++j) {
        const double eps = std::ldexp(1.0, -j);
        if (C * eps > 1) continue;
        const Real g = g_ratio(C, eps, cfg()).ln_G;
        CHECK(g >= prev);
        prev = g;
        for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
          const double D = 1 + t * (C - 1);
          CHECK(static_cast<double>(g) >= g_ratio_lower_bound(C, eps, D) - 1e-9 * std::fabs(static_cast<double>(g)));
        }
      }
    }
  }

  TEST_CASE("shift probe") {
    const ShiftProbe flat = shift_ratio_probe(IntervalD(dy("-13*2^-7"), dy("-2^-4")), 10, 2, cfg());
    CHECK_FALSE(flat.hypothesis_met);
    CHECK(flat.implication_holds);
    CHECK(flat.ln_conclusions.size() == 2);

    const IntervalD edge(DyadicRational(-1) + dy("2^-12"), DyadicRational(-1) + dy("2^-11"));
    const ShiftProbe p = shift_ratio_probe(edge, 2, 3, cfg());
    CHECK(p.hypothesis_met);
    CHECK(p.implication_holds);
    for (Real r : p.ln_conclusions) CHECK(r > logq(2.0Q) / 8 - M_LN2q);

    const ShiftProbe q = shift_ratio_probe(edge.reflected(), 2, 3, cfg(), -1);
    CHECK(rel_err_ln(q.ln_hypothesis, p.ln_hypothesis) <= 1e-12);
    for (std::size_t j = 0; j < p.ln_conclusions.size(); ++j) {
      CHECK(rel_err_ln(q.ln_conclusions[j], p.ln_conclusions[j]) <= 1e-12);
    }
    CHECK(q.implication_holds == p.implication_holds);

    CHECK_THROWS_AS(shift_ratio_probe(IntervalD(dy("2^-1"), dy("3*2^-2")), 2, 3, cfg()), std::domain_error);
  }

  TEST_CASE("empirical shift threshold is deterministic") {
    const ShiftThreshold a = empirical_shift_threshold(4, 2, 8, cfg(), 32);
    const ShiftThreshold b = empirical_shift_threshold(4, 2, 8, cfg(), 32);
    CHECK(a.threshold_exponent == b.threshold_exponent);
    CHECK(a.failing_exponents == b.failing_exponents);
  }

  TEST_CASE("cache persistence") {
    const auto dir = std::filesystem::temp_directory_path() / "phicascade_unit_cache";
    std::filesystem::create_directories(dir);
    const auto path = dir / "phi.jsonl";
    auto cache = std::make_shared<PhiCache>();
    const PhiConfig c = make_phi_config(1e-12, cache);
    std::vector<IntervalD> ivs;
    for (int j = 1; j <= 20; ++j) ivs.emplace_back(DyadicRational(-1), DyadicRational(-1) + DyadicRational::pow2(-j));
    std::vector<LogPositive> fresh;
    for (const auto& iv : ivs) fresh.push_back(log_phi_integral(iv, c));
    cache->save(path, 1e-12);

    auto loaded = std::make_shared<PhiCache>();
    REQUIRE(loaded->load(path, 1e-12));
    CHECK(loaded->size() == cache->size());
    for (std::size_t j = 0; j < ivs.size(); ++j) CHECK(*loaded->find(ivs[j]) == fresh[j]);

    auto other = std::make_shared<PhiCache>();
    CHECK_FALSE(other->load(path, 1e-10));
    CHECK(other->size() == 0);

    {
      std::ofstream f(path, std::ios::app);
      f << "{not json\n";
    }
    CHECK_FALSE(other->load(path, 1e-12));
    CHECK(other->size() == 0);
    CHECK_FALSE(other->load(dir / "missing.jsonl", 1e-12));
    std::filesystem::remove_all(dir);
  }
}
