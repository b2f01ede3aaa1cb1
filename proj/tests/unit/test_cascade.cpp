#include "common.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <sstream>

using namespace test;

namespace {

DyadicRational grid_point(int g, std::uint64_t j) {
  return DyadicRational(-1) + DyadicRational(BigInt(j), oracle::GridMasses::length_exponent(g));
}

const oracle::GridMasses& grid5() {
  static const oracle::GridMasses g(5);
  return g;
}

}  // namespace

TEST_SUITE("cascade") {
  TEST_CASE("geometry") {
    CHECK(length_exponent(-1) == 1);
    CHECK(length_exponent(0) == 0);
    CHECK(length_exponent(1) == -2);
    CHECK(length_exponent(12) == 1 - 91);
    CHECK(sibling_count(0) == 2);
    CHECK(sibling_count(3) == 16);
    for (int g = 0; g <= 6; ++g) {
      // 2^{g+1} children of length 2^{length_exponent(g)} tile a generation-(g-1) parent.
      CHECK(length_exponent(g) + (g + 1) == length_exponent(g - 1));
      for (std::int64_t p = 0; p < sibling_count(g); ++p) {
        const std::int64_t i = position_to_ordinal(p, g);
        CHECK(i != 0);
        CHECK(std::abs(i) <= (std::int64_t{1} << g));
        CHECK(ordinal_to_position(i, g) == p);
      }
    }
    CHECK_THROWS_AS(ordinal_to_position(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(ordinal_to_position(5, 2), std::invalid_argument);
  }

  TEST_CASE("pull-backs follow the ordinal formula") {
    for (int k = 0; k <= 6; ++k) {
      const std::int64_t half = std::int64_t{1} << k;
      for (std::int64_t i = -half; i <= half; ++i) {
        if (i == 0) continue;
        const PullBack pb = pull_back(i, k);
        const DyadicRational lo = i < 0 ? DyadicRational(BigInt(i), -k) : DyadicRational(BigInt(i - 1), -k);
        CHECK(pb.extent == IntervalD(lo, lo + DyadicRational::pow2(-k)));
        CHECK(pb.child_ordinal == i);
      }
      CHECK(pull_back_of_run(k, 0, sibling_count(k)) == IntervalD(-1, 1));
    }
  }

  TEST_CASE("node index") {
    const NodeIndex n({1, -2, 3});
    CHECK(n.generation() == 2);
    CHECK(n.to_string() == "(1,-2,3)");
    CHECK(n.parent() == NodeIndex({1, -2}));
    CHECK(n.reflected() == NodeIndex({-1, 2, -3}));
    CHECK(NodeIndex({1}).is_ancestor_of(n));
    CHECK_FALSE(n.is_ancestor_of(NodeIndex({1})));
    CHECK(NodeIndex().generation() == -1);
    CHECK_THROWS(NodeIndex({2}));
    CHECK_THROWS(NodeIndex({1, 0}));
    CHECK_THROWS(NodeIndex({1, 3}));
  }

  TEST_CASE("children of the root and of [0, 1)") {
    const auto root_kids = children(root_interval(), cfg());
    REQUIRE(root_kids.size() == 2);
    CHECK(root_kids[0].extent == IntervalD(-1, 0));
    CHECK(root_kids[1].extent == IntervalD(0, 1));
    for (const auto& k : root_kids) CHECK(rel_err_ln(k.ln_mass.ln(), logq(0.5Q)) <= 1e-12);

    const auto kids = children(root_kids[1], cfg());
    REQUIRE(kids.size() == 4);
    const double expect[] = {0.031595, 0.218405, 0.218405, 0.031595};
    for (int p = 0; p < 4; ++p) {
      CHECK(kids[p].extent.length() == dy("2^-2"));
      CHECK(kids[p].ln_mass.value() == doctest::Approx(expect[p]).epsilon(1e-5));
      CHECK(rel_err(kids[p].ln_mass.ln(), grid5().mass(1, 4 + p)) <= 1e-12);
      CHECK(kids[p].generation == 1);
    }
  }

  TEST_CASE("tiling, conservation and determinism along sampled chains") {
    for (const auto& p : sample_mu(MuSampler{3, 10}, 10, cfg())) {
      ConstructionInterval node = root_interval();
      for (int g = 0; g < 10; ++g) {
        const auto kids = children(node, cfg());
        REQUIRE(kids.size() == static_cast<std::size_t>(sibling_count(g)));
        std::vector<LogPositive> m;
        DyadicRational edge = node.extent.left();
        for (const auto& k : kids) {
          CHECK(k.extent.left() == edge);
          edge = k.extent.right();
          m.push_back(k.ln_mass);
          CHECK(k.index.parent() == node.index);
        }
        CHECK(edge == node.extent.right());
        CHECK(rel_err_ln(log_sum(m).ln(), node.ln_mass.ln()) <= 1e-12);
        node = kids[static_cast<std::size_t>(ordinal_to_position(p.index.path()[static_cast<std::size_t>(g)], g))];
        CHECK(interval_at(node.index, cfg()).ln_mass == node.ln_mass);
      }
    }
  }

  TEST_CASE("reflection symmetry") {
    for (const auto& p : sample_mu(MuSampler{4, 12}, 30, cfg())) {
      const ConstructionInterval a = interval_at(p.index, cfg());
      const ConstructionInterval b = interval_at(p.index.reflected(), cfg());
      CHECK(b.extent == a.extent.reflected());
      CHECK(rel_err_ln(a.ln_mass.ln(), b.ln_mass.ln()) <= 1e-12);
    }
  }

  TEST_CASE("locate") {
    CHECK(locate(DyadicRational(0), 0, cfg()).extent == IntervalD(0, 1));
    CHECK_THROWS_AS(locate(DyadicRational(1), 0, cfg()), std::domain_error);
    const DyadicRational x = dy("-12345*2^-17");
    for (int g = 0; g < 12; ++g) {
      const auto a = locate(x, g, cfg()), b = locate(x, g + 1, cfg());
      CHECK(a.index.is_ancestor_of(b.index));
      CHECK(a.extent.contains(b.extent));
      CHECK(b.extent.contains(x));
    }
    // The leftmost chain: the product of the leftmost pull-back integrals.
    long double ln_ref = 0;
    Real prev = 1;
    for (int g = 0; g <= 14; ++g) {
      ln_ref += oracle::ln_phi_integral(-1, -1 + std::ldexp(1.0L, -g));
      const Real got = locate(DyadicRational(-1), g, cfg()).ln_mass.ln();
      CHECK(std::fabs(static_cast<double>(got) - static_cast<double>(ln_ref)) <= 1e-11 * std::fabs(static_cast<double>(ln_ref)) + 1e-12);
      CHECK(got < prev);
      prev = got;
    }
    CHECK(static_cast<double>(prev) < -(1 << 14));
  }

  TEST_CASE("mass of interval examples") {
    const MassEnclosure whole = mass_of_interval(IntervalD(-1, 1), 1e-8, 18, cfg());
    CHECK(whole.exact());
    CHECK(whole.lower.ln() == 0);
    const MassEnclosure wider = mass_of_interval(IntervalD(-4, 7), 1e-8, 18, cfg());
    CHECK(wider.lower.ln() == 0);

    const long double q = grid5().sum(3, grid5().count(3) / 2, grid5().count(3) / 2 + grid5().count(3) / 8);
    const MassEnclosure e = mass_of_interval(IntervalD(dy("0"), dy("2^-2")), 1e-8, 18, cfg());
    CHECK(e.lower.ln() <= static_cast<Real>(std::log(q)) + 1e-13Q);
    CHECK(e.upper.ln() >= static_cast<Real>(std::log(q)) - 1e-13Q);
    CHECK(e.midpoint().value() == doctest::Approx(0.0315955).epsilon(1e-6));

    const MassEnclosure ball = mass_of_ball(DyadicRational(0), dy("2^-2"), 1e-8, 18, cfg());
    CHECK(ball.midpoint().value() == doctest::Approx(2 * static_cast<double>(q)).epsilon(1e-10));
    CHECK(ball.midpoint().value() == doctest::Approx(0.063191).epsilon(1e-5));

    CHECK(mass_of_interval(IntervalD(2, 3), 1e-8, 18, cfg()).upper.is_zero());
  }

  TEST_CASE("enclosures bracket brute-force generation-5 sums") {
    const auto& G = grid5();
    const std::uint64_t n5 = G.count(5);
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::uint64_t> pick(0, n5);
    // Grid-aligned intervals: the generation-5 sum is exact.
    for (int n = 0; n < 40; ++n) {
      std::uint64_t a = pick(rng), b = pick(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      const long double ref = G.sum(5, a, b);
      const MassEnclosure e = mass_of_interval(IntervalD(grid_point(5, a), grid_point(5, b)), 1e-8, 18, cfg());
      const Real lr = logq(static_cast<Real>(ref));
      CHECK(e.lower.ln() <= lr + 1e-14Q);
      CHECK(e.upper.ln() >= lr - 1e-14Q);
      CHECK(e.converged);
      CHECK(e.gap() <= 1e-8);
    }
    // Arbitrary dyadic endpoints: the generation-5 intervals inside J and those meeting J bracket mu(J).
    std::uniform_int_distribution<long long> fine(0, (1LL << 40) - 1);
    for (int n = 0; n < 60; ++n) {
      DyadicRational p = DyadicRational(-1) + DyadicRational(BigInt(fine(rng)), -39);
      DyadicRational q = DyadicRational(-1) + DyadicRational(BigInt(fine(rng)), -39);
      if (p == q) continue;
      if (q < p) std::swap(p, q);
      const auto idx = [&](const DyadicRational& y) {
        return static_cast<std::uint64_t>((y + DyadicRational(1)).scaled(-oracle::GridMasses::length_exponent(5)).floor());
      };
      const std::uint64_t pf = idx(p), qf = idx(q);
      const bool p_on_grid = grid_point(5, pf) == p, q_on_grid = grid_point(5, qf) == q;
      const std::uint64_t in_first = p_on_grid ? pf : pf + 1;
      const long double inner = in_first < qf ? G.sum(5, in_first, qf) : 0.0L;
      const long double outer = G.sum(5, pf, q_on_grid ? qf : qf + 1);
      const MassEnclosure e = mass_of_interval(IntervalD(p, q), 1e-8, 18, cfg());
      if (inner > 0) CHECK(e.upper.ln() >= logq(static_cast<Real>(inner)) - 1e-14Q);
      CHECK(e.lower.ln() <= logq(static_cast<Real>(outer)) + 1e-14Q);
      if (e.converged) CHECK(e.gap() <= 1e-8);
    }
  }

  TEST_CASE("enclosures are monotone under inclusion") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<long long> d(0, (1LL << 36) - 1);
    const double gap = 1e-8;
    for (int n = 0; n < 50; ++n) {
      DyadicRational a = DyadicRational(BigInt(d(rng)), -35) - DyadicRational(1);
      DyadicRational b = DyadicRational(BigInt(d(rng)), -35) - DyadicRational(1);
      if (a == b) continue;
      if (b < a) std::swap(a, b);
      const DyadicRational len = b - a;
      const DyadicRational c = a + len * DyadicRational(BigInt(d(rng) % 1000), -10);
      const DyadicRational e = c + (b - c) * dy("2^-1");
      if (!(c < e)) continue;
      const MassEnclosure inner = mass_of_interval(IntervalD(c, e), gap, 18, cfg());
      const MassEnclosure outer = mass_of_interval(IntervalD(a, b), gap, 18, cfg());
      CHECK(inner.lower <= outer.upper);
      if (!inner.upper.is_zero()) CHECK(inner.upper.ln() <= outer.upper.ln() + log1pq(2 * gap));
    }
  }

  TEST_CASE("sampler") {
    const auto a = sample_mu(MuSampler{42, 12}, 50, cfg());
    const auto b = sample_mu(MuSampler{42, 12}, 50, cfg());
    REQUIRE(a.size() == 50);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j].x == b[j].x);
      CHECK(a[j].index == b[j].index);
      const ConstructionInterval node = interval_at(a[j].index, cfg());
      CHECK(node.extent.contains(a[j].x));
      CHECK(node.extent.left() == a[j].x);
      CHECK(node.generation == 11);
    }
    CHECK(sample_mu(MuSampler{43, 12}, 5, cfg())[0].x != a[0].x);

    const int n = 10000;
    int right = 0;
    for (const auto& p : sample_mu(MuSampler{1, 6}, n, cfg())) right += p.x.sign() >= 0;
    CHECK(std::fabs(right / static_cast<double>(n) - 0.5) <= 3 * std::sqrt(0.25 / n));
    CHECK_THROWS(sample_mu(MuSampler{1, 6}, 0, cfg()));
  }

  TEST_CASE("tree export") {
    std::ostringstream out;
    export_tree(out, 1, cfg());
    std::istringstream in(out.str());
    std::string line;
    std::vector<nlohmann::json> recs;
    while (std::getline(in, line)) recs.push_back(nlohmann::json::parse(line));
    REQUIRE(recs.size() == 1 + 2 + 8);
    CHECK(recs[0]["path"].empty());
    CHECK(recs[0]["len_exp2"] == 1);
    CHECK(recs[1]["path"] == nlohmann::json::array({-1}));
    CHECK(recs[2]["path"] == nlohmann::json::array({-1, -2}));
    CHECK(recs[2]["len_exp2"] == -2);
    CHECK_THROWS(export_tree(out, 6, cfg()));
  }
}
