#include "phicascade/analysis.hpp"

extern "C" {
#include <quadmath.h>
}

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace phicascade {

namespace {

double exp_or_inf(Real ln) {
  if (ln > 709) return HUGE_VAL;
  return static_cast<double>(expq(ln));
}

Real ratio_ln(LogPositive num, LogPositive den) {
  if (den.is_zero()) return num.is_zero() ? Real(0) : HUGE_VALQ;
  if (num.is_zero()) return -HUGE_VALQ;
  return num.ln() - den.ln();
}

// Exact quotient of two positive dyadic rationals, rounded to double.
double dyadic_ratio(const DyadicRational& a, const DyadicRational& b) {
  return static_cast<double>(a.to_real() / b.to_real());
}

DyadicRational distance_to_boundary(const DyadicRational& x, const IntervalD& iv) {
  return min(x - iv.left(), iv.right() - x);
}

[[noreturn]] void precondition(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": precondition violated: " + what);
}

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        // Report the failure with the smallest index so the error is scheduling-independent.
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Doubling

double DoublingScanRow::ln2_r() const { return static_cast<double>(r.ln() / M_LN2q); }
double DoublingScanRow::ratio2() const { return exp_or_inf(ln_ratio2); }
double DoublingScanRow::ratio17() const { return exp_or_inf(ln_ratio17); }

DoublingScanRow doubling_row(const DyadicRational& x, const DyadicRational& r, const PhiConfig& cfg,
                             const EvalOptions& opt) {
  DoublingScanRow row;
  row.r = r;
  row.mass_r = mass_of_ball(x, r, opt.rel_gap, opt.max_gen, cfg);
  row.mass_2r = mass_of_ball(x, r * DyadicRational(2), opt.rel_gap, opt.max_gen, cfg);
  row.mass_17r = mass_of_ball(x, r * DyadicRational(17), opt.rel_gap, opt.max_gen, cfg);
  row.ln_ratio2 = ratio_ln(row.mass_2r.midpoint(), row.mass_r.midpoint());
  row.ln_ratio17 = ratio_ln(row.mass_17r.midpoint(), row.mass_r.midpoint());
  row.ln_ratio17_lower = ratio_ln(row.mass_17r.lower, row.mass_r.upper);
  row.enclosure_gap = std::max({row.mass_r.gap(), row.mass_2r.gap(), row.mass_17r.gap()});
  row.gap_ok = row.enclosure_gap <= 1e-6;
  return row;
}

std::vector<DoublingScanRow> doubling_scan(const DyadicRational& x, const std::vector<DyadicRational>& scales,
                                           const PhiConfig& cfg, const EvalOptions& opt) {
  if (!IntervalD(-1, 1).contains(x)) throw std::domain_error("doubling_scan: x must lie in [-1, 1)");
  std::vector<DoublingScanRow> rows(scales.size());
  parallel_for(scales.size(), opt.threads, [&](std::size_t j) { rows[j] = doubling_row(x, scales[j], cfg, opt); });
  return rows;
}

// ---------------------------------------------------------------------------
// Non-doubling point

std::vector<ScheduleEntry> parse_schedule(const std::string& text) {
  std::vector<ScheduleEntry> out;
  std::stringstream entries(text);
  std::string item;
  while (std::getline(entries, item, ';')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("schedule entry '" + item + "' is not 'i,k'");
    try {
      std::size_t used_i = 0, used_k = 0;
      const std::string si = item.substr(0, comma), sk = item.substr(comma + 1);
      ScheduleEntry e{std::stoi(si, &used_i), std::stoi(sk, &used_k)};
      if (used_i != si.size() || used_k != sk.size()) throw std::invalid_argument("trailing characters");
      out.push_back(e);
    } catch (const std::exception&) {
      throw std::invalid_argument("schedule entry '" + item + "' is not 'i,k' with integers");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty schedule");
  return out;
}

void validate_schedule(const std::vector<ScheduleEntry>& schedule) {
  if (schedule.empty()) throw std::invalid_argument("schedule is empty");
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    const auto& e = schedule[n];
    std::ostringstream where;
    where << "schedule entry " << n + 1 << " (i=" << e.i << ", k=" << e.k << "): ";
    if (e.i < 2) throw std::invalid_argument(where.str() + "i must be at least 2");
    if (e.k < 0) throw std::invalid_argument(where.str() + "k must be nonnegative");
    if (n > 0 && e.k <= schedule[n - 1].k) {
      throw std::invalid_argument(where.str() + "k must be strictly larger than in the previous entry");
    }
    if (e.i > e.k + 2) {
      throw std::invalid_argument(where.str() + "the distance band is narrower than a generation-(k+1) interval; need i <= k + 2");
    }
    if (e.k + 1 > 40) throw std::invalid_argument(where.str() + "k + 1 exceeds the supported depth 40");
  }
}

NonDoublingPoint build_nondoubling_point(const std::vector<ScheduleEntry>& schedule, const PhiConfig& cfg) {
  validate_schedule(schedule);
  NonDoublingPoint pt;
  pt.schedule = schedule;
  std::vector<ConstructionInterval> scheduled;  // I_{k_i}, one per entry

  ConstructionInterval node = root_interval();
  std::size_t next = 0;
  const int last_gen = schedule.back().k + 1;
  while (node.generation < last_gen) {
    const int g = node.generation + 1;
    std::int64_t position = sibling_count(g) / 2;
    if (next < schedule.size() && schedule[next].k == node.generation) {
      // Steer into the band of the left end: the first child starting at a + 2^-i l.
      scheduled.push_back(node);
      position = std::int64_t{1} << (node.generation + 2 - schedule[next].i);
      ++next;
    }
    node = child_at(node, position, cfg);
  }
  pt.x = node.extent.midpoint();

  for (std::size_t n = 0; n < schedule.size(); ++n) {
    BandWitness w;
    w.entry = schedule[n];
    w.interval = scheduled[n];
    w.length = w.interval.extent.length();
    w.distance = distance_to_boundary(pt.x, w.interval.extent);
    const DyadicRational lo = w.length.scaled(-w.entry.i);
    const DyadicRational hi = w.length.scaled(-w.entry.i + 1);
    w.band_ok = w.interval.extent.contains(pt.x) && lo <= w.distance && w.distance <= hi;
    pt.witnesses.push_back(std::move(w));
  }
  return pt;
}

std::vector<NonDoublingRow> nondoubling_scan(const NonDoublingPoint& point, const PhiConfig& cfg,
                                             const EvalOptions& opt) {
  std::vector<NonDoublingRow> rows(point.witnesses.size());
  parallel_for(rows.size(), opt.threads, [&](std::size_t n) {
    NonDoublingRow row;
    row.witness = point.witnesses[n];
    const IntervalD& I = row.witness.interval.extent;
    const DyadicRational& r = row.witness.distance;
    const DyadicRational& x = point.x;
    row.scan = doubling_row(x, r, cfg, opt);
    row.J = ball_interval(x, r);
    const DyadicRational r17 = r * DyadicRational(17);
    row.Jstar = IntervalD(max(x - r17, I.left()), min(x + r17, I.right()));
    row.lambda_num = r.scaled(1);
    row.lambda = dyadic_ratio(row.lambda_num, row.witness.length);
    row.C_effective = dyadic_ratio(row.Jstar.length(), row.J.length());
    row.bound_applicable = row.C_effective > 8;
    if (row.bound_applicable) {
      const double eps = 4 * row.lambda;
      row.ln_G = g_ratio(row.C_effective / 8, eps, cfg).ln_G;
      row.bound_ok = row.scan.ln_ratio17_lower >= row.ln_G;
    } else {
      row.bound_ok = true;
    }
    rows[n] = std::move(row);
  });
  return rows;
}

SampledDoublingSummary sampled_doubling_fraction(std::uint64_t seed, int n, int depth, double threshold,
                                                 const PhiConfig& cfg, const EvalOptions& opt) {
  const auto points = sample_mu(MuSampler{seed, depth}, n, cfg);
  std::vector<char> hit(points.size(), 0);
  const Real ln_t = logq(static_cast<Real>(threshold));
  EvalOptions inner = opt;
  inner.threads = 1;
  parallel_for(points.size(), opt.threads, [&](std::size_t j) {
    const auto ch = chain(points[j].x, depth - 1, cfg);
    for (const auto& I : ch) {
      const DyadicRational d = distance_to_boundary(points[j].x, I.extent);
      if (d.is_zero()) continue;
      if (doubling_row(points[j].x, d, cfg, inner).ln_ratio17 > ln_t) {
        hit[j] = 1;
        break;
      }
    }
  });
  SampledDoublingSummary s;
  s.points = static_cast<int>(points.size());
  s.exceeding = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
  s.threshold = threshold;
  return s;
}

// ---------------------------------------------------------------------------
// Porosity

PorosityResult porosity_search(const DyadicRational& x, const DyadicRational& r, double epsilon, int grid_gen,
                               const PhiConfig& cfg, const EvalOptions& opt) {
  if (!(epsilon > 0)) throw std::invalid_argument("porosity_search: epsilon must be positive");
  if (grid_gen < 0 || grid_gen > 16) throw std::invalid_argument("porosity_search: grid_gen must lie in [0, 16]");
  if (r.sign() <= 0) throw std::invalid_argument("porosity_search: r must be positive");
  const IntervalD ball = ball_interval(x, r);
  if (ball.right() <= DyadicRational(-1) || ball.left() >= DyadicRational(1)) {
    throw std::invalid_argument("porosity_search: B(x, r) does not meet [-1, 1)");
  }
  PorosityResult res;
  res.x = x;
  res.r = r;
  res.epsilon = epsilon;
  res.grid_gen = grid_gen;
  res.y = x;
  res.ball = mass_of_interval(ball, opt.rel_gap, opt.max_gen, cfg);
  if (epsilon >= 1) {
    res.delta_exact = DyadicRational(1);
    res.hole = res.ball;
    return res;
  }
  if (res.ball.lower.is_zero()) return res;

  const std::int64_t n = std::int64_t{2} << grid_gen;
  const DyadicRational h = r.scaled(-grid_gen);
  std::vector<MassEnclosure> cells(static_cast<std::size_t>(n));
  parallel_for(cells.size(), opt.threads, [&](std::size_t j) {
    const DyadicRational left = ball.left() + h * DyadicRational(static_cast<long long>(j));
    cells[j] = mass_of_interval(IntervalD(left, left + h), opt.rel_gap, opt.max_gen, cfg);
  });

  const LogPositive budget = LogPositive::from_value(epsilon) * res.ball.lower;
  std::int64_t best_m = 0, best_s = 0;
  MassEnclosure best_hole;
  for (std::int64_t s = 0; s < n; ++s) {
    if (n - s <= best_m) break;
    LogPositive upper = LogPositive::zero();
    std::vector<LogPositive> lowers;
    for (std::int64_t m = 1; s + m <= n; ++m) {
      const auto& c = cells[static_cast<std::size_t>(s + m - 1)];
      upper = log_add(upper, c.upper);
      lowers.push_back(c.lower);
      if (upper > budget) break;
      if (m > best_m) {
        best_m = m;
        best_s = s;
        best_hole.upper = upper;
        best_hole.lower = log_sum(lowers);
        best_hole.generation_reached = 0;
        for (std::int64_t t = s; t < s + m; ++t) {
          best_hole.generation_reached =
              std::max(best_hole.generation_reached, cells[static_cast<std::size_t>(t)].generation_reached);
        }
      }
    }
  }
  if (best_m == 0) return res;
  res.delta_exact = DyadicRational(BigInt(best_m), -(grid_gen + 1));
  res.y = ball.left() + h * DyadicRational(best_s) + (h * DyadicRational(best_m)).scaled(-1);
  best_hole.converged = !best_hole.lower.is_zero() && best_hole.gap() <= opt.rel_gap;
  res.hole = best_hole;
  return res;
}

bool verify_porosity(const PorosityResult& res, const PhiConfig& cfg, const EvalOptions& opt) {
  if (res.delta_exact.is_zero()) return true;  // nothing claimed
  const MassEnclosure ball = mass_of_ball(res.x, res.r, opt.rel_gap, opt.max_gen, cfg);
  if (res.epsilon >= 1 && res.delta_exact == DyadicRational(1) && res.y == res.x) return true;
  const DyadicRational rho = res.delta_exact * res.r;
  const bool inside = res.x - res.r <= res.y - rho && res.y + rho <= res.x + res.r;
  const MassEnclosure hole = mass_of_ball(res.y, rho, opt.rel_gap, opt.max_gen, cfg);
  return inside && !(hole.upper > LogPositive::from_value(res.epsilon) * ball.lower);
}

// ---------------------------------------------------------------------------
// mu-lemma checkers

CoverPacking cover_and_packing(const IntervalD& J, const ConstructionInterval& Ik) {
  const int g = Ik.generation + 1;
  const std::int64_t h = length_exponent(g);
  const std::int64_t count = sibling_count(g);
  const DyadicRational& a = Ik.extent.left();
  auto pos = [&](const DyadicRational& y, bool up) {
    const DyadicRational t = (y - a).scaled(-h);
    const BigInt v = up ? t.ceil() : t.floor();
    if (v < 0) return std::int64_t{0};
    if (v > count) return count;
    return static_cast<std::int64_t>(v);
  };
  CoverPacking cp;
  cp.cover_first = pos(J.left(), false);
  cp.cover_end = pos(J.right(), true);
  cp.pack_first = pos(J.left(), true);
  cp.pack_end = pos(J.right(), false);
  return cp;
}

ComparabilityReport check_mu_lemma_1(const IntervalD& J, const ConstructionInterval& Ik, double tau,
                                     double C_tau, const PhiConfig& cfg, const EvalOptions& opt) {
  const std::string op = "check_mu_lemma_1";
  if (!(tau > 0 && tau < 1)) precondition(op, "tau must lie in (0, 1)");
  if (!Ik.extent.contains(J)) precondition(op, "J is not contained in I_k");
  if (cover_and_packing(J, Ik).packing_empty()) precondition(op, "the packing P_J is empty");
  const DyadicRational d = min(J.left() - Ik.extent.left(), Ik.extent.right() - J.right());
  if (d.to_real() < static_cast<Real>(tau) * Ik.extent.length().to_real()) {
    precondition(op, "d(J, boundary of I_k) < tau l(I_k)");
  }
  ComparabilityReport rep;
  rep.A = J;
  rep.B = Ik.extent;
  rep.C = C_tau;
  rep.lambda = dyadic_ratio(J.length(), Ik.extent.length());
  const MassEnclosure m = mass_of_interval(J, opt.rel_gap, opt.max_gen, cfg);
  rep.ln_ratio = ratio_ln(m.midpoint(), Ik.ln_mass);
  rep.ln_ratio_lower = ratio_ln(m.lower, Ik.ln_mass);
  rep.ln_ratio_upper = ratio_ln(m.upper, Ik.ln_mass);
  const Real ln_lambda = logq(static_cast<Real>(rep.lambda));
  rep.C_star = exp_or_inf(std::max(rep.ln_ratio_upper - ln_lambda, ln_lambda - rep.ln_ratio_lower));
  rep.verdict = rep.C_star <= C_tau;
  return rep;
}

MuLemma2Report check_mu_lemma_2(const IntervalD& J, const ConstructionInterval& Ik, double C_quarter,
                                const PhiConfig& cfg, const EvalOptions& opt) {
  const std::string op = "check_mu_lemma_2";
  if (!Ik.extent.contains(J)) precondition(op, "J is not contained in I_k");
  const CoverPacking cp = cover_and_packing(J, Ik);
  if (cp.packing_empty()) precondition(op, "the packing P_J is empty");
  const DyadicRational two_len = J.length().scaled(1);
  const IntervalD fiveJ(J.left() - two_len, J.right() + two_len);
  if (!Ik.extent.contains(fiveJ)) precondition(op, "5J is not contained in I_k");
  MuLemma2Report rep;
  rep.J = J;
  rep.Ik = Ik;
  rep.length_ratio = dyadic_ratio(J.length(), Ik.extent.length());
  if (!(J.length().scaled(2) * DyadicRational(5) < Ik.extent.length())) {
    precondition(op, "l(J)/l(I_k) must be below 1/20");
  }
  const MassEnclosure mj = mass_of_interval(J, opt.rel_gap, opt.max_gen, cfg);
  const MassEnclosure m5 = mass_of_interval(fiveJ, opt.rel_gap, opt.max_gen, cfg);
  const Real ln_C = std::max(Real(0), ratio_ln(m5.upper, mj.lower));
  rep.C_measured = exp_or_inf(ln_C);
  rep.ln_D_theory = static_cast<double>(std::max(25 * (ln_C + logq(Real(6))),
                                                 2 * logq(static_cast<Real>(C_quarter))));
  Real lo = HUGE_VALQ, hi = -HUGE_VALQ;
  const int g = Ik.generation + 1;
  for (std::int64_t p = cp.cover_first; p < cp.cover_end; ++p) {
    const LogPositive m = Ik.ln_mass * log_phi_integral(pull_back_of_run(g, p, p + 1), cfg);
    lo = std::min(lo, m.ln());
    hi = std::max(hi, m.ln());
  }
  rep.cover_size = static_cast<std::size_t>(cp.cover_end - cp.cover_first);
  rep.ln_D_empirical = static_cast<double>(hi - lo);
  rep.verdict = rep.ln_D_empirical <= rep.ln_D_theory;
  return rep;
}

MuLemma3Report check_mu_lemma_3(const IntervalD& J, const IntervalD& Jstar, const ConstructionInterval& Ik,
                                const PhiConfig& cfg, const EvalOptions& opt) {
  const std::string op = "check_mu_lemma_3";
  if (!Jstar.contains(J)) precondition(op, "J is not contained in J*");
  if (!Ik.extent.contains(Jstar)) precondition(op, "J* is not contained in I_k");
  if (cover_and_packing(J, Ik).packing_empty()) precondition(op, "the packing P_J is empty");
  if (!(J.left() == Ik.extent.left() || J.right() == Ik.extent.right())) {
    precondition(op, "the closure of J does not meet the boundary of I_k");
  }
  if (!(Jstar.length() > J.length() * DyadicRational(8))) precondition(op, "l(J*)/l(J) must exceed 8");
  MuLemma3Report rep;
  rep.J = J;
  rep.Jstar = Jstar;
  rep.Ik = Ik;
  rep.C = dyadic_ratio(Jstar.length(), J.length());
  rep.lambda = dyadic_ratio(J.length(), Ik.extent.length());
  const MassEnclosure mj = mass_of_interval(J, opt.rel_gap, opt.max_gen, cfg);
  const MassEnclosure ms = mass_of_interval(Jstar, opt.rel_gap, opt.max_gen, cfg);
  rep.ln_ratio = ratio_ln(ms.midpoint(), mj.midpoint());
  rep.ln_ratio_lower = ratio_ln(ms.lower, mj.upper);
  rep.ln_G = g_ratio(rep.C / 8, 4 * rep.lambda, cfg).ln_G;
  rep.verdict = rep.ln_ratio_lower >= rep.ln_G;
  return rep;
}

}  // namespace phicascade
