#pragma once

// Doubling-ratio scans, the steered non-doubling point, porosity estimation, and instance
// checkers for the three parts of the mu-lemma (comparability, cover constants, G-ratio bound).

#include "phicascade/cascade.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace phicascade {

/// Resolution settings shared by every mass evaluation.
struct EvalOptions {
  double rel_gap = 1e-8;
  int max_gen = 18;
  int threads = 1;
};

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is processed exactly
/// once; callers write into preallocated slots so results never depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Doubling

struct DoublingScanRow {
  DyadicRational r;
  MassEnclosure mass_r, mass_2r, mass_17r;
  Real ln_ratio2 = 0;   // from enclosure midpoints
  Real ln_ratio17 = 0;
  Real ln_ratio17_lower = 0;  // certified: lower(17r) / upper(r)
  double enclosure_gap = 0;   // largest of the three relative gaps
  bool gap_ok = false;        // enclosure_gap <= 1e-6

  double ln2_r() const;
  /// exp(ln_ratio), or +inf when not representable as a double.
  double ratio2() const;
  double ratio17() const;
};

DoublingScanRow doubling_row(const DyadicRational& x, const DyadicRational& r, const PhiConfig& cfg,
                             const EvalOptions& opt);
std::vector<DoublingScanRow> doubling_scan(const DyadicRational& x, const std::vector<DyadicRational>& scales,
                                           const PhiConfig& cfg, const EvalOptions& opt);

// ---------------------------------------------------------------------------
// Non-doubling point

struct ScheduleEntry {
  int i = 0;
  int k = 0;
  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

struct BandWitness {
  ScheduleEntry entry;
  ConstructionInterval interval;  // the generation-k interval containing x
  DyadicRational distance;        // d(x, boundary of the interval)
  DyadicRational length;          // l(interval)
  bool band_ok = false;           // 2^-i l <= d <= 2^{-i+1} l, checked exactly
};

struct NonDoublingPoint {
  DyadicRational x;
  std::vector<ScheduleEntry> schedule;
  std::vector<BandWitness> witnesses;
};

/// Parses "2,3;3,6;4,9" into schedule entries.
std::vector<ScheduleEntry> parse_schedule(const std::string& text);

/// Throws std::invalid_argument naming the first violated constraint: i >= 2, k >= 0,
/// k strictly increasing, i <= k + 2 (the band must hold a generation-(k+1) interval),
/// k + 1 <= 40.
void validate_schedule(const std::vector<ScheduleEntry>& schedule);

/// Descends the cascade choosing, at generation k_i + 1, the first child lying inside the
/// band [a + 2^-i l, a + 2^{-i+1} l] of the left end a of I_{k_i}; between scheduled
/// generations it follows the child just right of the midpoint. x is the midpoint of the
/// last steered child.
NonDoublingPoint build_nondoubling_point(const std::vector<ScheduleEntry>& schedule, const PhiConfig& cfg);

/// One row of the scheduled-scale scan: r_i = d(x, boundary of I_{k_i}).
struct NonDoublingRow {
  BandWitness witness;
  DoublingScanRow scan;
  DyadicRational lambda_num;     // l(J_i) = 2 r_i
  double lambda = 0;             // l(J_i) / l(I)
  IntervalD J{0, 1};             // B(x, r_i) as a half-open interval
  IntervalD Jstar{0, 1};         // B(x, 17 r_i) intersected with I
  double C_effective = 0;        // l(J*) / l(J); 9 unless J* is clipped by I
  bool bound_applicable = false; // C_effective > 8, so the G-ratio inequality is asserted
  Real ln_G = 0;                 // ln G_{C/8, 4 lambda} when applicable
  bool bound_ok = false;         // certified ratio17 >= G (true when not applicable)
};

std::vector<NonDoublingRow> nondoubling_scan(const NonDoublingPoint& point, const PhiConfig& cfg,
                                             const EvalOptions& opt);

/// Fraction of mu-sampled points (depth `depth`) whose scan over r_k = d(x, boundary of I_k),
/// k = 0..depth-1, shows some ratio17 > threshold.
struct SampledDoublingSummary {
  int points = 0;
  int exceeding = 0;
  double threshold = 0;
  double fraction() const { return points ? static_cast<double>(exceeding) / points : 0.0; }
};
SampledDoublingSummary sampled_doubling_fraction(std::uint64_t seed, int n, int depth, double threshold,
                                                 const PhiConfig& cfg, const EvalOptions& opt);

// ---------------------------------------------------------------------------
// Porosity

struct PorosityResult {
  DyadicRational x;
  DyadicRational r;
  double epsilon = 0;
  DyadicRational delta_exact;  // 0 when no hole was certified
  DyadicRational y;
  MassEnclosure ball;
  MassEnclosure hole;  // cell-sum enclosure of B(y, delta r)
  int grid_gen = 0;

  double delta() const { return delta_exact.to_double(); }
};

/// Tiles B(x, r) by 2^{grid_gen+1} cells of width r 2^-grid_gen and returns the widest window
/// of consecutive cells (leftmost on ties) whose mass upper bound is at most eps times the
/// lower bound of mu(B(x, r)). The window is the ball B(y, delta r) with
/// delta = m 2^{-grid_gen-1}. eps >= 1 returns delta = 1, y = x.
PorosityResult porosity_search(const DyadicRational& x, const DyadicRational& r, double epsilon, int grid_gen,
                               const PhiConfig& cfg, const EvalOptions& opt);

/// Recomputes both masses directly and checks B(y, delta r) within B(x, r) and
/// mu(B(y, delta r)) <= eps mu(B(x, r)) with certified bounds.
bool verify_porosity(const PorosityResult& res, const PhiConfig& cfg, const EvalOptions& opt);

// ---------------------------------------------------------------------------
// mu-lemma checkers

struct ComparabilityReport {
  IntervalD A{0, 1};
  IntervalD B{0, 1};
  double C = 0;        // configured constant
  double lambda = 0;
  Real ln_ratio = 0;   // midpoint ln mu(A)/mu(B)
  Real ln_ratio_lower = 0;
  Real ln_ratio_upper = 0;
  double C_star = 0;   // max(ratio/lambda, lambda/ratio) over the enclosure
  bool verdict = false;
};

/// Part (1). Preconditions: J inside I_k, J contains a generation-(k+1) interval,
/// d(J, boundary of I_k) >= tau l(I_k). Violations throw std::invalid_argument.
ComparabilityReport check_mu_lemma_1(const IntervalD& J, const ConstructionInterval& Ik, double tau,
                                     double C_tau, const PhiConfig& cfg, const EvalOptions& opt);

struct MuLemma2Report {
  IntervalD J{0, 1};
  ConstructionInterval Ik;
  double length_ratio = 0;   // l(J) / l(I_k), required < 1/20
  double C_measured = 0;     // certified upper bound of mu(5J) / mu(J)
  double ln_D_theory = 0;    // ln max{6^25 C^25, C(1/4)^2}
  double ln_D_empirical = 0; // ln(max over the cover / min over the cover)
  std::size_t cover_size = 0;
  bool verdict = false;      // empirical <= theory
};

/// Part (2). Preconditions: J contains a generation-(k+1) interval, 5J inside I_k,
/// l(J)/l(I_k) < 1/20. The l_{3,M} threshold is not enforced.
MuLemma2Report check_mu_lemma_2(const IntervalD& J, const ConstructionInterval& Ik, double C_quarter,
                                const PhiConfig& cfg, const EvalOptions& opt);

struct MuLemma3Report {
  IntervalD J{0, 1};
  IntervalD Jstar{0, 1};
  ConstructionInterval Ik;
  double C = 0;            // l(J*) / l(J)
  double lambda = 0;       // l(J) / l(I_k)
  Real ln_ratio_lower = 0; // certified ln mu(J*)/mu(J) lower bound
  Real ln_ratio = 0;       // midpoint
  Real ln_G = 0;           // ln G_{C/8, 4 lambda}
  bool verdict = false;
};

/// Part (3). Preconditions: J inside J* inside I_k, J contains a generation-(k+1) interval,
/// C = l(J*)/l(J) > 8, and the closure of J meets the boundary of I_k.
MuLemma3Report check_mu_lemma_3(const IntervalD& J, const IntervalD& Jstar, const ConstructionInterval& Ik,
                                const PhiConfig& cfg, const EvalOptions& opt);

/// Generation-(k+1) intervals meeting J (the cover) and contained in J (the packing), given as
/// position ranges [first, end) among the children of I_k.
struct CoverPacking {
  std::int64_t cover_first = 0, cover_end = 0;
  std::int64_t pack_first = 0, pack_end = 0;
  bool packing_empty() const { return pack_end <= pack_first; }
};
CoverPacking cover_and_packing(const IntervalD& J, const ConstructionInterval& Ik);

}  // namespace phicascade
