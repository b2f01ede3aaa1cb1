#pragma once

// Finite-scale blow-ups nu_{x,r} = mu(B(x, r))^{-1} T_{x,r#} mu: the scale bookkeeping
// (K, rho, N), the endpoint sets E, grid density profiles, the comparability condition for
// small balls, and the R-ball ratio used as a cross-check against non-doubling.

#include "phicascade/analysis.hpp"

#include <optional>
#include <string>
#include <vector>

namespace phicascade {

struct BlowupScale {
  DyadicRational x;
  DyadicRational r;
  /// Largest k with I_k not inside the closed ball B(x, r); -1 if even I_0 is inside.
  int K_candidate = -1;
  /// K_candidate, present only when B(x, 5r) is also inside I_K.
  std::optional<int> K;
  std::string reason;  // why K is absent; empty otherwise
  ConstructionInterval I_K;
  DyadicRational ell_K;
  double rho = 0;          // l(I_K) / r
  std::int64_t N = 0;      // generation-(K+1) intervals meeting B(x, r)
  std::int64_t packed = 0; // generation-(K+1) intervals inside B(x, r)

  bool valid() const { return K.has_value(); }
};

/// Requires x in [-1, 1) and 0 < r <= 1.
BlowupScale blowup_scale(const DyadicRational& x, const DyadicRational& r, const PhiConfig& cfg);

struct EPointSet {
  BlowupScale scale;
  std::vector<DyadicRational> points;
  std::vector<double> normalized;  // (e - x) / r
};

/// Endpoints of the generation-(K+1) intervals contained in B(x, r). Requires a valid scale.
EPointSet detect_E(const BlowupScale& scale, const PhiConfig& cfg);

struct ProfilePoint {
  DyadicRational z;
  LogPositive nu;        // midpoint ratio of the two enclosures
  LogPositive nu_lower;  // certified
  LogPositive nu_upper;
  double density = 0;    // nu / (2 delta)
  double enclosure_gap = 0;
  bool near_E = false;
  bool degenerate = false;  // an enclosure has a zero lower bound or missed rel_gap
};

struct DensityProfile {
  BlowupScale scale;
  DyadicRational R;
  DyadicRational delta;
  DyadicRational exclusion_radius;
  MassEnclosure denominator;  // mu(B(x, r)), shared by every point
  std::vector<ProfilePoint> points;
  std::vector<double> E_normalized;
};

/// Profile of z -> nu(B(z, delta)) / (2 delta) on m equally spaced z in [-R, R]. The spacing
/// must be dyadic, so m - 1 has to be a power of two (or m == 1). Points within
/// `exclusion_radius` (default 2 delta) of a normalized E point are flagged.
DensityProfile density_profile(const DyadicRational& x, const DyadicRational& r, const DyadicRational& R, int m,
                               const DyadicRational& delta, const PhiConfig& cfg, const EvalOptions& opt,
                               std::optional<DyadicRational> exclusion_radius = std::nullopt);

/// nu(B(0,1)) from a profile's own normalization; exactly one when computed at z = 0, delta = 1.
LogPositive profile_normalization(const DensityProfile& profile, const PhiConfig& cfg, const EvalOptions& opt);

struct FlatnessSummary {
  double max_density = 0;
  double min_density = 0;
  double ratio = 0;  // max / min over the points used; +inf if min is zero
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// Max/min density over points with |z| <= 1 - delta that are neither near E nor degenerate.
FlatnessSummary profile_flatness(const DensityProfile& profile);

/// Flatness along a chain: at each construction depth d, the scale r_d = 2^lead l(I_{d+1}) keeps
/// r_d / l(I_{d+1}) fixed while the chain anchor descends with d.
struct FlatnessSeriesRow {
  int depth = 0;
  DyadicRational r;
  BlowupScale scale;
  FlatnessSummary flatness;
};

struct FlatnessSeries {
  DyadicRational x;
  std::vector<FlatnessSeriesRow> rows;
  double max_ratio = 0;
  /// Least-squares slope of ln(ratio) per row.
  double slope = 0;
  bool strictly_increasing = false;
  /// slope * (rows - 1) <= ln(1 + noise) and the ratios are not strictly increasing.
  bool trend_ok = false;
};

/// Collects `count` rows at the shallowest depths d <= max_depth whose scale has a valid K,
/// skipping the rest. Fewer rows are returned when the chain runs out.
FlatnessSeries flatness_series(const DyadicRational& x, int count, const DyadicRational& delta, int m,
                               const PhiConfig& cfg, const EvalOptions& opt, int lead = 3, int max_depth = 14,
                               double noise = 0.2);

struct Condition64Entry {
  DyadicRational r;
  DyadicRational delta;
  Real ln_ratio = 0;    // ln mu(B(x + r z, delta r)) / mu(B(x, r))
  double c_star = 0;    // max(ratio / delta, delta / ratio)
};

struct Condition64Report {
  DyadicRational z;
  double quantile = 0.5;
  std::vector<Condition64Entry> entries;  // scales outer, deltas inner
  /// Per delta: the smallest c with c_star <= c on at least `quantile` of the scales.
  std::vector<double> c_at_quantile;
  double c_z_estimate = 0;  // max over deltas of c_at_quantile
};

/// Requires |z| < 1 and every delta < 1 - |z|.
Condition64Report check_condition_64(const DyadicRational& x, const std::vector<DyadicRational>& scales,
                                     const DyadicRational& z, const std::vector<DyadicRational>& deltas,
                                     const PhiConfig& cfg, const EvalOptions& opt, double quantile = 0.5);

struct PreissRow {
  DyadicRational r;
  MassEnclosure inner;  // mu(B(x, r))
  MassEnclosure outer;  // mu(B(x, R r))
  Real ln_ratio = 0;
  Real ln_ratio_lower = 0;
  double ratio() const;
};

/// nu_r(B(0, R)) / nu_r(B(0, 1)) = mu(B(x, R r)) / mu(B(x, r)) per scale. Requires R >= 1.
std::vector<PreissRow> preiss_crosscheck(const DyadicRational& x, const DyadicRational& R,
                                         const std::vector<DyadicRational>& scales, const PhiConfig& cfg,
                                         const EvalOptions& opt);
/// The same table along the scheduled scales r_i of a non-doubling point.
std::vector<PreissRow> preiss_crosscheck(const NonDoublingPoint& point, const DyadicRational& R,
                                         const PhiConfig& cfg, const EvalOptions& opt);

}  // namespace phicascade
