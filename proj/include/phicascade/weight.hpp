#pragma once

// The weight function phi(t) = c * exp(1 / (|t| - 1)) on [-1, 1] and its integrals.
//
// Integrals are evaluated through the substitution u = 1 / (1 - |t|), which turns
// int phi over a subinterval of [0, 1) into c * int_{u1}^{u2} e^{-u} u^{-2} du.
// The factor e^{-u1} u1^{-2} is taken out analytically and the bounded residual
//   R = int_0^{u2-u1} e^{-s} (1 + s/u1)^{-2} ds,  0 < R <= 1,
// is integrated numerically, so the logarithm stays accurate arbitrarily close to +-1.

#include "phicascade/numerics.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

namespace phicascade {

/// Thread-safe memo of ln(phi(I)) keyed by the exact interval.
class PhiCache {
 public:
  std::optional<LogPositive> find(const IntervalD& iv) const;
  void insert(const IntervalD& iv, LogPositive value);
  std::size_t size() const;
  void clear();

  /// Writes a version-tagged JSON-lines file. `quad_rel_tol` is recorded in the header.
  void save(const std::filesystem::path& path, double quad_rel_tol) const;
  /// Loads a cache file. A missing, corrupt or mismatched file leaves the cache empty and
  /// returns false; nothing from such a file is kept.
  bool load(const std::filesystem::path& path, double quad_rel_tol);

  static constexpr int kFormatVersion = 1;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<IntervalD, LogPositive> map_;
};

struct PhiConfig {
  LogPositive ln_c;            // normalization constant c
  double quad_rel_tol = 1e-12;
  std::shared_ptr<PhiCache> cache;
};

/// Builds a config: computes c for the tolerance and attaches `cache` (a fresh one if null).
PhiConfig make_phi_config(double quad_rel_tol = 1e-12, std::shared_ptr<PhiCache> cache = nullptr);

/// c with int_{-1}^{1} phi = 1. Requires 1e-15 <= tol <= 1e-6.
LogPositive normalization_constant(double quad_rel_tol);

/// phi(t); exact zero at |t| = 1. Throws std::domain_error for |t| > 1.
LogPositive phi_eval(const DyadicRational& t, const PhiConfig& cfg);
LogPositive phi_eval(double t, const PhiConfig& cfg);

/// ln phi(I) for I within [-1, 1].
LogPositive log_phi_integral(const IntervalD& iv, const PhiConfig& cfg);

/// phi([1 - a, 1]) = phi([-1, -1 + a]) for 0 < a <= 1, with `a` given as a real.
LogPositive phi_edge_mass(Real a, const PhiConfig& cfg);

struct GRatio {
  double C = 1;
  double epsilon = 0;
  Real ln_G = 0;
};

/// G_{C,eps} = phi([-1, -1 + C eps]) / phi([-1, -1 + eps]). Requires C >= 1, eps > 0, C eps <= 1.
GRatio g_ratio(double C, double epsilon, const PhiConfig& cfg);

/// ln(C - D) + (D - 1) / (D eps): the lower bound on ln G_{C,eps} for 1 < D < C.
double g_ratio_lower_bound(double C, double epsilon, double D);

struct ShiftProbe {
  IntervalD interval;
  int direction = +1;  // +1 translates rightwards, -1 leftwards
  double M = 0;
  int N = 0;
  Real ln_hypothesis = 0;            // ln phi(I + l) / phi(I)
  std::vector<Real> ln_conclusions;  // ln phi(I + (n+1) l) / phi(I + n l), n = 1..N
  Real ln_threshold = 0;             // ln(M^{1/8} / 2)
  bool hypothesis_met = false;
  bool implication_holds = false;
};

/// Evaluates the implication  phi(I+l)/phi(I) > M  =>  phi(I+(n+1)l)/phi(I+nl) > M^{1/8}/2
/// for n = 1..N on one interval. Throws std::domain_error when a translate leaves [-1, 1).
ShiftProbe shift_ratio_probe(const IntervalD& iv, double M, int N, const PhiConfig& cfg, int direction = +1);

struct ShiftThreshold {
  double M = 0;
  int N = 0;
  int max_exponent = 0;
  /// Largest tested length 2^-j such that every tested interval of length 2^-j' <= 2^-j
  /// satisfied the implication; nullopt if even the finest tested length failed.
  std::optional<std::int64_t> threshold_exponent;
  std::vector<std::int64_t> failing_exponents;
};

/// Empirical counterpart of l_{N,M}: scans lengths 2^-j, j = 1..max_exponent, and left-aligned
/// intervals on a grid of positions in [-1, 0].
ShiftThreshold empirical_shift_threshold(double M, int N, int max_exponent, const PhiConfig& cfg,
                                         int positions_per_length = 256);

}  // namespace phicascade
