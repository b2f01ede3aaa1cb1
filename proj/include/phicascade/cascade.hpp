#pragma once

// The measure mu: construction intervals, pull-backs, node masses, certified enclosures
// of mu on arbitrary intervals, and mu-distributed sampling.
//
// Conventions. The root I_0 = [-1, 1) has generation -1. A node of generation g - 1 is
// split into 2^{g+1} children of generation g with length 2^{1 - (g+1)(g+2)/2}. Children
// carry signed ordinals -2^g < ... < -1 < +1 < ... < 2^g from left to right; the child at
// left-to-right position p (0-based) has pull-back [-1 + p 2^-g, -1 + (p+1) 2^-g), so the
// pull-backs of one family tile [-1, 1) in the same order. mu(child) = phi(pull-back) mu(parent).

#include "phicascade/numerics.hpp"
#include "phicascade/weight.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace phicascade {

/// Deepest generation any operation will construct.
inline constexpr int kMaxGeneration = 40;

/// Binary exponent of the length of a generation-g construction interval (g >= -1).
std::int64_t length_exponent(int generation);
/// Number of generation-g siblings in one family: 2^{g+1}.
std::int64_t sibling_count(int generation);

/// Left-to-right position (0-based) of signed ordinal i among generation-g siblings.
std::int64_t ordinal_to_position(std::int64_t ordinal, int generation);
std::int64_t position_to_ordinal(std::int64_t position, int generation);

/// Path (i_1, ..., i_k) with i_m in {+-1, ..., +-2^{m-1}}; the empty path is the root.
class NodeIndex {
 public:
  NodeIndex() = default;
  explicit NodeIndex(std::vector<std::int64_t> path);

  int generation() const { return static_cast<int>(path_.size()) - 1; }
  const std::vector<std::int64_t>& path() const { return path_; }
  bool is_root() const { return path_.empty(); }

  NodeIndex child(std::int64_t ordinal) const;
  NodeIndex parent() const;
  NodeIndex reflected() const;
  bool is_ancestor_of(const NodeIndex& other) const;

  friend bool operator==(const NodeIndex&, const NodeIndex&) = default;
  std::string to_string() const;

 private:
  std::vector<std::int64_t> path_;
};

struct PullBack {
  std::int64_t child_ordinal = 0;
  IntervalD extent;
};

/// Pull-back of the generation-g child with the given signed ordinal.
PullBack pull_back(std::int64_t ordinal, int generation);
/// Pull-back of the run of generation-g siblings at positions [first, end).
IntervalD pull_back_of_run(int generation, std::int64_t first, std::int64_t end);

struct ConstructionInterval {
  NodeIndex index;
  IntervalD extent{DyadicRational(-1), DyadicRational(1)};
  int generation = -1;
  LogPositive ln_mass = LogPositive::one();
};

ConstructionInterval root_interval();
/// Child at a left-to-right position of a node.
ConstructionInterval child_at(const ConstructionInterval& node, std::int64_t position, const PhiConfig& cfg);
/// All 2^{g+2} children of a generation-g node, left to right.
std::vector<ConstructionInterval> children(const ConstructionInterval& node, const PhiConfig& cfg);
/// Extent and mass of an arbitrary node.
ConstructionInterval interval_at(const NodeIndex& index, const PhiConfig& cfg);
/// The generation-g construction interval containing x. Throws std::domain_error outside [-1, 1).
ConstructionInterval locate(const DyadicRational& x, int generation, const PhiConfig& cfg);
/// Intervals I_0, ..., I_g containing x (generations 0..g).
std::vector<ConstructionInterval> chain(const DyadicRational& x, int max_generation, const PhiConfig& cfg);

/// Certified bounds on mu of a set.
struct MassEnclosure {
  LogPositive lower;
  LogPositive upper;
  int generation_reached = -1;
  bool converged = false;  // upper/lower <= 1 + rel_gap

  /// upper/lower - 1 (infinite if lower is zero and upper is not).
  double gap() const;
  /// Geometric midpoint, used wherever a single value is reported.
  LogPositive midpoint() const;
  bool exact() const { return lower == upper; }
};

/// Enclosure of mu(J). J is clipped to [-1, 1). Decomposes J greedily into maximal runs of
/// construction intervals (exact via pull-back integrals) and refines the at most two boundary
/// fragments per generation until each is below rel_gap/4 of the accumulated lower bound or
/// max_gen is reached; unresolved fragments are charged to the upper bound only. Quadrature
/// error is folded in as a relative slack of 2 (g + 2) quad_rel_tol.
MassEnclosure mass_of_interval(const IntervalD& J, double rel_gap, int max_gen, const PhiConfig& cfg);
/// mu(B(x, r)) for the closed ball; mu has no atoms, so this equals mu([x - r, x + r)).
MassEnclosure mass_of_ball(const DyadicRational& x, const DyadicRational& r, double rel_gap, int max_gen,
                           const PhiConfig& cfg);

/// The closed ball [x - r, x + r] as the half-open interval used for mass evaluation.
IntervalD ball_interval(const DyadicRational& x, const DyadicRational& r);

struct MuSampler {
  std::uint64_t rng_seed = 0;
  int max_generation = 0;  // number of levels descended
};

struct SamplePoint {
  DyadicRational x;
  NodeIndex index;
};

/// n points distributed by mu: descends max_generation levels, choosing each child with
/// probability equal to its share of the family mass, and returns the left endpoint of the
/// final interval.
std::vector<SamplePoint> sample_mu(const MuSampler& sampler, int n, const PhiConfig& cfg);

/// Writes one JSON object per node of generation <= max_generation:
/// {"path":[...], "left":{"m":..,"e":..}, "len_exp2":int, "ln_mass":float}.
void export_tree(std::ostream& out, int max_generation, const PhiConfig& cfg);

}  // namespace phicascade
