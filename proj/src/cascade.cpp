#include "phicascade/cascade.hpp"

#include <nlohmann/json.hpp>

extern "C" {
#include <quadmath.h>
}

#include <algorithm>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace phicascade {

namespace {

void check_generation(int g) {
  if (g < -1 || g > kMaxGeneration) {
    throw std::invalid_argument("generation " + std::to_string(g) + " is out of range [-1, 40]");
  }
}

std::int64_t to_i64(const BigInt& v) {
  if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min()) {
    throw std::overflow_error("position index does not fit in 64 bits");
  }
  return static_cast<std::int64_t>(v);
}

// Grid position of y relative to `left` in cells of width 2^h, rounded down or up.
std::int64_t grid_floor(const DyadicRational& y, const DyadicRational& left, std::int64_t h) {
  return to_i64((y - left).scaled(-h).floor());
}
std::int64_t grid_ceil(const DyadicRational& y, const DyadicRational& left, std::int64_t h) {
  return to_i64((y - left).scaled(-h).ceil());
}

LogPositive scale_by(LogPositive x, Real factor_minus_one) {
  if (x.is_zero()) return x;
  return LogPositive::from_ln(x.ln() + log1pq(factor_minus_one));
}

}  // namespace

std::int64_t length_exponent(int generation) {
  check_generation(generation);
  const std::int64_t g = generation;
  return 1 - (g + 1) * (g + 2) / 2;
}

std::int64_t sibling_count(int generation) {
  check_generation(generation);
  if (generation < 0) return 1;
  return std::int64_t{2} << generation;
}

std::int64_t ordinal_to_position(std::int64_t ordinal, int generation) {
  check_generation(generation);
  if (generation < 0) throw std::invalid_argument("the root has no ordinal");
  const std::int64_t half = std::int64_t{1} << generation;
  if (ordinal == 0 || ordinal < -half || ordinal > half) {
    throw std::invalid_argument("ordinal " + std::to_string(ordinal) + " is not in [2^" + std::to_string(generation) +
                                "]");
  }
  return ordinal < 0 ? ordinal + half : ordinal + half - 1;
}

std::int64_t position_to_ordinal(std::int64_t position, int generation) {
  check_generation(generation);
  if (generation < 0) throw std::invalid_argument("the root has no ordinal");
  const std::int64_t half = std::int64_t{1} << generation;
  if (position < 0 || position >= 2 * half) {
    throw std::invalid_argument("position " + std::to_string(position) + " out of range");
  }
  return position < half ? position - half : position - half + 1;
}

// ---------------------------------------------------------------------------
// NodeIndex

NodeIndex::NodeIndex(std::vector<std::int64_t> path) : path_(std::move(path)) {
  for (std::size_t m = 0; m < path_.size(); ++m) {
    ordinal_to_position(path_[m], static_cast<int>(m));  // validates
  }
}

NodeIndex NodeIndex::child(std::int64_t ordinal) const {
  ordinal_to_position(ordinal, generation() + 1);
  NodeIndex out = *this;
  out.path_.push_back(ordinal);
  return out;
}

NodeIndex NodeIndex::parent() const {
  if (is_root()) throw std::logic_error("the root has no parent");
  NodeIndex out = *this;
  out.path_.pop_back();
  return out;
}

NodeIndex NodeIndex::reflected() const {
  NodeIndex out = *this;
  for (auto& i : out.path_) i = -i;
  return out;
}

bool NodeIndex::is_ancestor_of(const NodeIndex& other) const {
  return path_.size() < other.path_.size() && std::equal(path_.begin(), path_.end(), other.path_.begin());
}

std::string NodeIndex::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t m = 0; m < path_.size(); ++m) os << (m ? "," : "") << path_[m];
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Geometry

IntervalD pull_back_of_run(int generation, std::int64_t first, std::int64_t end) {
  if (generation < 0) throw std::invalid_argument("pull-backs start at generation 0");
  if (first < 0 || end <= first || end > sibling_count(generation)) {
    throw std::invalid_argument("pull_back_of_run: bad position range");
  }
  const DyadicRational minus_one(-1);
  return {minus_one + DyadicRational(BigInt(first), -generation),
          minus_one + DyadicRational(BigInt(end), -generation)};
}

PullBack pull_back(std::int64_t ordinal, int generation) {
  const std::int64_t p = ordinal_to_position(ordinal, generation);
  return {ordinal, pull_back_of_run(generation, p, p + 1)};
}

ConstructionInterval root_interval() { return {}; }

ConstructionInterval child_at(const ConstructionInterval& node, std::int64_t position, const PhiConfig& cfg) {
  const int g = node.generation + 1;
  const std::int64_t h = length_exponent(g);
  ConstructionInterval c;
  c.generation = g;
  c.index = node.index.child(position_to_ordinal(position, g));
  const DyadicRational left = node.extent.left() + DyadicRational(BigInt(position), h);
  c.extent = IntervalD(left, left + DyadicRational::pow2(h));
  c.ln_mass = node.ln_mass * log_phi_integral(pull_back_of_run(g, position, position + 1), cfg);
  return c;
}

std::vector<ConstructionInterval> children(const ConstructionInterval& node, const PhiConfig& cfg) {
  const std::int64_t n = sibling_count(node.generation + 1);
  std::vector<ConstructionInterval> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t p = 0; p < n; ++p) out.push_back(child_at(node, p, cfg));
  return out;
}

ConstructionInterval interval_at(const NodeIndex& index, const PhiConfig& cfg) {
  ConstructionInterval node = root_interval();
  for (std::size_t m = 0; m < index.path().size(); ++m) {
    node = child_at(node, ordinal_to_position(index.path()[m], static_cast<int>(m)), cfg);
  }
  return node;
}

ConstructionInterval locate(const DyadicRational& x, int generation, const PhiConfig& cfg) {
  check_generation(generation);
  ConstructionInterval node = root_interval();
  if (!node.extent.contains(x)) throw std::domain_error("locate: " + x.to_string() + " is outside [-1, 1)");
  while (node.generation < generation) {
    const std::int64_t h = length_exponent(node.generation + 1);
    node = child_at(node, grid_floor(x, node.extent.left(), h), cfg);
  }
  return node;
}

std::vector<ConstructionInterval> chain(const DyadicRational& x, int max_generation, const PhiConfig& cfg) {
  check_generation(max_generation);
  ConstructionInterval node = root_interval();
  if (!node.extent.contains(x)) throw std::domain_error("chain: " + x.to_string() + " is outside [-1, 1)");
  std::vector<ConstructionInterval> out;
  while (node.generation < max_generation) {
    const std::int64_t h = length_exponent(node.generation + 1);
    node = child_at(node, grid_floor(x, node.extent.left(), h), cfg);
    out.push_back(node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enclosures

double MassEnclosure::gap() const {
  if (lower.is_zero()) return upper.is_zero() ? 0.0 : HUGE_VAL;
  return static_cast<double>(expm1q(upper.ln() - lower.ln()));
}

LogPositive MassEnclosure::midpoint() const {
  if (lower.is_zero()) return upper.is_zero() ? upper : LogPositive::zero();
  return LogPositive::from_ln((lower.ln() + upper.ln()) / 2);
}

IntervalD ball_interval(const DyadicRational& x, const DyadicRational& r) {
  if (r.sign() <= 0) throw std::invalid_argument("ball radius must be positive");
  return {x - r, x + r};
}

MassEnclosure mass_of_interval(const IntervalD& J, double rel_gap, int max_gen, const PhiConfig& cfg) {
  if (!(rel_gap > 0)) throw std::invalid_argument("rel_gap must be positive");
  check_generation(max_gen);
  const ConstructionInterval root = root_interval();
  const DyadicRational p0 = max(J.left(), root.extent.left());
  const DyadicRational q0 = min(J.right(), root.extent.right());

  MassEnclosure enc;
  if (p0 >= q0) {
    enc.converged = true;
    return enc;
  }
  if (p0 == root.extent.left() && q0 == root.extent.right()) {
    enc.lower = enc.upper = LogPositive::one();
    enc.converged = true;
    return enc;
  }

  struct Fragment {
    ConstructionInterval node;
    DyadicRational p, q;  // strictly inside node.extent as a proper subinterval
  };
  std::vector<LogPositive> exact;
  std::vector<LogPositive> unresolved;
  std::vector<Fragment> frontier{{root, p0, q0}};
  const Real quarter_gap = static_cast<Real>(rel_gap) / 4;

  while (!frontier.empty()) {
    std::vector<Fragment> next;
    for (const Fragment& f : frontier) {
      const int g = f.node.generation + 1;
      if (g > max_gen) {
        unresolved.push_back(f.node.ln_mass);
        continue;
      }
      enc.generation_reached = std::max(enc.generation_reached, g);
      const std::int64_t h = length_exponent(g);
      const DyadicRational& a = f.node.extent.left();
      const std::int64_t lo = grid_ceil(f.p, a, h);
      const std::int64_t hi = grid_floor(f.q, a, h);
      if (lo < hi) {
        exact.push_back(f.node.ln_mass * log_phi_integral(pull_back_of_run(g, lo, hi), cfg));
      }
      if (lo > hi) {
        // Fragment inside a single child.
        next.push_back({child_at(f.node, hi, cfg), f.p, f.q});
        continue;
      }
      const DyadicRational lo_edge = a + DyadicRational(BigInt(lo), h);
      const DyadicRational hi_edge = a + DyadicRational(BigInt(hi), h);
      if (f.p < lo_edge) next.push_back({child_at(f.node, lo - 1, cfg), f.p, lo_edge});
      if (hi_edge < f.q) next.push_back({child_at(f.node, hi, cfg), hi_edge, f.q});
    }
    const LogPositive lower = log_sum(exact);
    frontier.clear();
    for (Fragment& f : next) {
      const bool negligible =
          !lower.is_zero() && !f.node.ln_mass.is_zero() && f.node.ln_mass.ln() <= lower.ln() + logq(quarter_gap);
      if (negligible || f.node.ln_mass.is_zero()) {
        unresolved.push_back(f.node.ln_mass);
      } else {
        frontier.push_back(std::move(f));
      }
    }
  }

  const LogPositive lower = log_sum(exact);
  const LogPositive upper = log_add(lower, log_sum(unresolved));
  const Real slack = 2 * static_cast<Real>(enc.generation_reached + 2) * static_cast<Real>(cfg.quad_rel_tol);
  enc.lower = scale_by(lower, -slack);
  enc.upper = scale_by(upper, slack);
  enc.converged = !enc.lower.is_zero() && enc.gap() <= rel_gap;
  return enc;
}

MassEnclosure mass_of_ball(const DyadicRational& x, const DyadicRational& r, double rel_gap, int max_gen,
                           const PhiConfig& cfg) {
  return mass_of_interval(ball_interval(x, r), rel_gap, max_gen, cfg);
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<SamplePoint> sample_mu(const MuSampler& sampler, int n, const PhiConfig& cfg) {
  if (n < 1) throw std::invalid_argument("sample_mu: n must be positive");
  if (sampler.max_generation < 0 || sampler.max_generation > kMaxGeneration) {
    throw std::invalid_argument("sample_mu: max_generation out of range");
  }
  // Only coarse splits are memoized; deep splits are almost never revisited.
  PhiConfig uncached = cfg;
  uncached.cache = nullptr;
  auto phi = [&](const IntervalD& iv, int depth) {
    return log_phi_integral(iv, depth <= 12 ? cfg : uncached);
  };

  std::mt19937_64 rng(sampler.rng_seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  std::vector<SamplePoint> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    ConstructionInterval node = root_interval();
    for (int g = 0; g < sampler.max_generation; ++g) {
      // Choose a child by bisecting its family's pull-back partition of [-1, 1): at every
      // split the left half is taken with probability phi(left) / (phi(left) + phi(right)).
      std::int64_t first = 0;
      std::int64_t end = sibling_count(g);
      int depth = 0;
      while (end - first > 1) {
        const std::int64_t mid = first + (end - first) / 2;
        ++depth;
        const LogPositive left = phi(pull_back_of_run(g, first, mid), depth);
        const LogPositive right = phi(pull_back_of_run(g, mid, end), depth);
        double p_left;
        if (left.is_zero()) {
          p_left = 0;
        } else if (right.is_zero()) {
          p_left = 1;
        } else {
          p_left = 1.0 / (1.0 + static_cast<double>(expq(right.ln() - left.ln())));
        }
        if (uniform() < p_left) {
          end = mid;
        } else {
          first = mid;
        }
      }
      node = child_at(node, first, cfg);
    }
    out.push_back({node.extent.left(), node.index});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

void export_tree(std::ostream& out, int max_generation, const PhiConfig& cfg) {
  if (max_generation < -1 || max_generation > 5) {
    throw std::invalid_argument("export_tree: max_generation must lie in [-1, 5]");
  }
  auto emit = [&](const ConstructionInterval& node) {
    nlohmann::json j;
    j["path"] = node.index.path();
    j["left"] = node.extent.left();
    j["len_exp2"] = length_exponent(node.generation);
    j["ln_mass"] = node.ln_mass.ln_double();
    out << j.dump() << '\n';
  };
  std::vector<ConstructionInterval> stack{root_interval()};
  while (!stack.empty()) {
    ConstructionInterval node = std::move(stack.back());
    stack.pop_back();
    emit(node);
    if (node.generation < max_generation) {
      auto kids = children(node, cfg);
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(std::move(*it));
    }
  }
}

}  // namespace phicascade
