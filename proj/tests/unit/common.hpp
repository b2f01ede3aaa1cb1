#pragma once

#include "oracle.hpp"
#include "phicascade/blowup.hpp"

#include <doctest.h>

extern "C" {
#include <quadmath.h>
}

#include <cmath>

namespace test {

using namespace phicascade;

/// One shared configuration: c and the phi cache are computed once per test binary.
inline const PhiConfig& cfg() {
  static const PhiConfig c = make_phi_config(1e-12);
  return c;
}

inline DyadicRational dy(const char* s) { return DyadicRational::parse(s); }

inline double rel_err(Real ln_a, long double b) {
  return std::fabs(static_cast<double>(expq(ln_a) / static_cast<Real>(b) - 1));
}

inline double rel_err_ln(Real ln_a, Real ln_b) { return std::fabs(static_cast<double>(expm1q(ln_a - ln_b))); }

}  // namespace test
