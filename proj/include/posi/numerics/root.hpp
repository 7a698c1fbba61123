#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "posi/error.hpp"

namespace posi::numerics {

struct Bracket {
    double lo = 0.0;
    double hi = 1.0;
};

inline constexpr double kDefaultInversionTol = 1e-9;
inline constexpr int kMaxBracketExpansions = 1100;

/// Smallest K >= bracket.lo with f(K) >= target, located by bisection to an
/// interval of width <= tol. `f` must be nondecreasing. The upper end of the
/// bracket is doubled until f(hi) >= target.
template <class F>
double invert_monotone(F&& f, double target, Bracket bracket = {},
                       double tol = kDefaultInversionTol) {
    double lo = bracket.lo;
    double hi = std::max(bracket.hi, lo);
    if (!(tol > 0.0)) throw ValidationError("invert_monotone: tol must be positive");
    if (f(lo) >= target) return lo;

    int expansions = 0;
    while (!(f(hi) >= target)) {
        if (++expansions > kMaxBracketExpansions || std::isinf(hi)) {
            throw NonconvergenceError("invert_monotone: target " + std::to_string(target) +
                                      " not bracketed above " + std::to_string(lo));
        }
        lo = hi;
        hi = (hi > 0.0) ? 2.0 * hi : 1.0;
    }
    // Invariant: f(lo) < target <= f(hi).
    while (hi - lo > tol) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (f(mid) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

/// Threshold of a monotone predicate on [lo, hi]: `pred` is false below some
/// point and true above it. Returns a value within tol above the switch.
template <class P>
double bisect_predicate(P&& pred, double lo, double hi, double tol) {
    if (pred(lo)) return lo;
    while (hi - lo > tol) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (pred(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

}  // namespace posi::numerics
