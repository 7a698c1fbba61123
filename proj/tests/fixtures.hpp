#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "posi/posi.hpp"

namespace fixtures {

using posi::Matrix;
using posi::Vector;

inline Matrix random_matrix(int n, int p, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    Matrix X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = z(gen);
    return X;
}

inline Vector random_vector(int p, std::uint64_t seed) { return random_matrix(p, 1, seed).col(0); }

/// Two unit columns at angles 0 and 2pi/3; x0 is the design image of the
/// direction at angle 4pi/3. K1 equals K4 here.
struct EqualAngleDesign {
    Matrix X;
    Vector x0;
};

inline EqualAngleDesign equal_angle_design() {
    const double pi = std::numbers::pi;
    EqualAngleDesign f;
    f.X.resize(2, 2);
    f.X << 1.0, std::cos(2 * pi / 3), 0.0, std::sin(2 * pi / 3);
    Vector dir(2);
    dir << std::cos(4 * pi / 3), std::sin(4 * pi / 3);
    f.x0 = f.X.transpose() * dir;
    return f;
}

/// Independent estimate of K1 for X = I_p and x0 = (1,...,1): the maximum of
/// |s-bar_M' V| over all nonempty M equals max_k (sum of the k largest |V_j|
/// of one sign) / sqrt(k). Uses its own generator and its own bisection.
inline double all_ones_orthogonal_k1(int p, double alpha, int draws, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::vector<double> c(static_cast<std::size_t>(draws));
    std::vector<double> v(static_cast<std::size_t>(p));
    for (auto& ci : c) {
        double nrm = 0;
        for (auto& x : v) {
            x = z(gen);
            nrm += x * x;
        }
        nrm = std::sqrt(nrm);
        double best = 0;
        for (int sign : {1, -1}) {
            std::vector<double> w(v);
            for (auto& x : w) x *= sign / nrm;
            std::sort(w.begin(), w.end(), std::greater<>());
            double s = 0;
            for (int k = 0; k < p; ++k) {
                s += w[static_cast<std::size_t>(k)];
                best = std::max(best, s / std::sqrt(k + 1.0));
            }
        }
        ci = best;
    }
    // chi_p cdf through the regularized lower gamma function.
    auto F = [p](double t) { return posi::numerics::reg_lower_gamma(p / 2.0, t * t / 2); };
    auto h = [&](double K) {
        double s = 0;
        for (double ci : c) s += F(K / ci);
        return s / draws;
    };
    double lo = 0, hi = 2 * std::sqrt(static_cast<double>(p)) + 5;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) >= 1 - alpha ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace fixtures
