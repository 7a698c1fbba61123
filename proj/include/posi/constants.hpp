#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posi/design.hpp"
#include "posi/error.hpp"
#include "posi/numerics/distributions.hpp"
#include "posi/numerics/rng.hpp"
#include "posi/numerics/root.hpp"
#include "posi/numerics/sphere.hpp"
#include "posi/parallel.hpp"

namespace posi {

enum class ConstantKind { Naive, K1, K2, K3, K4, K5, K6 };
enum class Variant { Lower, Upper, Both };

inline std::string to_string(ConstantKind k) {
    switch (k) {
        case ConstantKind::Naive: return "NAIVE";
        case ConstantKind::K1: return "K1";
        case ConstantKind::K2: return "K2";
        case ConstantKind::K3: return "K3";
        case ConstantKind::K4: return "K4";
        case ConstantKind::K5: return "K5";
        case ConstantKind::K6: return "K6";
    }
    return "?";
}

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::Lower: return "lower";
        case Variant::Upper: return "upper";
        case Variant::Both: return "both";
    }
    return "?";
}

/// Monte Carlo and step-function settings shared by the sphere-sampling constants.
struct McConfig {
    std::int64_t I = 100000;  // sphere samples
    int J = 10000;            // step-function grid size
    std::uint64_t seed = 0;
    Variant variant = Variant::Lower;
    int bootstrap = 50;  // resamples for the stderr estimate; 0 disables it
    double tol = numerics::kDefaultInversionTol;

    void validate() const {
        if (I < 1) throw ValidationError("Monte Carlo sample count I must be >= 1");
        if (J < 2) throw ValidationError("grid size J must be >= 2");
        if (bootstrap < 0) throw ValidationError("bootstrap resample count must be >= 0");
        if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
    }

    /// I = 1e5 up to p = 12, 1e3 beyond.
    static McConfig defaults_for(int p, std::uint64_t seed) {
        McConfig c;
        c.seed = seed;
        c.I = p <= 12 ? 100000 : 1000;
        return c;
    }
};

struct ConstantEstimate {
    ConstantKind kind = ConstantKind::Naive;
    double value = 0.0;                  // lower value when variant is Both
    std::optional<double> value_upper;   // only for Both
    std::optional<double> mc_stderr;     // absent when not applicable
    std::optional<McConfig> config;      // absent for deterministic closed forms
    std::optional<ModelId> model;
    std::vector<std::string> flags;

    bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

namespace detail {

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
}

/// Unit directions with zero columns removed and duplicates (up to sign) merged.
inline Matrix distinct_directions(const Matrix& S) {
    std::vector<Vector> cols;
    for (Eigen::Index k = 0; k < S.cols(); ++k) {
        Vector v = S.col(k);
        if (v.squaredNorm() == 0.0) continue;
        Eigen::Index lead = 0;
        while (lead < v.size() && std::abs(v(lead)) <= 1e-12) ++lead;
        if (lead < v.size() && v(lead) < 0.0) v = -v;
        cols.push_back(std::move(v));
    }
    std::sort(cols.begin(), cols.end(), [](const Vector& a, const Vector& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    });
    std::vector<Vector> unique;
    for (auto& v : cols) {
        if (!unique.empty() && (unique.back() - v).cwiseAbs().maxCoeff() <= 1e-12) continue;
        unique.push_back(std::move(v));
    }
    Matrix out(S.rows(), static_cast<Eigen::Index>(unique.size()));
    for (std::size_t k = 0; k < unique.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = unique[k];
    return out;
}

/// c_i = max_k |S.col(k)' V_i| for i < I, where V_i is drawn from the sphere
/// substream (seed, i). Independent of the thread count.
inline std::vector<double> max_abs_projections(const Matrix& S, std::int64_t I, std::uint64_t seed) {
    std::vector<double> c(static_cast<std::size_t>(I), 0.0);
    if (S.cols() == 0) return c;
    const Eigen::Index d = S.rows();
    const auto m = static_cast<std::int64_t>(S.cols());
    const std::int64_t block = std::clamp<std::int64_t>((std::int64_t{1} << 20) / (m * 8), 16, 2048);
    const std::int64_t blocks = (I + block - 1) / block;
    const Matrix St = S.transpose();
    parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t b) {
        const std::int64_t begin = static_cast<std::int64_t>(b) * block;
        const std::int64_t len = std::min(block, I - begin);
        Matrix V(d, len);
        for (std::int64_t j = 0; j < len; ++j) {
            numerics::RngStream stream(seed, numerics::StreamTag::SphereDraw, static_cast<std::uint64_t>(begin + j));
            numerics::sample_unit_sphere(std::span<double>(V.col(j).data(), static_cast<std::size_t>(d)), stream);
        }
        const Matrix P = St * V;
        for (std::int64_t j = 0; j < len; ++j) c[static_cast<std::size_t>(begin + j)] = P.col(j).cwiseAbs().maxCoeff();
    });
    return c;
}

/// (1/I) sum_i F(K / c_i), with c_i = 0 contributing 1.
struct UnionSampleEquation {
    const std::vector<double>* c;
    const numerics::CdfHandle* F;
    std::size_t zeros = 0;

    double operator()(double K) const {
        const auto& cs = *c;
        const double s = chunked_sum(cs.size(), [&](std::size_t i) {
            return cs[i] > 0.0 ? (*F)(K / cs[i]) : 0.0;
        });
        return (s + static_cast<double>(zeros)) / static_cast<double>(cs.size());
    }
};

inline std::size_t count_zeros(const std::vector<double>& c) {
    return static_cast<std::size_t>(std::count(c.begin(), c.end(), 0.0));
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline constexpr int kBootstrapGrid = 33;
inline constexpr double kBootstrapGridHalfWidth = 8.0;

/// Poisson-bootstrap stderr of the root of (1/I) sum F(K/c_i) = target. Each
/// resample's equation is tabulated on a grid of K around the estimate (eight
/// delta-method standard errors each side) and inverted by interpolation.
inline double union_sample_bootstrap_stderr(const std::vector<double>& c, const numerics::CdfHandle& F,
                                            double target, double K_hat, int B, std::uint64_t seed,
                                            bool* clamped) {
    const auto I = c.size();
    if (B < 2 || I < 2 || !(K_hat > 0.0)) return 0.0;
    auto term = [&](double K, std::size_t i) { return c[i] > 0.0 ? F(K / c[i]) : 1.0; };

    // Delta-method scale: sd of the summands over the slope of their mean.
    const double g_mean = chunked_sum(I, [&](std::size_t i) { return term(K_hat, i); }) / static_cast<double>(I);
    const double g_var = chunked_sum(I, [&](std::size_t i) {
                             const double g = term(K_hat, i) - g_mean;
                             return g * g;
                         }) / static_cast<double>(I - 1);
    const double h = 1e-4 * K_hat;
    const double slope = (chunked_sum(I, [&](std::size_t i) { return term(K_hat + h, i); }) -
                          chunked_sum(I, [&](std::size_t i) { return term(K_hat - h, i); })) /
                         (2.0 * h * static_cast<double>(I));
    if (!(slope > 0.0) || !(g_var > 0.0)) return 0.0;
    const double delta = std::sqrt(g_var / static_cast<double>(I)) / slope;

    std::vector<double> grid(kBootstrapGrid);
    for (int k = 0; k < kBootstrapGrid; ++k) {
        const double z = -kBootstrapGridHalfWidth + 2.0 * kBootstrapGridHalfWidth * k / (kBootstrapGrid - 1);
        grid[static_cast<std::size_t>(k)] = std::max(0.0, K_hat + z * delta);
    }

    const std::size_t G = grid.size();
    const auto Bs = static_cast<std::size_t>(B);
    const std::size_t chunks = (I + kReductionChunk - 1) / kReductionChunk;
    // Per chunk: B x G weighted sums followed by B weight totals.
    std::vector<std::vector<double>> partial(chunks);
    parallel_for(chunks, [&](std::size_t ch) {
        auto& acc = partial[ch];
        acc.assign(Bs * G + Bs, 0.0);
        std::vector<double> g(G);
        std::vector<int> w(Bs);
        const std::size_t begin = ch * kReductionChunk;
        const std::size_t end = std::min(I, begin + kReductionChunk);
        for (std::size_t i = begin; i < end; ++i) {
            numerics::RngStream stream(seed, numerics::StreamTag::Bootstrap, i);
            for (auto& wb : w) wb = stream.poisson1();
            for (std::size_t k = 0; k < G; ++k) g[k] = term(grid[k], i);
            for (std::size_t b = 0; b < Bs; ++b) {
                if (w[b] == 0) continue;
                const double wb = w[b];
                double* row = acc.data() + b * G;
                for (std::size_t k = 0; k < G; ++k) row[k] += wb * g[k];
                acc[Bs * G + b] += wb;
            }
        }
    });
    std::vector<double> total(Bs * G + Bs, 0.0);
    for (const auto& acc : partial) {
        for (std::size_t k = 0; k < total.size(); ++k) total[k] += acc[k];
    }

    std::vector<double> roots;
    roots.reserve(Bs);
    for (std::size_t b = 0; b < Bs; ++b) {
        const double W = total[Bs * G + b];
        if (!(W > 0.0)) continue;
        const double* row = total.data() + b * G;
        std::size_t k = 0;
        while (k < G && row[k] / W < target) ++k;
        double root;
        if (k == 0) {
            root = grid.front();
            if (clamped) *clamped = true;
        } else if (k == G) {
            root = grid.back();
            if (clamped) *clamped = true;
        } else {
            const double f0 = row[k - 1] / W;
            const double f1 = row[k] / W;
            const double t = f1 > f0 ? (target - f0) / (f1 - f0) : 1.0;
            root = grid[k - 1] + t * (grid[k] - grid[k - 1]);
        }
        roots.push_back(root);
    }
    return sample_sd(roots);
}

/// Solves (1/I) sum_i F(K/c_i) = target. K is bounded by the F-quantile since c_i <= 1.
inline double solve_union_sample(const std::vector<double>& c, const numerics::CdfHandle& F, double target,
                                 double tol) {
    UnionSampleEquation eq{&c, &F, count_zeros(c)};
    const double upper = numerics::cdf_quantile(F, target, tol);
    return numerics::invert_monotone(eq, target, {0.0, upper * (1.0 + 1e-12) + tol}, tol);
}

}  // namespace detail

inline ConstantEstimate k_naive(DofParam r, double alpha) {
    detail::check_alpha(alpha);
    ConstantEstimate e;
    e.kind = ConstantKind::Naive;
    e.value = numerics::student_t_quantile(r, 1.0 - alpha / 2.0);
    return e;
}

inline ConstantEstimate k5(int d, DofParam r, double alpha) {
    detail::check_alpha(alpha);
    ConstantEstimate e;
    e.kind = ConstantKind::K5;
    e.value = numerics::cdf_quantile(numerics::CdfHandle::fsharp(d, r), 1.0 - alpha);
    return e;
}

inline constexpr double kRuleOfThumbFactor = 0.866;

/// 0.866 x K5; an asymptotic rule of thumb for large power-set universes.
inline ConstantEstimate k6(int d, DofParam r, double alpha) {
    ConstantEstimate e = k5(d, r, alpha);
    e.kind = ConstantKind::K6;
    e.value *= kRuleOfThumbFactor;
    e.flags.push_back("rule_of_thumb");
    return e;
}

namespace detail {

/// Point m in [0,1] with P(|V_1| > m) = level for V uniform on the d-sphere.
/// Solved in u = 1 - m^2, where the tail is I_u((d-1)/2, 1/2); this keeps full
/// relative precision in the far tail.
inline double beta_half_tail_point(int d, double level) {
    if (level >= 1.0) return 0.0;
    if (!(level > 0.0)) throw PrecisionError("beta tail level underflows to zero");
    const double a = 0.5 * (d - 1);
    auto tail = [a](double u) { return numerics::reg_incomplete_beta(a, 0.5, u); };
    double lo = -745.0, hi = 0.0;  // log u
    if (tail(std::exp(lo)) > level) {
        throw PrecisionError("beta tail level " + std::to_string(level) + " is below the representable range");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (tail(std::exp(mid)) >= level ? hi : lo) = mid;
    }
    const double u = std::exp(hi);
    const double residual = std::abs(tail(u) - level) / level;
    if (residual > 1e-8) {
        throw PrecisionError("beta quantile at tail level " + std::to_string(level) +
                             " lost precision (relative residual " + std::to_string(residual) +
                             "); use K5 or the K6 rule of thumb");
    }
    return std::sqrt(std::max(0.0, 1.0 - u));
}

// Step-function solve for the union-bound constant with multiplicity `mult`
// (c(empty, U) for K4). Returns the root of the lower or upper equation.
inline double k4_solve(int d, const numerics::CdfHandle& F, double target, double mult, int J, bool upper,
                       double tol) {
    // m_j solves mult * (1 - F_Beta(m_j^2)) = j/J; m_j decreases in j.
    std::vector<double> m(static_cast<std::size_t>(J) + 1, 1.0);
    for (int j = 1; j <= J; ++j) {
        const double level = static_cast<double>(j) / (static_cast<double>(J) * mult);
        m[static_cast<std::size_t>(j)] = beta_half_tail_point(d, level);
    }
    auto eq = [&](double K) {
        double s = 0.0;
        if (upper) {
            for (int j = 0; j < J; ++j) {
                const double mj = m[static_cast<std::size_t>(j)];
                s += mj > 0.0 ? F(K / mj) : 1.0;
            }
        } else {
            for (int j = 1; j <= J; ++j) {
                const double mj = m[static_cast<std::size_t>(j)];
                if (mj > 0.0) s += F(K / mj);
            }
        }
        return s / J;
    };
    const double cap = numerics::cdf_quantile(F, target, tol);
    return numerics::invert_monotone(eq, target, {0.0, cap * (1.0 + 1e-12) + tol}, tol);
}

inline ConstantEstimate k4_with_multiplicity(int d, DofParam r, double alpha, double mult, int J, Variant variant,
                                             double tol) {
    check_alpha(alpha);
    if (J < 2) throw ValidationError("grid size J must be >= 2");
    if (!(mult >= 1.0)) throw ValidationError("c(empty, U) must be >= 1");
    ConstantEstimate e;
    e.kind = ConstantKind::K4;
    const auto F = numerics::CdfHandle::fsharp(d, r);
    const double target = 1.0 - alpha;
    if (d == 1) {
        e.value = numerics::cdf_quantile(F, target, tol);
        if (variant == Variant::Both) e.value_upper = e.value;
        return e;
    }
    if (variant == Variant::Lower || variant == Variant::Both) {
        e.value = k4_solve(d, F, target, mult, J, false, tol);
    }
    if (variant == Variant::Upper) {
        e.value = k4_solve(d, F, target, mult, J, true, tol);
    } else if (variant == Variant::Both) {
        e.value_upper = k4_solve(d, F, target, mult, J, true, tol);
    }
    return e;
}

}  // namespace detail

/// Union-bound constant; c_empty = c(empty, U). Deterministic given J.
inline ConstantEstimate k4(int d, DofParam r, double alpha, std::uint64_t c_empty, int J = 10000,
                           Variant variant = Variant::Lower, double tol = numerics::kDefaultInversionTol) {
    if (c_empty < 1) throw ValidationError("c(empty, U) must be >= 1");
    return detail::k4_with_multiplicity(d, r, alpha, static_cast<double>(c_empty), J, variant, tol);
}

inline ConstantEstimate k4(int d, DofParam r, double alpha, const ModelUniverse& U, int J = 10000,
                           Variant variant = Variant::Lower) {
    return k4(d, r, alpha, count_not_subset(ModelId::empty(U.p()), U), J, variant);
}

namespace detail {

inline Matrix sbar_columns(const CanonicalDesign& canon, const ModelUniverse& U, const Vector& x,
                           const std::vector<std::size_t>& which) {
    Matrix S(canon.d, static_cast<Eigen::Index>(which.size()));
    for (std::size_t k = 0; k < which.size(); ++k) {
        S.col(static_cast<Eigen::Index>(k)) = s_vector(canon, x, U[which[k]]).s_bar;
    }
    return S;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

/// K1 from a fixed matrix of unit directions (d x m).
inline ConstantEstimate k1_from_directions(const Matrix& S, int d, DofParam r, double alpha, const McConfig& cfg) {
    ConstantEstimate e;
    e.kind = ConstantKind::K1;
    e.config = cfg;
    const Matrix dirs = distinct_directions(S);
    if (dirs.cols() == 0) {
        e.value = 0.0;
        e.mc_stderr = 0.0;
        if (cfg.variant == Variant::Both) e.value_upper = 0.0;
        return e;
    }
    const auto F = numerics::CdfHandle::fsharp(d, r);
    const double target = 1.0 - alpha;
    const auto c = max_abs_projections(dirs, cfg.I, cfg.seed);
    e.value = solve_union_sample(c, F, target, cfg.tol);
    if (cfg.variant == Variant::Both) e.value_upper = e.value;
    if (cfg.bootstrap > 0) {
        bool clamped = false;
        e.mc_stderr = union_sample_bootstrap_stderr(c, F, target, e.value, cfg.bootstrap, cfg.seed, &clamped);
        if (clamped) e.flags.push_back("bootstrap_grid_clamped");
    }
    return e;
}

}  // namespace detail

/// Monte Carlo K1(x0): the (1 - alpha) quantile of max_M |s-bar_M' (Y - mu)| / sigma-hat.
inline ConstantEstimate k1(const CanonicalDesign& canon, const Vector& x0, const ModelUniverse& U, DofParam r,
                           double alpha, const McConfig& cfg) {
    detail::check_alpha(alpha);
    cfg.validate();
    if (x0.size() != canon.p()) throw ValidationError("x0 length does not match the design");
    if (U.p() != canon.p()) throw ValidationError("universe dimension does not match the design");
    if (x0.isZero(0.0)) {
        ConstantEstimate e;
        e.kind = ConstantKind::K1;
        e.value = 0.0;
        e.mc_stderr = 0.0;
        e.config = cfg;
        if (cfg.variant == Variant::Both) e.value_upper = 0.0;
        return e;
    }
    const Matrix S = detail::sbar_columns(canon, U, x0, detail::all_indices(U.size()));
    return detail::k1_from_directions(S, canon.d, r, alpha, cfg);
}

namespace detail {

/// Ingredients of the partial-union equation for one (sample, weights) pair.
struct PartialUnionInput {
    const std::vector<double>* c_desc;  // c_i sorted decreasingly
    const std::vector<double>* weight_prefix;  // prefix sums of weights in that order; nullptr = unit weights
    double total_weight;
    double mult;  // c(M, U)
};

inline double weighted_tail(const PartialUnionInput& in, double t, std::size_t* count = nullptr) {
    const auto& c = *in.c_desc;
    // number of c_i > t (c sorted decreasingly)
    const auto it = std::partition_point(c.begin(), c.end(), [t](double v) { return v > t; });
    const auto k = static_cast<std::size_t>(it - c.begin());
    if (count) *count = k;
    const double w = in.weight_prefix ? (*in.weight_prefix)[k] : static_cast<double>(k);
    return w / in.total_weight;
}

struct PartialUnionSolution {
    double lower = 0.0;
    double upper = 0.0;
};

/// Partial-union step-function solve given the empirical tail of the submodel
/// maximum and the multiplicity of models outside M.
inline PartialUnionSolution solve_partial_union(const PartialUnionInput& in, const std::vector<double>* weights_desc,
                                                int d, const numerics::CdfHandle& F, double target, int J,
                                                bool want_lower, bool want_upper, double tol) {
    const auto Q = numerics::CdfHandle::beta_half(d);
    auto exceed = [&](double t) { return weighted_tail(in, t) + in.mult * Q.survival(t); };
    // m_*: the criterion is nonincreasing and drops below 1 by t = 1.
    const double m_star = numerics::bisect_predicate([&](double t) { return exceed(t) < 1.0; }, 0.0, 1.0, 1e-13);
    PartialUnionSolution sol;
    const double cap = numerics::cdf_quantile(F, target, tol);
    const numerics::Bracket bracket{0.0, cap * (1.0 + 1e-12) + tol};
    if (m_star >= 1.0 - 1e-12) {
        sol.lower = sol.upper = cap;
        return sol;
    }
    std::size_t tail_count = 0;
    const double tail_mass = weighted_tail(in, m_star, &tail_count);
    const double a = Q.survival(m_star);
    std::vector<double> m(static_cast<std::size_t>(J), 1.0);  // m[0] = 1, m[1..J-1] grid
    for (int j = 1; j < J; ++j) {
        m[static_cast<std::size_t>(j)] = std::max(m_star, beta_half_tail_point(d, a * j / J));
    }
    const auto& c = *in.c_desc;
    auto rhs = [&](double K, bool upper) {
        const int first = upper ? 0 : 1;
        const double steps = static_cast<double>(J - first);
        const double coef = 1.0 - tail_mass - in.mult * a * steps / J;
        double s = coef * F(K / m_star);
        double emp = 0.0;
        for (std::size_t i = 0; i < tail_count; ++i) {
            const double w = weights_desc ? (*weights_desc)[i] : 1.0;
            if (w != 0.0) emp += w * F(K / c[i]);
        }
        s += emp / in.total_weight;
        double grid = 0.0;
        for (int j = first; j < J; ++j) grid += F(K / m[static_cast<std::size_t>(j)]);
        s += in.mult * a / J * grid;
        return s;
    };
    if (want_lower) sol.lower = numerics::invert_monotone([&](double K) { return rhs(K, false); }, target, bracket, tol);
    if (want_upper) sol.upper = numerics::invert_monotone([&](double K) { return rhs(K, true); }, target, bracket, tol);
    return sol;
}

inline bool single_direction(const Matrix& dirs) { return dirs.cols() <= 1; }

}  // namespace detail

/// K3(x0[M], M). `x0_active` holds x0[M] (length |M|).
inline ConstantEstimate k3(const CanonicalDesign& canon, const Vector& x0_active, const ModelId& M,
                           const ModelUniverse& U, DofParam r, double alpha, const McConfig& cfg) {
    detail::check_alpha(alpha);
    cfg.validate();
    if (M.p() != canon.p() || U.p() != canon.p()) throw ValidationError("model dimension does not match the design");
    if (x0_active.size() != M.size()) {
        throw ValidationError("x0[M] has length " + std::to_string(x0_active.size()) + " but |M| = " +
                              std::to_string(M.size()));
    }
    if (!U.contains(M)) throw ValidationError("model " + M.to_string() + " is not in the universe");

    const int p = canon.p();
    Vector x(Vector::Zero(p));
    {
        const auto idx = M.indices();
        for (std::size_t k = 0; k < idx.size(); ++k) x(idx[k]) = x0_active(static_cast<Eigen::Index>(k));
    }
    auto relabel = [&](ConstantEstimate e, const char* flag) {
        e.kind = ConstantKind::K3;
        e.model = M;
        e.config = cfg;
        e.flags.push_back(flag);
        return e;
    };
    if (M.is_full()) return relabel(k1(canon, x, U, r, alpha, cfg), "delegated_k1");
    const std::size_t mult = count_not_subset(M, U);
    if (M.is_empty()) {
        auto e = detail::k4_with_multiplicity(canon.d, r, alpha, static_cast<double>(mult), cfg.J, cfg.variant, cfg.tol);
        e.mc_stderr.reset();
        return relabel(e, "delegated_k4");
    }
    const auto F = numerics::CdfHandle::fsharp(canon.d, r);
    const double target = 1.0 - alpha;
    if (canon.d == 1) {
        ConstantEstimate e;
        e.value = numerics::cdf_quantile(F, target, cfg.tol);
        if (cfg.variant == Variant::Both) e.value_upper = e.value;
        return relabel(e, "rank_one");
    }

    std::vector<std::size_t> sub;
    for (std::size_t k = 0; k < U.size(); ++k) {
        if (U[k].is_subset_of(M)) sub.push_back(k);
    }
    const Matrix dirs = detail::distinct_directions(detail::sbar_columns(canon, U, x, sub));
    if (detail::single_direction(dirs)) {
        // One direction (or none): its |s-bar'V| follows the Beta(1/2,(d-1)/2) law
        // exactly, which merges with the union term.
        const double m = static_cast<double>(mult) + (dirs.cols() == 1 ? 1.0 : 0.0);
        auto e = detail::k4_with_multiplicity(canon.d, r, alpha, m, cfg.J, cfg.variant, cfg.tol);
        return relabel(e, "exact_single_direction");
    }

    auto c = detail::max_abs_projections(dirs, cfg.I, cfg.seed);
    // Sort decreasingly, remembering the draw index for bootstrap weights.
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] > c[b]; });
    std::vector<double> c_desc(c.size());
    for (std::size_t k = 0; k < order.size(); ++k) c_desc[k] = c[order[k]];

    const bool want_lower = cfg.variant != Variant::Upper;
    const bool want_upper = cfg.variant != Variant::Lower;
    detail::PartialUnionInput in{&c_desc, nullptr, static_cast<double>(c.size()), static_cast<double>(mult)};
    const auto sol = detail::solve_partial_union(in, nullptr, canon.d, F, target, cfg.J, want_lower, want_upper, cfg.tol);

    ConstantEstimate e;
    e.value = want_lower ? sol.lower : sol.upper;
    if (cfg.variant == Variant::Both) e.value_upper = sol.upper;

    if (cfg.bootstrap > 1) {
        const int J_boot = std::min(cfg.J, 1000);
        const auto Bs = static_cast<std::size_t>(cfg.bootstrap);
        const std::size_t I = c.size();
        // weights[b][k] for the k-th largest c.
        std::vector<std::vector<double>> weights(Bs, std::vector<double>(I));
        parallel_for((I + kReductionChunk - 1) / kReductionChunk, [&](std::size_t ch) {
            const std::size_t begin = ch * kReductionChunk;
            const std::size_t end = std::min(I, begin + kReductionChunk);
            for (std::size_t k = begin; k < end; ++k) {
                numerics::RngStream stream(cfg.seed, numerics::StreamTag::Bootstrap, order[k]);
                for (std::size_t b = 0; b < Bs; ++b) weights[b][k] = stream.poisson1();
            }
        });
        std::vector<double> roots(Bs, 0.0);
        std::vector<char> ok(Bs, 0);
        parallel_for(Bs, [&](std::size_t b) {
            std::vector<double> prefix(I + 1, 0.0);
            for (std::size_t k = 0; k < I; ++k) prefix[k + 1] = prefix[k] + weights[b][k];
            if (!(prefix[I] > 0.0)) return;
            detail::PartialUnionInput bin{&c_desc, &prefix, prefix[I], static_cast<double>(mult)};
            const auto s = detail::solve_partial_union(bin, &weights[b], canon.d, F, target, J_boot, want_lower,
                                                       !want_lower, cfg.tol);
            roots[b] = want_lower ? s.lower : s.upper;
            ok[b] = 1;
        });
        std::vector<double> good;
        for (std::size_t b = 0; b < Bs; ++b) {
            if (ok[b]) good.push_back(roots[b]);
        }
        e.mc_stderr = detail::sample_sd(good);
    }
    e.kind = ConstantKind::K3;
    e.model = M;
    e.config = cfg;
    return e;
}

/// Settings of the three-step search for K2 (sup of K1 over the unobserved coordinates).
struct K2SearchConfig {
    std::int64_t N1 = 100000;
    std::int64_t I1 = 1000;
    std::int64_t N2 = 1000;
    std::int64_t I2 = 100000;
    std::int64_t I3 = 1000000;
    std::uint64_t seed = 0;
    int bootstrap = 50;
    double tol = numerics::kDefaultInversionTol;

    void validate() const {
        if (N1 < 1 || N2 < 1 || I1 < 1 || I2 < 1 || I3 < 1) throw ValidationError("K2 search counts must be >= 1");
        if (N2 > N1) throw ValidationError("K2 search: N2 must not exceed N1");
    }
};

/// Stochastic lower bound on K2(x0[M], M) by a three-step search over
/// completions x with x[M] = x0[M] and x[M^c] ~ N(0, X[M^c]'X[M^c]/n).
inline ConstantEstimate k2(const CanonicalDesign& canon, const Vector& x0_active, const ModelId& M,
                           const ModelUniverse& U, DofParam r, double alpha, const K2SearchConfig& search) {
    detail::check_alpha(alpha);
    search.validate();
    if (M.p() != canon.p() || U.p() != canon.p()) throw ValidationError("model dimension does not match the design");
    if (x0_active.size() != M.size()) throw ValidationError("x0[M] length differs from |M|");
    if (!U.contains(M)) throw ValidationError("model " + M.to_string() + " is not in the universe");

    const int p = canon.p();
    Vector x_fixed(Vector::Zero(p));
    const auto act = M.indices();
    for (std::size_t k = 0; k < act.size(); ++k) x_fixed(act[k]) = x0_active(static_cast<Eigen::Index>(k));

    auto final_config = [&](std::int64_t I, std::uint64_t seed, int boot) {
        McConfig cfg;
        cfg.I = I;
        cfg.seed = seed;
        cfg.bootstrap = boot;
        cfg.tol = search.tol;
        return cfg;
    };

    ConstantEstimate out;
    if (M.is_full()) {
        out = k1(canon, x_fixed, U, r, alpha, final_config(search.I3, search.seed, search.bootstrap));
        out.kind = ConstantKind::K2;
        out.model = M;
        out.flags.push_back("delegated_k1");
        return out;
    }

    const ModelId Mc = M.complement();
    const auto free_idx = Mc.indices();
    const Matrix Xc = select_columns(canon.Xt, Mc);
    Matrix cov = Xc.transpose() * Xc / static_cast<double>(canon.n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    bool regularized = false;
    Vector lambda = eig.eigenvalues();
    if (lambda.minCoeff() <= 1e-12 * std::max(1.0, lambda.maxCoeff())) {
        regularized = true;
        lambda = lambda.cwiseMax(0.0).array() + 1e-8;
    }
    const Matrix root = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();

    const UniverseGeometry geometry(canon, U);
    const auto F = numerics::CdfHandle::fsharp(canon.d, r);
    const double target = 1.0 - alpha;

    auto candidate = [&](std::int64_t k) {
        numerics::RngStream stream(search.seed, numerics::StreamTag::K2Candidate, static_cast<std::uint64_t>(k));
        Vector z(static_cast<Eigen::Index>(free_idx.size()));
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = stream.normal();
        Vector x = x_fixed;
        const Vector fill = root * z;
        for (std::size_t j = 0; j < free_idx.size(); ++j) x(free_idx[j]) = fill(static_cast<Eigen::Index>(j));
        return x;
    };
    auto score = [&](const Vector& x, std::int64_t I, std::uint64_t seed) {
        const Matrix dirs = detail::distinct_directions(geometry.sbar_matrix(x));
        if (dirs.cols() == 0) return 0.0;
        const auto c = detail::max_abs_projections(dirs, I, seed);
        return detail::solve_union_sample(c, F, target, search.tol);
    };
    const std::uint64_t seed1 = numerics::splitmix64(search.seed ^ 0x1111);
    const std::uint64_t seed2 = numerics::splitmix64(search.seed ^ 0x2222);
    const std::uint64_t seed3 = numerics::splitmix64(search.seed ^ 0x3333);

    std::vector<double> s1(static_cast<std::size_t>(search.N1));
    parallel_for(s1.size(), [&](std::size_t k) {
        s1[k] = score(candidate(static_cast<std::int64_t>(k)), search.I1, seed1);
    });
    std::vector<std::size_t> order(s1.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s1[a] > s1[b]; });
    order.resize(static_cast<std::size_t>(search.N2));

    std::vector<double> s2(order.size());
    parallel_for(order.size(), [&](std::size_t k) {
        s2[k] = score(candidate(static_cast<std::int64_t>(order[k])), search.I2, seed2);
    });
    std::size_t best = 0;
    for (std::size_t k = 1; k < s2.size(); ++k) {
        if (s2[k] > s2[best]) best = k;
    }
    const Vector x_best = candidate(static_cast<std::int64_t>(order[best]));
    const Matrix S = geometry.sbar_matrix(x_best);
    out = detail::k1_from_directions(S, canon.d, r, alpha, final_config(search.I3, seed3, search.bootstrap));
    out.kind = ConstantKind::K2;
    out.model = M;
    out.config.reset();
    out.flags.push_back("stochastic_lower_bound");
    if (regularized) out.flags.push_back("k2_covariance_regularized");
    return out;
}

}  // namespace posi
