#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "posi/design.hpp"
#include "posi/error.hpp"
#include "posi/numerics/distributions.hpp"
#include "posi/numerics/rng.hpp"

namespace posi {

enum class SelectorKind { GreedyIc, LassoCv, LassoFixed, FixedModel, Custom };

struct SelectorSpec {
    SelectorKind kind = SelectorKind::FixedModel;
    double penalty = 2.0;  // IC penalty: 2 for AIC, ln n for BIC
    bool penalty_is_log_n = false;
    std::vector<int> protected_vars;  // 0-based
    int folds = 10;
    double lambda = 0.0;
    ModelId fixed_model;
    std::function<ModelId(const Matrix&, const Vector&)> custom;
    std::string label;

    static SelectorSpec aic(std::vector<int> prot = {}) {
        SelectorSpec s;
        s.kind = SelectorKind::GreedyIc;
        s.penalty = 2.0;
        s.protected_vars = std::move(prot);
        s.label = "aic";
        return s;
    }
    static SelectorSpec bic(std::vector<int> prot = {}) {
        SelectorSpec s;
        s.kind = SelectorKind::GreedyIc;
        s.penalty_is_log_n = true;
        s.protected_vars = std::move(prot);
        s.label = "bic";
        return s;
    }
    static SelectorSpec lasso_cv(std::vector<int> prot = {}, int folds = 10) {
        SelectorSpec s;
        s.kind = SelectorKind::LassoCv;
        s.protected_vars = std::move(prot);
        s.folds = folds;
        s.label = "lasso-cv";
        return s;
    }
    static SelectorSpec lasso_fixed(double lambda, std::vector<int> prot = {}) {
        SelectorSpec s;
        s.kind = SelectorKind::LassoFixed;
        s.lambda = lambda;
        s.protected_vars = std::move(prot);
        s.label = "lasso-fixed";
        return s;
    }
    static SelectorSpec fixed(const ModelId& M) {
        SelectorSpec s;
        s.kind = SelectorKind::FixedModel;
        s.fixed_model = M;
        s.label = "fixed";
        return s;
    }

    double ic_penalty(int n) const { return penalty_is_log_n ? std::log(static_cast<double>(n)) : penalty; }

    ModelId protected_model(int p) const {
        ModelId P(p);
        for (int j : protected_vars) {
            if (j < 0 || j >= p) throw ValidationError("protected index " + std::to_string(j + 1) + " outside 1.." +
                                                       std::to_string(p));
            P.insert(j);
        }
        return P;
    }

    void validate(int p) const {
        protected_model(p);
        if (kind == SelectorKind::LassoCv && folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
        if (kind == SelectorKind::LassoFixed && !(lambda >= 0.0)) throw ValidationError("lasso lambda must be >= 0");
        if (kind == SelectorKind::FixedModel && fixed_model.p() != p) {
            throw ValidationError("fixed model dimension differs from the design");
        }
        if (kind == SelectorKind::Custom && !custom) throw ValidationError("custom selector has no callback");
    }
};

namespace detail {

inline double rss(const Matrix& X, const Vector& Y, const ModelId& M) {
    if (M.is_empty()) return Y.squaredNorm();
    return (Y - select_columns(X, M) * restricted_ols(X, Y, M)).squaredNorm();
}

}  // namespace detail

/// Backward elimination on n ln(RSS/n) + k|M|, starting from the full model.
/// Among equal improvements the lowest index is dropped; protected variables stay.
inline ModelId select_greedy_ic(const Matrix& X, const Vector& Y, const SelectorSpec& spec) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    if (Y.size() != n) throw ValidationError("selector: Y length differs from the rows of X");
    const ModelId P = spec.protected_model(p);
    const double k = spec.ic_penalty(n);
    // Exact fits would compare logarithms of rounding noise; floor RSS instead.
    const double floor = 1e-24 * std::max(Y.squaredNorm(), std::numeric_limits<double>::min());
    auto ic = [&](const ModelId& M) {
        return n * std::log(std::max(detail::rss(X, Y, M), floor) / n) + k * M.size();
    };
    ModelId M = ModelId::full(p);
    double current = ic(M);
    for (;;) {
        int best_j = -1;
        double best = current;
        for (int j : M.indices()) {
            if (P.contains(j)) continue;
            ModelId cand = M;
            cand.erase(j);
            const double v = ic(cand);
            if (v < best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j < 0) return M;
        M.erase(best_j);
        current = best;
    }
}

struct LassoOptions {
    double gap_tol = 1e-8;      // relative to ||Y||^2 / (2n)
    double kkt_tol = 1e-9;
    long max_sweeps = 100000;
};

/// Cyclic coordinate descent for (1/2n)||Y - X b||^2 + lambda ||b||_1.
/// `warm` is an optional starting point.
inline Vector lasso_cd(const Matrix& X, const Vector& Y, double lambda, const Vector* warm = nullptr,
                       const LassoOptions& opt = {}) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (Y.size() != n) throw ValidationError("lasso: Y length differs from the rows of X");
    if (!(lambda >= 0.0)) throw ValidationError("lasso: lambda must be >= 0");
    const double nn = static_cast<double>(n);
    Vector b = warm && warm->size() == p ? *warm : Vector::Zero(p);
    Vector r = Y - X * b;
    Vector colsq(p);
    for (Eigen::Index j = 0; j < p; ++j) colsq(j) = X.col(j).squaredNorm() / nn;
    const double scale = std::max(Y.squaredNorm() / (2.0 * nn), std::numeric_limits<double>::min());

    auto kkt_residual = [&]() {
        const Vector g = X.transpose() * r / nn;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (colsq(j) == 0.0) continue;
            const double v = b(j) != 0.0 ? std::abs(g(j) - lambda * (b(j) > 0 ? 1.0 : -1.0))
                                         : std::max(0.0, std::abs(g(j)) - lambda);
            worst = std::max(worst, v);
        }
        return std::make_pair(worst, g.cwiseAbs().maxCoeff());
    };
    auto gap = [&](double grad_inf) {
        const double primal = r.squaredNorm() / (2.0 * nn) + lambda * b.lpNorm<1>();
        const double s = grad_inf > 0.0 ? std::min(1.0, lambda / grad_inf) : 1.0;
        const double dual = (Y.squaredNorm() - (Y - s * r).squaredNorm()) / (2.0 * nn);
        return primal - dual;
    };

    double last_gap = std::numeric_limits<double>::infinity();
    for (long sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        for (Eigen::Index j = 0; j < p; ++j) {
            if (colsq(j) == 0.0) continue;
            const double old = b(j);
            const double rho = X.col(j).dot(r) / nn + colsq(j) * old;
            const double mag = std::max(0.0, std::abs(rho) - lambda);
            const double nb = mag > 0.0 ? std::copysign(mag, rho) / colsq(j) : 0.0;
            if (nb != old) {
                r.noalias() -= (nb - old) * X.col(j);
                b(j) = nb;
            }
        }
        const auto [kkt, grad_inf] = kkt_residual();
        last_gap = lambda > 0.0 ? gap(grad_inf) : 0.0;
        if (kkt <= opt.kkt_tol && last_gap <= opt.gap_tol * scale) return b;
    }
    throw NonconvergenceError("lasso: no convergence after " + std::to_string(opt.max_sweeps) +
                              " sweeps (duality gap " + std::to_string(last_gap) + ")");
}

/// Residualized and rescaled design for the LASSO: protected columns projected
/// out of Y and of the other columns, which are then scaled to unit mean square.
struct LassoProblem {
    Matrix Xs;                 // n x |free|
    Vector Ys;
    std::vector<int> free;     // original indices of the Xs columns
    Vector scale;              // Xs.col(k) = X~.col(free[k]) / scale(k)
    ModelId protected_set;

    double lambda_max() const {
        if (Xs.cols() == 0) return 0.0;
        return (Xs.transpose() * Ys).cwiseAbs().maxCoeff() / static_cast<double>(Xs.rows());
    }
};

inline LassoProblem make_lasso_problem(const Matrix& X, const Vector& Y, const ModelId& P) {
    const Eigen::Index n = X.rows();
    LassoProblem lp;
    lp.protected_set = P;
    Matrix Xr = X;
    Vector Yr = Y;
    if (!P.is_empty()) {
        const Matrix Xp = select_columns(X, P);
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Xp);
        Yr = Y - Xp * cod.solve(Y);
        Xr = X - Xp * cod.solve(X);
    }
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (P.contains(static_cast<int>(j))) continue;
        const double ms = Xr.col(j).squaredNorm() / static_cast<double>(n);
        if (ms <= 1e-24 * std::max(1.0, X.col(j).squaredNorm() / static_cast<double>(n))) continue;
        lp.free.push_back(static_cast<int>(j));
    }
    lp.Xs.resize(n, static_cast<Eigen::Index>(lp.free.size()));
    lp.scale.resize(static_cast<Eigen::Index>(lp.free.size()));
    for (std::size_t k = 0; k < lp.free.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double s = std::sqrt(Xr.col(lp.free[k]).squaredNorm() / static_cast<double>(n));
        lp.scale(kk) = s;
        lp.Xs.col(kk) = Xr.col(lp.free[k]) / s;
    }
    lp.Ys = Yr;
    return lp;
}

inline ModelId lasso_model(const LassoProblem& lp, const Vector& b) {
    ModelId M = lp.protected_set;
    for (std::size_t k = 0; k < lp.free.size(); ++k) {
        if (b(static_cast<Eigen::Index>(k)) != 0.0) M.insert(lp.free[k]);
    }
    return M;
}

inline constexpr int kLassoGridSize = 100;
inline constexpr double kLassoGridRatio = 1e-4;

/// Log-spaced grid from lambda_max down to 1e-4 lambda_max.
inline std::vector<double> lasso_lambda_grid(double lambda_max) {
    std::vector<double> grid(kLassoGridSize);
    for (int k = 0; k < kLassoGridSize; ++k) {
        grid[static_cast<std::size_t>(k)] =
            lambda_max * std::pow(kLassoGridRatio, static_cast<double>(k) / (kLassoGridSize - 1));
    }
    return grid;
}

/// K-fold CV choice of lambda (minimum mean squared prediction error; ties go
/// to the larger lambda). Fold labels are a random permutation taken mod K.
inline double lasso_cv_lambda(const LassoProblem& lp, int folds, numerics::RngStream& stream) {
    const Eigen::Index n = lp.Xs.rows();
    const Eigen::Index p = lp.Xs.cols();
    if (folds > n) throw ValidationError("more folds than observations");
    const double lmax = lp.lambda_max();
    if (p == 0 || !(lmax > 0.0)) return lmax;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = static_cast<int>(i % folds);

    const auto grid = lasso_lambda_grid(lmax);
    std::vector<double> err(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Matrix Xtr = lp.Xs(train, Eigen::all);
        const Vector Ytr = lp.Ys(train);
        const Matrix Xte = lp.Xs(test, Eigen::all);
        const Vector Yte = lp.Ys(test);
        Vector b = Vector::Zero(p);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            b = lasso_cd(Xtr, Ytr, grid[k], &b);
            err[k] += (Yte - Xte * b).squaredNorm();
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (err[k] < err[best]) best = k;
    }
    return grid[best];
}

/// Stand-in for a design-based fixed lambda: 2 E||X~'eps||_inf / n with eps
/// standard normal, estimated from `draws` samples.
inline double lasso_noise_lambda(const Matrix& X, const ModelId& P, numerics::RngStream& stream, int draws = 10000) {
    const LassoProblem lp = make_lasso_problem(X, Vector::Zero(X.rows()), P);
    if (lp.Xs.cols() == 0) return 0.0;
    const Eigen::Index n = X.rows();
    // Residualize eps the same way the LASSO residualizes Y.
    Matrix proj;
    if (!P.is_empty()) {
        const Matrix Xp = select_columns(X, P);
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Xp);
        proj = Xp * cod.pseudoInverse();
    }
    double sum = 0.0;
    Vector eps(n);
    for (int t = 0; t < draws; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) eps(i) = stream.normal();
        if (proj.size()) eps -= proj * eps;
        sum += (lp.Xs.transpose() * eps).cwiseAbs().maxCoeff() / static_cast<double>(n);
    }
    return 2.0 * sum / draws;
}

inline ModelId select_lasso(const Matrix& X, const Vector& Y, const SelectorSpec& spec, numerics::RngStream& stream) {
    if (Y.size() != X.rows()) throw ValidationError("selector: Y length differs from the rows of X");
    const ModelId P = spec.protected_model(static_cast<int>(X.cols()));
    const LassoProblem lp = make_lasso_problem(X, Y, P);
    if (lp.Xs.cols() == 0) return P;
    double lambda = spec.lambda;
    if (spec.kind == SelectorKind::LassoCv) lambda = lasso_cv_lambda(lp, spec.folds, stream);
    if (lambda >= lp.lambda_max() && lambda > 0.0) return P;
    return lasso_model(lp, lasso_cd(lp.Xs, lp.Ys, lambda));
}

inline ModelId select_model(const Matrix& X, const Vector& Y, const SelectorSpec& spec, numerics::RngStream& stream) {
    switch (spec.kind) {
        case SelectorKind::GreedyIc: return select_greedy_ic(X, Y, spec);
        case SelectorKind::LassoCv:
        case SelectorKind::LassoFixed: return select_lasso(X, Y, spec, stream);
        case SelectorKind::FixedModel: return spec.fixed_model;
        case SelectorKind::Custom: return spec.custom(X, Y);
    }
    throw ValidationError("unknown selector");
}

struct SigmaEstimate {
    double sigma2 = 0.0;
    DofParam r = DofParam::infinite();
    bool degenerate = false;  // exact fit, sigma2 == 0
};

/// Residual variance of the full regression with r = n - rank(X).
inline SigmaEstimate sigma_hat_full(const Matrix& X, const Vector& Y) {
    const Eigen::Index n = X.rows();
    if (Y.size() != n) throw ValidationError("sigma: Y length differs from the rows of X");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
    const Eigen::Index d = cod.rank();
    if (n <= d) throw ValidationError("residual variance estimator needs n > rank(X)");
    const double rss = (Y - X * cod.solve(Y)).squaredNorm();
    SigmaEstimate s;
    s.sigma2 = rss / static_cast<double>(n - d);
    s.r = DofParam::finite(static_cast<std::int64_t>(n - d));
    s.degenerate = s.sigma2 <= 1e-28 * std::max(1.0, Y.squaredNorm());
    return s;
}

/// Residual variance of the selected model, divisor n - |M|.
inline SigmaEstimate sigma_hat_pms(const Matrix& X, const Vector& Y, const ModelId& M) {
    const Eigen::Index n = X.rows();
    if (Y.size() != n) throw ValidationError("sigma: Y length differs from the rows of X");
    if (n <= M.size()) throw ValidationError("post-selection variance estimator needs n > |M|");
    SigmaEstimate s;
    s.sigma2 = detail::rss(X, Y, M) / static_cast<double>(n - M.size());
    s.r = DofParam::finite(static_cast<std::int64_t>(n - M.size()));
    s.degenerate = s.sigma2 <= 1e-28 * std::max(1.0, Y.squaredNorm());
    return s;
}

}  // namespace posi
