#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "posi/constants.hpp"
#include "posi/design.hpp"
#include "posi/error.hpp"
#include "posi/inference.hpp"
#include "posi/numerics/rng.hpp"
#include "posi/parallel.hpp"
#include "posi/selectors.hpp"

namespace posi {

/// Set from a signal handler; long-running loops stop early and mark results partial.
inline std::atomic<bool>& interrupt_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

enum class SigmaFamilyKind { Exchangeable, Equicorrelated, IidIdentity, User };

/// Covariance of the non-intercept regressors.
struct SigmaFamily {
    SigmaFamilyKind kind = SigmaFamilyKind::IidIdentity;
    double a = 10.0;
    std::optional<double> c;  // equicorrelated; default sqrt(0.8/(p~-1))
    int p_tilde = 9;
    Matrix user;

    static SigmaFamily exchangeable(int p_tilde, double a = 10.0) {
        SigmaFamily f;
        f.kind = SigmaFamilyKind::Exchangeable;
        f.p_tilde = p_tilde;
        f.a = a;
        return f;
    }
    static SigmaFamily equicorrelated(int p_tilde, std::optional<double> c = std::nullopt) {
        SigmaFamily f;
        f.kind = SigmaFamilyKind::Equicorrelated;
        f.p_tilde = p_tilde;
        f.c = c;
        return f;
    }
    static SigmaFamily iid(int p_tilde) {
        SigmaFamily f;
        f.p_tilde = p_tilde;
        return f;
    }
    static SigmaFamily from_matrix(Matrix S) {
        SigmaFamily f;
        f.kind = SigmaFamilyKind::User;
        f.p_tilde = static_cast<int>(S.rows());
        f.user = std::move(S);
        return f;
    }

    double equicorrelation() const {
        if (c) return *c;
        if (p_tilde < 2) throw ValidationError("equicorrelated family needs p~ >= 2");
        return std::sqrt(0.8 / (p_tilde - 1));
    }

    std::string name() const {
        switch (kind) {
            case SigmaFamilyKind::Exchangeable: return "exchangeable";
            case SigmaFamilyKind::Equicorrelated: return "equicorrelated";
            case SigmaFamilyKind::IidIdentity: return "iid";
            case SigmaFamilyKind::User: return "user";
        }
        return "?";
    }

    /// p~ x p~ covariance, checked symmetric positive definite.
    Matrix sigma_tilde() const {
        if (p_tilde < 1) throw ValidationError("p~ must be >= 1");
        const auto q = static_cast<Eigen::Index>(p_tilde);
        Matrix S;
        switch (kind) {
            case SigmaFamilyKind::Exchangeable:
                S = Matrix::Identity(q, q) + (2.0 * a + p_tilde * a * a) * Matrix::Ones(q, q);
                break;
            case SigmaFamilyKind::Equicorrelated: {
                const double cc = equicorrelation();
                S = Matrix::Identity(q, q);
                S.col(q - 1).head(q - 1).setConstant(cc);
                S.row(q - 1).head(q - 1).setConstant(cc);
                break;
            }
            case SigmaFamilyKind::IidIdentity: S = Matrix::Identity(q, q); break;
            case SigmaFamilyKind::User: S = user; break;
        }
        if (S.rows() != q || S.cols() != q) throw ValidationError("covariance has the wrong shape");
        if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ValidationError("covariance is not symmetric");
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
        return S;
    }

    /// Second-moment matrix of a full regressor row: diag(1, Sigma~) with an intercept.
    Matrix second_moment(bool intercept) const {
        const Matrix St = sigma_tilde();
        if (!intercept) return St;
        Matrix S = Matrix::Zero(St.rows() + 1, St.cols() + 1);
        S(0, 0) = 1.0;
        S.bottomRightCorner(St.rows(), St.cols()) = St;
        return S;
    }
};

struct GeneratedDesign {
    Matrix X;
    Vector x0;
    int regenerations = 0;
};

inline constexpr int kMaxDesignAttempts = 10;

/// n + 1 iid rows (1, N(0, Sigma~)) or N(0, Sigma~); the last row becomes x0.
inline GeneratedDesign gen_design(const SigmaFamily& family, int n, int p, bool intercept, std::uint64_t seed) {
    const int p_tilde = intercept ? p - 1 : p;
    if (p_tilde != family.p_tilde) {
        throw ValidationError("p = " + std::to_string(p) + " does not match the covariance dimension " +
                              std::to_string(family.p_tilde) + (intercept ? " plus intercept" : ""));
    }
    if (n < p) throw ValidationError("need n >= p for a full-rank design");
    const Matrix L = family.sigma_tilde().llt().matrixL();
    GeneratedDesign g;
    for (int attempt = 0; attempt < kMaxDesignAttempts; ++attempt) {
        numerics::RngStream stream(seed, numerics::StreamTag::DesignGen, static_cast<std::uint64_t>(attempt));
        Matrix rows(n + 1, p);
        Vector z(p_tilde);
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; j < p_tilde; ++j) z(j) = stream.normal();
            const Vector v = L * z;
            if (intercept) {
                rows(i, 0) = 1.0;
                rows.row(i).tail(p_tilde) = v.transpose();
            } else {
                rows.row(i) = v.transpose();
            }
        }
        g.X = rows.topRows(n);
        g.x0 = rows.row(n).transpose();
        Eigen::ColPivHouseholderQR<Matrix> qr(g.X);
        if (qr.rank() == p) return g;
        ++g.regenerations;
    }
    throw DegeneracyError("no full-rank design after " + std::to_string(kMaxDesignAttempts) + " attempts");
}

enum class SigmaSourceKind { Full, Pms, Fixed };

struct SigmaSource {
    SigmaSourceKind kind = SigmaSourceKind::Full;
    double value = 1.0;  // known sigma for Fixed
    std::string to_string() const {
        switch (kind) {
            case SigmaSourceKind::Full: return "full";
            case SigmaSourceKind::Pms: return "pms";
            case SigmaSourceKind::Fixed: return "fixed";
        }
        return "?";
    }
};

/// Everything that stays fixed across replications for one (X, x0): the
/// selector, sigma source, constant kinds, targets and the constant cache.
class CoverageContext {
public:
    CoverageContext(Matrix X, Vector x0, ModelUniverse U, double alpha, SelectorSpec selector, SigmaSource sigma,
                    std::vector<ConstantKind> kinds, std::vector<TargetKind> targets, McConfig mc,
                    Matrix Sigma = Matrix(), K2SearchConfig k2 = {})
        : X_(std::move(X)),
          x0_(std::move(x0)),
          canon_(canonicalize(X_)),
          U_(std::move(U)),
          alpha_(alpha),
          selector_(std::move(selector)),
          sigma_(sigma),
          kinds_(std::move(kinds)),
          targets_(std::move(targets)),
          mc_(mc),
          Sigma_(std::move(Sigma)),
          k2_(k2) {
        DesignProblem{X_, x0_, alpha_, DofParam::infinite()}.validate();
        selector_.validate(p());
        if (kinds_.empty()) throw ValidationError("no constant kinds requested");
        if (targets_.empty()) throw ValidationError("no targets requested");
        for (auto t : targets_) {
            if (t == TargetKind::DesignIndependent) {
                TargetSpec ts{t, Vector::Zero(p()), Vector(), Sigma_};
                ts.validate(p());
            }
        }
        if (sigma_.kind == SigmaSourceKind::Full && canon_.d >= canon_.n) {
            throw ValidationError("full-model variance estimator needs n > rank(X)");
        }
        if (sigma_.kind == SigmaSourceKind::Fixed && !(sigma_.value > 0.0)) {
            throw ValidationError("fixed sigma must be positive");
        }
    }

    int p() const { return static_cast<int>(X_.cols()); }
    int n() const { return static_cast<int>(X_.rows()); }
    const Matrix& X() const { return X_; }
    const Vector& x0() const { return x0_; }
    const CanonicalDesign& canon() const { return canon_; }
    const ModelUniverse& universe() const { return U_; }
    double alpha() const { return alpha_; }
    const SelectorSpec& selector() const { return selector_; }
    const SigmaSource& sigma_source() const { return sigma_; }
    const std::vector<ConstantKind>& kinds() const { return kinds_; }
    const std::vector<TargetKind>& targets() const { return targets_; }
    const McConfig& mc() const { return mc_; }
    const Matrix& Sigma() const { return Sigma_; }

    /// Degrees of freedom that go with the variance estimate for model M.
    DofParam dof_for(const ModelId& M) const {
        switch (sigma_.kind) {
            case SigmaSourceKind::Full: return DofParam::finite(canon_.n - canon_.d);
            case SigmaSourceKind::Pms: return DofParam::finite(canon_.n - M.size());
            case SigmaSourceKind::Fixed: return DofParam::infinite();
        }
        return DofParam::infinite();
    }

    double s_norm(const ModelId& M) const {
        std::lock_guard lock(mutex_);
        auto it = s_norms_.find(M);
        if (it != s_norms_.end()) return it->second;
        const double v = s_vector(canon_, x0_, M).norm;
        s_norms_.emplace(M, v);
        return v;
    }

    /// K for (kind, M); model-free kinds are computed once per r.
    double constant(ConstantKind kind, const ModelId& M) const {
        const DofParam r = dof_for(M);
        const bool per_model = kind == ConstantKind::K2 || kind == ConstantKind::K3;
        const Key key{kind, per_model ? M.to_string() : std::string(), r.to_string()};
        {
            std::lock_guard lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        const double v = compute(kind, M, r);
        std::lock_guard lock(mutex_);
        cache_.emplace(key, v);
        return v;
    }

    /// Fills the cache for the model-free kinds, so later calls are cheap.
    void warm_up() const {
        if (sigma_.kind == SigmaSourceKind::Pms) return;
        for (auto k : kinds_) {
            if (k != ConstantKind::K2 && k != ConstantKind::K3) constant(k, ModelId::full(p()));
        }
    }

    /// Snapshot of the cache for reporting.
    std::vector<std::tuple<std::string, std::string, std::string, double>> cached_constants() const {
        std::lock_guard lock(mutex_);
        std::vector<std::tuple<std::string, std::string, std::string, double>> out;
        for (const auto& [k, v] : cache_) out.emplace_back(to_string(std::get<0>(k)), std::get<1>(k), std::get<2>(k), v);
        return out;
    }

private:
    using Key = std::tuple<ConstantKind, std::string, std::string>;

    double compute(ConstantKind kind, const ModelId& M, DofParam r) const {
        switch (kind) {
            case ConstantKind::Naive: return k_naive(r, alpha_).value;
            case ConstantKind::K1: {
                McConfig cfg = mc_;
                cfg.bootstrap = 0;
                return k1(canon_, x0_, U_, r, alpha_, cfg).value;
            }
            case ConstantKind::K2: {
                if (M.is_empty()) return 0.0;
                K2SearchConfig s = k2_;
                s.bootstrap = 0;
                return k2(canon_, select_entries(x0_, M), M, U_, r, alpha_, s).value;
            }
            case ConstantKind::K3: {
                if (M.is_empty()) return 0.0;
                McConfig cfg = mc_;
                cfg.bootstrap = 0;
                return k3(canon_, select_entries(x0_, M), M, U_, r, alpha_, cfg).value;
            }
            case ConstantKind::K4:
                return k4(canon_.d, r, alpha_, count_not_subset(ModelId::empty(p()), U_), mc_.J, Variant::Lower).value;
            case ConstantKind::K5: return k5(canon_.d, r, alpha_).value;
            case ConstantKind::K6: return k6(canon_.d, r, alpha_).value;
        }
        throw ValidationError("unknown constant kind");
    }

    Matrix X_;
    Vector x0_;
    CanonicalDesign canon_;
    ModelUniverse U_;
    double alpha_;
    SelectorSpec selector_;
    SigmaSource sigma_;
    std::vector<ConstantKind> kinds_;
    std::vector<TargetKind> targets_;
    McConfig mc_;
    Matrix Sigma_;
    K2SearchConfig k2_;
    mutable std::mutex mutex_;
    mutable std::map<Key, double> cache_;
    mutable std::map<ModelId, double> s_norms_;
};

/// Hit counts per (kind, target), indexed kind-major.
struct HitCounts {
    std::int64_t replications = 0;
    std::vector<std::int64_t> hits;

    double coverage(std::size_t cell) const {
        return replications > 0 ? static_cast<double>(hits[cell]) / static_cast<double>(replications) : 0.0;
    }
    double stderr_of(std::size_t cell) const {
        const double c = coverage(cell);
        return replications > 0 ? std::sqrt(c * (1.0 - c) / static_cast<double>(replications)) : 0.0;
    }
};

/// B replications Y ~ N(X beta, sigma^2 I) with substreams keyed by
/// (candidate, step, replication).
inline HitCounts run_replications(const CoverageContext& ctx, const Vector& beta, double sigma, std::int64_t B,
                                  std::uint64_t seed, std::uint64_t candidate, std::uint64_t step) {
    if (beta.size() != ctx.p()) throw ValidationError("beta has the wrong length");
    if (B < 1) throw ValidationError("replication count must be >= 1");
    const std::size_t K = ctx.kinds().size();
    const std::size_t T = ctx.targets().size();
    const Vector mu = ctx.X() * beta;
    const Matrix& X = ctx.X();

    // Targets depend on the selected model only; cache them per model.
    std::mutex target_mutex;
    std::map<ModelId, std::vector<double>> target_cache;
    auto targets_for = [&](const ModelId& M) {
        {
            std::lock_guard lock(target_mutex);
            auto it = target_cache.find(M);
            if (it != target_cache.end()) return it->second;
        }
        std::vector<double> tv(T);
        for (std::size_t t = 0; t < T; ++t) {
            TargetSpec spec{ctx.targets()[t], beta, mu, ctx.Sigma()};
            tv[t] = target_value(spec, X, ctx.x0(), M);
        }
        std::lock_guard lock(target_mutex);
        target_cache.emplace(M, tv);
        return tv;
    };

    constexpr std::int64_t kChunk = 256;
    const std::int64_t chunks = (B + kChunk - 1) / kChunk;
    std::vector<std::vector<std::int64_t>> partial(static_cast<std::size_t>(chunks));
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t ch) {
        auto& hits = partial[ch];
        hits.assign(K * T, 0);
        const std::int64_t begin = static_cast<std::int64_t>(ch) * kChunk;
        const std::int64_t end = std::min(B, begin + kChunk);
        Vector Y(ctx.n());
        for (std::int64_t i = begin; i < end; ++i) {
            numerics::RngStream stream(seed, numerics::StreamTag::Replication, candidate, step,
                                       static_cast<std::uint64_t>(i));
            for (int k = 0; k < ctx.n(); ++k) Y(k) = mu(k) + sigma * stream.normal();
            numerics::RngStream sel_stream(seed, numerics::StreamTag::Selector, candidate, step,
                                           static_cast<std::uint64_t>(i));
            const ModelId M = select_model(X, Y, ctx.selector(), sel_stream);
            double sigma_hat = 0.0;
            switch (ctx.sigma_source().kind) {
                case SigmaSourceKind::Full: sigma_hat = std::sqrt(sigma_hat_full(X, Y).sigma2); break;
                case SigmaSourceKind::Pms: sigma_hat = std::sqrt(sigma_hat_pms(X, Y, M).sigma2); break;
                case SigmaSourceKind::Fixed: sigma_hat = ctx.sigma_source().value; break;
            }
            const Vector bhat = restricted_ols(X, Y, M);
            const double sn = ctx.s_norm(M);
            const auto tv = targets_for(M);
            for (std::size_t k = 0; k < K; ++k) {
                const ConstantKind kind = ctx.kinds()[k];
                const double Kval = M.is_empty() ? 0.0 : ctx.constant(kind, M);
                const PredictionInterval iv = build_interval(ctx.x0(), M, bhat, Kval, kind, sn, sigma_hat);
                for (std::size_t t = 0; t < T; ++t) {
                    if (covers(iv, tv[t])) ++hits[k * T + t];
                }
            }
        }
    });
    HitCounts out;
    out.replications = B;
    out.hits.assign(K * T, 0);
    for (const auto& h : partial) {
        for (std::size_t c = 0; c < h.size(); ++c) out.hits[c] += h[c];
    }
    return out;
}

struct CoverageEstimate {
    double coverage = 0.0;
    double stderr_value = 0.0;
    std::int64_t replications = 0;
};

/// Coverage of one (kind, target) cell of the context at a single beta.
inline CoverageEstimate coverage_at(const CoverageContext& ctx, const Vector& beta, double sigma, ConstantKind kind,
                                    TargetKind target, std::int64_t B, std::uint64_t seed) {
    const auto& ks = ctx.kinds();
    const auto& ts = ctx.targets();
    const auto ki = std::find(ks.begin(), ks.end(), kind);
    const auto ti = std::find(ts.begin(), ts.end(), target);
    if (ki == ks.end() || ti == ts.end()) throw ValidationError("coverage_at: kind or target not in the context");
    const auto hits = run_replications(ctx, beta, sigma, B, seed, 0, 0);
    const std::size_t cell = static_cast<std::size_t>(ki - ks.begin()) * ts.size() + static_cast<std::size_t>(ti - ts.begin());
    return {hits.coverage(cell), hits.stderr_of(cell), B};
}

struct CoverageSearchConfig {
    std::int64_t m1 = 200;
    std::int64_t I1 = 200;
    std::int64_t m2 = 20;
    std::int64_t I2 = 2000;
    std::int64_t I3 = 20000;
    std::uint64_t seed = 0;

    static CoverageSearchConfig paper_scale(std::uint64_t seed) {
        return {1000, 1000, 100, 10000, 100000, seed};
    }

    void validate() const {
        if (m1 < 1 || m2 < 1 || I1 < 1) throw ValidationError("search counts must be >= 1");
        if (m2 > m1) throw ValidationError("m2 must not exceed m1");
        if (I1 > I2 || I2 > I3) throw ValidationError("replication counts must satisfy I1 <= I2 <= I3");
    }
};

struct CoverageCell {
    ConstantKind kind = ConstantKind::Naive;
    TargetKind target = TargetKind::DesignDependent;
    double min_coverage = 0.0;
    double stderr_value = 0.0;
    std::int64_t argmin_candidate = -1;  // candidate whose beta attains the minimum
    Vector argmin_beta;
};

struct LengthRow {
    ConstantKind kind;
    ModelId model;
    double constant = 0.0;
    double s_norm = 0.0;
    double length = 0.0;  // 2 K ||s_M||
};

struct SimulationReport {
    std::vector<CoverageCell> coverage;
    std::vector<LengthRow> lengths;
    bool partial = false;
};

/// beta = (X'X)^{-1} X' Z with Z ~ N(0, I_n): X beta is standard Gaussian on col(X).
inline Vector beta_candidate(const Matrix& X, std::uint64_t seed, std::uint64_t k) {
    numerics::RngStream stream(seed, numerics::StreamTag::BetaCandidate, k);
    Vector Z(X.rows());
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z(i) = stream.normal();
    return X.colPivHouseholderQr().solve(Z);
}

/// Three-step search for the smallest coverage over beta (sigma = 1). Each
/// (kind, target) cell keeps its own m2 worst candidates; the argmins of all
/// cells are then cross-evaluated and every cell reports its minimum.
inline SimulationReport minimal_coverage_search(const CoverageContext& ctx, const CoverageSearchConfig& cfg) {
    cfg.validate();
    ctx.warm_up();
    const std::size_t K = ctx.kinds().size();
    const std::size_t T = ctx.targets().size();
    const std::size_t cells = K * T;
    SimulationReport report;
    auto stopped = [&] { return interrupt_flag().load(); };

    std::vector<Vector> betas(static_cast<std::size_t>(cfg.m1));
    for (std::size_t k = 0; k < betas.size(); ++k) betas[k] = beta_candidate(ctx.X(), cfg.seed, k);

    // Step 1.
    std::vector<HitCounts> step1(betas.size());
    std::size_t done1 = 0;
    for (; done1 < betas.size() && !stopped(); ++done1) {
        step1[done1] = run_replications(ctx, betas[done1], 1.0, cfg.I1, cfg.seed, done1, 1);
    }
    if (done1 < betas.size()) report.partial = true;

    // Step 2: per cell, the m2 lowest candidates (ties by index).
    std::vector<std::vector<std::size_t>> pool(cells);
    std::map<std::size_t, HitCounts> step2;
    for (std::size_t c = 0; c < cells && done1 > 0; ++c) {
        std::vector<std::size_t> order(done1);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return step1[a].hits[c] < step1[b].hits[c]; });
        order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(cfg.m2)));
        pool[c] = order;
        for (auto k : order) step2.emplace(k, HitCounts{});
    }
    for (auto& [k, h] : step2) {
        if (stopped()) {
            report.partial = true;
            break;
        }
        h = run_replications(ctx, betas[k], 1.0, cfg.I2, cfg.seed, k, 2);
    }

    // Step 3: cross-evaluate every cell's argmin.
    std::vector<std::size_t> argmins;
    for (std::size_t c = 0; c < cells; ++c) {
        std::optional<std::size_t> best;
        for (auto k : pool[c]) {
            const auto& h = step2[k];
            if (h.replications == 0) continue;
            if (!best || h.hits[c] < step2[*best].hits[c]) best = k;
        }
        if (best && std::find(argmins.begin(), argmins.end(), *best) == argmins.end()) argmins.push_back(*best);
    }
    std::sort(argmins.begin(), argmins.end());
    std::map<std::size_t, HitCounts> step3;
    for (auto k : argmins) {
        if (stopped()) {
            report.partial = true;
            break;
        }
        step3.emplace(k, run_replications(ctx, betas[k], 1.0, cfg.I3, cfg.seed, k, 3));
    }

    for (std::size_t c = 0; c < cells; ++c) {
        CoverageCell cell;
        cell.kind = ctx.kinds()[c / T];
        cell.target = ctx.targets()[c % T];
        for (const auto& [k, h] : step3) {
            const double v = h.coverage(c);
            if (cell.argmin_candidate < 0 || v < cell.min_coverage) {
                cell.min_coverage = v;
                cell.stderr_value = h.stderr_of(c);
                cell.argmin_candidate = static_cast<std::int64_t>(k);
                cell.argmin_beta = betas[k];
            }
        }
        report.coverage.push_back(std::move(cell));
    }
    return report;
}

/// Standardized lengths 2 K ||s_M|| along a chain of models.
inline std::vector<LengthRow> length_study(const CanonicalDesign& canon, const Vector& x0, const std::vector<ModelId>& chain,
                                           const ModelUniverse& U, const std::vector<ConstantKind>& kinds, DofParam r,
                                           double alpha, const McConfig& cfg, const K2SearchConfig& k2cfg = {}) {
    for (const auto& M : chain) {
        if (!U.contains(M)) throw ValidationError("chain model " + M.to_string() + " is not in the universe");
    }
    std::map<ConstantKind, double> shared;
    auto shared_value = [&](ConstantKind kind) {
        auto it = shared.find(kind);
        if (it != shared.end()) return it->second;
        double v = 0.0;
        McConfig c = cfg;
        c.bootstrap = 0;
        switch (kind) {
            case ConstantKind::Naive: v = k_naive(r, alpha).value; break;
            case ConstantKind::K1: v = k1(canon, x0, U, r, alpha, c).value; break;
            case ConstantKind::K4: v = k4(canon.d, r, alpha, count_not_subset(ModelId::empty(canon.p()), U), cfg.J).value; break;
            case ConstantKind::K5: v = k5(canon.d, r, alpha).value; break;
            case ConstantKind::K6: v = k6(canon.d, r, alpha).value; break;
            default: break;
        }
        shared.emplace(kind, v);
        return v;
    };
    std::vector<LengthRow> rows;
    for (auto kind : kinds) {
        for (const auto& M : chain) {
            if (interrupt_flag().load()) return rows;
            LengthRow row{kind, M};
            row.s_norm = s_vector(canon, x0, M).norm;
            if (kind == ConstantKind::K3) {
                McConfig c = cfg;
                c.bootstrap = 0;
                row.constant = k3(canon, select_entries(x0, M), M, U, r, alpha, c).value;
            } else if (kind == ConstantKind::K2) {
                K2SearchConfig s = k2cfg;
                s.bootstrap = 0;
                row.constant = k2(canon, select_entries(x0, M), M, U, r, alpha, s).value;
            } else {
                row.constant = shared_value(kind);
            }
            row.length = 2.0 * row.constant * row.s_norm;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace posi
