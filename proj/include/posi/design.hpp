#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posi/error.hpp"
#include "posi/numerics/distributions.hpp"

namespace posi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A subset of {0, ..., p-1} (printed 1-based). Stored as a multi-word bitset.
class ModelId {
public:
    ModelId() = default;
    explicit ModelId(int p) : p_(p), words_(static_cast<std::size_t>((p + 63) / 64), 0) {
        if (p < 1) throw ValidationError("model dimension p must be >= 1");
    }

    static ModelId empty(int p) { return ModelId(p); }
    static ModelId full(int p) {
        ModelId m(p);
        for (int j = 0; j < p; ++j) m.insert(j);
        return m;
    }
    static ModelId from_indices(int p, std::span<const int> zero_based) {
        ModelId m(p);
        for (int j : zero_based) m.insert(j);
        return m;
    }
    static ModelId from_mask(int p, std::uint64_t mask) {
        ModelId m(p);
        if (p < 64 && (mask >> p) != 0) throw ValidationError("model mask has bits beyond p");
        m.words_[0] = mask;
        return m;
    }

    int p() const { return p_; }

    bool contains(int j) const {
        check_index(j);
        return (words_[static_cast<std::size_t>(j / 64)] >> (j % 64)) & 1u;
    }
    void insert(int j) {
        check_index(j);
        words_[static_cast<std::size_t>(j / 64)] |= std::uint64_t{1} << (j % 64);
    }
    void erase(int j) {
        check_index(j);
        words_[static_cast<std::size_t>(j / 64)] &= ~(std::uint64_t{1} << (j % 64));
    }

    int size() const {
        int s = 0;
        for (auto w : words_) s += std::popcount(w);
        return s;
    }
    bool is_empty() const {
        return std::all_of(words_.begin(), words_.end(), [](auto w) { return w == 0; });
    }
    bool is_full() const { return size() == p_; }

    bool is_subset_of(const ModelId& other) const {
        check_same_p(other);
        for (std::size_t k = 0; k < words_.size(); ++k) {
            if (words_[k] & ~other.words_[k]) return false;
        }
        return true;
    }

    /// Zero-based member indices in increasing order.
    std::vector<int> indices() const {
        std::vector<int> out;
        for (int j = 0; j < p_; ++j) {
            if (contains(j)) out.push_back(j);
        }
        return out;
    }

    /// Complement within {0, ..., p-1}.
    ModelId complement() const {
        ModelId c(p_);
        for (int j = 0; j < p_; ++j) {
            if (!contains(j)) c.insert(j);
        }
        return c;
    }

    ModelId united(const ModelId& other) const {
        check_same_p(other);
        ModelId u = *this;
        for (std::size_t k = 0; k < words_.size(); ++k) u.words_[k] |= other.words_[k];
        return u;
    }

    /// "{1,3}" with 1-based indices; "{}" for the empty model.
    std::string to_string() const {
        std::string s = "{";
        bool first = true;
        for (int j : indices()) {
            if (!first) s += ",";
            s += std::to_string(j + 1);
            first = false;
        }
        return s + "}";
    }

    friend bool operator==(const ModelId&, const ModelId&) = default;
    friend bool operator<(const ModelId& a, const ModelId& b) {
        if (a.p_ != b.p_) return a.p_ < b.p_;
        for (std::size_t k = a.words_.size(); k-- > 0;) {
            if (a.words_[k] != b.words_[k]) return a.words_[k] < b.words_[k];
        }
        return false;
    }

private:
    void check_index(int j) const {
        if (j < 0 || j >= p_) {
            throw ValidationError("model index " + std::to_string(j + 1) + " outside 1.." + std::to_string(p_));
        }
    }
    void check_same_p(const ModelId& other) const {
        if (other.p_ != p_) throw ValidationError("models over different p");
    }

    int p_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Columns of X indexed by M (n x |M|).
inline Matrix select_columns(const Matrix& X, const ModelId& M) {
    const auto idx = M.indices();
    Matrix out(X.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(idx[k]);
    return out;
}

inline Vector select_entries(const Vector& x, const ModelId& M) {
    const auto idx = M.indices();
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(idx[k]);
    return out;
}

/// Square block Sigma[rows, cols].
inline Matrix select_block(const Matrix& S, const ModelId& rows, const ModelId& cols) {
    const auto ri = rows.indices();
    const auto ci = cols.indices();
    Matrix out(static_cast<Eigen::Index>(ri.size()), static_cast<Eigen::Index>(ci.size()));
    for (std::size_t a = 0; a < ri.size(); ++a) {
        for (std::size_t b = 0; b < ci.size(); ++b) {
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = S(ri[a], ci[b]);
        }
    }
    return out;
}

/// Fixed design, query point, level and degrees of freedom.
struct DesignProblem {
    Matrix X;
    Vector x0;
    double alpha = 0.05;
    DofParam r = DofParam::infinite();

    void validate() const {
        if (X.rows() < 1 || X.cols() < 1) throw ValidationError("design matrix must be at least 1x1");
        if (x0.size() != X.cols()) {
            throw ValidationError("x0 has length " + std::to_string(x0.size()) + " but X has " +
                                  std::to_string(X.cols()) + " columns");
        }
        if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (X.col(j).cwiseAbs().maxCoeff() == 0.0) {
                throw ValidationError("design column " + std::to_string(j + 1) + " is identically zero");
            }
        }
        if (!X.allFinite() || !x0.allFinite()) throw ValidationError("design or x0 contains non-finite values");
    }

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
};

/// Canonical coordinates: Q (n x d) orthonormal basis of col(X), Xt = Q'X (d x p).
struct CanonicalDesign {
    int n = 0;
    int d = 0;
    Matrix Q;
    Matrix Xt;

    int p() const { return static_cast<int>(Xt.cols()); }
};

namespace detail {

inline int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index n, Eigen::Index p) {
    if (singular_values.size() == 0) return 0;
    const double smax = singular_values.maxCoeff();
    const double threshold =
        static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() * smax;
    int rank = 0;
    for (Eigen::Index k = 0; k < singular_values.size(); ++k) {
        const double s = singular_values(k);
        if (s >= 0.5 * threshold && s <= 2.0 * threshold) {
            throw DegeneracyError("numerical rank is ambiguous: singular value " + std::to_string(s) +
                                  " lies within [0.5, 2] x threshold " + std::to_string(threshold));
        }
        if (s > threshold) ++rank;
    }
    return rank;
}

}  // namespace detail

inline CanonicalDesign canonicalize(const Matrix& X) {
    if (X.rows() < 1 || X.cols() < 1) throw ValidationError("design matrix must be at least 1x1");
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (X.col(j).cwiseAbs().maxCoeff() == 0.0) {
            throw ValidationError("design column " + std::to_string(j + 1) + " is identically zero");
        }
    }
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU);
    const int d = detail::numerical_rank(svd.singularValues(), n, p);

    CanonicalDesign c;
    c.n = static_cast<int>(n);
    c.d = d;
    if (d == p) {
        Eigen::HouseholderQR<Matrix> qr(X);
        c.Q = qr.householderQ() * Matrix::Identity(n, p);
        c.Xt = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    } else if (d == n) {
        c.Q = Matrix::Identity(n, n);
        c.Xt = X;
    } else {
        c.Q = svd.matrixU().leftCols(d);
        c.Xt = c.Q.transpose() * X;
    }
    return c;
}

/// The admissible model collection. Construction through `validated` checks
/// the structural requirements; `dropped` counts rank-deficient subsets that
/// the generator discarded.
class ModelUniverse {
public:
    ModelUniverse() = default;

    static ModelUniverse validated(int p, std::vector<ModelId> models, const CanonicalDesign& canon,
                                   int dropped = 0) {
        ModelUniverse u;
        u.p_ = p;
        u.models_ = std::move(models);
        u.dropped_ = dropped;
        u.check(canon);
        return u;
    }

    int p() const { return p_; }
    std::size_t size() const { return models_.size(); }
    const std::vector<ModelId>& models() const { return models_; }
    const ModelId& operator[](std::size_t k) const { return models_[k]; }
    int dropped() const { return dropped_; }

    bool contains(const ModelId& M) const { return index_.find(M) != index_.end(); }
    std::size_t index_of(const ModelId& M) const {
        auto it = index_.find(M);
        if (it == index_.end()) throw ValidationError("model " + M.to_string() + " is not in the universe");
        return it->second;
    }

private:
    void check(const CanonicalDesign& canon) {
        if (p_ < 1) throw ValidationError("universe dimension must be >= 1");
        index_.clear();
        ModelId uni = ModelId::empty(p_);
        bool has_empty = false;
        std::vector<std::string> deficient;
        for (std::size_t k = 0; k < models_.size(); ++k) {
            const ModelId& M = models_[k];
            if (M.p() != p_) throw ValidationError("universe model " + M.to_string() + " has wrong dimension");
            if (!index_.emplace(M, k).second) {
                throw ValidationError("universe lists model " + M.to_string() + " twice");
            }
            if (M.is_empty()) has_empty = true;
            uni = uni.united(M);
            if (!M.is_empty() && !full_column_rank(canon, M)) deficient.push_back(M.to_string());
        }
        if (!has_empty) throw ValidationError("universe must contain the empty model");
        if (!uni.is_full()) throw ValidationError("union of universe models must be {1,...,p}");
        if (!deficient.empty()) {
            std::string msg = "rank-deficient models in universe:";
            for (const auto& s : deficient) msg += " " + s;
            throw ValidationError(msg);
        }
    }

public:
    static bool full_column_rank(const CanonicalDesign& canon, const ModelId& M) {
        const int k = M.size();
        if (k == 0) return true;
        if (k > canon.d) return false;
        const Matrix sub = select_columns(canon.Xt, M);
        Eigen::JacobiSVD<Matrix> svd(sub);
        const auto& s = svd.singularValues();
        const double tol = static_cast<double>(std::max(sub.rows(), sub.cols())) *
                           std::numeric_limits<double>::epsilon() * s(0);
        return s(k - 1) > std::max(tol, 1e-12 * s(0));
    }

private:
    int p_ = 0;
    std::vector<ModelId> models_;
    std::map<ModelId, std::size_t> index_;
    int dropped_ = 0;
};

inline constexpr std::uint64_t kDefaultUniverseBudget = std::uint64_t{1} << 24;

/// All subsets of size <= max_size (nullopt: power set), ordered by size and
/// then by bit pattern. Rank-deficient subsets are dropped and counted.
inline ModelUniverse enumerate_universe(int p, std::optional<int> max_size, const CanonicalDesign& canon,
                                        std::uint64_t budget = kDefaultUniverseBudget) {
    if (p < 1) throw ValidationError("p must be >= 1");
    if (canon.p() != p) throw ValidationError("universe p does not match the design");
    const int m = max_size.value_or(p);
    if (m < 1 || m > p) throw ValidationError("max model size must lie in 1..p");
    // Count before enumerating.
    double count = 0.0;
    double binom = 1.0;
    for (int k = 0; k <= m; ++k) {
        if (k > 0) binom = binom * (p - k + 1) / k;
        count += binom;
    }
    if (p > 62 || count > static_cast<double>(budget)) {
        throw ValidationError("universe would contain " + std::to_string(count) +
                              " models, above the budget of " + std::to_string(budget));
    }
    std::vector<ModelId> models;
    models.reserve(static_cast<std::size_t>(count));
    int dropped = 0;
    const std::uint64_t limit = std::uint64_t{1} << p;
    for (int k = 0; k <= m; ++k) {
        for (std::uint64_t mask = 0; mask < limit; ++mask) {
            if (std::popcount(mask) != k) continue;
            ModelId M = ModelId::from_mask(p, mask);
            if (!ModelUniverse::full_column_rank(canon, M)) {
                ++dropped;
                continue;
            }
            models.push_back(std::move(M));
        }
    }
    return ModelUniverse::validated(p, std::move(models), canon, dropped);
}

/// c(M, U): number of universe models that are not subsets of M.
inline std::size_t count_not_subset(const ModelId& M, const ModelUniverse& U) {
    std::size_t c = 0;
    for (const auto& Ms : U.models()) {
        if (!Ms.is_subset_of(M)) ++c;
    }
    return c;
}

struct SbarVector {
    Vector s_tilde;
    double norm = 0.0;
    Vector s_bar;
};

/// Linear map x[M] -> s-tilde_M in canonical coordinates, i.e. the d x |M|
/// matrix Xt[M] (Xt[M]'Xt[M])^{-1}. Empty models map to nothing.
inline Matrix s_operator(const CanonicalDesign& canon, const ModelId& M) {
    const int k = M.size();
    if (k == 0) return Matrix(canon.d, 0);
    const Matrix sub = select_columns(canon.Xt, M);
    Eigen::HouseholderQR<Matrix> qr(sub);
    if (sub.rows() < k) throw ValidationError("model " + M.to_string() + " has more columns than the rank");
    const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const double scale = R.diagonal().cwiseAbs().maxCoeff();
    if (R.diagonal().cwiseAbs().minCoeff() <= 1e-12 * scale) {
        throw ValidationError("Gram matrix of model " + M.to_string() + " is numerically singular");
    }
    // Xt[M] (R'R)^{-1} = Q_M R^{-T}.
    const Matrix Qm = qr.householderQ() * Matrix::Identity(sub.rows(), k);
    const Matrix Rinv_t = R.transpose().triangularView<Eigen::Lower>().solve(Matrix::Identity(k, k));
    return Qm * Rinv_t;
}

inline SbarVector make_sbar(Vector s_tilde) {
    SbarVector s;
    s.norm = s_tilde.norm();
    s.s_bar = s.norm > 0.0 ? Vector(s_tilde / s.norm) : Vector::Zero(s_tilde.size());
    s.s_tilde = std::move(s_tilde);
    return s;
}

inline SbarVector s_vector(const CanonicalDesign& canon, const Vector& x0, const ModelId& M) {
    if (x0.size() != canon.p()) throw ValidationError("x0 length does not match the design");
    if (M.is_empty()) return make_sbar(Vector::Zero(canon.d));
    return make_sbar(s_operator(canon, M) * select_entries(x0, M));
}

/// Precomputed s-operators for every model of a universe.
class UniverseGeometry {
public:
    UniverseGeometry(const CanonicalDesign& canon, const ModelUniverse& U) : d_(canon.d) {
        ops_.reserve(U.size());
        idx_.reserve(U.size());
        for (const auto& M : U.models()) {
            ops_.push_back(s_operator(canon, M));
            idx_.push_back(M.indices());
        }
    }

    int dim() const { return d_; }
    std::size_t size() const { return ops_.size(); }

    Vector s_tilde(std::size_t k, const Vector& x) const {
        const auto& idx = idx_[k];
        if (idx.empty()) return Vector::Zero(d_);
        Vector xm(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) xm(static_cast<Eigen::Index>(j)) = x(idx[j]);
        return ops_[k] * xm;
    }

    /// Unit s-bar vectors of all models for query point x, as columns of a
    /// d x |U| matrix (zero columns for s = 0).
    Matrix sbar_matrix(const Vector& x) const {
        Matrix S(d_, static_cast<Eigen::Index>(ops_.size()));
        for (std::size_t k = 0; k < ops_.size(); ++k) {
            Vector s = s_tilde(k, x);
            const double nrm = s.norm();
            S.col(static_cast<Eigen::Index>(k)) = nrm > 0.0 ? Vector(s / nrm) : Vector::Zero(d_);
        }
        return S;
    }

private:
    int d_;
    std::vector<Matrix> ops_;
    std::vector<std::vector<int>> idx_;
};

/// Least squares on the columns in M (Moore-Penrose for rank-deficient X[M]).
inline Vector restricted_ols(const Matrix& X, const Vector& Y, const ModelId& M) {
    if (X.rows() != Y.size()) throw ValidationError("restricted_ols: X and Y row counts differ");
    if (M.p() != X.cols()) throw ValidationError("restricted_ols: model dimension differs from X");
    if (M.is_empty()) return Vector(0);
    const Matrix sub = select_columns(X, M);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sub);
    return cod.solve(Y);
}

/// ||s_M|| computed directly from the original design.
inline double s_norm_direct(const Matrix& X, const Vector& x0, const ModelId& M) {
    if (M.is_empty()) return 0.0;
    const Matrix sub = select_columns(X, M);
    const Matrix gram = sub.transpose() * sub;
    const Vector w = gram.ldlt().solve(select_entries(x0, M));
    return (sub * w).norm();
}

}  // namespace posi
