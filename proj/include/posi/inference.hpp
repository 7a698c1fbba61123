#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "posi/constants.hpp"
#include "posi/design.hpp"
#include "posi/error.hpp"

namespace posi {

enum class TargetKind { DesignDependent, DesignIndependent };

inline std::string to_string(TargetKind k) {
    return k == TargetKind::DesignDependent ? "design-dependent" : "design-independent";
}

/// Truth needed to evaluate a coverage target.
struct TargetSpec {
    TargetKind kind = TargetKind::DesignDependent;
    Vector beta_true;  // for mu = X beta and for the design-independent target
    Vector mu;         // general mean; empty means X * beta_true
    Matrix Sigma;      // second-moment matrix, design-independent target only

    void validate(int p) const {
        if (kind == TargetKind::DesignIndependent) {
            if (beta_true.size() != p) throw ValidationError("target: beta has the wrong length");
            if (Sigma.rows() != p || Sigma.cols() != p) throw ValidationError("target: Sigma must be p x p");
            if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
                throw ValidationError("target: Sigma is not symmetric");
            }
            Eigen::LLT<Matrix> llt(Sigma);
            if (llt.info() != Eigen::Success) throw ValidationError("target: Sigma is not positive definite");
        }
    }
};

/// Interval x0'[M] beta-hat_M +- half_width.
struct PredictionInterval {
    double center = 0.0;
    double half_width = 0.0;
    ModelId model;
    ConstantKind constant_kind = ConstantKind::Naive;

    double lower() const { return center - half_width; }
    double upper() const { return center + half_width; }
};

/// (X[M]'X[M])^{-1} X[M]' mu; empty for M = {}.
inline Vector beta_target_n(const Matrix& X, const Vector& mu, const ModelId& M) {
    if (X.rows() != mu.size()) throw ValidationError("beta_target_n: mu length differs from the rows of X");
    return restricted_ols(X, mu, M);
}

/// beta[M] + Sigma[M,M]^{-1} Sigma[M,M^c] beta[M^c]; empty for M = {}.
inline Vector beta_target_star(const Matrix& Sigma, const Vector& beta, const ModelId& M) {
    const int p = static_cast<int>(beta.size());
    if (Sigma.rows() != p || Sigma.cols() != p) throw ValidationError("beta_target_star: Sigma must be p x p");
    if (M.p() != p) throw ValidationError("beta_target_star: model dimension differs");
    if (M.is_empty()) return Vector(0);
    const Vector bm = select_entries(beta, M);
    if (M.is_full()) return bm;
    const ModelId Mc = M.complement();
    const Matrix Smm = select_block(Sigma, M, M);
    Eigen::FullPivLU<Matrix> lu(Smm);
    if (!lu.isInvertible()) throw DegeneracyError("beta_target_star: Sigma[M,M] is singular for " + M.to_string());
    return bm + lu.solve(select_block(Sigma, M, Mc) * select_entries(beta, Mc));
}

/// x0'[M] times the target coefficients of the requested kind.
inline double target_value(const TargetSpec& target, const Matrix& X, const Vector& x0, const ModelId& M) {
    if (M.is_empty()) return 0.0;
    const Vector xm = select_entries(x0, M);
    if (target.kind == TargetKind::DesignIndependent) return xm.dot(beta_target_star(target.Sigma, target.beta_true, M));
    const Vector mu = target.mu.size() > 0 ? target.mu : Vector(X * target.beta_true);
    return xm.dot(beta_target_n(X, mu, M));
}

inline PredictionInterval build_interval(const Vector& x0, const ModelId& M, const Vector& beta_hat_M,
                                         double K, ConstantKind kind, double s_norm, double sigma_hat) {
    if (beta_hat_M.size() != M.size()) throw ValidationError("build_interval: coefficient length differs from |M|");
    if (!(K >= 0.0)) throw ValidationError("build_interval: constant must be nonnegative");
    if (!(s_norm >= 0.0) || !(sigma_hat >= 0.0)) throw ValidationError("build_interval: negative scale");
    PredictionInterval iv;
    iv.model = M;
    iv.constant_kind = kind;
    if (M.is_empty()) return iv;
    iv.center = select_entries(x0, M).dot(beta_hat_M);
    iv.half_width = K * s_norm * sigma_hat;
    return iv;
}

inline PredictionInterval build_interval(const Vector& x0, const ModelId& M, const Vector& beta_hat_M,
                                         const ConstantEstimate& K, double s_norm, double sigma_hat) {
    return build_interval(x0, M, beta_hat_M, K.value, K.kind, s_norm, sigma_hat);
}

/// Closed interval membership.
inline bool covers(const PredictionInterval& iv, double target) {
    return std::abs(target - iv.center) <= iv.half_width;
}

}  // namespace posi
