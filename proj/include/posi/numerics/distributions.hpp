#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "posi/error.hpp"
#include "posi/numerics/root.hpp"
#include "posi/numerics/special.hpp"

namespace posi {

/// Degrees of freedom of the variance estimate; INFINITE means known variance.
class DofParam {
public:
    static DofParam infinite() { return DofParam(0); }
    static DofParam finite(std::int64_t r) {
        if (r < 1) throw ValidationError("degrees of freedom must be >= 1, got " + std::to_string(r));
        return DofParam(r);
    }

    bool is_infinite() const { return r_ == 0; }
    std::int64_t value() const {
        if (is_infinite()) throw ValidationError("DofParam::value on infinite degrees of freedom");
        return r_;
    }
    std::string to_string() const { return is_infinite() ? "inf" : std::to_string(r_); }

    friend bool operator==(const DofParam&, const DofParam&) = default;

private:
    explicit DofParam(std::int64_t r) : r_(r) {}
    std::int64_t r_;
};

namespace numerics {

enum class CdfFamily { BetaHalf, FSharp, StudentTAbs, NormalAbs };

/// Monotone cdf on [0, inf) from one of four families. Log-normalizers are
/// computed once so evaluation in Monte Carlo loops stays cheap.
///
///   BetaHalf(d):       t -> F_Beta(1/2,(d-1)/2)(t^2); pointmass at 1 when d = 1
///   FSharp(d, r):      law of G with G^2/d ~ F(d,r), or G ~ chi_d when r = inf
///   StudentTAbs(r):    law of |T_r|
///   NormalAbs:         law of |Z|
class CdfHandle {
public:
    static CdfHandle beta_half(int d) {
        check_dim(d);
        CdfHandle h(CdfFamily::BetaHalf, d, DofParam::infinite());
        h.a_ = 0.5;
        h.b_ = 0.5 * (d - 1);
        if (d > 1) h.lnorm_ = log_beta(h.a_, h.b_);
        return h;
    }

    static CdfHandle fsharp(int d, DofParam r) {
        check_dim(d);
        CdfHandle h(CdfFamily::FSharp, d, r);
        h.a_ = 0.5 * d;
        if (r.is_infinite()) {
            h.lnorm_ = log_gamma(h.a_);
        } else {
            h.b_ = 0.5 * static_cast<double>(r.value());
            h.lnorm_ = log_beta(h.a_, h.b_);
        }
        return h;
    }

    static CdfHandle student_t_abs(DofParam r) {
        if (r.is_infinite()) return normal_abs();
        CdfHandle h(CdfFamily::StudentTAbs, 1, r);
        h.a_ = 0.5 * static_cast<double>(r.value());
        h.b_ = 0.5;
        h.lnorm_ = log_beta(h.a_, h.b_);
        return h;
    }

    static CdfHandle normal_abs() { return CdfHandle(CdfFamily::NormalAbs, 1, DofParam::infinite()); }

    CdfFamily family() const { return family_; }
    int dim() const { return d_; }
    DofParam dof() const { return r_; }

    double operator()(double t) const { return tail(t, false); }

    /// 1 - cdf(t), computed directly so that tiny tails keep their precision.
    double survival(double t) const { return tail(t, true); }

private:
    CdfHandle(CdfFamily f, int d, DofParam r) : family_(f), d_(d), r_(r) {}

    static void check_dim(int d) {
        if (d < 1) throw ValidationError("dimension must be >= 1, got " + std::to_string(d));
    }

    double tail(double t, bool upper) const {
        if (std::isnan(t)) throw ValidationError("cdf evaluated at NaN");
        if (t <= 0.0) {
            // All four laws put no mass at or below 0 (the Beta law is continuous at 0).
            return upper ? 1.0 : 0.0;
        }
        if (std::isinf(t)) return upper ? 0.0 : 1.0;
        switch (family_) {
            case CdfFamily::BetaHalf: {
                if (d_ == 1) return (t >= 1.0) == upper ? 0.0 : 1.0;
                if (t >= 1.0) return upper ? 0.0 : 1.0;
                const double x = t * t;
                return detail::incomplete_beta_tail(a_, b_, x, lnorm_, upper);
            }
            case CdfFamily::FSharp: {
                if (r_.is_infinite()) return detail::incomplete_gamma_tail(a_, 0.5 * t * t, lnorm_, upper);
                // G^2/d ~ F(d,r)  <=>  G^2/(G^2 + r) ~ Beta(d/2, r/2).
                const double t2 = t * t;
                const double rr = 2.0 * b_;
                const double x = t2 / (t2 + rr);
                if (x >= 1.0) return upper ? 0.0 : 1.0;
                return detail::incomplete_beta_tail(a_, b_, x, lnorm_, upper);
            }
            case CdfFamily::StudentTAbs: {
                // P(|T| > t) = I_{r/(r+t^2)}(r/2, 1/2).
                const double rr = 2.0 * a_;
                const double x = rr / (rr + t * t);
                if (x <= 0.0) return upper ? 0.0 : 1.0;
                return detail::incomplete_beta_tail(a_, b_, x, lnorm_, !upper);
            }
            case CdfFamily::NormalAbs: {
                const double s = std::erfc(t / std::numbers::sqrt2);
                return upper ? s : 1.0 - s;
            }
        }
        return 0.0;
    }

    CdfFamily family_;
    int d_;
    DofParam r_;
    double a_ = 0.0;
    double b_ = 0.0;
    double lnorm_ = 0.0;
};

/// F_Beta(1/2,(d-1)/2)(t^2).
inline double beta_half_cdf(int d, double t) {
    if (t < 0.0) throw ValidationError("beta_half_cdf: t must be nonnegative");
    return CdfHandle::beta_half(d)(t);
}

inline double fsharp_cdf(int d, DofParam r, double t) {
    if (t < 0.0) throw ValidationError("fsharp_cdf: t must be nonnegative");
    return CdfHandle::fsharp(d, r)(t);
}

inline double student_t_cdf(DofParam r, double t) {
    const double abs_cdf = CdfHandle::student_t_abs(r)(std::abs(t));
    return t >= 0.0 ? 0.5 + 0.5 * abs_cdf : 0.5 - 0.5 * abs_cdf;
}

/// q-quantile of Student's t with r degrees of freedom (standard normal when r = inf).
inline double student_t_quantile(DofParam r, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("student_t_quantile: require 0 < q < 1");
    if (q == 0.5) return 0.0;
    if (r.is_infinite()) return normal_quantile(q);
    const auto abs_cdf = CdfHandle::student_t_abs(r);
    // P(|T| <= t) = 2q - 1 for the upper half; mirror the lower half.
    const double level = q > 0.5 ? 2.0 * q - 1.0 : 1.0 - 2.0 * q;
    const double t = invert_monotone(abs_cdf, level, {0.0, 2.0}, 1e-12);
    return q > 0.5 ? t : -t;
}

/// Quantile of a CdfHandle on [0, inf).
inline double cdf_quantile(const CdfHandle& cdf, double level, double tol = kDefaultInversionTol) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("cdf_quantile: require 0 < level < 1");
    return invert_monotone(cdf, level, {0.0, 2.0}, tol);
}

}  // namespace numerics
}  // namespace posi
