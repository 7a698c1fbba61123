// Small end-to-end run: generate a design, compute the constants at x0, then
// select a model on simulated data and print the resulting intervals.

#include <cstdio>

#include "posi/posi.hpp"

int main() {
    using namespace posi;
    const std::uint64_t seed = 2024;
    const int n = 30, p = 5;
    const GeneratedDesign gd = gen_design(SigmaFamily::equicorrelated(p - 1), n, p, true, seed);
    const CanonicalDesign canon = canonicalize(gd.X);
    const ModelUniverse U = enumerate_universe(p, std::nullopt, canon);
    const DofParam r = DofParam::finite(n - canon.d);
    const double alpha = 0.05;

    McConfig cfg;
    cfg.I = 20000;
    cfg.seed = seed;
    cfg.bootstrap = 20;

    std::printf("n = %d, p = %d, |U| = %zu\n", n, p, U.size());
    const auto naive = k_naive(r, alpha);
    const auto K1 = k1(canon, gd.x0, U, r, alpha, cfg);
    const auto K4 = k4(canon.d, r, alpha, U, cfg.J);
    const auto K5 = k5(canon.d, r, alpha);
    std::printf("naive %.4f  K1 %.4f (+- %.4f)  K4 %.4f  K5 %.4f\n", naive.value, K1.value,
                K1.mc_stderr.value_or(0.0), K4.value, K5.value);

    // One simulated data set with two active regressors.
    Vector beta = Vector::Zero(p);
    beta(0) = 1.0;
    beta(2) = 0.8;
    numerics::RngStream stream(seed, numerics::StreamTag::Replication);
    Vector Y = gd.X * beta;
    for (int i = 0; i < n; ++i) Y(i) += stream.normal();

    const ModelId M = select_greedy_ic(gd.X, Y, SelectorSpec::bic({0}));
    const double sigma_hat = std::sqrt(sigma_hat_full(gd.X, Y).sigma2);
    const Vector bhat = restricted_ols(gd.X, Y, M);
    const double sn = s_vector(canon, gd.x0, M).norm;
    const auto K3 = k3(canon, select_entries(gd.x0, M), M, U, r, alpha, cfg);
    const double truth = select_entries(gd.x0, M).dot(beta_target_n(gd.X, gd.X * beta, M));

    std::printf("selected model %s, target %.4f\n", M.to_string().c_str(), truth);
    for (const auto& K : {naive, K1, K3, K4, K5}) {
        const auto iv = build_interval(gd.x0, M, bhat, K, sn, sigma_hat);
        std::printf("  %-5s [%8.4f, %8.4f]  %s\n", to_string(K.kind).c_str(), iv.lower(), iv.upper(),
                    covers(iv, truth) ? "covers" : "misses");
    }
    return 0;
}
