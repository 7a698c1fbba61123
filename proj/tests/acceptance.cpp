// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Usage: acceptance <cli> [criterion ids...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "posi/posi.hpp"

using namespace posi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok) {
            out_.pass = false;
            if (failures_++ < 6) out_.detail += (out_.detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    Outcome result() const {
        Outcome o = out_;
        if (o.pass) o.detail = notes_;
        return o;
    }

private:
    Outcome out_;
    std::string notes_;
    int failures_ = 0;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Matrix random_matrix(int n, int p, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    Matrix X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = z(gen);
    return X;
}

McConfig mc(std::int64_t I, std::uint64_t seed, int bootstrap) {
    McConfig c;
    c.I = I;
    c.seed = seed;
    c.bootstrap = bootstrap;
    return c;
}

// ---- 1 ------------------------------------------------------------------

Outcome exact_identities() {
    Check ck;
    const double tol = 1e-6;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const int p = 3 + static_cast<int>(s);
        const Matrix X = random_matrix(12, p, 100 + s);
        const Vector x0 = random_matrix(p, 1, 200 + s).col(0);
        const auto c = canonicalize(X);
        const auto U = enumerate_universe(p, std::nullopt, c);
        for (auto r : {DofParam::infinite(), DofParam::finite(8)}) {
            const auto cfg = mc(20000, 300 + s, 0);
            const auto K4 = k4(c.d, r, 0.05, U, cfg.J, Variant::Both);
            const double K5 = k5(c.d, r, 0.05).value;
            const double K3e = k3(c, Vector(0), ModelId::empty(p), U, r, 0.05, cfg).value;
            ck.expect(std::abs(K3e - K4.value) <= tol, "K3(empty) != K4");
            for (int j = 0; j < p; ++j) {
                const ModelId M = ModelId::from_indices(p, std::vector<int>{j});
                const double v = k3(c, select_entries(x0, M), M, U, r, 0.05, cfg).value;
                ck.expect(std::abs(v - K4.value) <= tol, "K3(|M|=1) != K4: " + fmt("%.9f vs %.9f", v, K4.value));
            }
            const double K3f = k3(c, x0, ModelId::full(p), U, r, 0.05, cfg).value;
            const double K1 = k1(c, x0, U, r, 0.05, cfg).value;
            ck.expect(std::abs(K3f - K1) <= tol, "K3(full) != K1");
            ck.expect(K4.value <= *K4.value_upper, "K4 lower > upper");
            ck.expect(*K4.value_upper <= K5 + tol, "K4 > K5");
        }
    }
    // d = 1: one regressor.
    const Matrix X1 = random_matrix(7, 1, 400);
    const auto c1 = canonicalize(X1);
    const auto U1 = enumerate_universe(1, std::nullopt, c1);
    for (auto r : {DofParam::infinite(), DofParam::finite(6)}) {
        const double q = numerics::student_t_quantile(r, 0.975);
        const double K3 = k3(c1, Vector::Constant(1, 0.7), ModelId::full(1), U1, r, 0.05, mc(1000, 1, 0)).value;
        const double K4 = k4(1, r, 0.05, U1).value;
        const double K5 = k5(1, r, 0.05).value;
        ck.expect(std::abs(K3 - q) <= tol && std::abs(K4 - q) <= tol && std::abs(K5 - q) <= tol, "d = 1 collapse");
    }
    ck.note("K3/K4/K1/K5 identities on 3 designs x 2 dof, d = 1 collapse");
    return ck.result();
}

// ---- 2 ------------------------------------------------------------------

Outcome ordering_chain() {
    Check ck;
    int models = 0;
    double worst = -1e9;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const int p = 3 + static_cast<int>(s % 6);
        const Matrix X = random_matrix(2 * p + 5, p, 1000 + s);
        const Vector x0 = random_matrix(p, 1, 2000 + s).col(0);
        const auto c = canonicalize(X);
        const auto U = enumerate_universe(p, std::nullopt, c);
        const auto r = s % 2 ? DofParam::infinite() : DofParam::finite(p + 5);
        const auto cfg = mc(100000, 3000 + s, 50);
        const double naive = k_naive(r, 0.05).value;
        const auto K1 = k1(c, x0, U, r, 0.05, cfg);
        const double e1 = 3 * K1.mc_stderr.value_or(0);
        const double K4 = k4(c.d, r, 0.05, U, cfg.J).value;
        const double K5 = k5(c.d, r, 0.05).value;
        ck.expect(naive <= K1.value + e1, "naive > K1 + eps");
        ck.expect(K4 <= K5, "K4 > K5");
        ModelId M(p);
        double prev = 0, prev_e = 0;
        for (int j = 0; j < p; ++j) {
            M.insert((j * 5 + static_cast<int>(s)) % p);
            const auto K3 = k3(c, select_entries(x0, M), M, U, r, 0.05, cfg);
            const double e3 = 3 * K3.mc_stderr.value_or(0);
            ++models;
            ck.expect(K1.value <= K3.value + e1 + e3, "K1 > K3 + 2 eps at " + M.to_string());
            ck.expect(K3.value <= K4 + e3, "K3 > K4 + eps at " + M.to_string());
            if (j > 0) {
                ck.expect(K3.value <= prev + e3 + prev_e, "K3 not nested-monotone at " + M.to_string());
                worst = std::max(worst, K3.value - prev);
            }
            prev = K3.value;
            prev_e = e3;
        }
    }
    ck.note(std::to_string(models) + " models on 20 designs, largest K3 increase along a chain " + fmt("%.2e", worst));
    return ck.result();
}

// ---- 3 ------------------------------------------------------------------

Outcome golden_fixture() {
    Check ck;
    const double pi = std::numbers::pi;
    Matrix X(2, 2);
    X << 1.0, std::cos(2 * pi / 3), 0.0, std::sin(2 * pi / 3);
    const Vector x0 = X.transpose() * Vector{{std::cos(4 * pi / 3), std::sin(4 * pi / 3)}};
    const auto c = canonicalize(X);
    const auto U = enumerate_universe(2, std::nullopt, c);
    for (auto r : {DofParam::infinite(), DofParam::finite(5)}) {
        const auto K1 = k1(c, x0, U, r, 0.05, mc(1000000, 77, 50));
        const double K4 = k4(2, r, 0.05, U).value;
        const double se = K1.mc_stderr.value_or(0);
        ck.expect(se > 0 && std::abs(K1.value - K4) <= 3 * se,
                  "r = " + r.to_string() + fmt(": K1 %.6f K4 %.6f se %.2e", K1.value, K4, se));
        ck.note("r = " + r.to_string() + fmt(": K1 %.5f K4 %.5f se %.1e", K1.value, K4, se));
    }
    return ck.result();
}

// ---- 4 ------------------------------------------------------------------

Outcome orthogonal_value() {
    Check ck;
    const auto c = canonicalize(Matrix::Identity(10, 10));
    const auto U = enumerate_universe(10, std::nullopt, c);
    Vector e1 = Vector::Zero(10);
    e1(0) = 1.0;
    const auto K1 = k1(c, e1, U, DofParam::infinite(), 0.05, mc(100000, 4, 50));
    ck.expect(std::abs(K1.value - 1.960) <= 0.02, fmt("K1 = %.5f", K1.value));
    ck.note(fmt("K1 = %.5f (se %.1e)", K1.value, K1.mc_stderr.value_or(0)));
    return ck.result();
}

// ---- 5 ------------------------------------------------------------------

Outcome asymptotic_constants() {
    Check ck;
    std::vector<double> ratios;
    for (int p : {10, 20, 30}) {
        const std::uint64_t count = (std::uint64_t{1} << p) - 1;
        const double K4 = k4(p, DofParam::infinite(), 0.05, count).value;
        const double K5 = k5(p, DofParam::infinite(), 0.05).value;
        const double ratio = K4 / std::sqrt(p);
        ratios.push_back(ratio);
        ck.expect(K4 < K5, "K4 >= K5 at p = " + std::to_string(p));
        ck.note("p = " + std::to_string(p) + fmt(": K4/sqrt(p) %.4f, K5/sqrt(p) %.4f", ratio, K5 / std::sqrt(p)));
    }
    ck.expect(ratios[2] >= 0.78 && ratios[2] <= 0.95, fmt("ratio at p = 30 is %.4f", ratios[2]));
    const double target = std::sqrt(3.0) / 2;
    ck.expect(std::abs(ratios[1] - target) < std::abs(ratios[0] - target) &&
                  std::abs(ratios[2] - target) < std::abs(ratios[1] - target),
              "no monotone approach to sqrt(3)/2");
    return ck.result();
}

// ---- 6 ------------------------------------------------------------------

Outcome fixed_model_coverage() {
    Check ck;
    const auto g = gen_design(SigmaFamily::equicorrelated(3), 20, 4, true, 6);
    const auto c = canonicalize(g.X);
    const ModelId M = ModelId::from_indices(4, std::vector<int>{0, 2});
    CoverageContext ctx(g.X, g.x0, enumerate_universe(4, std::nullopt, c), 0.05, SelectorSpec::fixed(M), {},
                        {ConstantKind::Naive}, {TargetKind::DesignDependent}, mc(1000, 6, 0));
    const Vector beta = beta_candidate(g.X, 6, 0);
    const auto e = coverage_at(ctx, beta, 1.0, ConstantKind::Naive, TargetKind::DesignDependent, 100000, 66);
    ck.expect(std::abs(e.coverage - 0.95) <= 3 * e.stderr_value, fmt("coverage %.5f se %.5f", e.coverage, e.stderr_value));
    ck.note(fmt("coverage %.5f (se %.5f)", e.coverage, e.stderr_value));
    return ck.result();
}

// ---- 7 ------------------------------------------------------------------

Outcome posi_validity() {
    Check ck;
    const auto g = gen_design(SigmaFamily::equicorrelated(3), 20, 4, true, 7);
    const auto c = canonicalize(g.X);
    bool naive_low = false;
    for (const auto& spec : {SelectorSpec::aic({0}), SelectorSpec::bic({0}), SelectorSpec::lasso_cv({0})}) {
        CoverageContext ctx(g.X, g.x0, enumerate_universe(4, std::nullopt, c), 0.1, spec, {},
                            {ConstantKind::Naive, ConstantKind::K1}, {TargetKind::DesignDependent},
                            McConfig::defaults_for(4, 7));
        CoverageSearchConfig cfg;
        cfg.seed = 70;
        const auto rep = minimal_coverage_search(ctx, cfg);
        const auto& naive = rep.coverage[0];
        const auto& K1 = rep.coverage[1];
        ck.expect(K1.min_coverage >= 0.9 - 3 * K1.stderr_value,
                  spec.label + fmt(": K1 minimum %.4f se %.4f", K1.min_coverage, K1.stderr_value));
        if (naive.min_coverage < 0.9 - 3 * naive.stderr_value) naive_low = true;
        ck.note(spec.label + fmt(": naive %.4f, K1 %.4f (se %.4f)", naive.min_coverage, K1.min_coverage, K1.stderr_value));
    }
    ck.expect(naive_low, "naive minimum not below 0.9 - 3 se for any selector");
    return ck.result();
}

// ---- 8 ------------------------------------------------------------------

Outcome target_convergence() {
    Check ck;
    const SigmaFamily fam = SigmaFamily::equicorrelated(3);
    const Matrix Sigma = fam.second_moment(true);
    const Vector beta{{0.5, 0.4, 0.25, 0.0}};
    std::vector<double> gaps;
    for (int n : {50, 400}) {
        const auto g = gen_design(fam, n, 4, true, 8);
        const auto c = canonicalize(g.X);
        CoverageContext ctx(g.X, g.x0, enumerate_universe(4, std::nullopt, c), 0.1, SelectorSpec::bic({0}), {},
                            {ConstantKind::K1}, {TargetKind::DesignDependent, TargetKind::DesignIndependent},
                            McConfig::defaults_for(4, 8), Sigma);
        ctx.warm_up();
        const auto h = run_replications(ctx, beta, 1.0, 20000, 88, 0, 0);
        const double dep = h.coverage(0), ind = h.coverage(1);
        gaps.push_back(std::abs(dep - ind));
        if (n == 400) {
            ck.expect(ind >= 0.9 - 3 * h.stderr_of(1), fmt("n = 400 independent coverage %.4f", ind));
        }
        ck.note("n = " + std::to_string(n) + fmt(": dependent %.4f, independent %.4f, gap %.4f", dep, ind, gaps.back()));
    }
    ck.expect(gaps[1] < gaps[0], fmt("gap did not shrink: %.4f -> %.4f", gaps[0], gaps[1]));
    return ck.result();
}

// ---- 9 ------------------------------------------------------------------

Outcome numerics_oracles() {
    Check ck;
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> ab(0.5, 20.0), xs(0.001, 0.999);
    boost::math::quadrature::tanh_sinh<double> integrator(15);
    double worst_beta = 0;
    for (int k = 0; k < 100; ++k) {
        const double a = ab(gen), b = ab(gen), x = xs(gen);
        auto f = [&](double t) { return std::exp((a - 1) * std::log(t) + (b - 1) * std::log1p(-t)); };
        const double oracle = integrator.integrate(f, 0.0, x) / boost::math::beta(a, b);
        worst_beta = std::max(worst_beta, std::abs(numerics::reg_incomplete_beta(a, b, x) - oracle));
    }
    ck.expect(worst_beta < 1e-8, fmt("incomplete beta error %.2e", worst_beta));

    double worst_rt = 0;
    for (int d : {1, 2, 3, 7, 20, 60}) {
        for (auto r : {DofParam::infinite(), DofParam::finite(2), DofParam::finite(15), DofParam::finite(200)}) {
            const auto F = numerics::CdfHandle::fsharp(d, r);
            for (double q : {0.01, 0.3, 0.5, 0.9, 0.95, 0.999}) {
                worst_rt = std::max(worst_rt, std::abs(F(numerics::cdf_quantile(F, q, 1e-12)) - q));
            }
        }
    }
    for (double q : {1e-6, 0.02, 0.5, 0.975, 1 - 1e-6}) {
        worst_rt = std::max(worst_rt, std::abs(numerics::normal_cdf(numerics::normal_quantile(q)) - q));
        for (auto r : {DofParam::finite(1), DofParam::finite(4), DofParam::finite(30)}) {
            worst_rt = std::max(worst_rt, std::abs(numerics::student_t_cdf(r, numerics::student_t_quantile(r, q)) - q));
        }
    }
    ck.expect(worst_rt < 1e-7, fmt("round-trip error %.2e", worst_rt));

    double worst_kkt = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const int n = 20 + static_cast<int>(s % 30), p = 2 + static_cast<int>(s % 12);
        const Matrix X = random_matrix(n, p, 900 + s);
        const Vector Y = random_matrix(n, 1, 1900 + s).col(0);
        const double lmax = (X.transpose() * Y).cwiseAbs().maxCoeff() / n;
        const double lambda = lmax * (0.01 + 0.0098 * static_cast<double>(s));
        const Vector b = lasso_cd(X, Y, lambda);
        const Vector g = X.transpose() * (Y - X * b) / n;
        for (int j = 0; j < p; ++j) {
            worst_kkt = std::max(worst_kkt, b(j) != 0 ? std::abs(g(j) - lambda * (b(j) > 0 ? 1 : -1))
                                                       : std::max(0.0, std::abs(g(j)) - lambda));
        }
    }
    ck.expect(worst_kkt < 1e-6, fmt("KKT residual %.2e", worst_kkt));
    ck.note(fmt("beta %.1e, round trips %.1e, KKT %.1e", worst_beta, worst_rt, worst_kkt));
    return ck.result();
}

// ---- 10 -----------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int shell(const std::string& cmd) { return std::system(cmd.c_str()); }

Outcome determinism(const std::string& cli) {
    Check ck;
    const fs::path dir = fs::temp_directory_path() / "posi_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    if (shell(cli + " gen-data --family equicorrelated --p 5 --n 20 --seed 3 --out " + d + "/data > /dev/null") != 0) {
        ck.expect(false, "gen-data failed");
        return ck.result();
    }
    {
        const Matrix X = io::read_csv_matrix(d + "/data/X.csv");
        Vector Y = X * Vector::LinSpaced(5, 1.0, 0.0) + random_matrix(20, 1, 10).col(0);
        io::write_csv_row(d + "/data/y.csv", Y);
    }
    const std::string design = " --design " + d + "/data/X.csv --x0 " + d + "/data/x0.csv";
    const std::vector<std::pair<std::string, std::string>> cmds = {
        {"gen", "gen-data --family exchangeable --a 10 --p 10 --n 20 --seed 7 --out " + d + "/OUT"},
        {"k1", "constant --constant k1 --alpha 0.05 --dof 15 --seed 11 --mc 20000" + design},
        {"k3", "constant --constant k3:1,3 --alpha 0.05 --dof 15 --seed 11 --mc 20000" + design},
        {"k2", "constant --constant k2:1,3 --alpha 0.05 --known-variance --seed 11 --k2-n1 50 --k2-i1 300 "
               "--k2-n2 5 --k2-i2 2000 --k2-i3 5000 --bootstrap 10" + design},
        {"k4", "constant --constant k4 --alpha 0.05 --dof 15 --seed 11 --variant both" + design},
        {"interval", "interval --selector lasso-cv --protected 1 --constant k3 --alpha 0.1 --seed 12 --mc 20000 --y " +
                         d + "/data/y.csv" + design},
        {"lengths", "lengths --alpha 0.05 --dof 15 --seed 13 --mc 10000 --constants naive,k1,k3,k4,k5 --out " + d +
                        "/OUT" + design},
        {"coverage", "coverage --p 4 --n 20 --alpha 0.1 --selector lasso-cv --protected 1 --constants naive,k1,k3 "
                     "--target both --seed 14 --mc 5000 --m1 8 --I1 40 --m2 2 --I2 80 --I3 160 --out " + d + "/OUT"},
        {"coverage-B", "coverage --p 4 --n 20 --alpha 0.1 --selector bic --protected 1 --constants naive,k1 "
                       "--sigma pms --seed 15 --mc 5000 --B 2000 --out " + d + "/OUT"},
    };
    int compared = 0;
    for (const auto& [name, args] : cmds) {
        std::vector<std::string> outputs;
        for (int threads : {1, 4}) {
            const std::string tag = name + "_t" + std::to_string(threads);
            std::string a = args;
            const auto pos = a.find("/OUT");
            if (pos != std::string::npos) a.replace(pos, 4, "/" + tag);
            const int rc = shell(cli + " " + a + " --threads " + std::to_string(threads) + " > " + d + "/" + tag +
                                 ".stdout 2> /dev/null");
            ck.expect(rc == 0, name + " exited with " + std::to_string(rc));
            std::string all = slurp(dir / (tag + ".stdout"));
            if (fs::exists(dir / tag)) {
                std::vector<fs::path> files;
                for (const auto& e : fs::directory_iterator(dir / tag)) files.push_back(e.path());
                std::sort(files.begin(), files.end());
                for (const auto& f : files) all += "\n--" + f.filename().string() + "\n" + slurp(f);
            }
            // Output paths differ by design; compare everything else.
            for (auto pos = all.find(tag); pos != std::string::npos; pos = all.find(tag, pos)) all.replace(pos, tag.size(), "OUT");
            outputs.push_back(all);
        }
        ck.expect(!outputs[0].empty() && outputs[0] == outputs[1], name + " differs across --threads");
        ++compared;
    }
    fs::remove_all(dir);
    ck.note(std::to_string(compared) + " commands byte-identical at --threads 1 and 4");
    return ck.result();
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "./posi";
    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "exact identities", exact_identities},
        {2, "ordering chain", ordering_chain},
        {3, "equal-angle fixture", golden_fixture},
        {4, "orthogonal design", orthogonal_value},
        {5, "asymptotic constants", asymptotic_constants},
        {6, "fixed-model coverage", fixed_model_coverage},
        {7, "validity at desk scale", posi_validity},
        {8, "target convergence", target_convergence},
        {9, "numerics oracles", numerics_oracles},
        {10, "determinism", [&] { return determinism(cli); }},
    };
    std::vector<int> only;
    for (int i = 2; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failed;
        std::printf("criterion %2d %s: %s (%.1f s) %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
