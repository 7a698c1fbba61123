// Command-line front end: constants, intervals, coverage searches, length
// studies and synthetic designs.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "posi/posi.hpp"
#include "posi/serialize.hpp"

#ifndef POSI_GIT_HASH
#define POSI_GIT_HASH "unknown"
#endif

namespace {

using namespace posi;

struct Common {
    std::string design;
    bool header = false;
    std::string x0;
    double alpha = 0.05;
    std::optional<std::int64_t> dof;
    bool known_variance = false;
    std::string universe = "all";
    std::optional<std::uint64_t> seed;
    std::int64_t mc = 0;  // 0: default for p
    int grid = 10000;
    std::string variant = "lower";
    int bootstrap = 50;
    int threads = 0;
};

void add_design_flags(CLI::App* app, Common& c) {
    app->add_option("--design", c.design, "design matrix CSV (rows are observations)");
    app->add_flag("--header", c.header, "the CSV files start with a header row");
    app->add_option("--x0", c.x0, "CSV with the prediction point x0 (one row)");
    app->add_option("--alpha", c.alpha, "nominal level: intervals target coverage 1 - alpha")->check(CLI::Range(0.0, 1.0));
    app->add_option("--universe", c.universe,
                    "model universe: all (power set), max:<k> (models of size <= k) or file:<path>");
    app->add_option("--threads", c.threads, "worker threads (default: POSI_THREADS, else all cores)");
}

void add_dof_flags(CLI::App* app, Common& c) {
    auto* dof = app->add_option("--dof", c.dof, "degrees of freedom r of the independent variance estimate");
    auto* kv = app->add_flag("--known-variance", c.known_variance, "variance known (r = infinity)");
    dof->excludes(kv);
    kv->excludes(dof);
}

void add_mc_flags(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "master seed for every random stream (required for stochastic constants)");
    app->add_option("--mc", c.mc, "sphere samples I for the sampled constants (default 1e5 for p <= 12, else 1e3)");
    app->add_option("--grid", c.grid, "step-function grid size J of the union-bound constants")->check(CLI::Range(2, 100000000));
    app->add_option("--variant", c.variant, "lower, upper or both step-function bounds")
        ->check(CLI::IsMember({"lower", "upper", "both"}));
    app->add_option("--bootstrap", c.bootstrap, "bootstrap resamples for the Monte Carlo stderr (0 disables)");
}

Variant parse_variant(const std::string& s) {
    if (s == "upper") return Variant::Upper;
    if (s == "both") return Variant::Both;
    return Variant::Lower;
}

struct LoadedDesign {
    Matrix X;
    Vector x0;
    CanonicalDesign canon;
};

LoadedDesign load_design(const Common& c, bool need_x0 = true) {
    if (c.design.empty()) throw ValidationError("--design is required");
    LoadedDesign d;
    d.X = io::read_csv_matrix(c.design, c.header);
    if (need_x0) {
        if (c.x0.empty()) throw ValidationError("--x0 is required");
        d.x0 = io::read_csv_vector(c.x0, c.header);
        DesignProblem{d.X, d.x0, c.alpha, DofParam::infinite()}.validate();
    }
    d.canon = canonicalize(d.X);
    return d;
}

ModelUniverse load_universe(const Common& c, const CanonicalDesign& canon) {
    const std::string& u = c.universe;
    if (u == "all") return enumerate_universe(canon.p(), std::nullopt, canon);
    if (u.rfind("max:", 0) == 0) {
        int k = 0;
        try {
            k = std::stoi(u.substr(4));
        } catch (const std::exception&) {
            throw ValidationError("--universe: cannot parse '" + u + "'");
        }
        if (k < 1) throw ValidationError("--universe max:<k> needs k >= 1");
        return enumerate_universe(canon.p(), k, canon);
    }
    if (u.rfind("file:", 0) == 0) return io::read_universe(u.substr(5), canon);
    throw ValidationError("--universe must be all, max:<k> or file:<path>");
}

DofParam resolve_dof(const Common& c) {
    if (c.known_variance) return DofParam::infinite();
    if (c.dof) return DofParam::finite(*c.dof);
    throw ValidationError("one of --dof or --known-variance is required");
}

std::uint64_t require_seed(const Common& c, const std::string& what) {
    if (!c.seed) throw ValidationError("--seed is required for " + what);
    return *c.seed;
}

McConfig mc_config(const Common& c, int p, std::uint64_t seed) {
    McConfig cfg = McConfig::defaults_for(p, seed);
    if (c.mc > 0) cfg.I = c.mc;
    cfg.J = c.grid;
    cfg.variant = parse_variant(c.variant);
    cfg.bootstrap = c.bootstrap;
    return cfg;
}

/// "0" or "" is the empty model, otherwise comma-separated 1-based indices.
ModelId parse_model_token(const std::string& tok, int p) {
    if (tok == "0" || tok.empty()) return ModelId::empty(p);
    if (tok == "full") return ModelId::full(p);
    return io::parse_model(tok, p);
}

std::vector<int> parse_index_list(const std::string& s, int p) {
    const ModelId M = parse_model_token(s, p);
    return M.indices();
}

struct K2Flags {
    std::int64_t n1 = 100000, i1 = 1000, n2 = 1000, i2 = 100000, i3 = 1000000;
};

void add_k2_flags(CLI::App* app, K2Flags& k) {
    app->add_option("--k2-n1", k.n1, "K2 search: candidates scored in the first step");
    app->add_option("--k2-i1", k.i1, "K2 search: sphere samples per first-step candidate");
    app->add_option("--k2-n2", k.n2, "K2 search: candidates kept for the second step");
    app->add_option("--k2-i2", k.i2, "K2 search: sphere samples per second-step candidate");
    app->add_option("--k2-i3", k.i3, "K2 search: sphere samples for the final value");
}

K2SearchConfig k2_config(const K2Flags& k, std::uint64_t seed, int bootstrap) {
    K2SearchConfig s;
    s.N1 = k.n1;
    s.I1 = k.i1;
    s.N2 = k.n2;
    s.I2 = k.i2;
    s.I3 = k.i3;
    s.seed = seed;
    s.bootstrap = bootstrap;
    return s;
}

ConstantKind parse_kind(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s == "naive") return ConstantKind::Naive;
    if (s == "k1") return ConstantKind::K1;
    if (s == "k2") return ConstantKind::K2;
    if (s == "k3") return ConstantKind::K3;
    if (s == "k4") return ConstantKind::K4;
    if (s == "k5") return ConstantKind::K5;
    if (s == "k6") return ConstantKind::K6;
    throw ValidationError("unknown constant '" + s + "' (naive, k1..k6)");
}

std::vector<ConstantKind> parse_kinds(const std::string& list) {
    std::vector<ConstantKind> out;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(parse_kind(tok));
    }
    if (out.empty()) throw ValidationError("--constants: empty list");
    return out;
}

struct SelectorFlags {
    std::string selector = "aic";
    std::string protect;
    int folds = 10;
};

void add_selector_flags(CLI::App* app, SelectorFlags& s) {
    app->add_option("--selector", s.selector,
                    "model selector: aic, bic, lasso-cv, lasso-fixed:<lambda> or fixed:<indices> (fixed:0 = empty)");
    app->add_option("--protected", s.protect, "comma-separated 1-based indices always kept in the model");
    app->add_option("--folds", s.folds, "cross-validation folds for lasso-cv")->check(CLI::Range(2, 1000));
}

SelectorSpec parse_selector(const SelectorFlags& f, int p) {
    const std::vector<int> prot = f.protect.empty() ? std::vector<int>{} : parse_index_list(f.protect, p);
    const std::string& s = f.selector;
    SelectorSpec spec;
    if (s == "aic") {
        spec = SelectorSpec::aic(prot);
    } else if (s == "bic") {
        spec = SelectorSpec::bic(prot);
    } else if (s == "lasso-cv") {
        spec = SelectorSpec::lasso_cv(prot, f.folds);
    } else if (s.rfind("lasso-fixed:", 0) == 0) {
        double lambda = 0.0;
        try {
            lambda = std::stod(s.substr(12));
        } catch (const std::exception&) {
            throw ValidationError("--selector: cannot parse lambda in '" + s + "'");
        }
        spec = SelectorSpec::lasso_fixed(lambda, prot);
    } else if (s.rfind("fixed:", 0) == 0) {
        spec = SelectorSpec::fixed(parse_model_token(s.substr(6), p));
    } else {
        throw ValidationError("--selector must be aic, bic, lasso-cv, lasso-fixed:<lambda> or fixed:<indices>");
    }
    spec.label = s;
    spec.validate(p);
    return spec;
}

SigmaSource parse_sigma(const std::string& s) {
    SigmaSource src;
    if (s == "full") return src;
    if (s == "pms") {
        src.kind = SigmaSourceKind::Pms;
        return src;
    }
    if (s.rfind("fixed:", 0) == 0) {
        src.kind = SigmaSourceKind::Fixed;
        try {
            src.value = std::stod(s.substr(6));
        } catch (const std::exception&) {
            throw ValidationError("--sigma: cannot parse '" + s + "'");
        }
        if (!(src.value > 0.0)) throw ValidationError("--sigma fixed:<v> needs v > 0");
        return src;
    }
    throw ValidationError("--sigma must be full, pms or fixed:<v>");
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--out is required");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
}

// ---- constant ----------------------------------------------------------

struct ConstantCmd {
    Common c;
    std::string constant;
    K2Flags k2;
};

int run_constant(const ConstantCmd& a) {
    const std::string& tok = a.constant;
    const DofParam r = resolve_dof(a.c);
    ConstantEstimate e;
    if (tok == "naive") {
        e = k_naive(r, a.c.alpha);
    } else {
        const bool needs_x0 = tok != "k4" && tok != "k5" && tok != "k6";
        const LoadedDesign d = load_design(a.c, needs_x0);
        const int p = d.canon.p();
        if (tok == "k5") {
            e = k5(d.canon.d, r, a.c.alpha);
        } else if (tok == "k6") {
            e = k6(d.canon.d, r, a.c.alpha);
        } else {
            const ModelUniverse U = load_universe(a.c, d.canon);
            if (tok == "k4") {
                const McConfig cfg = mc_config(a.c, p, a.c.seed.value_or(0));
                e = k4(d.canon.d, r, a.c.alpha, count_not_subset(ModelId::empty(p), U), cfg.J, cfg.variant);
                e.config = cfg;
                e.config->I = 0;
            } else if (tok == "k1") {
                e = k1(d.canon, d.x0, U, r, a.c.alpha, mc_config(a.c, p, require_seed(a.c, "k1")));
            } else if (tok.rfind("k3:", 0) == 0 || tok.rfind("k2:", 0) == 0) {
                const ModelId M = parse_model_token(tok.substr(3), p);
                const Vector xm = select_entries(d.x0, M);
                if (tok[1] == '3') {
                    e = k3(d.canon, xm, M, U, r, a.c.alpha, mc_config(a.c, p, require_seed(a.c, "k3")));
                } else {
                    e = k2(d.canon, xm, M, U, r, a.c.alpha, k2_config(a.k2, require_seed(a.c, "k2"), a.c.bootstrap));
                }
            } else {
                throw ValidationError("--constant must be naive, k1, k2:<model>, k3:<model>, k4, k5 or k6");
            }
        }
    }
    std::cout << to_json(e).dump() << '\n';
    return 0;
}

// ---- interval ----------------------------------------------------------

struct IntervalCmd {
    Common c;
    SelectorFlags sel;
    std::string y;
    std::string constant = "k1";
    std::string sigma = "full";
    K2Flags k2;
};

int run_interval(const IntervalCmd& a) {
    const LoadedDesign d = load_design(a.c);
    const int p = d.canon.p();
    if (a.y.empty()) throw ValidationError("--y is required");
    const Vector Y = io::read_csv_vector(a.y, a.c.header);
    if (Y.size() != d.X.rows()) throw ValidationError("--y length differs from the rows of the design");
    const SelectorSpec spec = parse_selector(a.sel, p);
    const SigmaSource src = parse_sigma(a.sigma);
    const ConstantKind kind = parse_kind(a.constant);
    const bool stochastic = kind == ConstantKind::K1 || kind == ConstantKind::K2 || kind == ConstantKind::K3 ||
                            spec.kind == SelectorKind::LassoCv;
    const std::uint64_t seed = stochastic ? require_seed(a.c, "this constant/selector") : a.c.seed.value_or(0);

    numerics::RngStream sel_stream(seed, numerics::StreamTag::Selector);
    const ModelId M = select_model(d.X, Y, spec, sel_stream);
    double sigma_hat = 0.0;
    DofParam r = DofParam::infinite();
    bool degenerate = false;
    if (src.kind == SigmaSourceKind::Full) {
        const auto s = sigma_hat_full(d.X, Y);
        sigma_hat = std::sqrt(s.sigma2);
        r = s.r;
        degenerate = s.degenerate;
    } else if (src.kind == SigmaSourceKind::Pms) {
        const auto s = sigma_hat_pms(d.X, Y, M);
        sigma_hat = std::sqrt(s.sigma2);
        r = s.r;
        degenerate = s.degenerate;
    } else {
        sigma_hat = src.value;
    }
    if (degenerate) std::cerr << "warning: residual variance estimate is zero (exact fit)\n";

    ConstantEstimate K;
    if (M.is_empty()) {
        K.kind = kind;
    } else {
        const ModelUniverse U = load_universe(a.c, d.canon);
        const McConfig cfg = mc_config(a.c, p, seed);
        switch (kind) {
            case ConstantKind::Naive: K = k_naive(r, a.c.alpha); break;
            case ConstantKind::K1: K = k1(d.canon, d.x0, U, r, a.c.alpha, cfg); break;
            case ConstantKind::K2:
                K = k2(d.canon, select_entries(d.x0, M), M, U, r, a.c.alpha, k2_config(a.k2, seed, cfg.bootstrap));
                break;
            case ConstantKind::K3: K = k3(d.canon, select_entries(d.x0, M), M, U, r, a.c.alpha, cfg); break;
            case ConstantKind::K4:
                K = k4(d.canon.d, r, a.c.alpha, count_not_subset(ModelId::empty(p), U), cfg.J, Variant::Lower);
                break;
            case ConstantKind::K5: K = k5(d.canon.d, r, a.c.alpha); break;
            case ConstantKind::K6: K = k6(d.canon.d, r, a.c.alpha); break;
        }
    }
    const Vector bhat = restricted_ols(d.X, Y, M);
    const double sn = s_vector(d.canon, d.x0, M).norm;
    const PredictionInterval iv = build_interval(d.x0, M, bhat, K, sn, sigma_hat);
    Json j = to_json(iv);
    j["selector"] = a.sel.selector;
    j["sigma_hat"] = sigma_hat;
    j["dof"] = r.to_string();
    j["s_norm"] = sn;
    j["constant"] = to_json(K);
    std::cout << j.dump() << '\n';
    return 0;
}

// ---- gen-data -----------------------------------------------------------

struct GenCmd {
    std::string family = "iid";
    double a = 10.0;
    std::optional<double> c;
    int p = 10;
    int n = 20;
    std::optional<std::uint64_t> seed;
    bool no_intercept = false;
    std::string out;
    int threads = 0;
};

SigmaFamily make_family(const std::string& name, int p_tilde, double a, std::optional<double> c) {
    if (name == "exchangeable") return SigmaFamily::exchangeable(p_tilde, a);
    if (name == "equicorrelated") return SigmaFamily::equicorrelated(p_tilde, c);
    if (name == "iid") return SigmaFamily::iid(p_tilde);
    throw ValidationError("--family must be exchangeable, equicorrelated or iid");
}

void add_family_flags(CLI::App* app, GenCmd& g) {
    app->add_option("--family", g.family, "regressor covariance: exchangeable, equicorrelated or iid");
    app->add_option("--a", g.a, "exchangeable family parameter a");
    app->add_option("--c", g.c, "equicorrelated family parameter c (default sqrt(0.8/(p~-1)))");
    app->add_option("--p", g.p, "number of regressors p, intercept included")->check(CLI::Range(1, 100000));
    app->add_option("--n", g.n, "number of observations n")->check(CLI::Range(1, 100000000));
    app->add_flag("--no-intercept", g.no_intercept, "omit the constant first regressor");
}

int run_gen(const GenCmd& g) {
    if (!g.seed) throw ValidationError("--seed is required for gen-data");
    const bool intercept = !g.no_intercept;
    const SigmaFamily fam = make_family(g.family, intercept ? g.p - 1 : g.p, g.a, g.c);
    const GeneratedDesign gd = gen_design(fam, g.n, g.p, intercept, *g.seed);
    ensure_dir(g.out);
    io::write_csv_matrix(g.out + "/X.csv", gd.X);
    io::write_csv_row(g.out + "/x0.csv", gd.x0);
    io::write_csv_matrix(g.out + "/Sigma.csv", fam.second_moment(intercept));
    Json meta;
    meta["command"] = "gen-data";
    meta["family"] = fam.name();
    meta["n"] = g.n;
    meta["p"] = g.p;
    meta["intercept"] = intercept;
    meta["seed"] = *g.seed;
    meta["regenerations"] = gd.regenerations;
    meta["git"] = POSI_GIT_HASH;
    write_json(g.out + "/meta.json", meta);
    std::cout << "wrote " << g.out << "/X.csv, x0.csv, Sigma.csv (" << g.n << " x " << g.p << ", " << fam.name()
              << ")\n";
    return 0;
}

// ---- lengths ------------------------------------------------------------

struct LengthsCmd {
    Common c;
    std::string chain;
    std::string constants = "naive,k1,k3,k4,k5";
    std::string out;
    K2Flags k2;
};

std::vector<ModelId> parse_chain(const std::string& s, int p) {
    std::vector<ModelId> chain;
    if (s.empty()) {
        ModelId M(p);
        chain.push_back(M);
        for (int j = 0; j < p; ++j) {
            M.insert(j);
            chain.push_back(M);
        }
        return chain;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ';')) chain.push_back(parse_model_token(tok, p));
    return chain;
}

int run_lengths(const LengthsCmd& a) {
    const std::uint64_t seed = require_seed(a.c, "lengths");
    const LoadedDesign d = load_design(a.c);
    const int p = d.canon.p();
    const DofParam r = resolve_dof(a.c);
    const ModelUniverse U = load_universe(a.c, d.canon);
    const auto chain = parse_chain(a.chain, p);
    const auto kinds = parse_kinds(a.constants);
    const McConfig cfg = mc_config(a.c, p, seed);
    SimulationReport rep;
    rep.lengths = length_study(d.canon, d.x0, chain, U, kinds, r, a.c.alpha, cfg, k2_config(a.k2, seed, 0));
    rep.partial = interrupt_flag().load();
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_lengths_csv(a.out + "/lengths.csv", rep.lengths);
        write_json(a.out + "/report.json", to_json(rep));
        Json meta;
        meta["command"] = "lengths";
        meta["seed"] = seed;
        meta["git"] = POSI_GIT_HASH;
        meta["config"] = {{"design", a.c.design}, {"x0", a.c.x0}, {"alpha", a.c.alpha}, {"dof", r.to_string()},
                          {"universe", a.c.universe}, {"I", cfg.I}, {"J", cfg.J}, {"constants", a.constants},
                          {"chain", a.chain}};
        meta["partial"] = rep.partial;
        write_json(a.out + "/meta.json", meta);
    }
    std::printf("%-6s %-24s %14s %14s\n", "const", "model", "K", "2K||s||");
    for (const auto& row : rep.lengths) {
        std::printf("%-6s %-24s %14.6f %14.6f\n", to_string(row.kind).c_str(), row.model.to_string().c_str(),
                    row.constant, row.length);
    }
    if (rep.partial) std::printf("partial: true\n");
    return 0;
}

// ---- coverage -----------------------------------------------------------

struct CoverageCmd {
    Common c;
    SelectorFlags sel;
    GenCmd gen;
    std::optional<std::uint64_t> design_seed;
    std::string constants = "naive,k1,k4,k5";
    std::string target = "dependent";
    std::string sigma = "full";
    std::string sigma_matrix;
    std::string beta;
    std::int64_t B = 0;
    std::int64_t m1 = 0, I1 = 0, m2 = 0, I2 = 0, I3 = 0;
    bool paper_scale = false;
    std::string out;
};

int run_coverage(const CoverageCmd& a) {
    const std::uint64_t seed = require_seed(a.c, "coverage");
    Matrix X;
    Vector x0;
    Matrix Sigma;
    std::string design_source;
    if (!a.c.design.empty()) {
        const LoadedDesign d = load_design(a.c);
        X = d.X;
        x0 = d.x0;
        design_source = a.c.design;
        if (!a.sigma_matrix.empty()) Sigma = io::read_csv_matrix(a.sigma_matrix, a.c.header);
    } else {
        const bool intercept = !a.gen.no_intercept;
        const SigmaFamily fam = make_family(a.gen.family, intercept ? a.gen.p - 1 : a.gen.p, a.gen.a, a.gen.c);
        const GeneratedDesign gd = gen_design(fam, a.gen.n, a.gen.p, intercept, a.design_seed.value_or(seed));
        X = gd.X;
        x0 = gd.x0;
        Sigma = fam.second_moment(intercept);
        design_source = "generated:" + fam.name();
    }
    const int p = static_cast<int>(X.cols());
    std::vector<TargetKind> targets;
    if (a.target == "dependent" || a.target == "both") targets.push_back(TargetKind::DesignDependent);
    if (a.target == "independent" || a.target == "both") targets.push_back(TargetKind::DesignIndependent);
    if (targets.empty()) throw ValidationError("--target must be dependent, independent or both");
    const CanonicalDesign canon = canonicalize(X);
    ModelUniverse U = load_universe(a.c, canon);
    McConfig mc = mc_config(a.c, p, seed);
    mc.bootstrap = 0;
    const SelectorSpec spec = parse_selector(a.sel, p);
    const auto kinds = parse_kinds(a.constants);
    CoverageContext ctx(X, x0, std::move(U), a.c.alpha, spec, parse_sigma(a.sigma), kinds, targets, mc, Sigma);

    CoverageSearchConfig cfg = a.paper_scale ? CoverageSearchConfig::paper_scale(seed) : CoverageSearchConfig{};
    cfg.seed = seed;
    if (a.m1) cfg.m1 = a.m1;
    if (a.I1) cfg.I1 = a.I1;
    if (a.m2) cfg.m2 = a.m2;
    if (a.I2) cfg.I2 = a.I2;
    if (a.I3) cfg.I3 = a.I3;

    SimulationReport rep;
    Json mode;
    if (a.B > 0) {
        // Coverage at a single parameter.
        Vector beta = a.beta.empty() ? beta_candidate(X, seed, 0) : io::read_csv_vector(a.beta, a.c.header);
        if (beta.size() != p) throw ValidationError("--beta has the wrong length");
        ctx.warm_up();
        const HitCounts h = run_replications(ctx, beta, 1.0, a.B, seed, 0, 0);
        for (std::size_t k = 0; k < kinds.size(); ++k) {
            for (std::size_t t = 0; t < targets.size(); ++t) {
                CoverageCell cell;
                cell.kind = kinds[k];
                cell.target = targets[t];
                const std::size_t c = k * targets.size() + t;
                cell.min_coverage = h.coverage(c);
                cell.stderr_value = h.stderr_of(c);
                cell.argmin_candidate = -1;
                cell.argmin_beta = beta;
                rep.coverage.push_back(cell);
            }
        }
        mode = {{"mode", "single-beta"}, {"B", a.B}};
    } else {
        rep = minimal_coverage_search(ctx, cfg);
        mode = {{"mode", "minimal-coverage-search"}, {"m1", cfg.m1}, {"I1", cfg.I1}, {"m2", cfg.m2},
                {"I2", cfg.I2},   {"I3", cfg.I3}, {"pools", "per constant and target"}};
    }
    rep.partial = rep.partial || interrupt_flag().load();

    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_coverage_csv(a.out + "/coverage.csv", a.sel.selector, rep);
        write_lengths_csv(a.out + "/lengths.csv", rep.lengths);
        Json j = to_json(rep);
        j["selector"] = a.sel.selector;
        j["search"] = mode;
        Json consts = Json::array();
        for (const auto& [kind, model, dof, v] : ctx.cached_constants()) {
            consts.push_back({{"constant", kind}, {"model", model}, {"dof", dof}, {"value", v}});
        }
        j["constants"] = consts;
        write_json(a.out + "/report.json", j);
        Json meta;
        meta["command"] = "coverage";
        meta["seed"] = seed;
        meta["design_seed"] = a.design_seed.value_or(seed);
        meta["git"] = POSI_GIT_HASH;
        meta["config"] = {{"design", design_source}, {"n", X.rows()},          {"p", p},
                          {"alpha", a.c.alpha},      {"universe", a.c.universe}, {"selector", a.sel.selector},
                          {"protected", a.sel.protect}, {"sigma", a.sigma},    {"target", a.target},
                          {"constants", a.constants}, {"I", mc.I},             {"J", mc.J}};
        meta["search"] = mode;
        meta["partial"] = rep.partial;
        write_json(a.out + "/meta.json", meta);
    }
    std::printf("%-6s %-20s %12s %10s\n", "const", "target", "coverage", "stderr");
    for (const auto& c : rep.coverage) {
        std::printf("%-6s %-20s %12.5f %10.5f\n", to_string(c.kind).c_str(), to_string(c.target).c_str(),
                    c.min_coverage, c.stderr_value);
    }
    if (a.B == 0) std::printf("(minimum over the search: a stochastic upper bound of the minimal coverage)\n");
    if (rep.partial) std::printf("partial: true\n");
    return 0;
}

void on_sigint(int) { interrupt_flag().store(true); }

/// Expands `--config file.json` into flags: each key becomes --key value
/// (true booleans become bare flags). Explicit flags after it take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        const std::string s = argv[i];
        if (s == "--config" && i + 1 < argc) {
            std::ifstream in(argv[++i]);
            if (!in) throw ValidationError(std::string("--config: cannot open ") + argv[i]);
            Json j;
            try {
                j = Json::parse(in);
            } catch (const std::exception& e) {
                throw ValidationError(std::string("--config: ") + e.what());
            }
            if (!j.is_object()) throw ValidationError("--config must hold a JSON object");
            for (const auto& [key, value] : j.items()) {
                if (value.is_boolean()) {
                    if (value.get<bool>()) args.push_back("--" + key);
                } else {
                    args.push_back("--" + key);
                    args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
                }
            }
        } else {
            args.push_back(s);
        }
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_sigint);
    CLI::App app{"Confidence intervals for post-model-selection predictors"};
    app.require_subcommand(1);

    ConstantCmd constant_cmd;
    auto* sc = app.add_subcommand("constant", "compute one constant K(x0, M) and print it as JSON");
    add_design_flags(sc, constant_cmd.c);
    add_dof_flags(sc, constant_cmd.c);
    add_mc_flags(sc, constant_cmd.c);
    add_k2_flags(sc, constant_cmd.k2);
    sc->add_option("--constant", constant_cmd.constant,
                   "naive (t quantile), k1 (sampled over the universe at x0), k2:<model> (search over unseen "
                   "coordinates), k3:<model> (partial union bound; 0 = empty model), k4 (union bound), "
                   "k5 (Scheffe), k6 (0.866 x k5 rule of thumb)")
        ->required();

    IntervalCmd interval_cmd;
    auto* si = app.add_subcommand("interval", "select a model on (X, Y) and print the interval at x0 as JSON");
    add_design_flags(si, interval_cmd.c);
    add_mc_flags(si, interval_cmd.c);
    add_selector_flags(si, interval_cmd.sel);
    add_k2_flags(si, interval_cmd.k2);
    si->add_option("--y", interval_cmd.y, "response CSV (one row or one column)");
    si->add_option("--constant", interval_cmd.constant, "constant kind: naive, k1, k2, k3, k4, k5 or k6");
    si->add_option("--sigma", interval_cmd.sigma,
                   "variance estimate: full (full model, r = n - d), pms (selected model) or fixed:<sigma>");

    CoverageCmd coverage_cmd;
    auto* sv = app.add_subcommand("coverage", "estimate coverage at one beta (--B) or the minimal coverage by search");
    add_design_flags(sv, coverage_cmd.c);
    add_mc_flags(sv, coverage_cmd.c);
    add_selector_flags(sv, coverage_cmd.sel);
    add_family_flags(sv, coverage_cmd.gen);
    sv->add_option("--design-seed", coverage_cmd.design_seed, "seed for the generated design (default: --seed)");
    sv->add_option("--constants", coverage_cmd.constants, "comma-separated constant kinds to evaluate");
    sv->add_option("--constant", coverage_cmd.constants, "alias of --constants");
    sv->add_option("--target", coverage_cmd.target, "dependent (in-sample), independent (population) or both");
    sv->add_option("--sigma", coverage_cmd.sigma, "variance estimate: full, pms or fixed:<sigma>");
    sv->add_option("--sigma-matrix", coverage_cmd.sigma_matrix,
                   "second-moment matrix CSV for the population target with a design file");
    sv->add_option("--beta", coverage_cmd.beta, "true coefficients CSV for --B (default: first sampled candidate)");
    sv->add_option("--B", coverage_cmd.B, "replications at a single beta; omit to run the three-step search");
    sv->add_option("--m1", coverage_cmd.m1, "search: candidates scored in the first step");
    sv->add_option("--I1", coverage_cmd.I1, "search: replications per first-step candidate");
    sv->add_option("--m2", coverage_cmd.m2, "search: worst candidates rescored per constant");
    sv->add_option("--I2", coverage_cmd.I2, "search: replications per second-step candidate");
    sv->add_option("--I3", coverage_cmd.I3, "search: replications for the cross-evaluation of the minimizers");
    sv->add_flag("--paper-scale", coverage_cmd.paper_scale, "use the full search budgets instead of desk scale");
    sv->add_option("--out", coverage_cmd.out, "output directory for report.json, coverage.csv, lengths.csv, meta.json");

    LengthsCmd lengths_cmd;
    auto* sl = app.add_subcommand("lengths", "standardized lengths 2 K ||s_M|| along a chain of models");
    add_design_flags(sl, lengths_cmd.c);
    add_dof_flags(sl, lengths_cmd.c);
    add_mc_flags(sl, lengths_cmd.c);
    add_k2_flags(sl, lengths_cmd.k2);
    sl->add_option("--chain", lengths_cmd.chain,
                   "models separated by ';' (1-based, 0 = empty); default: empty, {1}, {1,2}, ..., full");
    sl->add_option("--constants", lengths_cmd.constants, "comma-separated constant kinds");
    sl->add_option("--out", lengths_cmd.out, "output directory for lengths.csv, report.json, meta.json");

    GenCmd gen_cmd;
    auto* sg = app.add_subcommand("gen-data", "generate a design X and prediction point x0");
    add_family_flags(sg, gen_cmd);
    sg->add_option("--seed", gen_cmd.seed, "seed of the generator");
    sg->add_option("--threads", gen_cmd.threads, "accepted for uniformity; generation is sequential");
    sg->add_option("--out", gen_cmd.out, "output directory for X.csv, x0.csv, Sigma.csv, meta.json")->required();

    try {
        auto args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        int threads = gen_cmd.threads;
        for (const Common* c : {&constant_cmd.c, &interval_cmd.c, &coverage_cmd.c, &lengths_cmd.c}) {
            if (c->threads > 0) threads = c->threads;
        }
        if (threads > 0) set_thread_count(threads);
        if (*sc) return run_constant(constant_cmd);
        if (*si) return run_interval(interval_cmd);
        if (*sv) return run_coverage(coverage_cmd);
        if (*sl) return run_lengths(lengths_cmd);
        if (*sg) return run_gen(gen_cmd);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const PrecisionError& e) {
        std::cerr << "precision error: " << e.what() << '\n';
        return 3;
    } catch (const NonconvergenceError& e) {
        std::cerr << "nonconvergence: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
