// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "gcsm/cli.hpp"
#include "gcsm/experiments.hpp"
#include "gcsm/gp.hpp"
#include "gcsm/hyperopt.hpp"
#include "gcsm/kernel.hpp"
#include "gcsm/spectral.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gcsm;
using gcsm::testing::random_gcsm;
using gcsm::testing::random_gcsm_kernel;
using gcsm::testing::random_sm;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s < limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.c_str(), s, limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double min_eig_ratio(const Eigen::MatrixXd& K) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() / K.trace();
}

// Diagonal value written straight from the closed forms for diagonal Sigma:
// amplitude, frequency-gap, delay envelope and phase cosine per pair.
double diag_closed_form(const std::vector<GcsmComponent>& cs, bool delays) {
    double total = 0.0;
    for (const auto& ci : cs) {
        for (const auto& cj : cs) {
            double amp = 1.0, gap = 0.0, env = 0.0, arg = 0.0;
            for (std::size_t p = 0; p < ci.dim(); ++p) {
                const double si = ci.sigma2[p], sj = cj.sigma2[p], sum = si + sj;
                const double dmu = ci.mu[p] - cj.mu[p];
                amp *= std::sqrt(2.0 * std::sqrt(si * sj) / sum);
                gap += dmu * dmu / sum;
                if (delays) {
                    const double dth = cj.theta[p] - ci.theta[p];
                    env += dth * dth * si * sj / sum;
                    arg += dth * (si * cj.mu[p] + sj * ci.mu[p]) / sum - (ci.phi[p] - cj.phi[p]);
                }
            }
            total += std::sqrt(ci.w * cj.w) * amp * std::exp(-0.25 * gap) * std::exp(-pi * pi * env) *
                     std::cos(pi * arg);
        }
    }
    return total;
}

Outcome reduction_identities() {
    std::mt19937_64 rng(101);
    double err_a = 0.0, err_b = 0.0;
    for (int r = 0; r < 1000; ++r) {
        const int q = 1 + r % 5;
        std::vector<SmComponent> sm;
        std::vector<GcsmComponent> g;
        for (int i = 0; i < q; ++i) {
            sm.push_back(random_sm(rng));
            g.push_back(GcsmComponent::from_sm(sm.back()));
        }
        const SmComponent se_like{sm[0].w, {0.0}, sm[0].sigma2};
        const double theta_l = 1.0 / (2.0 * pi * std::sqrt(se_like.sigma2[0]));
        for (int k = 0; k <= 100; ++k) {
            const double tau[1] = {-5.0 + 0.1 * k};
            double diag = 0.0;
            for (const auto& c : g) diag += c.w * eval_gcsm_cross(tau, c, c);
            err_a = std::max(err_a, std::abs(diag - eval_sm(tau, sm)));
            err_b = std::max(err_b, std::abs(eval_sm(tau, std::span(&se_like, 1)) - eval_se(tau, se_like.w, theta_l)));
        }
    }
    return {err_a <= 1e-12 && err_b <= 1e-12, fmt("max |GCSM_ii - SM| = %.2e, max |SM(mu=0) - SE| = %.2e (tol 1e-12)",
                                                  err_a, err_b)};
}

Outcome fourier_duality() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int r = 0; r < 200; ++r) {
        const GcsmComponent ci = random_gcsm(rng), cj = random_gcsm(rng);
        const auto cfg = IntegrationConfig::for_pair(ci, cj);
        for (double t : {-2.0, -0.7, 0.0, 0.7, 2.0}) {
            const double tau[1] = {t};
            worst = std::max(worst, std::abs(kernel_from_density(ci, cj, t, cfg) - eval_gcsm_cross(tau, ci, cj)));
        }
    }
    return {worst <= 1e-4, fmt("max |quadrature - closed form| = %.2e over 200 pairs x 5 lags (tol 1e-4)", worst)};
}

Outcome psd_grams() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    double worst = 1.0;
    for (int r = 0; r < 100; ++r) {
        const GcsmKernel k = random_gcsm_kernel(rng, 1 + r % 5);
        Eigen::MatrixXd X(30, 1);
        for (int i = 0; i < 30; ++i) X(i, 0) = u(rng);
        worst = std::min(worst, min_eig_ratio(gram(k, X)));
    }
    return {worst >= -1e-8, fmt("min eigenvalue / trace = %.2e over 100 specs (tol -1e-8)", worst)};
}

Outcome gradient_check() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 10.0), ln(std::log(0.01), std::log(1.0));
    std::normal_distribution<double> nrm(0.0, 1.0);
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
        Dataset d;
        d.x.resize(20, 1);
        d.y.resize(20);
        for (int i = 0; i < 20; ++i) {
            d.x(i, 0) = u(rng);
            d.y(i) = nrm(rng);
        }
        const GcsmKernel k = random_gcsm_kernel(rng, 3);
        const double noise = std::exp(ln(rng));
        ParamPacking::Options opts;
        opts.nyquist = 1e6;
        const ParamPacking pk(k, opts);
        const Eigen::VectorXd u0 = pk.pack(k, noise);
        const NlmlObjective obj(d);
        const Eigen::VectorXd an = obj.value_and_grad(k, noise).grad;
        for (Eigen::Index i = 0; i < u0.size(); ++i) {
            Eigen::VectorXd a = u0, b = u0;
            a(i) += 1e-5;
            b(i) -= 1e-5;
            const auto [sa, na] = pk.unpack(a);
            const auto [sb, nb] = pk.unpack(b);
            const double fd = (obj.value(sa, na) - obj.value(sb, nb)) / 2e-5;
            worst = std::max(worst, std::abs(an(i) - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    return {worst < 1e-4,
            fmt("max |analytic - fd| / max(1, |fd|) = %.2e over 20 models, 16 coordinates each (tol 1e-4)", worst)};
}

Outcome diagonal_oracle() {
    std::mt19937_64 rng(505);
    double worst = 0.0;
    for (int r = 0; r < 500; ++r) {
        const std::size_t dim = 1 + static_cast<std::size_t>(r % 2);
        const GcsmKernel k = random_gcsm_kernel(rng, 1 + r % 5, dim);
        const std::vector<double> zero(dim, 0.0);
        for (bool delays : {false, true}) {
            const double v = eval_gcsm(zero, k.components, delays);
            worst = std::max(worst, std::abs(v - diag_closed_form(k.components, delays)) / std::max(1.0, std::abs(v)));
        }
    }
    // Equal spectra with a one-unit phase offset: the cross pair is exactly negative.
    std::vector<GcsmComponent> cs(2);
    cs[0] = {1.0, {0.25}, {0.01}, {0.0}, {0.0}};
    cs[1] = {2.0, {0.25}, {0.01}, {0.0}, {1.0}};
    const double cross = gcsm_diag_term(cs[0], cs[1], true);
    Eigen::MatrixXd X(30, 1);
    for (int i = 0; i < 30; ++i) X(i, 0) = 0.37 * i;
    const double ratio = min_eig_ratio(gram(GcsmKernel{cs, true}, X));
    const bool ok = worst <= 1e-10 && cross < 0.0 && ratio >= -1e-8;
    return {ok, fmt("max rel err vs closed form = %.2e (tol 1e-10); cross term %.4f < 0; Gram min eig/trace %.2e",
                    worst, cross, ratio)};
}

BenchmarkConfig pair_config(std::uint64_t seed) {
    BenchmarkConfig cfg;
    cfg.kernels = {KernelKind::SM, KernelKind::GCSM};
    cfg.seed = seed;
    return cfg;
}

Outcome synthetic_sweep() {
    std::vector<double> sm2, gc2, sm4, gc4;
    std::string per_seed;
    for (std::uint64_t seed = 7; seed < 12; ++seed) {
        std::vector<Task> tasks;
        for (auto& t : gen_synthetic(seed)) {
            if (t.name == "arti2-integral" || t.name == "arti4-delayed") tasks.push_back(std::move(t));
        }
        const ExperimentResult r = run_benchmark(tasks, pair_config(seed));
        auto get = [&](const char* task, KernelKind k) {
            const CellResult* c = r.find(task, k);
            return c && c->ok ? c->mae : std::numeric_limits<double>::infinity();
        };
        sm2.push_back(get("arti2-integral", KernelKind::SM));
        gc2.push_back(get("arti2-integral", KernelKind::GCSM));
        sm4.push_back(get("arti4-delayed", KernelKind::SM));
        gc4.push_back(get("arti4-delayed", KernelKind::GCSM));
        per_seed += fmt(" [seed %.0f: arti2 %.4f/%.4f", static_cast<double>(seed), sm2.back(), gc2.back()) +
                    fmt(", arti4 %.4f/%.4f]", sm4.back(), gc4.back());
    }
    const double m_sm2 = median(sm2), m_gc2 = median(gc2), m_sm4 = median(sm4), m_gc4 = median(gc4);
    const bool ok = m_gc2 <= m_sm2 && m_gc4 <= m_sm4;
    return {ok, fmt("median MAE SM/GCSM arti2 %.4f/%.4f, arti4 %.4f/%.4f;", m_sm2, m_gc2, m_sm4, m_gc4) + per_seed};
}

Outcome airline() {
    const Task t = load_dataset(fs::path(GCSM_TEST_DATA_DIR) / "airline.csv", "airline");
    if (t.train.size() != 96 || t.test.size() != 48) return {false, "unexpected split"};
    const ExperimentResult r = run_benchmark({t}, pair_config(7));
    const CellResult* sm = r.find("airline", KernelKind::SM);
    const CellResult* gc = r.find("airline", KernelKind::GCSM);
    if (!sm->ok || !gc->ok) return {false, "cell failed: " + sm->error + gc->error};
    const GramSet& g = r.grams.at(0);
    const double diff = g.abs_diff.maxCoeff(), scale = g.sm.cwiseAbs().maxCoeff();
    const bool ok = sm->mae <= 35.0 && gc->mae <= sm->mae + 1.0 && diff > 1e-6 * scale;
    return {ok, fmt("SM MAE %.3f (<= 35), GCSM MAE %.3f (<= SM + 1), max|K_GCSM - K_SM| %.3e vs 1e-6 max|K_SM| = %.3e",
                    sm->mae, gc->mae, diff, 1e-6 * scale)};
}

Outcome riverflow() {
    const Task t = load_dataset(fs::path(GCSM_TEST_DATA_DIR) / "riverflow.csv", "riverflow");
    if (t.train.size() != 174 || t.test.size() != 174) return {false, "unexpected split"};
    const ExperimentResult r = run_benchmark({t}, pair_config(7));
    const CellResult* sm = r.find("riverflow", KernelKind::SM);
    const CellResult* gc = r.find("riverflow", KernelKind::GCSM);
    if (!sm->ok || !gc->ok) return {false, "cell failed: " + sm->error + gc->error};
    return {gc->mae <= sm->mae, fmt("GCSM MAE %.4f vs SM MAE %.4f (NLML %.2f vs %.2f)", gc->mae, sm->mae, gc->nlml,
                                    sm->nlml)};
}

Outcome determinism() {
    const fs::path base = fs::temp_directory_path() / "gcsm_acceptance_determinism";
    fs::remove_all(base);
    std::string csv[2];
    for (int i = 0; i < 2; ++i) {
        const std::string out = (base / std::to_string(i)).string();
        const std::string data = GCSM_TEST_DATA_DIR;
        const char* argv[] = {"gcsm", "experiment", "--suite", "airline", "--seed", "7", "--out", out.c_str(),
                              "--data-dir", data.c_str()};
        std::ostringstream o, e;
        const int status = run_cli(10, argv, o, e);
        if (status != 0) return {false, "experiment exited " + std::to_string(status) + ": " + e.str()};
        std::ifstream in(out + "/results.csv", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        csv[i] = ss.str();
    }
    fs::remove_all(base);
    const bool ok = !csv[0].empty() && csv[0] == csv[1];
    return {ok, fmt("two airline runs, results.csv %.0f bytes each, identical: ", static_cast<double>(csv[0].size())) +
                    (ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    // Optional argument: run a single criterion (1-9).
    const int only = argc > 1 ? std::atoi(argv[1]) : 0;
    struct Criterion {
        const char* name;
        double limit_s;
        Outcome (*body)();
    };
    const Criterion all[] = {
        {"reduction identities", 10, reduction_identities},
        {"Fourier duality", 60, fourier_duality},
        {"PSD Gram matrices", 30, psd_grams},
        {"gradient correctness", 60, gradient_check},
        {"diagonal oracle", 5, diagonal_oracle},
        {"synthetic benchmark", 20 * 60, synthetic_sweep},
        {"airline", 10 * 60, airline},
        {"riverflow", 15 * 60, riverflow},
        {"determinism", 10 * 60, determinism},
    };
    int ran = 0;
    for (int i = 0; i < 9; ++i) {
        if (only != 0 && only != i + 1) continue;
        report(i + 1, all[i].name, all[i].limit_s, all[i].body);
        ++ran;
    }
    if (ran == 0) {
        std::fprintf(stderr, "usage: acceptance [1-9]\n");
        return 2;
    }
    std::printf("%d of %d criteria failed\n", failures, ran);
    return failures == 0 ? 0 : 1;
}
