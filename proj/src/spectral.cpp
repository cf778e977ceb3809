#include "gcsm/spectral.hpp"

#include "gcsm/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace gcsm {

namespace {

constexpr double kPi = std::numbers::pi;

void require_scalar(const GcsmComponent& c, const char* what) {
    if (c.dim() != 1 || c.sigma2.size() != 1 || c.theta.size() != 1 || c.phi.size() != 1) {
        throw UnsupportedDimension(std::string(what) + ": spectral densities are one-dimensional");
    }
    if (!(c.sigma2[0] > 0.0)) throw InvalidArgument(std::string(what) + ": variance must be positive");
}

// FFTW planning is not thread safe.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

double sm_density(double s, const SmComponent& comp) {
    if (comp.dim() != 1) throw UnsupportedDimension("sm_density: one-dimensional components only");
    const double v = comp.sigma2[0];
    if (!(v > 0.0)) throw InvalidArgument("sm_density: variance must be positive");
    const double norm = 1.0 / std::sqrt(2.0 * kPi * v);
    const double up = s - comp.mu[0];
    const double down = -s - comp.mu[0];
    return 0.5 * norm * (std::exp(-0.5 * up * up / v) + std::exp(-0.5 * down * down / v));
}

ComplexDensityValue gcsm_basis_density(double s, const GcsmComponent& comp) {
    require_scalar(comp, "gcsm_basis_density");
    const double v = comp.sigma2[0];
    const double dev = s - comp.mu[0];
    const double modulus = std::pow(2.0 * kPi * v, -0.25) * std::exp(-dev * dev / (4.0 * v));
    return std::polar(modulus, -kPi * (comp.theta[0] * s + comp.phi[0]));
}

ComplexDensityValue cross_density(double s, const GcsmComponent& ci, const GcsmComponent& cj) {
    return gcsm_basis_density(s, ci) * std::conj(gcsm_basis_density(s, cj));
}

IntegrationConfig IntegrationConfig::for_pair(const GcsmComponent& ci, const GcsmComponent& cj) {
    require_scalar(ci, "IntegrationConfig");
    require_scalar(cj, "IntegrationConfig");
    const double mu_max = std::max(std::abs(ci.mu[0]), std::abs(cj.mu[0]));
    const double sd_max = std::sqrt(std::max(ci.sigma2[0], cj.sigma2[0]));
    const double sd_min = std::sqrt(std::min(ci.sigma2[0], cj.sigma2[0]));
    return {mu_max + 8.0 * sd_max, sd_min / 8.0};
}

double kernel_from_density(const GcsmComponent& ci, const GcsmComponent& cj, double tau,
                           const IntegrationConfig& config) {
    require_scalar(ci, "kernel_from_density");
    require_scalar(cj, "kernel_from_density");
    const IntegrationConfig need = IntegrationConfig::for_pair(ci, cj);
    if (!(config.step > 0.0) || config.step > need.step * (1.0 + 1e-12)) {
        throw ConfigurationError("kernel_from_density: step " + std::to_string(config.step) +
                                 " exceeds sigma_min/8 = " + std::to_string(need.step));
    }
    if (config.half_width < need.half_width * (1.0 - 1e-12)) {
        throw ConfigurationError("kernel_from_density: grid half-width " + std::to_string(config.half_width) +
                                 " below mu_max + 8 sigma_max = " + std::to_string(need.half_width));
    }
    // Hermitian symmetrization [h(s) + conj(h(-s))] / 2 keeps the transform
    // real; its inverse transform is Re of the transform of h.
    const auto n = static_cast<long>(std::ceil(config.half_width / config.step));
    const double h = config.half_width / static_cast<double>(n);
    double acc = 0.0;
    for (long k = -n; k <= n; ++k) {
        const double s = static_cast<double>(k) * h;
        const ComplexDensityValue sym = 0.5 * (cross_density(s, ci, cj) + std::conj(cross_density(-s, ci, cj)));
        const ComplexDensityValue rot = std::polar(1.0, 2.0 * kPi * tau * s);
        const double f = (sym * rot).real();
        acc += (k == -n || k == n) ? 0.5 * f : f;
    }
    return acc * h;
}

Spectrum periodogram(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (y.size() != n) throw InvalidArgument("periodogram: x and y differ in length");
    if (n < 8) throw InvalidArgument("periodogram: need at least 8 samples");
    const double dx = (x[n - 1] - x[0]) / static_cast<double>(n - 1);
    if (!(dx > 0.0)) throw UnsupportedInput("periodogram: x must be ascending");
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs((x[i] - x[i - 1]) - dx) > 1e-6 * dx) {
            throw UnsupportedInput("periodogram: x is not uniformly spaced");
        }
    }

    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> in(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = y[i] - mean;
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }

    Spectrum spec;
    const double nd = static_cast<double>(n);
    for (std::size_t k = 1; k <= n / 2; ++k) {
        spec.freqs.push_back(static_cast<double>(k) / (nd * dx));
        const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
        spec.density.push_back(p * dx / nd);
    }
    return spec;
}

namespace {

double normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * kPi * var);
}

double weighted_quantile(const std::vector<double>& xs, const std::vector<double>& ws, double q) {
    double acc = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        acc += ws[k];
        if (acc >= q) return xs[k];
    }
    return xs.back();
}

struct EmRun {
    std::vector<double> pi, m, v, trace;
    double loglik = -std::numeric_limits<double>::infinity();
};

EmRun run_em(const std::vector<double>& xs, const std::vector<double>& ws, EmRun state, double floor,
             const GmmConfig& config) {
    const std::size_t q = state.m.size();
    const std::size_t n = xs.size();
    std::vector<double> resp(n * q);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < config.max_iters; ++it) {
        // E step and log-likelihood at the current parameters.
        double ll = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double tot = 0.0;
            for (std::size_t c = 0; c < q; ++c) {
                resp[k * q + c] = state.pi[c] * normal_pdf(xs[k], state.m[c], state.v[c]);
                tot += resp[k * q + c];
            }
            tot = std::max(tot, std::numeric_limits<double>::min());
            for (std::size_t c = 0; c < q; ++c) resp[k * q + c] /= tot;
            ll += ws[k] * std::log(tot);
        }
        state.trace.push_back(ll);
        state.loglik = ll;
        if (std::isfinite(prev) && std::abs(ll - prev) <= config.rel_tol * std::abs(prev)) break;
        prev = ll;

        // M step.
        for (std::size_t c = 0; c < q; ++c) {
            double nk = 0.0, s1 = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                nk += ws[k] * resp[k * q + c];
                s1 += ws[k] * resp[k * q + c] * xs[k];
            }
            if (nk <= 1e-300) {
                // Empty component keeps its location; its weight collapses.
                state.pi[c] = 0.0;
                continue;
            }
            const double mean = s1 / nk;
            double s2 = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double d = xs[k] - mean;
                s2 += ws[k] * resp[k * q + c] * d * d;
            }
            state.pi[c] = nk;
            state.m[c] = mean;
            state.v[c] = std::max(s2 / nk, floor);
        }
        const double tot = std::accumulate(state.pi.begin(), state.pi.end(), 0.0);
        for (double& p : state.pi) p /= tot;
    }
    return state;
}

}  // namespace

GmmFit fit_weighted_gmm(const Spectrum& spec, int q, std::uint64_t seed, const GmmConfig& config) {
    if (q < 1) throw InvalidArgument("gmm: Q must be >= 1", "E_GMM_Q");
    if (spec.freqs.size() != spec.density.size() || spec.freqs.empty()) {
        throw InvalidArgument("gmm: spectrum is empty or malformed");
    }
    std::vector<double> xs, ws;
    for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
        if (spec.density[k] < 0.0 || !std::isfinite(spec.density[k])) {
            throw InvalidArgument("gmm: density values must be finite and nonnegative");
        }
        if (spec.density[k] > 0.0) {
            xs.push_back(spec.freqs[k]);
            ws.push_back(spec.density[k]);
        }
    }
    if (xs.empty()) throw InvalidArgument("gmm: spectrum carries no mass");
    if (static_cast<std::size_t>(q) > xs.size()) {
        throw InvalidArgument("gmm: Q=" + std::to_string(q) + " exceeds the " + std::to_string(xs.size()) +
                                  " frequencies with positive density",
                              "E_GMM_Q");
    }
    const double total = std::accumulate(ws.begin(), ws.end(), 0.0);
    for (double& w : ws) w /= total;

    double floor = config.variance_floor;
    if (floor <= 0.0) {
        const double df = spec.freqs.size() > 1 ? spec.freqs[1] - spec.freqs[0] : spec.freqs[0];
        floor = df * df;
    }

    double mean = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) mean += ws[k] * xs[k];
    double var = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) var += ws[k] * (xs[k] - mean) * (xs[k] - mean);
    var = std::max(var, floor);

    const double span = xs.back() - xs.front();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 1.0);
    EmRun best;
    const int restarts = std::max(1, config.restarts);
    for (int r = 0; r < restarts; ++r) {
        EmRun init;
        for (int c = 0; c < q; ++c) {
            double m = weighted_quantile(xs, ws, (c + 0.5) / q);
            if (r > 0) m += jitter(rng) * 0.05 * span;
            init.m.push_back(std::clamp(m, xs.front(), xs.back()));
            init.v.push_back(std::max(var / (static_cast<double>(q) * q), floor));
            init.pi.push_back(1.0 / q);
        }
        EmRun run = run_em(xs, ws, std::move(init), floor, config);
        if (run.loglik > best.loglik) best = std::move(run);
    }

    GmmFit fit;
    fit.weights = best.pi;
    fit.means = best.m;
    fit.variances = best.v;
    fit.log_likelihood_trace = best.trace;
    return fit;
}

std::vector<SmComponent> gmm_init(const Spectrum& spec, int q, double signal_variance, std::uint64_t seed,
                                  const GmmConfig& config) {
    if (!(signal_variance > 0.0)) throw InvalidArgument("gmm_init: signal variance must be positive");
    const GmmFit fit = fit_weighted_gmm(spec, q, seed, config);
    std::vector<SmComponent> out;
    for (int c = 0; c < q; ++c) {
        // A collapsed component keeps a tiny positive weight so the kernel stays valid.
        const double w = std::max(fit.weights[c], 1e-12) * signal_variance;
        out.push_back({w, {std::max(fit.means[c], 0.0)}, {fit.variances[c]}});
    }
    return out;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spec) {
    out << "freq,density\n";
    char buf[96];
    for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", spec.freqs[k], spec.density[k]);
        out << buf;
    }
}

Spectrum read_spectrum_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("freq,density", 0) != 0) {
        throw InvalidArgument("spectrum CSV must start with header 'freq,density'");
    }
    Spectrum spec;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw InvalidArgument("spectrum CSV: malformed row '" + line + "'");
        spec.freqs.push_back(std::stod(line.substr(0, comma)));
        spec.density.push_back(std::stod(line.substr(comma + 1)));
    }
    return spec;
}

}  // namespace gcsm
