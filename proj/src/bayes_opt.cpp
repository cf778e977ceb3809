#include "gcsm/errors.hpp"
#include "gcsm/hyperopt.hpp"
#include "gcsm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace gcsm {

double expected_improvement(double pred_mean, double pred_sd, double f_best) {
    if (!(pred_sd > 0.0)) return std::max(0.0, f_best - pred_mean);
    const double gamma = (f_best - pred_mean) / pred_sd;
    const double cdf = 0.5 * std::erfc(-gamma / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * gamma * gamma) / std::sqrt(2.0 * std::numbers::pi);
    return std::max(0.0, pred_sd * (gamma * cdf + pdf));
}

nlohmann::json to_json(const BoConfig& c) {
    return {{"budget", c.budget},
            {"initial_design", c.initial_design},
            {"candidates", c.candidates},
            {"local_candidates", c.local_candidates},
            {"seed", c.seed}};
}

BoConfig bo_config_from_json(const nlohmann::json& doc) {
    BoConfig c;
    try {
        c.budget = doc.value("budget", c.budget);
        c.initial_design = doc.value("initial_design", c.initial_design);
        c.candidates = doc.value("candidates", c.candidates);
        c.local_candidates = doc.value("local_candidates", c.local_candidates);
        c.seed = doc.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("BO config: ") + e.what());
    }
    if (c.budget < 0 || c.initial_design < 0 || c.candidates < 1) throw ConfigurationError("BO config: invalid values");
    return c;
}

namespace {

// Surrogate over the unit box: Matern 5/2 with a shared length-scale, unit
// signal variance on standardized outputs; length-scale and noise picked by
// marginal likelihood over a fixed grid.
TrainedModel fit_surrogate(const Eigen::MatrixXd& Z, const Eigen::VectorXd& ystd) {
    const double root_dim = std::sqrt(static_cast<double>(Z.cols()));
    const Dataset data{Z, ystd};
    const NlmlObjective objective(data);
    double best = std::numeric_limits<double>::infinity();
    double best_l = root_dim, best_noise = 1e-2;
    for (int li = 0; li < 12; ++li) {
        const double l = root_dim * std::pow(10.0, -1.5 + 1.75 * li / 11.0);
        for (double noise : {1e-6, 1e-4, 1e-2, 1e-1}) {
            try {
                const double v = objective.value(Matern52Kernel{1.0, l}, noise);
                if (v < best) {
                    best = v;
                    best_l = l;
                    best_noise = noise;
                }
            } catch (const NumericalFailure&) {
            }
        }
    }
    return TrainedModel(Matern52Kernel{1.0, best_l}, best_noise, data);
}

double evaluate_safely(const Objective& f, const std::vector<double>& x) {
    try {
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    } catch (const std::exception&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

BoTrace bayes_opt(const Objective& objective, const std::vector<std::pair<double, double>>& bounds,
                  const BoConfig& config) {
    const std::size_t dim = bounds.size();
    if (dim == 0) throw InvalidArgument("bayes_opt: no dimensions");
    for (const auto& [lo, hi] : bounds) {
        if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
            throw InvalidArgument("bayes_opt: bounds must be finite with lo < hi");
        }
    }
    const int n_init = config.initial_design > 0 ? config.initial_design : static_cast<int>(5 * dim);
    const int budget = config.budget > 0 ? config.budget : n_init + 20;
    if (budget < n_init) throw InvalidArgument("bayes_opt: budget is smaller than the initial design");

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto to_bounds = [&](const Eigen::VectorXd& z) {
        std::vector<double> x(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            x[d] = bounds[d].first + z(static_cast<Eigen::Index>(d)) * (bounds[d].second - bounds[d].first);
            x[d] = std::clamp(x[d], bounds[d].first, bounds[d].second);
        }
        return x;
    };

    BoTrace trace;
    trace.initial_design = static_cast<std::size_t>(n_init);
    std::vector<Eigen::VectorXd> unit;
    auto record = [&](const Eigen::VectorXd& z) {
        const std::vector<double> x = to_bounds(z);
        const double v = evaluate_safely(objective, x);
        unit.push_back(z);
        trace.points.push_back(x);
        trace.values.push_back(v);
        const double inc = trace.incumbent_values.empty() ? v : std::min(trace.incumbent_values.back(), v);
        if (trace.incumbent_values.empty() || v < trace.values[trace.incumbent]) {
            trace.incumbent = trace.values.size() - 1;
        }
        trace.incumbent_values.push_back(inc);
    };

    // Latin hypercube initial design.
    std::vector<std::vector<int>> strata(dim);
    for (auto& s : strata) {
        s.resize(static_cast<std::size_t>(n_init));
        std::iota(s.begin(), s.end(), 0);
        std::shuffle(s.begin(), s.end(), rng);
    }
    for (int i = 0; i < n_init; ++i) {
        Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
        for (std::size_t d = 0; d < dim; ++d) {
            z(static_cast<Eigen::Index>(d)) = (strata[d][static_cast<std::size_t>(i)] + unif(rng)) / n_init;
        }
        record(z);
    }

    while (static_cast<int>(trace.values.size()) < budget) {
        const auto n = static_cast<Eigen::Index>(unit.size());
        Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < n; ++i) Z.row(i) = unit[static_cast<std::size_t>(i)].transpose();

        // Failed evaluations enter the surrogate at the worst finite value.
        double worst = -std::numeric_limits<double>::infinity();
        for (double v : trace.values) {
            if (std::isfinite(v)) worst = std::max(worst, v);
        }
        if (!std::isfinite(worst)) worst = 0.0;
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = trace.values[static_cast<std::size_t>(i)];
            y(i) = std::isfinite(v) ? v : worst;
        }
        const double mean = y.mean();
        const double sd = std::sqrt((y.array() - mean).square().mean());
        const Eigen::VectorXd ystd = (y.array() - mean) / (sd > 0.0 ? sd : 1.0);
        const double f_best = ystd.minCoeff();

        const TrainedModel surrogate = fit_surrogate(Z, ystd);

        const int n_local = config.local_candidates;
        Eigen::MatrixXd cand(config.candidates + n_local, static_cast<Eigen::Index>(dim));
        for (Eigen::Index c = 0; c < config.candidates; ++c) {
            for (Eigen::Index d = 0; d < cand.cols(); ++d) cand(c, d) = unif(rng);
        }
        const Eigen::VectorXd& inc = unit[trace.incumbent];
        for (Eigen::Index c = 0; c < n_local; ++c) {
            for (Eigen::Index d = 0; d < cand.cols(); ++d) {
                cand(config.candidates + c, d) = std::clamp(inc(d) + 0.05 * normal(rng), 0.0, 1.0);
            }
        }

        const Prediction pc = predict(surrogate, cand);
        Eigen::Index pick = 0;
        double pick_ei = -1.0;
        for (Eigen::Index c = 0; c < cand.rows(); ++c) {
            const double ei = expected_improvement(pc.mean(c), std::sqrt(pc.var(c)), f_best);
            if (ei > pick_ei) {
                pick_ei = ei;
                pick = c;
            }
        }
        const Prediction pe = predict(surrogate, Z);
        double max_eval_ei = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            max_eval_ei = std::max(max_eval_ei, expected_improvement(pe.mean(i), std::sqrt(pe.var(i)), f_best));
        }
        trace.chosen_ei.push_back(pick_ei);
        trace.max_evaluated_ei.push_back(max_eval_ei);
        record(cand.row(pick).transpose());
    }
    return trace;
}

void write_bo_trace_csv(std::ostream& out, const BoTrace& trace) {
    out << "iter";
    const std::size_t dim = trace.points.empty() ? 0 : trace.points.front().size();
    for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
    out << ",value,incumbent\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
        out << i;
        for (double x : trace.points[i]) {
            std::snprintf(buf, sizeof buf, ",%.17g", x);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", trace.values[i], trace.incumbent_values[i]);
        out << buf;
    }
}

// --- initialization ---------------------------------------------------------

InitStrategy parse_init_strategy(const std::string& name) {
    if (name == "spectral-gmm") return InitStrategy::SpectralGmm;
    if (name == "bayes-opt") return InitStrategy::BayesOpt;
    if (name == "random") return InitStrategy::Random;
    throw InvalidArgument("unknown init strategy '" + name + "'", "E_INIT_UNKNOWN");
}

std::string init_strategy_name(InitStrategy s) {
    switch (s) {
        case InitStrategy::SpectralGmm: return "spectral-gmm";
        case InitStrategy::BayesOpt: return "bayes-opt";
        case InitStrategy::Random: return "random";
    }
    return "?";
}

namespace {

double sample_variance(const Eigen::VectorXd& y) {
    const double m = y.mean();
    const double v = (y.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, y.size() - 1));
    return v > 0.0 ? v : 1.0;
}

KernelSpec assemble(const std::vector<SmComponent>& comps, const std::vector<double>& theta,
                    const std::vector<double>& phi, const InitConfig& config) {
    if (config.kind == KernelKind::SM) return SmKernel{comps};
    if (config.kind != KernelKind::GCSM) throw InvalidArgument("init_hyperparams: only SM and GCSM are supported");
    GcsmKernel g;
    g.delays_enabled = config.delays_enabled;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        GcsmComponent gc = GcsmComponent::from_sm(comps[c]);
        if (config.delays_enabled) {
            gc.theta = {theta[c]};
            gc.phi = {phi[c]};
        }
        g.components.push_back(std::move(gc));
    }
    return g;
}

}  // namespace

std::pair<KernelSpec, BoTrace> init_hyperparams_traced(const Dataset& data, int q, InitStrategy strategy,
                                                       std::uint64_t seed, const InitConfig& config) {
    if (q < 1) throw InvalidArgument("init_hyperparams: Q must be >= 1");
    validate(data);
    if (data.dim() != 1) throw UnsupportedDimension("init_hyperparams: scalar inputs only");
    const double var_y = sample_variance(data.y);
    const double nyq = nyquist_of(data);
    const double range = input_range_of(data);
    const double log_s2_lo = std::log(1e-2 / (range * range));
    const double log_s2_hi = std::log(nyq * nyq);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    // Delays are drawn first so every strategy sees the same stream for them.
    std::vector<double> theta(static_cast<std::size_t>(q)), phi(static_cast<std::size_t>(q));
    for (int c = 0; c < q; ++c) {
        theta[c] = (2.0 * unif(rng) - 1.0) * 0.1 * range;
        phi[c] = 2.0 * std::numbers::pi * unif(rng);
    }

    std::vector<SmComponent> comps;
    BoTrace trace;
    switch (strategy) {
        case InitStrategy::SpectralGmm: {
            std::vector<double> xs(data.x.col(0).data(), data.x.col(0).data() + data.size());
            std::vector<double> ys(data.y.data(), data.y.data() + data.size());
            comps = gmm_init(periodogram(xs, ys), q, var_y, rng());
            break;
        }
        case InitStrategy::Random: {
            for (int c = 0; c < q; ++c) {
                const double mu = nyq * unif(rng);
                const double s2 = std::exp(log_s2_lo + (log_s2_hi - log_s2_lo) * unif(rng));
                comps.push_back({var_y / q, {mu}, {s2}});
            }
            break;
        }
        case InitStrategy::BayesOpt: {
            auto decode = [&](const std::vector<double>& x) {
                std::vector<SmComponent> cs;
                for (int c = 0; c < q; ++c) {
                    cs.push_back({var_y / q, {x[static_cast<std::size_t>(c)]},
                                  {std::exp(x[static_cast<std::size_t>(q + c)])}});
                }
                return cs;
            };
            const NlmlObjective objective(data);
            const double noise = config.noise_var > 0.0 ? config.noise_var : 0.01 * var_y;
            OptConfig inner;
            inner.max_iters = config.inner_steps;
            inner.fix_weights = true;
            inner.nyquist = nyq;
            inner.seed = seed;
            auto f = [&](const std::vector<double>& x) {
                const KernelSpec spec = assemble(decode(x), theta, phi, config);
                return fit(spec, noise, objective, inner).info().nlml;
            };
            std::vector<std::pair<double, double>> bounds;
            for (int c = 0; c < q; ++c) bounds.emplace_back(0.0, nyq);
            for (int c = 0; c < q; ++c) bounds.emplace_back(log_s2_lo, log_s2_hi);
            BoConfig bo = config.bo;
            bo.seed = rng();
            trace = bayes_opt(f, bounds, bo);
            comps = decode(trace.points[trace.incumbent]);
            break;
        }
    }
    return {assemble(comps, theta, phi, config), std::move(trace)};
}

KernelSpec init_hyperparams(const Dataset& data, int q, InitStrategy strategy, std::uint64_t seed,
                            const InitConfig& config) {
    return init_hyperparams_traced(data, q, strategy, seed, config).first;
}

}  // namespace gcsm
