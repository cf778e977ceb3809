#include "gcsm/errors.hpp"
#include "gcsm/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gcsm {

nlohmann::json to_json(const OptConfig& c) {
    return {{"max_iters", c.max_iters}, {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
            {"beta2", c.beta2},         {"grad_tol", c.grad_tol},           {"rel_tol", c.rel_tol},
            {"max_retries", c.max_retries}, {"fix_noise", c.fix_noise},     {"fix_weights", c.fix_weights},
            {"nyquist", c.nyquist},     {"seed", c.seed}};
}

OptConfig opt_config_from_json(const nlohmann::json& doc) {
    OptConfig c;
    try {
        c.max_iters = doc.value("max_iters", c.max_iters);
        c.learning_rate = doc.value("learning_rate", c.learning_rate);
        c.beta1 = doc.value("beta1", c.beta1);
        c.beta2 = doc.value("beta2", c.beta2);
        c.grad_tol = doc.value("grad_tol", c.grad_tol);
        c.rel_tol = doc.value("rel_tol", c.rel_tol);
        c.max_retries = doc.value("max_retries", c.max_retries);
        c.fix_noise = doc.value("fix_noise", c.fix_noise);
        c.fix_weights = doc.value("fix_weights", c.fix_weights);
        c.nyquist = doc.value("nyquist", c.nyquist);
        c.seed = doc.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("optimizer config: ") + e.what());
    }
    if (c.max_iters < 0 || !(c.learning_rate > 0.0)) throw ConfigurationError("optimizer config: invalid values");
    return c;
}

double nyquist_of(const Dataset& data) {
    std::vector<double> xs(data.x.col(0).data(), data.x.col(0).data() + data.x.rows());
    std::sort(xs.begin(), xs.end());
    double dx = std::numeric_limits<double>::infinity();
    const double tol = 1e-12 * std::max(1.0, std::abs(xs.back() - xs.front()));
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double d = xs[i] - xs[i - 1];
        if (d > tol) dx = std::min(dx, d);
    }
    return std::isfinite(dx) ? 0.5 / dx : 0.5;
}

double input_range_of(const Dataset& data) {
    const double r = (data.x.colwise().maxCoeff() - data.x.colwise().minCoeff()).maxCoeff();
    return r > 0.0 ? r : 1.0;
}

namespace {

struct Evaluation {
    double value;
    Eigen::VectorXd grad;  // packed coordinates
};

bool evaluate(const ParamPacking& packing, const NlmlObjective& objective, const Eigen::VectorXd& u,
              Evaluation& out) {
    try {
        const auto [spec, noise] = packing.unpack(u);
        const NlmlGradient r = objective.value_and_grad(spec, noise);
        if (!std::isfinite(r.value) || !r.grad.allFinite()) return false;
        out.value = r.value;
        out.grad = packing.chain(r.grad, u);
        return true;
    } catch (const NumericalFailure&) {
        return false;
    } catch (const InvalidArgument&) {
        // exp() of a packed coordinate underflowed to a non-positive scale
        return false;
    }
}

}  // namespace

TrainedModel fit(const KernelSpec& initial, double noise_var, const Dataset& data, const OptConfig& config) {
    return fit(initial, noise_var, NlmlObjective(data), config);
}

TrainedModel fit(const KernelSpec& initial, double noise_var, const NlmlObjective& objective,
                 const OptConfig& config) {
    const Dataset& data = objective.data();
    ParamPacking::Options opts;
    opts.nyquist = config.nyquist > 0.0 ? config.nyquist : nyquist_of(data);
    opts.input_range = input_range_of(data);
    opts.fix_noise = config.fix_noise;
    opts.fix_weights = config.fix_weights;
    const ParamPacking packing(initial, opts);
    const auto n = static_cast<Eigen::Index>(packing.size());

    Eigen::VectorXd scale(n);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = packing.slots()[static_cast<std::size_t>(i)];
        scale(i) = s.fixed ? 0.0 : s.step_scale;
        if (s.transform == Transform::ClampedIdentity) {
            lo(i) = s.lo;
            hi(i) = s.hi;
        }
    }

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto perturb = [&](const Eigen::VectorXd& base) {
        Eigen::VectorXd p = base;
        for (Eigen::Index i = 0; i < n; ++i) p(i) += 0.01 * scale(i) * normal(rng);
        return p.cwiseMax(lo).cwiseMin(hi);
    };

    Eigen::VectorXd u = packing.pack(initial, noise_var);
    Evaluation cur;
    int retries = 0;
    while (!evaluate(packing, objective, u, cur)) {
        if (++retries > config.max_retries) {
            throw NumericalFailure("fit: objective cannot be evaluated at the initial point");
        }
        u = perturb(packing.pack(initial, noise_var));
    }

    Eigen::VectorXd best_u = u;
    double best = cur.value;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    int adam_t = 0;
    int it = 0;
    for (; it < config.max_iters; ++it) {
        if (cur.grad.norm() < config.grad_tol) break;
        ++adam_t;
        m = config.beta1 * m + (1.0 - config.beta1) * cur.grad;
        v = config.beta2 * v + (1.0 - config.beta2) * cur.grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, adam_t);
        const double c2 = 1.0 - std::pow(config.beta2, adam_t);
        Eigen::VectorXd step = (m / c1).array() / ((v / c2).array().sqrt() + 1e-12);
        Eigen::VectorXd trial = u - config.learning_rate * scale.cwiseProduct(step);
        trial = trial.cwiseMax(lo).cwiseMin(hi);

        Evaluation next;
        if (!evaluate(packing, objective, trial, next)) {
            if (++retries > config.max_retries) {
                throw NumericalFailure("fit: objective evaluation failed after " +
                                       std::to_string(config.max_retries) + " retries");
            }
            u = perturb(best_u);
            if (!evaluate(packing, objective, u, cur)) continue;
            m.setZero();
            v.setZero();
            adam_t = 0;
            continue;
        }
        const double change = std::abs(next.value - cur.value);
        u = std::move(trial);
        cur = std::move(next);
        if (cur.value < best) {
            best = cur.value;
            best_u = u;
        }
        if (change < config.rel_tol * std::max(1.0, std::abs(cur.value))) {
            ++it;
            break;
        }
    }

    auto [spec, noise] = packing.unpack(best_u);
    FitInfo info;
    info.nlml = best;
    info.iterations = it;
    return TrainedModel(std::move(spec), noise, data, info);
}

}  // namespace gcsm
