#include "gcsm/kernel.hpp"

#include "gcsm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gcsm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt5 = 2.23606797749978969640917366873127623544;

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + ": non-finite input");
    }
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidArgument(std::string(what) + " must be positive and finite");
    }
}

double squared_norm(std::span<const double> tau) {
    double r2 = 0.0;
    for (double t : tau) r2 += t * t;
    return r2;
}

void check_dims(std::span<const double> tau, std::size_t dim, const char* what) {
    if (tau.size() != dim) {
        throw InvalidArgument(std::string(what) + ": tau has dimension " + std::to_string(tau.size()) +
                              ", components have " + std::to_string(dim));
    }
}

template <class Component>
void validate_component(const Component& c, std::size_t dim) {
    require_positive(c.w, "component weight");
    if (c.mu.size() != dim || c.sigma2.size() != dim) {
        throw InvalidArgument("mixture components must share one dimension");
    }
    require_finite(c.mu, "component mean");
    for (double s : c.sigma2) require_positive(s, "component variance");
}

}  // namespace

GcsmComponent GcsmComponent::from_sm(const SmComponent& c) {
    return {c.w, c.mu, c.sigma2, std::vector<double>(c.dim(), 0.0), std::vector<double>(c.dim(), 0.0)};
}

KernelKind kind_of(const KernelSpec& spec) {
    return static_cast<KernelKind>(spec.index());
}

std::string kind_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::SE: return "SE";
        case KernelKind::Periodic: return "Periodic";
        case KernelKind::Matern52: return "Matern52";
        case KernelKind::SM: return "SM";
        case KernelKind::GCSM: return "GCSM";
    }
    return "?";
}

KernelKind parse_kind(const std::string& name) {
    for (auto k : {KernelKind::SE, KernelKind::Periodic, KernelKind::Matern52, KernelKind::SM,
                   KernelKind::GCSM}) {
        if (kind_name(k) == name) return k;
    }
    throw InvalidArgument("unknown kernel '" + name + "'", "E_KERNEL_UNKNOWN");
}

void validate(const KernelSpec& spec) {
    std::visit(
        [](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel> || std::is_same_v<T, Matern52Kernel>) {
                require_positive(k.theta_f, "theta_f");
                require_positive(k.theta_l, "theta_l");
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                require_positive(k.theta_f, "theta_f");
                require_positive(k.theta_per, "theta_per");
                require_positive(k.theta_l, "theta_l");
            } else {
                if (k.components.empty()) throw InvalidArgument("mixture needs at least one component");
                const std::size_t dim = k.components.front().dim();
                if (dim == 0) throw InvalidArgument("mixture components must have dimension >= 1");
                for (const auto& c : k.components) {
                    validate_component(c, dim);
                    if constexpr (std::is_same_v<T, GcsmKernel>) {
                        if (c.theta.size() != dim || c.phi.size() != dim) {
                            throw InvalidArgument("GCSM delays must match the component dimension");
                        }
                        require_finite(c.theta, "time delay");
                        require_finite(c.phi, "phase delay");
                    }
                }
            }
        },
        spec);
}

std::size_t input_dim(const KernelSpec& spec) {
    return std::visit(
        [](const auto& k) -> std::size_t {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, PeriodicKernel>) {
                return 1;
            } else if constexpr (std::is_same_v<T, SmKernel> || std::is_same_v<T, GcsmKernel>) {
                return k.components.empty() ? 0 : k.components.front().dim();
            } else {
                return 0;
            }
        },
        spec);
}

std::size_t kernel_param_count(const KernelSpec& spec) {
    return std::visit(
        [](const auto& k) -> std::size_t {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, PeriodicKernel>) {
                return 3;
            } else if constexpr (std::is_same_v<T, SmKernel>) {
                const std::size_t p = k.components.empty() ? 0 : k.components.front().dim();
                return (2 * p + 1) * k.components.size();
            } else if constexpr (std::is_same_v<T, GcsmKernel>) {
                const std::size_t p = k.components.empty() ? 0 : k.components.front().dim();
                return (4 * p + 1) * k.components.size();
            } else {
                return 2;
            }
        },
        spec);
}

double eval_se(std::span<const double> tau, double theta_f, double theta_l) {
    require_finite(tau, "eval_se");
    require_positive(theta_f, "theta_f");
    require_positive(theta_l, "theta_l");
    return theta_f * std::exp(-squared_norm(tau) / (2.0 * theta_l * theta_l));
}

double eval_periodic(std::span<const double> tau, double theta_f, double theta_per, double theta_l) {
    if (tau.size() != 1) throw UnsupportedDimension("periodic kernel is defined on scalar inputs only");
    require_finite(tau, "eval_periodic");
    require_positive(theta_f, "theta_f");
    require_positive(theta_per, "theta_per");
    require_positive(theta_l, "theta_l");
    const double s = std::sin(kPi * tau[0] / theta_per);
    return theta_f * std::exp(-2.0 * s * s / theta_l);
}

double eval_matern52(std::span<const double> tau, double theta_f, double theta_l) {
    require_finite(tau, "eval_matern52");
    require_positive(theta_f, "theta_f");
    require_positive(theta_l, "theta_l");
    const double u = kSqrt5 * std::sqrt(squared_norm(tau)) / theta_l;
    return theta_f * (1.0 + u + u * u / 3.0) * std::exp(-u);
}

double eval_sm(std::span<const double> tau, std::span<const SmComponent> components) {
    if (components.empty()) throw InvalidArgument("eval_sm: empty mixture");
    require_finite(tau, "eval_sm");
    double k = 0.0;
    for (const auto& c : components) {
        check_dims(tau, c.dim(), "eval_sm");
        double arg = 0.0;
        double decay = 0.0;
        for (std::size_t p = 0; p < tau.size(); ++p) {
            arg += c.mu[p] * tau[p];
            decay += tau[p] * tau[p] * c.sigma2[p];
        }
        k += c.w * std::cos(2.0 * kPi * arg) * std::exp(-2.0 * kPi * kPi * decay);
    }
    return k;
}

double eval_gcsm_cross(std::span<const double> tau, const GcsmComponent& ci, const GcsmComponent& cj) {
    require_finite(tau, "eval_gcsm_cross");
    const std::size_t dim = ci.dim();
    if (cj.dim() != dim || ci.theta.size() != dim || cj.theta.size() != dim || ci.phi.size() != dim ||
        cj.phi.size() != dim) {
        throw InvalidArgument("eval_gcsm_cross: component dimensions differ");
    }
    check_dims(tau, dim, "eval_gcsm_cross");

    double log_amp = 0.0;
    double phase = 0.0;
    for (std::size_t p = 0; p < dim; ++p) {
        const double a = ci.sigma2[p];
        const double b = cj.sigma2[p];
        const double s = a + b;
        const double dmu = ci.mu[p] - cj.mu[p];
        const double d = 2.0 * tau[p] - (ci.theta[p] - cj.theta[p]);
        log_amp += 0.25 * std::log(4.0 * a * b / (s * s));
        log_amp -= 0.25 * dmu * dmu / s;
        log_amp -= kPi * kPi * d * d * a * b / s;
        phase += d * (a * cj.mu[p] + b * ci.mu[p]) / s - (ci.phi[p] - cj.phi[p]);
    }
    return std::exp(log_amp) * std::cos(kPi * phase);
}

double eval_gcsm(std::span<const double> tau, std::span<const GcsmComponent> components,
                 bool delays_enabled) {
    if (components.empty()) throw InvalidArgument("eval_gcsm: empty mixture");
    if (delays_enabled) {
        double k = 0.0;
        for (const auto& ci : components) {
            for (const auto& cj : components) k += std::sqrt(ci.w * cj.w) * eval_gcsm_cross(tau, ci, cj);
        }
        return k;
    }
    std::vector<GcsmComponent> stripped(components.begin(), components.end());
    for (auto& c : stripped) {
        std::fill(c.theta.begin(), c.theta.end(), 0.0);
        std::fill(c.phi.begin(), c.phi.end(), 0.0);
    }
    return eval_gcsm(tau, stripped, true);
}

double gcsm_diag_term(const GcsmComponent& ci, const GcsmComponent& cj, bool delays_enabled) {
    // Amplitude and frequency-gap factors, then (with delays) the envelope and
    // cosine evaluated at the pure delay difference theta_j - theta_i.
    double amp = 1.0;
    double gap = 0.0;
    double env = 0.0;
    double arg = 0.0;
    for (std::size_t p = 0; p < ci.dim(); ++p) {
        const double a = ci.sigma2[p];
        const double b = cj.sigma2[p];
        amp *= std::sqrt(std::sqrt(4.0 * a * b) / (a + b));
        gap += (ci.mu[p] - cj.mu[p]) * (ci.mu[p] - cj.mu[p]) / (a + b);
        if (delays_enabled) {
            const double shift = cj.theta[p] - ci.theta[p];
            env += shift * a * b * shift / (a + b);
            arg += shift * (a * cj.mu[p] + b * ci.mu[p]) / (a + b) - (ci.phi[p] - cj.phi[p]);
        }
    }
    double term = std::sqrt(ci.w * cj.w) * amp * std::exp(-0.25 * gap);
    if (delays_enabled) term *= std::exp(-kPi * kPi * env) * std::cos(kPi * arg);
    return term;
}

double gcsm_diag_value(std::span<const GcsmComponent> components, bool delays_enabled) {
    double k = 0.0;
    for (const auto& ci : components) {
        for (const auto& cj : components) k += gcsm_diag_term(ci, cj, delays_enabled);
    }
    return k;
}

double eval(const KernelSpec& spec, std::span<const double> tau) {
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel>) {
                return eval_se(tau, k.theta_f, k.theta_l);
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                return eval_periodic(tau, k.theta_f, k.theta_per, k.theta_l);
            } else if constexpr (std::is_same_v<T, Matern52Kernel>) {
                return eval_matern52(tau, k.theta_f, k.theta_l);
            } else if constexpr (std::is_same_v<T, SmKernel>) {
                return eval_sm(tau, k.components);
            } else {
                return eval_gcsm(tau, k.components, k.delays_enabled);
            }
        },
        spec);
}

// --- KernelEvaluator ------------------------------------------------------

KernelEvaluator::KernelEvaluator(KernelSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    n_params_ = kernel_param_count(spec_);
    dim_ = input_dim(spec_);
    if (const auto* g = std::get_if<GcsmKernel>(&spec_)) {
        const auto& cs = g->components;
        sqrt_w_.reserve(cs.size());
        for (const auto& c : cs) sqrt_w_.push_back(std::sqrt(c.w));
        pairs_.reserve(cs.size() * cs.size());
        for (std::size_t i = 0; i < cs.size(); ++i) {
            for (std::size_t j = 0; j < cs.size(); ++j) {
                PairTerm t;
                t.i = i;
                t.j = j;
                t.log_scale = 0.5 * (std::log(cs[i].w) + std::log(cs[j].w));
                for (std::size_t p = 0; p < dim_; ++p) {
                    const double a = cs[i].sigma2[p];
                    const double b = cs[j].sigma2[p];
                    const double s = a + b;
                    const double dmu = cs[i].mu[p] - cs[j].mu[p];
                    t.log_scale += 0.25 * std::log(4.0 * a * b / (s * s)) - 0.25 * dmu * dmu / s;
                    t.env.push_back(kPi * kPi * a * b / s);
                    t.freq.push_back((a * cs[j].mu[p] + b * cs[i].mu[p]) / s);
                    const double dth = g->delays_enabled ? cs[i].theta[p] - cs[j].theta[p] : 0.0;
                    t.dtheta.push_back(dth);
                    if (g->delays_enabled) t.dphi += cs[i].phi[p] - cs[j].phi[p];
                }
                pairs_.push_back(std::move(t));
            }
        }
    }
}

double KernelEvaluator::operator()(std::span<const double> tau) const {
    const auto* g = std::get_if<GcsmKernel>(&spec_);
    if (g == nullptr) return eval(spec_, tau);
    check_dims(tau, dim_, "eval_gcsm");
    double k = 0.0;
    for (const auto& t : pairs_) {
        double log_amp = t.log_scale;
        double phase = -t.dphi;
        for (std::size_t p = 0; p < dim_; ++p) {
            const double d = 2.0 * tau[p] - t.dtheta[p];
            log_amp -= t.env[p] * d * d;
            phase += d * t.freq[p];
        }
        k += std::exp(log_amp) * std::cos(kPi * phase);
    }
    return k;
}

void KernelEvaluator::accumulate_gradient(std::span<const double> tau, double weight,
                                          std::span<double> grad) const {
    if (grad.size() < n_params_) throw InvalidArgument("gradient buffer too small");
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel>) {
                const double r2 = squared_norm(tau);
                const double v = eval_se(tau, k.theta_f, k.theta_l);
                grad[0] += weight * v;
                grad[1] += weight * v * r2 / (k.theta_l * k.theta_l);
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                const double v = eval_periodic(tau, k.theta_f, k.theta_per, k.theta_l);
                const double s = std::sin(kPi * tau[0] / k.theta_per);
                grad[0] += weight * v;
                grad[1] += weight * v * 2.0 * kPi * tau[0] * std::sin(2.0 * kPi * tau[0] / k.theta_per) /
                           (k.theta_l * k.theta_per);
                grad[2] += weight * v * 2.0 * s * s / k.theta_l;
            } else if constexpr (std::is_same_v<T, Matern52Kernel>) {
                const double u = kSqrt5 * std::sqrt(squared_norm(tau)) / k.theta_l;
                const double e = std::exp(-u);
                grad[0] += weight * k.theta_f * (1.0 + u + u * u / 3.0) * e;
                grad[1] += weight * k.theta_f * (u * u / 3.0) * (1.0 + u) * e;
            } else if constexpr (std::is_same_v<T, SmKernel>) {
                const std::size_t dim = dim_;
                check_dims(tau, dim, "eval_sm");
                std::size_t o = 0;
                for (const auto& c : k.components) {
                    double arg = 0.0;
                    double decay = 0.0;
                    for (std::size_t p = 0; p < dim; ++p) {
                        arg += c.mu[p] * tau[p];
                        decay += tau[p] * tau[p] * c.sigma2[p];
                    }
                    const double env = c.w * std::exp(-2.0 * kPi * kPi * decay);
                    const double cs = std::cos(2.0 * kPi * arg);
                    const double sn = std::sin(2.0 * kPi * arg);
                    grad[o] += weight * env * cs;
                    for (std::size_t p = 0; p < dim; ++p) {
                        grad[o + 1 + p] -= weight * env * sn * 2.0 * kPi * tau[p];
                        grad[o + 1 + dim + p] -=
                            weight * env * cs * 2.0 * kPi * kPi * tau[p] * tau[p] * c.sigma2[p];
                    }
                    o += 2 * dim + 1;
                }
            } else {
                check_dims(tau, dim_, "eval_gcsm");
                const std::size_t dim = dim_;
                const std::size_t stride = 4 * dim + 1;
                const auto& cs = k.components;
                for (const auto& t : pairs_) {
                    double log_amp = t.log_scale;
                    double phase = -t.dphi;
                    for (std::size_t p = 0; p < dim; ++p) {
                        const double d = 2.0 * tau[p] - t.dtheta[p];
                        log_amp -= t.env[p] * d * d;
                        phase += d * t.freq[p];
                    }
                    const double amp = weight * std::exp(log_amp);
                    const double tc = amp * std::cos(kPi * phase);
                    const double ts = amp * std::sin(kPi * phase);
                    const std::size_t oi = t.i * stride;
                    const std::size_t oj = t.j * stride;
                    grad[oi] += 0.5 * tc;
                    grad[oj] += 0.5 * tc;
                    for (std::size_t p = 0; p < dim; ++p) {
                        const double a = cs[t.i].sigma2[p];
                        const double b = cs[t.j].sigma2[p];
                        const double s = a + b;
                        const double dmu = cs[t.i].mu[p] - cs[t.j].mu[p];
                        const double d = 2.0 * tau[p] - t.dtheta[p];
                        // mu
                        grad[oi + 1 + p] += tc * (-dmu / (2.0 * s)) - ts * kPi * d * b / s;
                        grad[oj + 1 + p] += tc * (dmu / (2.0 * s)) - ts * kPi * d * a / s;
                        // log sigma2
                        const double gap_part = dmu * dmu / (4.0 * s * s);
                        const double da = 0.25 * (1.0 / a - 2.0 / s) + gap_part -
                                          kPi * kPi * d * d * b * b / (s * s);
                        const double db = 0.25 * (1.0 / b - 2.0 / s) + gap_part -
                                          kPi * kPi * d * d * a * a / (s * s);
                        const double dpsi_a = -kPi * d * b * dmu / (s * s);
                        const double dpsi_b = kPi * d * a * dmu / (s * s);
                        grad[oi + 1 + dim + p] += a * (tc * da - ts * dpsi_a);
                        grad[oj + 1 + dim + p] += b * (tc * db - ts * dpsi_b);
                        if (k.delays_enabled) {
                            // theta: d depends on -(theta_i - theta_j)
                            const double dlog = 2.0 * t.env[p] * d;
                            const double dpsi = -kPi * t.freq[p];
                            grad[oi + 1 + 2 * dim + p] += tc * dlog - ts * dpsi;
                            grad[oj + 1 + 2 * dim + p] -= tc * dlog - ts * dpsi;
                            // phi
                            grad[oi + 1 + 3 * dim + p] += ts * kPi;
                            grad[oj + 1 + 3 * dim + p] -= ts * kPi;
                        }
                    }
                }
            }
        },
        spec_);
}

// --- Gram -----------------------------------------------------------------

namespace {

void check_points(const KernelSpec& spec, const Eigen::MatrixXd& X, const char* what) {
    if (X.rows() == 0) throw InvalidArgument(std::string(what) + ": empty input set");
    const std::size_t dim = input_dim(spec);
    if (dim != 0 && static_cast<std::size_t>(X.cols()) != dim) {
        throw InvalidArgument(std::string(what) + ": input dimension " + std::to_string(X.cols()) +
                              " does not match kernel dimension " + std::to_string(dim));
    }
}

}  // namespace

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2) {
    check_points(spec, X, "gram");
    check_points(spec, X2, "gram");
    if (X.cols() != X2.cols()) throw InvalidArgument("gram: input sets differ in dimension");
    const KernelEvaluator k(spec);
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd K(X.rows(), X2.rows());
    std::vector<double> tau(static_cast<std::size_t>(p));
    for (Eigen::Index a = 0; a < X.rows(); ++a) {
        for (Eigen::Index b = 0; b < X2.rows(); ++b) {
            for (Eigen::Index d = 0; d < p; ++d) tau[d] = X(a, d) - X2(b, d);
            K(a, b) = k(tau);
        }
    }
    return K;
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& X) {
    check_points(spec, X, "gram");
    const KernelEvaluator k(spec);
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    Eigen::MatrixXd K(n, n);
    std::vector<double> tau(static_cast<std::size_t>(p));
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a; b < n; ++b) {
            for (Eigen::Index d = 0; d < p; ++d) tau[d] = X(a, d) - X(b, d);
            K(a, b) = k(tau);
            K(b, a) = K(a, b);
        }
    }
    return K;
}

// --- JSON -----------------------------------------------------------------

nlohmann::json to_json(const KernelSpec& spec) {
    nlohmann::json doc;
    doc["kind"] = kind_name(kind_of(spec));
    doc["params"] = nlohmann::json::object();
    doc["components"] = nlohmann::json::array();
    doc["delays_enabled"] = false;
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel> || std::is_same_v<T, Matern52Kernel>) {
                doc["params"] = {{"theta_f", k.theta_f}, {"theta_l", k.theta_l}};
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                doc["params"] = {{"theta_f", k.theta_f}, {"theta_per", k.theta_per}, {"theta_l", k.theta_l}};
            } else if constexpr (std::is_same_v<T, SmKernel>) {
                for (const auto& c : k.components) {
                    doc["components"].push_back({{"w", c.w}, {"mu", c.mu}, {"sigma2", c.sigma2}});
                }
            } else {
                for (const auto& c : k.components) {
                    doc["components"].push_back(
                        {{"w", c.w}, {"mu", c.mu}, {"sigma2", c.sigma2}, {"theta", c.theta}, {"phi", c.phi}});
                }
                doc["delays_enabled"] = k.delays_enabled;
            }
        },
        spec);
    return doc;
}

KernelSpec kernel_from_json(const nlohmann::json& doc) {
    KernelSpec spec;
    try {
        const KernelKind kind = parse_kind(doc.at("kind").get<std::string>());
        const auto params = doc.value("params", nlohmann::json::object());
        switch (kind) {
            case KernelKind::SE:
                spec = SeKernel{params.at("theta_f").get<double>(), params.at("theta_l").get<double>()};
                break;
            case KernelKind::Matern52:
                spec = Matern52Kernel{params.at("theta_f").get<double>(), params.at("theta_l").get<double>()};
                break;
            case KernelKind::Periodic:
                spec = PeriodicKernel{params.at("theta_f").get<double>(), params.at("theta_per").get<double>(),
                                      params.at("theta_l").get<double>()};
                break;
            case KernelKind::SM: {
                SmKernel sm;
                for (const auto& c : doc.at("components")) {
                    sm.components.push_back({c.at("w").get<double>(), c.at("mu").get<std::vector<double>>(),
                                             c.at("sigma2").get<std::vector<double>>()});
                }
                spec = std::move(sm);
                break;
            }
            case KernelKind::GCSM: {
                GcsmKernel g;
                g.delays_enabled = doc.value("delays_enabled", true);
                for (const auto& c : doc.at("components")) {
                    GcsmComponent gc;
                    gc.w = c.at("w").get<double>();
                    gc.mu = c.at("mu").get<std::vector<double>>();
                    gc.sigma2 = c.at("sigma2").get<std::vector<double>>();
                    gc.theta = c.contains("theta") ? c.at("theta").get<std::vector<double>>()
                                                   : std::vector<double>(gc.mu.size(), 0.0);
                    gc.phi = c.contains("phi") ? c.at("phi").get<std::vector<double>>()
                                               : std::vector<double>(gc.mu.size(), 0.0);
                    g.components.push_back(std::move(gc));
                }
                spec = std::move(g);
                break;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed kernel JSON: ") + e.what());
    }
    validate(spec);
    return spec;
}

}  // namespace gcsm
