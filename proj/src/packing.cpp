#include "gcsm/errors.hpp"
#include "gcsm/hyperopt.hpp"

#include <algorithm>
#include <cmath>

namespace gcsm {

ParamPacking::ParamPacking(const KernelSpec& layout, Options options) : layout_(layout), options_(options) {
    validate(layout_);
    auto add = [this](std::string name, Transform t, bool fixed = false, double step = 1.0) {
        ParamSlot s;
        s.name = std::move(name);
        s.transform = t;
        s.fixed = fixed;
        s.step_scale = step;
        if (t == Transform::ClampedIdentity) {
            s.lo = 0.0;
            s.hi = options_.nyquist;
        }
        slots_.push_back(std::move(s));
    };
    const double range = options_.input_range > 0.0 ? options_.input_range : 1.0;
    auto add_mixture = [&](const auto& components, bool with_delays, bool delays_free) {
        for (std::size_t c = 0; c < components.size(); ++c) {
            const std::string pre = "c" + std::to_string(c) + ".";
            const std::size_t dim = components[c].dim();
            add(pre + "w", Transform::Log, options_.fix_weights);
            for (std::size_t p = 0; p < dim; ++p) {
                add(pre + "mu[" + std::to_string(p) + "]", Transform::ClampedIdentity, false, 1.0 / range);
            }
            for (std::size_t p = 0; p < dim; ++p) add(pre + "sigma2[" + std::to_string(p) + "]", Transform::Log);
            if (!with_delays) continue;
            for (std::size_t p = 0; p < dim; ++p) {
                add(pre + "theta[" + std::to_string(p) + "]", Transform::Identity, !delays_free, 0.02 * range);
            }
            for (std::size_t p = 0; p < dim; ++p) {
                add(pre + "phi[" + std::to_string(p) + "]", Transform::Identity, !delays_free, 1.0);
            }
        }
    };
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel> || std::is_same_v<T, Matern52Kernel>) {
                add("theta_f", Transform::Log);
                add("theta_l", Transform::Log);
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                add("theta_f", Transform::Log);
                add("theta_per", Transform::Log);
                add("theta_l", Transform::Log);
            } else if constexpr (std::is_same_v<T, SmKernel>) {
                add_mixture(k.components, false, false);
            } else {
                add_mixture(k.components, true, k.delays_enabled);
            }
        },
        layout_);
    add("noise_var", Transform::Log, options_.fix_noise);
}

Eigen::VectorXd ParamPacking::pack(const KernelSpec& spec, double noise_var) const {
    if (kind_of(spec) != kind_of(layout_) || kernel_param_count(spec) + 1 != slots_.size()) {
        throw InvalidArgument("pack: spec does not match the packing layout");
    }
    if (!(noise_var > 0.0)) throw InvalidArgument("pack: noise variance must be positive");
    std::vector<double> raw;
    raw.reserve(slots_.size());
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel> || std::is_same_v<T, Matern52Kernel>) {
                raw = {k.theta_f, k.theta_l};
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                raw = {k.theta_f, k.theta_per, k.theta_l};
            } else {
                for (const auto& c : k.components) {
                    raw.push_back(c.w);
                    raw.insert(raw.end(), c.mu.begin(), c.mu.end());
                    raw.insert(raw.end(), c.sigma2.begin(), c.sigma2.end());
                    if constexpr (std::is_same_v<T, GcsmKernel>) {
                        raw.insert(raw.end(), c.theta.begin(), c.theta.end());
                        raw.insert(raw.end(), c.phi.begin(), c.phi.end());
                    }
                }
            }
        },
        spec);
    raw.push_back(noise_var);
    Eigen::VectorXd u(static_cast<Eigen::Index>(slots_.size()));
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& s = slots_[i];
        u(static_cast<Eigen::Index>(i)) = s.transform == Transform::Log ? std::log(raw[i])
                                          : s.transform == Transform::ClampedIdentity ? std::clamp(raw[i], s.lo, s.hi)
                                                                                      : raw[i];
    }
    return u;
}

std::pair<KernelSpec, double> ParamPacking::unpack(const Eigen::VectorXd& u) const {
    if (static_cast<std::size_t>(u.size()) != slots_.size()) throw InvalidArgument("unpack: wrong vector length");
    std::vector<double> raw(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& s = slots_[i];
        const double v = u(static_cast<Eigen::Index>(i));
        raw[i] = s.transform == Transform::Log               ? std::exp(v)
                 : s.transform == Transform::ClampedIdentity ? std::clamp(v, s.lo, s.hi)
                                                             : v;
    }
    KernelSpec spec = layout_;
    std::size_t at = 0;
    std::visit(
        [&](auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SeKernel> || std::is_same_v<T, Matern52Kernel>) {
                k.theta_f = raw[at++];
                k.theta_l = raw[at++];
            } else if constexpr (std::is_same_v<T, PeriodicKernel>) {
                k.theta_f = raw[at++];
                k.theta_per = raw[at++];
                k.theta_l = raw[at++];
            } else {
                for (auto& c : k.components) {
                    c.w = raw[at++];
                    for (double& m : c.mu) m = raw[at++];
                    for (double& s : c.sigma2) s = raw[at++];
                    if constexpr (std::is_same_v<T, GcsmKernel>) {
                        for (double& t : c.theta) t = raw[at++];
                        for (double& p : c.phi) p = raw[at++];
                    }
                }
            }
        },
        spec);
    return {std::move(spec), raw[at]};
}

Eigen::VectorXd ParamPacking::chain(const Eigen::VectorXd& engine_grad, const Eigen::VectorXd& u) const {
    if (static_cast<std::size_t>(engine_grad.size()) != slots_.size() || u.size() != engine_grad.size()) {
        throw InvalidArgument("chain: gradient length does not match the packing");
    }
    Eigen::VectorXd g = engine_grad;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& s = slots_[i];
        const auto ii = static_cast<Eigen::Index>(i);
        if (s.fixed) {
            g(ii) = 0.0;
        } else if (s.transform == Transform::ClampedIdentity && (u(ii) < s.lo || u(ii) > s.hi)) {
            g(ii) = 0.0;
        }
    }
    return g;
}

}  // namespace gcsm
