#pragma once

#include "gcsm/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace gcsm::testing {

inline SmComponent random_sm(std::mt19937_64& rng, std::size_t dim = 1) {
    std::uniform_real_distribution<double> w(0.2, 2.0), mu(0.0, 1.0), ls(std::log(0.005), std::log(0.2));
    SmComponent c;
    c.w = w(rng);
    for (std::size_t p = 0; p < dim; ++p) {
        c.mu.push_back(mu(rng));
        c.sigma2.push_back(std::exp(ls(rng)));
    }
    return c;
}

inline GcsmComponent random_gcsm(std::mt19937_64& rng, std::size_t dim = 1) {
    std::uniform_real_distribution<double> theta(-1.0, 1.0), phi(0.0, 2.0 * std::numbers::pi);
    GcsmComponent c = GcsmComponent::from_sm(random_sm(rng, dim));
    for (std::size_t p = 0; p < dim; ++p) {
        c.theta[p] = theta(rng);
        c.phi[p] = phi(rng);
    }
    return c;
}

inline GcsmKernel random_gcsm_kernel(std::mt19937_64& rng, int q, std::size_t dim = 1) {
    GcsmKernel k;
    for (int i = 0; i < q; ++i) k.components.push_back(random_gcsm(rng, dim));
    return k;
}

// Asymptotic Kolmogorov distribution with the Stephens small-sample correction.
inline double ks_p_value(std::vector<double> sample) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-sample[i] / std::numbers::sqrt2);
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace gcsm::testing
