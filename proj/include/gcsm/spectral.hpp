#pragma once

#include "gcsm/kernel.hpp"

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace gcsm {

// Empirical spectral density on a strictly increasing, nonnegative grid.
struct Spectrum {
    std::vector<double> freqs;
    std::vector<double> density;
};

using ComplexDensityValue = std::complex<double>;

/// Symmetrized Gaussian density [N(s; mu, s2) + N(-s; mu, s2)] / 2 of a
/// one-dimensional SM component, per unit weight.
[[nodiscard]] double sm_density(double s, const SmComponent& comp);

/// Square-root spectral basis of a one-dimensional GCSM component (weight
/// free): quarter-power Gaussian envelope times exp(-i*pi*(theta*s + phi)).
[[nodiscard]] ComplexDensityValue gcsm_basis_density(double s, const GcsmComponent& comp);

/// basis(s, i) * conj(basis(s, j)).
[[nodiscard]] ComplexDensityValue cross_density(double s, const GcsmComponent& ci, const GcsmComponent& cj);

struct IntegrationConfig {
    double half_width = 0.0;  // grid covers [-half_width, half_width]
    double step = 0.0;

    // Smallest grid that satisfies the coverage and resolution bounds for
    // the given pair: F = mu_max + 8 sigma_max, h = sigma_min / 8.
    static IntegrationConfig for_pair(const GcsmComponent& ci, const GcsmComponent& cj);
};

/// Inverse Fourier transform of the Hermitian-symmetrized cross density by
/// composite trapezoidal quadrature. This is a test oracle for
/// eval_gcsm_cross, not a production path. Throws ConfigurationError when the
/// grid violates the coverage or step bounds.
[[nodiscard]] double kernel_from_density(const GcsmComponent& ci, const GcsmComponent& cj, double tau,
                                         const IntegrationConfig& config);

/// Mean-subtracted periodogram |DFT(y)_k|^2 * dx / N at f_k = k / (N dx),
/// k = 1..floor(N/2). x must be uniformly spaced, N >= 8.
[[nodiscard]] Spectrum periodogram(std::span<const double> x, std::span<const double> y);

struct GmmFit {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<double> log_likelihood_trace;  // best restart, one entry per EM iteration
};

struct GmmConfig {
    int restarts = 10;
    int max_iters = 200;
    double rel_tol = 1e-8;
    double variance_floor = 0.0;  // 0 selects (grid spacing)^2
};

/// Weighted one-dimensional EM on the frequency grid with density values as
/// sample weights.
[[nodiscard]] GmmFit fit_weighted_gmm(const Spectrum& spec, int q, std::uint64_t seed,
                                      const GmmConfig& config = {});

/// Q-component SM initialization from an empirical spectrum; weights scale
/// to signal_variance. Throws InvalidArgument (E_GMM_Q) when Q exceeds the
/// number of frequencies carrying positive density.
[[nodiscard]] std::vector<SmComponent> gmm_init(const Spectrum& spec, int q, double signal_variance,
                                                std::uint64_t seed, const GmmConfig& config = {});

void write_spectrum_csv(std::ostream& out, const Spectrum& spec);
[[nodiscard]] Spectrum read_spectrum_csv(std::istream& in);

}  // namespace gcsm
