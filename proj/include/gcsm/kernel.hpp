#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gcsm {

// One spectral mixture component with diagonal frequency covariance.
struct SmComponent {
    double w = 1.0;
    std::vector<double> mu;      // frequency, cycles per input unit
    std::vector<double> sigma2;  // frequency variance, per dimension

    [[nodiscard]] std::size_t dim() const { return mu.size(); }
};

// SM component extended with per-dimension time delay and phase delay.
struct GcsmComponent {
    double w = 1.0;
    std::vector<double> mu;
    std::vector<double> sigma2;
    std::vector<double> theta;  // time delay, input units
    std::vector<double> phi;    // phase delay; enters the cosine as pi*(phi_i - phi_j)

    [[nodiscard]] std::size_t dim() const { return mu.size(); }
    [[nodiscard]] SmComponent as_sm() const { return {w, mu, sigma2}; }
    static GcsmComponent from_sm(const SmComponent& c);
};

struct SeKernel {
    double theta_f = 1.0;
    double theta_l = 1.0;
};

struct PeriodicKernel {
    double theta_f = 1.0;
    double theta_per = 1.0;
    double theta_l = 1.0;
};

struct Matern52Kernel {
    double theta_f = 1.0;
    double theta_l = 1.0;
};

struct SmKernel {
    std::vector<SmComponent> components;
};

struct GcsmKernel {
    std::vector<GcsmComponent> components;
    bool delays_enabled = true;
};

enum class KernelKind { SE, Periodic, Matern52, SM, GCSM };

using KernelSpec = std::variant<SeKernel, PeriodicKernel, Matern52Kernel, SmKernel, GcsmKernel>;

[[nodiscard]] KernelKind kind_of(const KernelSpec& spec);
[[nodiscard]] std::string kind_name(KernelKind kind);
// Throws InvalidArgument (code E_KERNEL_UNKNOWN) for unrecognised names.
[[nodiscard]] KernelKind parse_kind(const std::string& name);

// Throws InvalidArgument when an invariant is violated (empty mixture,
// non-positive scale, mixed dimensions, non-finite values).
void validate(const KernelSpec& spec);

// Input dimension P implied by the spec; 0 means "any" (SE, Matern).
[[nodiscard]] std::size_t input_dim(const KernelSpec& spec);

// Number of unconstrained kernel coordinates (noise excluded). Order:
//   SE       [log theta_f, log theta_l]
//   Periodic [log theta_f, log theta_per, log theta_l]
//   Matern52 [log theta_f, log theta_l]
//   SM       per component [log w, mu[P], log sigma2[P]]
//   GCSM     per component [log w, mu[P], log sigma2[P], theta[P], phi[P]]
[[nodiscard]] std::size_t kernel_param_count(const KernelSpec& spec);

// --- closed-form evaluation ---------------------------------------------

[[nodiscard]] double eval_se(std::span<const double> tau, double theta_f, double theta_l);
[[nodiscard]] double eval_periodic(std::span<const double> tau, double theta_f, double theta_per,
                                   double theta_l);
[[nodiscard]] double eval_matern52(std::span<const double> tau, double theta_f, double theta_l);
[[nodiscard]] double eval_sm(std::span<const double> tau, std::span<const SmComponent> components);

/// Weight-free symmetrized cross term between components i and j. Equal
/// components give exactly one SM term; swapping (tau, i, j) for (-tau, j, i)
/// leaves the value unchanged.
[[nodiscard]] double eval_gcsm_cross(std::span<const double> tau, const GcsmComponent& ci,
                                     const GcsmComponent& cj);

[[nodiscard]] double eval_gcsm(std::span<const double> tau, std::span<const GcsmComponent> components,
                               bool delays_enabled);

/// Closed-form k(0) for the GCSM kernel, written independently of the
/// tau-dependent path. Individual (i, j) terms may be negative when delays are
/// active; the sum never is.
[[nodiscard]] double gcsm_diag_value(std::span<const GcsmComponent> components, bool delays_enabled);

/// Weighted (i, j) term of gcsm_diag_value, exposed for sign inspection.
[[nodiscard]] double gcsm_diag_term(const GcsmComponent& ci, const GcsmComponent& cj,
                                    bool delays_enabled);

[[nodiscard]] double eval(const KernelSpec& spec, std::span<const double> tau);

// Precomputes per-spec constants so repeated evaluation (Gram assembly,
// gradient accumulation) avoids redundant work. Immutable once built.
class KernelEvaluator {
public:
    explicit KernelEvaluator(KernelSpec spec);

    [[nodiscard]] const KernelSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t param_count() const { return n_params_; }

    [[nodiscard]] double operator()(std::span<const double> tau) const;

    // grad[k] += weight * d k(tau) / d u_k for every unconstrained kernel
    // coordinate u_k (see kernel_param_count for the order). grad must hold at
    // least param_count() entries.
    void accumulate_gradient(std::span<const double> tau, double weight, std::span<double> grad) const;

private:
    struct PairTerm {
        std::size_t i = 0, j = 0;
        double log_scale = 0.0;  // log(amplitude * gap), tau independent
        std::vector<double> env;     // pi^2 a b / (a + b) per dimension
        std::vector<double> freq;    // (a mu_j + b mu_i) / (a + b) per dimension
        std::vector<double> dtheta;  // theta_i - theta_j per dimension
        double dphi = 0.0;           // sum over dims of (phi_i - phi_j)
    };

    KernelSpec spec_;
    std::size_t n_params_ = 0;
    std::size_t dim_ = 0;
    std::vector<PairTerm> pairs_;
    std::vector<double> sqrt_w_;
};

/// Gram matrix with entry (a, b) = k(X.row(a) - X2.row(b)). Rows are points.
[[nodiscard]] Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& X2);
/// Symmetric Gram matrix: upper triangle evaluated, lower mirrored.
[[nodiscard]] Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& X);

// --- JSON ----------------------------------------------------------------

[[nodiscard]] nlohmann::json to_json(const KernelSpec& spec);
[[nodiscard]] KernelSpec kernel_from_json(const nlohmann::json& doc);

}  // namespace gcsm
