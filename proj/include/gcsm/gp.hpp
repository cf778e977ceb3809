#pragma once

#include "gcsm/kernel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gcsm {

// Inputs as rows of x (N x P), targets y (N).
struct Dataset {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;

    [[nodiscard]] Eigen::Index size() const { return y.size(); }
    [[nodiscard]] Eigen::Index dim() const { return x.cols(); }
};

void validate(const Dataset& data);

// Order-sensitive FNV-1a over the raw bytes of x and y, as 16 hex digits.
[[nodiscard]] std::string dataset_checksum(const Dataset& data);

struct CholeskyResult {
    Eigen::MatrixXd factor;  // lower triangular
    double jitter = 0.0;     // added on top of base_noise
};

/// Factor K + (base_noise + j) I, escalating j through
/// {0, 1e-8, 1e-7, ..., 1e-2} * mean(diag K). Throws NumericalFailure carrying
/// the ladder when every rung fails.
[[nodiscard]] CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& K, double base_noise);

/// Negative log marginal likelihood of a zero-mean GP.
[[nodiscard]] double nlml(const KernelSpec& spec, double noise_var, const Dataset& data);

struct NlmlGradient {
    double value = 0.0;
    // d NLML / d u for every unconstrained kernel coordinate (kernel order),
    // followed by d NLML / d log noise_var.
    Eigen::VectorXd grad;
    double jitter = 0.0;
};

/// NLML and its exact gradient via 1/2 tr[(K^-1 - alpha alpha^T) dK].
[[nodiscard]] NlmlGradient nlml_grad(const KernelSpec& spec, double noise_var, const Dataset& data);

// Training objective bound to one dataset. Pairs of inputs sharing a lag are
// grouped once, so for scalar inputs on a grid each evaluation touches ~N
// distinct lags instead of N^2/2 pairs.
class NlmlObjective {
public:
    explicit NlmlObjective(Dataset data);

    [[nodiscard]] const Dataset& data() const { return data_; }
    [[nodiscard]] double value(const KernelSpec& spec, double noise_var) const;
    [[nodiscard]] NlmlGradient value_and_grad(const KernelSpec& spec, double noise_var) const;

private:
    struct Lags;
    Dataset data_;
    std::shared_ptr<const Lags> lags_;
};

struct FitInfo {
    double nlml = 0.0;
    int iterations = 0;
    double jitter = 0.0;
};

// Immutable after construction; safe to share across threads for predict().
class TrainedModel {
public:
    TrainedModel(KernelSpec spec, double noise_var, Dataset data, FitInfo info = {});

    [[nodiscard]] const KernelSpec& spec() const { return spec_; }
    [[nodiscard]] double noise_var() const { return noise_var_; }
    [[nodiscard]] const Dataset& data() const { return data_; }
    [[nodiscard]] const Eigen::MatrixXd& chol() const { return chol_; }
    [[nodiscard]] const Eigen::VectorXd& alpha() const { return alpha_; }
    [[nodiscard]] double jitter() const { return jitter_; }
    [[nodiscard]] const FitInfo& info() const { return info_; }

private:
    KernelSpec spec_;
    double noise_var_;
    Dataset data_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
    FitInfo info_;
};

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;  // latent variance, nonnegative
    int clamped = 0;      // variances raised from tiny negatives to zero
};

/// Predictive mean K*^T alpha and latent variance k** - |L^-1 K*|^2. Negative
/// variances within 1e-10 * max(1, k**) are clamped (and counted); larger
/// ones raise NumericalFailure.
[[nodiscard]] Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& xstar);

/// chol(K + noise_var I) z with z ~ N(0, I) drawn from a seeded generator.
[[nodiscard]] Eigen::VectorXd sample_prior(const KernelSpec& spec, const Eigen::MatrixXd& X, double noise_var,
                                           std::uint64_t seed);

[[nodiscard]] nlohmann::json model_to_json(const TrainedModel& model,
                                          const nlohmann::json& extra = nlohmann::json::object());

struct ModelDocument {
    KernelSpec spec;
    double noise_var = 0.0;
    std::string checksum;
    FitInfo info;
    nlohmann::json extra;  // caller-defined metadata (dataset name, target offset, ...)
};

[[nodiscard]] ModelDocument model_from_json(const nlohmann::json& doc);

}  // namespace gcsm
