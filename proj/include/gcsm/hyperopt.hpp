#pragma once

#include "gcsm/gp.hpp"
#include "gcsm/kernel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace gcsm {

enum class Transform { Log, Identity, ClampedIdentity };

struct ParamSlot {
    std::string name;  // e.g. "c2.mu[0]", "noise_var"
    Transform transform = Transform::Log;
    double lo = 0.0, hi = 0.0;  // clamp range for ClampedIdentity
    bool fixed = false;
    double step_scale = 1.0;  // typical move per optimizer step, in packed units
};

// Maps a kernel spec plus noise variance onto an unconstrained vector: log
// for positive quantities, identity for delays, clamped identity for mu. The
// kernel coordinates follow kernel_param_count's order; noise is last.
class ParamPacking {
public:
    struct Options {
        double nyquist = 0.5;      // upper clamp for mu
        double input_range = 1.0;  // sets step scales for mu and theta
        bool fix_noise = false;
        bool fix_weights = false;
    };

    ParamPacking(const KernelSpec& layout, Options options);

    [[nodiscard]] std::size_t size() const { return slots_.size(); }
    [[nodiscard]] const std::vector<ParamSlot>& slots() const { return slots_; }
    [[nodiscard]] const Options& options() const { return options_; }

    [[nodiscard]] Eigen::VectorXd pack(const KernelSpec& spec, double noise_var) const;
    [[nodiscard]] std::pair<KernelSpec, double> unpack(const Eigen::VectorXd& u) const;

    // Chain rule from the engine gradient (kernel coordinates then log noise)
    // to the packed coordinates: zero for clamped-out mu and fixed slots.
    [[nodiscard]] Eigen::VectorXd chain(const Eigen::VectorXd& engine_grad, const Eigen::VectorXd& u) const;

private:
    KernelSpec layout_;
    Options options_;
    std::vector<ParamSlot> slots_;
};

struct OptConfig {
    int max_iters = 1000;
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double grad_tol = 1e-5;
    double rel_tol = 1e-9;
    int max_retries = 3;
    bool fix_noise = false;
    bool fix_weights = false;
    double nyquist = 0.0;  // 0 derives 1 / (2 dx) from the data
    std::uint64_t seed = 0;
};

[[nodiscard]] nlohmann::json to_json(const OptConfig& config);
[[nodiscard]] OptConfig opt_config_from_json(const nlohmann::json& doc);

/// Nyquist frequency 1 / (2 * smallest positive input spacing), scalar inputs.
[[nodiscard]] double nyquist_of(const Dataset& data);
[[nodiscard]] double input_range_of(const Dataset& data);

/// Adaptive first-order minimisation of the NLML (per-coordinate step
/// scaling). The returned model is the best point seen, so its NLML never
/// exceeds the initial one.
[[nodiscard]] TrainedModel fit(const KernelSpec& initial, double noise_var, const Dataset& data,
                               const OptConfig& config);
[[nodiscard]] TrainedModel fit(const KernelSpec& initial, double noise_var, const NlmlObjective& objective,
                               const OptConfig& config);

/// Closed-form expected improvement for minimisation.
[[nodiscard]] double expected_improvement(double pred_mean, double pred_sd, double f_best);

struct BoConfig {
    int budget = 0;          // total evaluations; 0 = initial design + 20
    int initial_design = 0;  // 0 = 5 * dim
    int candidates = 2048;
    int local_candidates = 64;
    std::uint64_t seed = 0;
};

[[nodiscard]] nlohmann::json to_json(const BoConfig& config);
[[nodiscard]] BoConfig bo_config_from_json(const nlohmann::json& doc);

struct BoTrace {
    std::vector<std::vector<double>> points;  // in the original bounds
    std::vector<double> values;               // +inf where the objective failed
    std::vector<double> incumbent_values;     // running minimum after each evaluation
    std::size_t incumbent = 0;
    // Per model-guided step: EI of the chosen point and the largest EI over
    // already-evaluated points under the same surrogate.
    std::vector<double> chosen_ei;
    std::vector<double> max_evaluated_ei;
    std::size_t initial_design = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;

/// Bayesian optimisation with a Matern 5/2 surrogate (one shared length-scale
/// on the unit box, standardized outputs) and expected improvement.
[[nodiscard]] BoTrace bayes_opt(const Objective& objective, const std::vector<std::pair<double, double>>& bounds,
                                const BoConfig& config);

void write_bo_trace_csv(std::ostream& out, const BoTrace& trace);

enum class InitStrategy { SpectralGmm, BayesOpt, Random };

[[nodiscard]] InitStrategy parse_init_strategy(const std::string& name);
[[nodiscard]] std::string init_strategy_name(InitStrategy s);

struct InitConfig {
    KernelKind kind = KernelKind::GCSM;
    bool delays_enabled = true;
    int inner_steps = 50;  // BO objective: NLML after this many gradient steps
    BoConfig bo;
    double noise_var = 0.0;  // 0 = 1% of var(y)
};

/// Initial SM or GCSM spec for the data. Weights start at var(y) / Q; GCSM
/// delays start at theta ~ U(-0.1 R, 0.1 R), phi ~ U(0, 2 pi).
[[nodiscard]] KernelSpec init_hyperparams(const Dataset& data, int q, InitStrategy strategy, std::uint64_t seed,
                                          const InitConfig& config = {});

/// Same as above but also returns the BO trace when strategy is BayesOpt.
[[nodiscard]] std::pair<KernelSpec, BoTrace> init_hyperparams_traced(const Dataset& data, int q,
                                                                     InitStrategy strategy, std::uint64_t seed,
                                                                     const InitConfig& config = {});

}  // namespace gcsm
