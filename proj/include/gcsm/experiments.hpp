#pragma once

#include "gcsm/gp.hpp"
#include "gcsm/hyperopt.hpp"
#include "gcsm/kernel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gcsm {

struct Task {
    std::string name;  // arti1-normal, arti2-integral, arti3-derivative, arti4-delayed, airline, riverflow
    Dataset train;
    Dataset test;
    std::string provenance;
};

// Generator for the synthetic tasks. The defaults are our own choice; bump
// `version` whenever a default changes so stored task files stay traceable.
struct SyntheticConfig {
    int version = 1;
    SmKernel generator{{{1.0, {0.15}, {0.02}}, {0.5, {0.5}, {0.02}}, {0.25, {1.0}, {0.05}}}};
    std::vector<double> delays{-1.0, 0.0, 1.5};  // shift t_q of component q in the delayed task
    int points = 500;
    double lo = -10.0, hi = 10.0;
    double sample_noise = 1e-6;  // diagonal added when sampling, keeps the draw factorizable
};

[[nodiscard]] nlohmann::json to_json(const SyntheticConfig& config);
[[nodiscard]] SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc);

/// Cell-centred grid x_k = lo + (k + 1/2) (hi - lo) / points.
[[nodiscard]] Eigen::VectorXd synthetic_grid(const SyntheticConfig& config);

/// Cumulative trapezoid starting at zero.
[[nodiscard]] Eigen::VectorXd cumulative_integral(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
/// Central differences in the interior, one-sided at the two ends.
[[nodiscard]] Eigen::VectorXd finite_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// The four synthetic tasks in order arti1..arti4.
[[nodiscard]] std::vector<Task> gen_synthetic(std::uint64_t seed, const SyntheticConfig& config = {});

[[nodiscard]] double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

/// Reads a `t,y` CSV. Throws DatasetError E_DATASET_IO (with the path) when
/// the file cannot be opened and E_DATASET_FORMAT on malformed content.
[[nodiscard]] Dataset read_series_csv(const std::filesystem::path& path);

/// Loads a bundled dataset ("airline" or "riverflow") and applies its split.
/// A row count other than the declared one raises E_DATASET_INTEGRITY.
[[nodiscard]] Task load_dataset(const std::filesystem::path& path, const std::string& name);

/// Starting spec shared by the benchmark and the CLI: moment heuristics for
/// SE, Periodic and Matern (q, strategy and seed unused), init_hyperparams
/// for SM and GCSM.
[[nodiscard]] KernelSpec initial_spec(KernelKind kind, const Dataset& data, int q, InitStrategy strategy,
                                      std::uint64_t seed, bool delays_enabled, const InitConfig& base = {});

struct BenchmarkConfig {
    std::vector<KernelKind> kernels{KernelKind::SE, KernelKind::Periodic, KernelKind::Matern52, KernelKind::SM,
                                    KernelKind::GCSM};
    int q_synthetic = 3;
    int q_real = 10;
    OptConfig opt;           // seed is overridden per cell
    InitConfig init;         // kind and seed are set per cell
    int airline_restarts = 10;
    std::uint64_t seed = 7;
    bool keep_grams = true;  // trained Gram matrices for airline / riverflow
    int threads = 0;         // 0 = GCSM_THREADS or the hardware count
};

struct CellResult {
    std::string task;
    KernelKind kernel = KernelKind::SE;
    bool ok = false;
    std::string error;  // "<code>: <message>" when the cell failed
    double mae = 0.0;
    double nlml = 0.0;
    double seconds = 0.0;
    std::optional<KernelSpec> spec;
    double noise_var = 0.0;
    Eigen::VectorXd mean;  // predictive mean on the test inputs, offset restored
    Eigen::VectorXd var;
};

struct GramSet {
    std::string task;
    Eigen::MatrixXd sm;
    Eigen::MatrixXd gcsm;
    Eigen::MatrixXd abs_diff;
};

struct ExperimentResult {
    std::vector<CellResult> cells;  // task-major, kernels in config order
    std::vector<GramSet> grams;

    [[nodiscard]] const CellResult* find(const std::string& task, KernelKind kernel) const;
};

/// Derives an independent generator seed for one (task, kernel) cell.
[[nodiscard]] std::uint64_t cell_seed(std::uint64_t master, const std::string& task, const std::string& label);

[[nodiscard]] ExperimentResult run_benchmark(const std::vector<Task>& tasks, const BenchmarkConfig& config);

/// `task,kernel,mae,nlml,seconds`; seconds print as NA unless with_timings.
void write_result_csv(std::ostream& out, const ExperimentResult& result, bool with_timings);
[[nodiscard]] nlohmann::json result_to_json(const ExperimentResult& result, bool with_timings);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
/// Human-readable table, one row per task, one column per kernel.
void print_table(std::ostream& out, const ExperimentResult& result);

}  // namespace gcsm
