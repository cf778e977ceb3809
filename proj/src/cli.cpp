#include "gcsm/cli.hpp"

#include "gcsm/errors.hpp"
#include "gcsm/experiments.hpp"
#include "gcsm/gp.hpp"
#include "gcsm/hyperopt.hpp"
#include "gcsm/spectral.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef GCSM_DATA_DIR
#define GCSM_DATA_DIR "data"
#endif

namespace gcsm {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("E_OUTPUT_IO", "cannot write '" + path.string() + "'");
    return f;
}

bool parse_delays(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw InvalidArgument("--delays must be on or off", "E_USAGE");
}

// Training data as used by fit and predict: optionally the first rows only,
// targets mean-centred.
struct Training {
    Dataset data;
    double offset = 0.0;
};

Training training_set(const fs::path& path, int train_rows) {
    Dataset all = read_series_csv(path);
    if (train_rows > 0) {
        if (train_rows > all.size()) {
            throw InvalidArgument("--train-rows exceeds the " + std::to_string(all.size()) + " rows available");
        }
        all = {all.x.topRows(train_rows), all.y.head(train_rows)};
    }
    Training t;
    t.offset = all.y.mean();
    t.data = {all.x, (all.y.array() - t.offset).matrix()};
    return t;
}

struct FitArgs {
    std::string dataset;
    std::string kernel = "GCSM";
    int q = 10;
    std::string init = "spectral-gmm";
    std::uint64_t seed = 7;
    int max_iters = 1000;
    std::string out = "model.json";
    std::string delays = "on";
    int train_rows = 0;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
    const KernelKind kind = parse_kind(a.kernel);
    const InitStrategy strategy = parse_init_strategy(a.init);
    const bool delays = parse_delays(a.delays);
    if (a.q < 1) throw InvalidArgument("--q must be >= 1", "E_USAGE");
    const Training t = training_set(a.dataset, a.train_rows);

    const KernelSpec start = initial_spec(kind, t.data, a.q, strategy, a.seed, delays);
    OptConfig opt;
    opt.max_iters = a.max_iters;
    opt.seed = a.seed;
    const double var = (t.data.y.array().square().sum()) / std::max<double>(1.0, t.data.size() - 1.0);
    const TrainedModel model = fit(start, 0.01 * (var > 0.0 ? var : 1.0), t.data, opt);

    const nlohmann::json meta{{"dataset", fs::path(a.dataset).filename().string()},
                              {"train_rows", t.data.size()},
                              {"target_offset", t.offset},
                              {"init", a.init},
                              {"seed", a.seed}};
    open_out(a.out) << model_to_json(model, meta).dump(2) << '\n';
    out << "fit nlml=" << num(model.info().nlml) << " iters=" << model.info().iterations
        << " jitter=" << num(model.jitter()) << '\n';
    return 0;
}

struct PredictArgs {
    std::string model;
    std::string dataset;
    std::optional<std::string> from, to;
    std::string step = "1";
    std::string inputs;
    std::string out;
};

double parse_number(const std::string& s, const char* flag) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty() || !std::isfinite(v)) {
        throw InvalidArgument(std::string(flag) + ": '" + s + "' is not a finite number", "E_RANGE");
    }
    return v;
}

std::vector<double> range_inputs(const PredictArgs& a) {
    if (!a.from || !a.to) throw InvalidArgument("--from and --to must be given together", "E_RANGE");
    const double lo = parse_number(*a.from, "--from");
    const double hi = parse_number(*a.to, "--to");
    const double step = parse_number(a.step, "--step");
    if (!(step > 0.0) || hi < lo) throw InvalidArgument("range needs --from <= --to and --step > 0", "E_RANGE");
    const double count = std::floor((hi - lo) / step + 1e-9) + 1.0;
    if (count > 1e7) throw InvalidArgument("range has too many points", "E_RANGE");
    std::vector<double> xs;
    for (long i = 0; i < static_cast<long>(count); ++i) xs.push_back(lo + static_cast<double>(i) * step);
    return xs;
}

std::vector<double> file_inputs(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("E_DATASET_IO", "cannot open inputs '" + path.string() + "'");
    std::vector<double> xs;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string cell = line.substr(0, line.find(','));
        if (cell.empty()) continue;
        if (first && cell == "t") {
            first = false;
            continue;
        }
        first = false;
        xs.push_back(parse_number(cell, "inputs"));
    }
    if (xs.empty()) throw DatasetError("E_DATASET_FORMAT", "no inputs in '" + path.string() + "'");
    return xs;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    std::ifstream mf(a.model);
    if (!mf) throw Error("E_MODEL_IO", "cannot open model '" + a.model + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw Error("E_MODEL_INCOMPATIBLE", std::string("model file is not valid JSON: ") + e.what());
    }
    const ModelDocument m = model_from_json(doc);
    const int rows = m.extra.value("train_rows", 0);
    const double offset = m.extra.value("target_offset", 0.0);
    Training t;
    try {
        t = training_set(a.dataset, rows);
    } catch (const InvalidArgument& e) {
        throw Error("E_MODEL_INCOMPATIBLE", "dataset '" + a.dataset + "' is too short for the model: " + e.what());
    }
    if (dataset_checksum(t.data) != m.checksum) {
        throw Error("E_MODEL_INCOMPATIBLE", "dataset '" + a.dataset + "' does not match the model's training data");
    }
    if (input_dim(m.spec) > 1) throw Error("E_MODEL_INCOMPATIBLE", "model expects multi-dimensional inputs");

    const bool ranged = a.from || a.to;
    if (ranged == !a.inputs.empty()) throw InvalidArgument("give either --from/--to or --inputs", "E_RANGE");
    const std::vector<double> xs = ranged ? range_inputs(a) : file_inputs(a.inputs);

    const TrainedModel model(m.spec, m.noise_var, t.data, m.info);
    const Eigen::MatrixXd xstar = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Prediction p = predict(model, xstar);

    std::ostringstream csv;
    csv << "t,mean,var\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        csv << full(xs[i]) << ',' << full(p.mean(k) + offset) << ',' << full(p.var(k)) << '\n';
    }
    if (a.out.empty()) {
        out << csv.str();
    } else {
        open_out(a.out) << csv.str();
    }
    return 0;
}

struct SpectrumArgs {
    std::string dataset;
    int q = 10;
    std::uint64_t seed = 7;
    std::string out = "init_spec.json";
    std::string spectrum_out = "spectrum.csv";
};

int cmd_spectrum(const SpectrumArgs& a, std::ostream& out) {
    const Training t = training_set(a.dataset, 0);
    std::vector<double> xs(t.data.x.data(), t.data.x.data() + t.data.size());
    std::vector<double> ys(t.data.y.data(), t.data.y.data() + t.data.size());
    const Spectrum s = periodogram(xs, ys);
    const double var = t.data.y.squaredNorm() / std::max<double>(1.0, t.data.size() - 1.0);
    const std::vector<SmComponent> comps = gmm_init(s, a.q, var > 0.0 ? var : 1.0, a.seed);
    {
        auto f = open_out(a.spectrum_out);
        write_spectrum_csv(f, s);
    }
    open_out(a.out) << to_json(KernelSpec{SmKernel{comps}}).dump(2) << '\n';
    out << "spectrum bins=" << s.freqs.size() << " q=" << a.q << '\n';
    return 0;
}

struct ExperimentArgs {
    std::string suite = "all";
    std::uint64_t seed = 7;
    std::string out = "results";
    int max_iters = 1000;
    std::string data_dir = GCSM_DATA_DIR;
    std::vector<std::string> kernels;
    int restarts = 10;
    bool timings = false;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
    std::vector<Task> tasks;
    const fs::path data(a.data_dir);
    if (a.suite == "synthetic" || a.suite == "all") {
        for (auto& t : gen_synthetic(a.seed)) tasks.push_back(std::move(t));
    }
    if (a.suite == "airline" || a.suite == "all") tasks.push_back(load_dataset(data / "airline.csv", "airline"));
    if (a.suite == "riverflow" || a.suite == "all") tasks.push_back(load_dataset(data / "riverflow.csv", "riverflow"));
    if (tasks.empty()) throw InvalidArgument("unknown suite '" + a.suite + "'", "E_USAGE");

    BenchmarkConfig cfg;
    cfg.seed = a.seed;
    cfg.opt.max_iters = a.max_iters;
    cfg.airline_restarts = a.restarts;
    if (!a.kernels.empty()) {
        cfg.kernels.clear();
        for (const auto& k : a.kernels) cfg.kernels.push_back(parse_kind(k));
    }
    const ExperimentResult r = run_benchmark(tasks, cfg);

    const fs::path dir(a.out);
    {
        auto f = open_out(dir / "results.csv");
        write_result_csv(f, r, a.timings);
    }
    open_out(dir / "results.json") << result_to_json(r, a.timings).dump() << '\n';
    for (const auto& g : r.grams) {
        auto sm = open_out(dir / ("gram_" + g.task + "_sm.csv"));
        write_matrix_csv(sm, g.sm);
        auto gc = open_out(dir / ("gram_" + g.task + "_gcsm.csv"));
        write_matrix_csv(gc, g.gcsm);
        auto df = open_out(dir / ("gram_" + g.task + "_absdiff.csv"));
        write_matrix_csv(df, g.abs_diff);
    }
    print_table(out, r);
    for (const auto& c : r.cells) {
        if (c.ok) return 0;
    }
    return 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral mixture Gaussian process toolkit", "gcsm"};
    app.require_subcommand(1);

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "initialize and fit a kernel, write the model JSON");
    fit_cmd->add_option("--dataset", fa.dataset, "CSV with header t,y")->required();
    fit_cmd->add_option("--kernel", fa.kernel, "SE, Periodic, Matern52, SM or GCSM");
    fit_cmd->add_option("--q", fa.q, "mixture components");
    fit_cmd->add_option("--init", fa.init, "spectral-gmm, bayes-opt or random");
    fit_cmd->add_option("--seed", fa.seed);
    fit_cmd->add_option("--max-iters", fa.max_iters);
    fit_cmd->add_option("--out", fa.out, "model JSON path");
    fit_cmd->add_option("--delays", fa.delays, "on or off (GCSM only)");
    fit_cmd->add_option("--train-rows", fa.train_rows, "fit on the first N rows only");

    PredictArgs pa;
    auto* predict_cmd = app.add_subcommand("predict", "predictive mean and variance as CSV t,mean,var");
    predict_cmd->add_option("--model", pa.model)->required();
    predict_cmd->add_option("--dataset", pa.dataset, "the dataset the model was fitted on")->required();
    predict_cmd->add_option("--from", pa.from);
    predict_cmd->add_option("--to", pa.to);
    predict_cmd->add_option("--step", pa.step);
    predict_cmd->add_option("--inputs", pa.inputs, "file with one input per line (optional header t)");
    predict_cmd->add_option("--out", pa.out, "output CSV (default: standard output)");

    SpectrumArgs sa;
    auto* spectrum_cmd = app.add_subcommand("spectrum", "periodogram and spectral GMM initialization");
    spectrum_cmd->add_option("--dataset", sa.dataset)->required();
    spectrum_cmd->add_option("--q", sa.q);
    spectrum_cmd->add_option("--seed", sa.seed);
    spectrum_cmd->add_option("--out", sa.out, "initial SM spec JSON");
    spectrum_cmd->add_option("--spectrum-out", sa.spectrum_out, "periodogram CSV");

    ExperimentArgs ea;
    auto* exp_cmd = app.add_subcommand("experiment", "run the benchmark suite");
    exp_cmd->add_option("--suite", ea.suite, "synthetic, airline, riverflow or all");
    exp_cmd->add_option("--seed", ea.seed);
    exp_cmd->add_option("--out", ea.out, "output directory");
    exp_cmd->add_option("--max-iters", ea.max_iters);
    exp_cmd->add_option("--data-dir", ea.data_dir);
    exp_cmd->add_option("--kernels", ea.kernels, "subset of kernels")->delimiter(',');
    exp_cmd->add_option("--restarts", ea.restarts, "SM restarts on airline");
    exp_cmd->add_flag("--timings", ea.timings, "record wall-clock seconds (breaks byte-identical output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error E_USAGE: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*fit_cmd) return cmd_fit(fa, out);
        if (*predict_cmd) return cmd_predict(pa, out);
        if (*spectrum_cmd) return cmd_spectrum(sa, out);
        return cmd_experiment(ea, out);
    } catch (const Error& e) {
        err << "error " << e.code() << ": " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        err << "error E_OUTPUT_IO: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error E_INTERNAL: " << e.what() << '\n';
    }
    return 2;
}

}  // namespace gcsm
