#include "gcsm/experiments.hpp"

#include "gcsm/errors.hpp"
#include "gcsm/spectral.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace gcsm {

nlohmann::json to_json(const SyntheticConfig& c) {
    return {{"version", c.version},
            {"generator", to_json(KernelSpec{c.generator})},
            {"delays", c.delays},
            {"points", c.points},
            {"lo", c.lo},
            {"hi", c.hi},
            {"sample_noise", c.sample_noise}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc) {
    SyntheticConfig c;
    try {
        c.version = doc.value("version", c.version);
        if (doc.contains("generator")) {
            const KernelSpec spec = kernel_from_json(doc.at("generator"));
            if (kind_of(spec) != KernelKind::SM) throw ConfigurationError("synthetic config: generator must be SM");
            c.generator = std::get<SmKernel>(spec);
        }
        c.delays = doc.value("delays", c.delays);
        c.points = doc.value("points", c.points);
        c.lo = doc.value("lo", c.lo);
        c.hi = doc.value("hi", c.hi);
        c.sample_noise = doc.value("sample_noise", c.sample_noise);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("synthetic config: ") + e.what());
    }
    if (c.points < 8 || !(c.hi > c.lo) || c.delays.size() != c.generator.components.size()) {
        throw ConfigurationError("synthetic config: need >= 8 points, lo < hi and one delay per component");
    }
    return c;
}

Eigen::VectorXd synthetic_grid(const SyntheticConfig& config) {
    const double h = (config.hi - config.lo) / config.points;
    Eigen::VectorXd x(config.points);
    for (int k = 0; k < config.points; ++k) x(k) = config.lo + (k + 0.5) * h;
    return x;
}

Eigen::VectorXd cumulative_integral(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 1) throw InvalidArgument("cumulative_integral: bad lengths");
    Eigen::VectorXd out(y.size());
    out(0) = 0.0;
    for (Eigen::Index i = 1; i < y.size(); ++i) out(i) = out(i - 1) + 0.5 * (x(i) - x(i - 1)) * (y(i) + y(i - 1));
    return out;
}

Eigen::VectorXd finite_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const Eigen::Index n = y.size();
    if (x.size() != n || n < 2) throw InvalidArgument("finite_derivative: need >= 2 points of equal length");
    Eigen::VectorXd d(n);
    d(0) = (y(1) - y(0)) / (x(1) - x(0));
    d(n - 1) = (y(n - 1) - y(n - 2)) / (x(n - 1) - x(n - 2));
    for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (y(i + 1) - y(i - 1)) / (x(i + 1) - x(i - 1));
    return d;
}

namespace {

Dataset subset(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
    Dataset d;
    d.x.resize(static_cast<Eigen::Index>(idx.size()), 1);
    d.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        d.x(static_cast<Eigen::Index>(i), 0) = x(idx[i]);
        d.y(static_cast<Eigen::Index>(i)) = y(idx[i]);
    }
    return d;
}

template <class Pred>
Task split_by(std::string name, const Eigen::VectorXd& x, const Eigen::VectorXd& y, Pred in_train,
              std::string provenance) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < x.size(); ++i) (in_train(i) ? tr : te).push_back(i);
    return {std::move(name), subset(x, y, tr), subset(x, y, te), std::move(provenance)};
}

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t master, const std::string& task, const std::string& label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : task + "|" + label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix(master ^ splitmix(h));
}

std::vector<Task> gen_synthetic(std::uint64_t seed, const SyntheticConfig& config) {
    if (config.delays.size() != config.generator.components.size()) {
        throw ConfigurationError("synthetic config: one delay per generator component");
    }
    const Eigen::VectorXd x = synthetic_grid(config);
    const Eigen::MatrixXd X = x;
    const Eigen::VectorXd y = sample_prior(config.generator, X, config.sample_noise, cell_seed(seed, "synthetic", "base"));
    const Eigen::VectorXd integral = cumulative_integral(x, y);
    const Eigen::VectorXd derivative = finite_derivative(x, y);

    Eigen::VectorXd delayed = Eigen::VectorXd::Zero(x.size());
    for (std::size_t q = 0; q < config.generator.components.size(); ++q) {
        const Eigen::MatrixXd shifted = (x.array() + config.delays[q]).matrix();
        delayed += sample_prior(SmKernel{{config.generator.components[q]}}, shifted, config.sample_noise,
                                cell_seed(seed, "synthetic", "delayed" + std::to_string(q)));
    }

    // Random half for arti1: a seeded permutation, first half trains.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(cell_seed(seed, "synthetic", "split"));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<bool> half(perm.size(), false);
    for (std::size_t i = 0; i < perm.size() / 2; ++i) half[static_cast<std::size_t>(perm[i])] = true;

    std::vector<Task> tasks;
    tasks.push_back(split_by("arti1-normal", x, y, [&](Eigen::Index i) { return bool(half[static_cast<std::size_t>(i)]); },
                             "GP(0, K_SM) draw; random half train, rest test"));
    tasks.push_back(split_by("arti2-integral", x, integral, [&](Eigen::Index i) { return x(i) <= 0.0; },
                             "cumulative trapezoid of the draw; train x <= 0, test x > 0"));
    tasks.push_back(split_by("arti3-derivative", x, derivative, [&](Eigen::Index i) { return x(i) >= 0.0; },
                             "finite-difference derivative of the draw; train x >= 0, test x < 0"));
    tasks.push_back(split_by("arti4-delayed", x, delayed, [&](Eigen::Index i) { return std::abs(x(i)) > 5.0; },
                             "sum of component draws at x + t_q; test |x| <= 5, train elsewhere"));
    return tasks;
}

double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() != yhat.size() || y.size() < 1) throw InvalidArgument("mae: need equal, nonzero lengths");
    return (y - yhat).cwiseAbs().sum() / static_cast<double>(y.size());
}

Dataset read_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("E_DATASET_IO", "cannot open dataset '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("E_DATASET_FORMAT", "empty dataset '" + path.string() + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,y") throw DatasetError("E_DATASET_FORMAT", "expected header 't,y' in '" + path.string() + "'");
    std::vector<double> ts, ys;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        char* end = nullptr;
        bool good = comma != std::string::npos;
        double t = 0.0, v = 0.0;
        if (good) {
            const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
            t = std::strtod(a.c_str(), &end);
            good = end != a.c_str() && *end == '\0';
            if (good) {
                v = std::strtod(b.c_str(), &end);
                good = end != b.c_str() && *end == '\0';
            }
        }
        if (!good || !std::isfinite(t) || !std::isfinite(v)) {
            throw DatasetError("E_DATASET_FORMAT",
                               path.string() + ":" + std::to_string(lineno) + ": expected two finite numbers");
        }
        ts.push_back(t);
        ys.push_back(v);
    }
    if (ts.empty()) throw DatasetError("E_DATASET_FORMAT", "no rows in '" + path.string() + "'");
    Dataset d;
    d.x = Eigen::Map<const Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
    d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    return d;
}

Task load_dataset(const std::filesystem::path& path, const std::string& name) {
    Eigen::Index total = 0, n_train = 0;
    if (name == "airline") {
        total = 144;
        n_train = 96;
    } else if (name == "riverflow") {
        total = 348;
        n_train = 174;
    } else {
        throw InvalidArgument("unknown dataset '" + name + "' (expected airline or riverflow)", "E_DATASET_UNKNOWN");
    }
    const Dataset all = read_series_csv(path);
    if (all.size() != total) {
        throw DatasetError("E_DATASET_INTEGRITY", name + ": expected " + std::to_string(total) + " rows, found " +
                                                       std::to_string(all.size()) + " in '" + path.string() + "'");
    }
    Task t;
    t.name = name;
    t.train = {all.x.topRows(n_train), all.y.head(n_train)};
    t.test = {all.x.bottomRows(total - n_train), all.y.tail(total - n_train)};
    t.provenance = path.filename().string() + ": first " + std::to_string(n_train) + " rows train, remaining " +
                   std::to_string(total - n_train) + " test";
    return t;
}

const CellResult* ExperimentResult::find(const std::string& task, KernelKind kernel) const {
    for (const auto& c : cells) {
        if (c.task == task && c.kernel == kernel) return &c;
    }
    return nullptr;
}

// --- benchmark ---------------------------------------------------------------

namespace {

bool is_synthetic(const std::string& name) { return name.rfind("arti", 0) == 0; }

double variance_of(const Eigen::VectorXd& y) {
    const double m = y.mean();
    const double v = (y.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, y.size() - 1));
    return v > 0.0 ? v : 1.0;
}

double dominant_period(const Dataset& d) {
    try {
        std::vector<double> xs(d.x.col(0).data(), d.x.col(0).data() + d.size());
        std::vector<double> ys(d.y.data(), d.y.data() + d.size());
        const Spectrum s = periodogram(xs, ys);
        const auto peak = std::max_element(s.density.begin(), s.density.end()) - s.density.begin();
        return 1.0 / s.freqs[static_cast<std::size_t>(peak)];
    } catch (const Error&) {
        // irregular or short training inputs
        return input_range_of(d) / 4.0;
    }
}

KernelSpec simple_init(KernelKind kind, const Dataset& d) {
    const double var_y = variance_of(d.y);
    const double range = input_range_of(d);
    switch (kind) {
        case KernelKind::SE: return SeKernel{var_y, 0.1 * range};
        case KernelKind::Matern52: return Matern52Kernel{var_y, 0.1 * range};
        case KernelKind::Periodic: return PeriodicKernel{var_y, dominant_period(d), 1.0};
        default: break;
    }
    throw InvalidArgument("simple_init: not a simple kernel");
}

GcsmKernel with_random_delays(const SmKernel& sm, double range, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    GcsmKernel g;
    for (const auto& c : sm.components) {
        GcsmComponent gc = GcsmComponent::from_sm(c);
        for (std::size_t p = 0; p < gc.dim(); ++p) {
            gc.theta[p] = (2.0 * unif(rng) - 1.0) * 0.1 * range;
            gc.phi[p] = 2.0 * std::numbers::pi * unif(rng);
        }
        g.components.push_back(std::move(gc));
    }
    return g;
}

GcsmKernel zero_delays(const SmKernel& sm) {
    GcsmKernel g;
    g.delays_enabled = false;
    for (const auto& c : sm.components) g.components.push_back(GcsmComponent::from_sm(c));
    return g;
}

SmKernel perturbed(SmKernel sm, std::uint64_t seed, double nyquist) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& c : sm.components) {
        for (double& m : c.mu) m = std::clamp(m * std::exp(0.1 * normal(rng)), 0.0, nyquist);
        for (double& s : c.sigma2) s *= std::exp(0.5 * normal(rng));
    }
    return sm;
}

struct TaskRun {
    std::vector<CellResult> cells;
    std::optional<GramSet> grams;
};

class TaskRunner {
public:
    TaskRunner(const Task& task, const BenchmarkConfig& config)
        : task_(task),
          config_(config),
          offset_(task.train.y.mean()),
          centered_{task.train.x, (task.train.y.array() - offset_).matrix()},
          objective_(centered_),
          noise0_(0.01 * variance_of(centered_.y)),
          q_(is_synthetic(task.name) ? config.q_synthetic : config.q_real) {}

    TaskRun run() {
        TaskRun out;
        std::optional<TrainedModel> sm_fit, gcsm_fit;
        for (KernelKind kind : config_.kernels) {
            CellResult cell;
            cell.task = task_.name;
            cell.kernel = kind;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                TrainedModel model = train(kind);
                const Prediction p = predict(model, task_.test.x);
                cell.mean = (p.mean.array() + offset_).matrix();
                cell.var = p.var;
                cell.mae = mae(task_.test.y, cell.mean);
                cell.nlml = model.info().nlml;
                cell.spec = model.spec();
                cell.noise_var = model.noise_var();
                cell.ok = std::isfinite(cell.mae);
                if (!cell.ok) cell.error = "E_NUMERICAL: non-finite MAE";
                if (kind == KernelKind::SM) sm_fit = model;
                if (kind == KernelKind::GCSM) gcsm_fit = model;
            } catch (const Error& e) {
                cell.error = e.code() + ": " + e.what();
            } catch (const std::exception& e) {
                cell.error = std::string("E_INTERNAL: ") + e.what();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.cells.push_back(std::move(cell));
        }
        if (config_.keep_grams && !is_synthetic(task_.name) && sm_fit && gcsm_fit) {
            Eigen::MatrixXd X(task_.train.size() + task_.test.size(), 1);
            X << task_.train.x, task_.test.x;
            GramSet g;
            g.task = task_.name;
            g.sm = gram(sm_fit->spec(), X);
            g.gcsm = gram(gcsm_fit->spec(), X);
            g.abs_diff = (g.gcsm - g.sm).cwiseAbs();
            out.grams = std::move(g);
        }
        return out;
    }

private:
    OptConfig opt_for(const std::string& label) const {
        OptConfig o = config_.opt;
        o.seed = cell_seed(config_.seed, task_.name, label);
        return o;
    }

    TrainedModel train(KernelKind kind) {
        switch (kind) {
            case KernelKind::SE:
            case KernelKind::Periodic:
            case KernelKind::Matern52:
                return fit(simple_init(kind, centered_), noise0_, objective_, opt_for(kind_name(kind)));
            case KernelKind::SM:
                return sm_model();
            case KernelKind::GCSM:
                if (task_.name == "airline") {
                    // Zero-delay GCSM seeded from the SM optimum, noise included.
                    const TrainedModel& sm = sm_model();
                    return fit(zero_delays(std::get<SmKernel>(sm.spec())), sm.noise_var(), objective_,
                               opt_for("GCSM"));
                }
                return fit(with_random_delays(bo_init(), input_range_of(centered_),
                                              cell_seed(config_.seed, task_.name, "GCSM-delays")),
                           noise0_, objective_, opt_for("GCSM"));
        }
        throw InvalidArgument("unsupported kernel");
    }

    // Shared by the SM and GCSM cells of one task.
    const SmKernel& bo_init() {
        if (!bo_spec_) {
            InitConfig ic = config_.init;
            ic.kind = KernelKind::SM;
            bo_spec_ = std::get<SmKernel>(init_hyperparams(centered_, q_, InitStrategy::BayesOpt,
                                                           cell_seed(config_.seed, task_.name, "init"), ic));
        }
        return *bo_spec_;
    }

    const TrainedModel& sm_model() {
        if (sm_) return *sm_;
        if (task_.name != "airline") {
            sm_ = fit(bo_init(), noise0_, objective_, opt_for("SM"));
            return *sm_;
        }
        // Spectral initialization, several restarts, keep the best NLML.
        InitConfig ic = config_.init;
        ic.kind = KernelKind::SM;
        const double nyq = nyquist_of(centered_);
        for (int r = 0; r < std::max(1, config_.airline_restarts); ++r) {
            const std::string label = "SM-restart" + std::to_string(r);
            SmKernel start = std::get<SmKernel>(init_hyperparams(
                centered_, q_, InitStrategy::SpectralGmm, cell_seed(config_.seed, task_.name, label + "-gmm"), ic));
            if (r > 0) start = perturbed(std::move(start), cell_seed(config_.seed, task_.name, label + "-jitter"), nyq);
            try {
                TrainedModel m = fit(start, noise0_, objective_, opt_for(label));
                if (!sm_ || m.info().nlml < sm_->info().nlml) sm_ = std::move(m);
            } catch (const NumericalFailure&) {
                // a failed restart just drops out of the comparison
            }
        }
        if (!sm_) throw NumericalFailure("airline SM: every restart failed");
        return *sm_;
    }

    const Task& task_;
    const BenchmarkConfig& config_;
    double offset_;
    Dataset centered_;
    NlmlObjective objective_;
    double noise0_;
    int q_;
    std::optional<SmKernel> bo_spec_;
    std::optional<TrainedModel> sm_;
};

}  // namespace

KernelSpec initial_spec(KernelKind kind, const Dataset& data, int q, InitStrategy strategy, std::uint64_t seed,
                        bool delays_enabled, const InitConfig& base) {
    if (kind == KernelKind::SM || kind == KernelKind::GCSM) {
        InitConfig ic = base;
        ic.kind = kind;
        ic.delays_enabled = delays_enabled;
        return init_hyperparams(data, q, strategy, seed, ic);
    }
    validate(data);
    return simple_init(kind, data);
}

namespace {

int thread_count(const BenchmarkConfig& config, std::size_t jobs) {
    int n = config.threads;
    if (n <= 0) {
        if (const char* env = std::getenv("GCSM_THREADS")) n = std::atoi(env);
    }
    if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::max(1, std::min(n, static_cast<int>(jobs)));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

ExperimentResult run_benchmark(const std::vector<Task>& tasks, const BenchmarkConfig& config) {
    std::vector<TaskRun> runs(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) runs[i] = TaskRunner(tasks[i], config).run();
    };
    const int n_threads = thread_count(config, tasks.size());
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    ExperimentResult result;
    for (auto& r : runs) {
        for (auto& c : r.cells) result.cells.push_back(std::move(c));
        if (r.grams) result.grams.push_back(std::move(*r.grams));
    }
    return result;
}

void write_result_csv(std::ostream& out, const ExperimentResult& result, bool with_timings) {
    out << "task,kernel,mae,nlml,seconds\n";
    for (const auto& c : result.cells) {
        out << c.task << ',' << kind_name(c.kernel) << ',';
        if (c.ok) {
            out << fmt(c.mae) << ',' << fmt(c.nlml);
        } else {
            out << "NA,NA";
        }
        out << ',' << (with_timings ? fmt(c.seconds) : std::string("NA")) << '\n';
    }
}

nlohmann::json result_to_json(const ExperimentResult& result, bool with_timings) {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> r(static_cast<std::size_t>(m.cols()));
            for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
            rows.push_back(std::move(r));
        }
        return rows;
    };
    nlohmann::json doc;
    doc["cells"] = nlohmann::json::array();
    for (const auto& c : result.cells) {
        nlohmann::json cell{{"task", c.task}, {"kernel", kind_name(c.kernel)}, {"ok", c.ok}};
        if (c.ok) {
            cell["mae"] = c.mae;
            cell["nlml"] = c.nlml;
            cell["noise_var"] = c.noise_var;
            cell["spec"] = to_json(*c.spec);
            cell["predictions"] = {{"mean", vec(c.mean)}, {"var", vec(c.var)}};
        } else {
            cell["error"] = c.error;
        }
        if (with_timings) cell["seconds"] = c.seconds;
        doc["cells"].push_back(std::move(cell));
    }
    doc["grams"] = nlohmann::json::array();
    for (const auto& g : result.grams) {
        doc["grams"].push_back({{"task", g.task}, {"sm", mat(g.sm)}, {"gcsm", mat(g.gcsm)}, {"abs_diff", mat(g.abs_diff)}});
    }
    return doc;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j > 0) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

void print_table(std::ostream& out, const ExperimentResult& result) {
    std::vector<std::string> tasks;
    std::vector<KernelKind> kernels;
    for (const auto& c : result.cells) {
        if (std::find(tasks.begin(), tasks.end(), c.task) == tasks.end()) tasks.push_back(c.task);
        if (std::find(kernels.begin(), kernels.end(), c.kernel) == kernels.end()) kernels.push_back(c.kernel);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-18s", "MAE");
    out << buf;
    for (KernelKind k : kernels) {
        std::snprintf(buf, sizeof buf, " %12s", kind_name(k).c_str());
        out << buf;
    }
    out << '\n';
    for (const auto& t : tasks) {
        std::snprintf(buf, sizeof buf, "%-18s", t.c_str());
        out << buf;
        for (KernelKind k : kernels) {
            const CellResult* c = result.find(t, k);
            if (c && c->ok) {
                std::snprintf(buf, sizeof buf, " %12.4f", c->mae);
            } else {
                std::snprintf(buf, sizeof buf, " %12s", "failed");
            }
            out << buf;
        }
        out << '\n';
    }
    for (const auto& c : result.cells) {
        if (!c.ok) out << "cell " << c.task << '/' << kind_name(c.kernel) << ": " << c.error << '\n';
    }
}

}  // namespace gcsm
