#include "gcsm/gp.hpp"

#include "gcsm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <random>

namespace gcsm {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281123527972;

// Pairs (a <= b) of training inputs grouped by identical lag. For scalar
// inputs on a regular grid this collapses N^2/2 kernel evaluations to ~N.
struct LagStructure {
    Eigen::MatrixXd lags;   // G x P representative lags
    Eigen::MatrixXi group;  // N x N, upper triangle used
};

LagStructure build_lags(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    LagStructure ls;
    ls.group = Eigen::MatrixXi::Zero(n, n);
    if (p == 1) {
        struct Entry {
            double lag;
            int a, b;
        };
        std::vector<Entry> entries;
        entries.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
        double max_lag = 0.0;
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a; b < n; ++b) {
                const double lag = std::abs(X(a, 0) - X(b, 0));
                max_lag = std::max(max_lag, lag);
                entries.push_back({lag, static_cast<int>(a), static_cast<int>(b)});
            }
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& l, const Entry& r) {
            return l.lag < r.lag || (l.lag == r.lag && (l.a < r.a || (l.a == r.a && l.b < r.b)));
        });
        const double tol = 1e-10 * std::max(1.0, max_lag);
        std::vector<double> reps;
        for (const auto& e : entries) {
            if (reps.empty() || e.lag - reps.back() > tol) reps.push_back(e.lag);
            ls.group(e.a, e.b) = static_cast<int>(reps.size() - 1);
        }
        ls.lags = Eigen::Map<Eigen::MatrixXd>(reps.data(), static_cast<Eigen::Index>(reps.size()), 1);
    } else {
        ls.lags.resize(n * (n + 1) / 2, p);
        int g = 0;
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a; b < n; ++b) {
                ls.lags.row(g) = X.row(a) - X.row(b);
                ls.group(a, b) = g++;
            }
        }
    }
    return ls;
}

Eigen::MatrixXd gram_from_lags(const KernelEvaluator& k, const LagStructure& ls, Eigen::Index n) {
    const Eigen::Index p = ls.lags.cols();
    std::vector<double> vals(static_cast<std::size_t>(ls.lags.rows()));
    std::vector<double> tau(static_cast<std::size_t>(p));
    for (Eigen::Index g = 0; g < ls.lags.rows(); ++g) {
        for (Eigen::Index d = 0; d < p; ++d) tau[d] = ls.lags(g, d);
        vals[g] = k(tau);
    }
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a; b < n; ++b) {
            K(a, b) = vals[ls.group(a, b)];
            K(b, a) = K(a, b);
        }
    }
    return K;
}

void check_data_against_spec(const KernelSpec& spec, const Dataset& data) {
    validate(data);
    const std::size_t dim = input_dim(spec);
    if (dim != 0 && static_cast<std::size_t>(data.dim()) != dim) {
        throw InvalidArgument("dataset dimension " + std::to_string(data.dim()) +
                              " does not match kernel dimension " + std::to_string(dim));
    }
}

}  // namespace

void validate(const Dataset& data) {
    if (data.y.size() < 1) throw InvalidArgument("dataset must contain at least one point");
    if (data.x.rows() != data.y.size()) throw InvalidArgument("dataset x and y differ in length");
    if (data.x.cols() < 1) throw InvalidArgument("dataset inputs need dimension >= 1");
    if (!data.x.allFinite() || !data.y.allFinite()) throw InvalidArgument("dataset contains non-finite values");
}

std::string dataset_checksum(const Dataset& data) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](double v) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        for (Eigen::Index d = 0; d < data.x.cols(); ++d) mix(data.x(i, d));
        mix(data.y(i));
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& K, double base_noise) {
    if (K.rows() != K.cols() || K.rows() == 0) throw InvalidArgument("cholesky: matrix must be square and nonempty");
    if (!(base_noise >= 0.0)) throw InvalidArgument("cholesky: base noise must be nonnegative");
    const double scale = std::max(K.diagonal().mean(), 0.0) > 0.0 ? K.diagonal().mean() : 1.0;
    std::vector<double> ladder{0.0};
    for (int e = -8; e <= -2; ++e) ladder.push_back(std::pow(10.0, e) * scale);

    for (double j : ladder) {
        Eigen::MatrixXd A = K;
        A.diagonal().array() += base_noise + j;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd L = llt.matrixL();
        if (L.allFinite() && L.diagonal().minCoeff() > 0.0) return {std::move(L), j};
    }
    throw NumericalFailure("cholesky failed at every jitter level up to 1e-2 * mean(diag K)", ladder);
}

struct NlmlObjective::Lags : LagStructure {};

NlmlObjective::NlmlObjective(Dataset data) : data_(std::move(data)) {
    validate(data_);
    lags_ = std::make_shared<const Lags>(Lags{build_lags(data_.x)});
}

double NlmlObjective::value(const KernelSpec& spec, double noise_var) const {
    if (!(noise_var >= 0.0)) throw InvalidArgument("nlml: noise variance must be nonnegative");
    check_data_against_spec(spec, data_);
    const KernelEvaluator k(spec);
    const Eigen::MatrixXd K = gram_from_lags(k, *lags_, data_.size());
    const CholeskyResult c = cholesky_with_jitter(K, noise_var);
    const Eigen::VectorXd v = c.factor.triangularView<Eigen::Lower>().solve(data_.y);
    const double n = static_cast<double>(data_.size());
    return 0.5 * v.squaredNorm() + c.factor.diagonal().array().log().sum() + 0.5 * n * kLog2Pi;
}

NlmlGradient NlmlObjective::value_and_grad(const KernelSpec& spec, double noise_var) const {
    if (!(noise_var >= 0.0)) throw InvalidArgument("nlml_grad: noise variance must be nonnegative");
    check_data_against_spec(spec, data_);
    const KernelEvaluator k(spec);
    const LagStructure& ls = *lags_;
    const Eigen::Index n = data_.size();
    const Eigen::MatrixXd K = gram_from_lags(k, ls, n);
    const CholeskyResult c = cholesky_with_jitter(K, noise_var);

    Eigen::MatrixXd Linv = Eigen::MatrixXd::Identity(n, n);
    c.factor.triangularView<Eigen::Lower>().solveInPlace(Linv);
    const Eigen::VectorXd v = Linv.triangularView<Eigen::Lower>() * data_.y;
    const Eigen::VectorXd alpha = Linv.triangularView<Eigen::Lower>().transpose() * v;
    // W = K^-1 - alpha alpha^T; only the upper triangle is read below.
    Eigen::MatrixXd W(n, n);
    W.triangularView<Eigen::Upper>() = Linv.transpose() * Linv;
    W.triangularView<Eigen::Upper>() -= alpha * alpha.transpose();

    NlmlGradient out;
    out.value = 0.5 * v.squaredNorm() + c.factor.diagonal().array().log().sum() +
                0.5 * static_cast<double>(n) * kLog2Pi;
    out.jitter = c.jitter;

    std::vector<double> weights(static_cast<std::size_t>(ls.lags.rows()), 0.0);
    double trace = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
        weights[ls.group(b, b)] += W(b, b);
        trace += W(b, b);
        for (Eigen::Index a = 0; a < b; ++a) weights[ls.group(a, b)] += 2.0 * W(a, b);
    }
    const std::size_t np = k.param_count();
    out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np + 1));
    std::vector<double> tau(static_cast<std::size_t>(ls.lags.cols()));
    std::span<double> gk(out.grad.data(), np);
    for (Eigen::Index g = 0; g < ls.lags.rows(); ++g) {
        if (weights[g] == 0.0) continue;
        for (Eigen::Index d = 0; d < ls.lags.cols(); ++d) tau[d] = ls.lags(g, d);
        k.accumulate_gradient(tau, 0.5 * weights[g], gk);
    }
    out.grad(static_cast<Eigen::Index>(np)) = 0.5 * noise_var * trace;
    return out;
}

double nlml(const KernelSpec& spec, double noise_var, const Dataset& data) {
    return NlmlObjective(data).value(spec, noise_var);
}

NlmlGradient nlml_grad(const KernelSpec& spec, double noise_var, const Dataset& data) {
    return NlmlObjective(data).value_and_grad(spec, noise_var);
}

// --- TrainedModel ---------------------------------------------------------

TrainedModel::TrainedModel(KernelSpec spec, double noise_var, Dataset data, FitInfo info)
    : spec_(std::move(spec)), noise_var_(noise_var), data_(std::move(data)), info_(info) {
    if (!(noise_var_ >= 0.0)) throw InvalidArgument("model: noise variance must be nonnegative");
    check_data_against_spec(spec_, data_);
    const KernelEvaluator k(spec_);
    const Eigen::MatrixXd K = gram_from_lags(k, build_lags(data_.x), data_.size());
    CholeskyResult c = cholesky_with_jitter(K, noise_var_);
    chol_ = std::move(c.factor);
    jitter_ = c.jitter;
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(data_.y);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    info_.jitter = jitter_;
}

Prediction predict(const TrainedModel& model, const Eigen::MatrixXd& xstar) {
    if (xstar.cols() != model.data().dim()) {
        throw InvalidArgument("predict: query dimension " + std::to_string(xstar.cols()) +
                              " differs from training dimension " + std::to_string(model.data().dim()));
    }
    Prediction out;
    if (xstar.rows() == 0) return out;
    const Eigen::MatrixXd Ks = gram(model.spec(), model.data().x, xstar);  // N x M
    out.mean = Ks.transpose() * model.alpha();
    const Eigen::MatrixXd V = model.chol().triangularView<Eigen::Lower>().solve(Ks);
    const KernelEvaluator k(model.spec());
    const std::vector<double> zero(static_cast<std::size_t>(xstar.cols()), 0.0);
    const double prior = k(zero);
    out.var.resize(xstar.rows());
    for (Eigen::Index m = 0; m < xstar.rows(); ++m) {
        double v = prior - V.col(m).squaredNorm();
        if (v < 0.0) {
            if (v < -1e-10 * std::max(1.0, prior)) {
                throw NumericalFailure("predict: predictive variance " + std::to_string(v) + " is negative");
            }
            v = 0.0;
            ++out.clamped;
        }
        out.var(m) = v;
    }
    return out;
}

Eigen::VectorXd sample_prior(const KernelSpec& spec, const Eigen::MatrixXd& X, double noise_var,
                             std::uint64_t seed) {
    if (X.rows() == 0) throw InvalidArgument("sample_prior: no inputs");
    const Eigen::MatrixXd K = gram(spec, X);
    const CholeskyResult c = cholesky_with_jitter(K, noise_var);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(X.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    return c.factor.triangularView<Eigen::Lower>() * z;
}

nlohmann::json model_to_json(const TrainedModel& model, const nlohmann::json& extra) {
    nlohmann::json doc;
    doc["kernel"] = to_json(model.spec());
    doc["noise_var"] = model.noise_var();
    doc["dataset_checksum"] = dataset_checksum(model.data());
    doc["fit"] = {{"nlml", model.info().nlml},
                  {"iterations", model.info().iterations},
                  {"jitter_used", model.jitter()}};
    doc["metadata"] = extra;
    return doc;
}

ModelDocument model_from_json(const nlohmann::json& doc) {
    try {
        ModelDocument m{kernel_from_json(doc.at("kernel")), doc.at("noise_var").get<double>(),
                        doc.at("dataset_checksum").get<std::string>(), {}, doc.value("metadata", nlohmann::json::object())};
        const auto& fit = doc.at("fit");
        m.info.nlml = fit.at("nlml").get<double>();
        m.info.iterations = fit.at("iterations").get<int>();
        m.info.jitter = fit.at("jitter_used").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed model JSON: ") + e.what(), "E_MODEL_INCOMPATIBLE");
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("model JSON: ") + e.what(), "E_MODEL_INCOMPATIBLE");
    }
}

}  // namespace gcsm
