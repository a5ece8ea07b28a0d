#include "ctxtruth/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ctxtruth/parallel.hpp"
#include "ctxtruth/random.hpp"

namespace ctxtruth {

namespace {

constexpr std::pair<ProbeFamily, std::string_view> kFamilyNames[] = {
    {ProbeFamily::MassMean, "mass_mean"},
    {ProbeFamily::LogisticRegression, "logistic_regression"},
    {ProbeFamily::LinearSVM, "linear_svm"},
    {ProbeFamily::MLP, "mlp"},
};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

void check_trainable(const LabeledRows& data) {
    std::size_t positives = 0;
    for (auto y : data.y) positives += y != 0;
    if (positives == 0 || positives == data.rows()) throw std::invalid_argument("probe training needs both classes");
    for (double v : data.x)
        if (!std::isfinite(v)) throw std::invalid_argument("probe training data contains non-finite values");
}

// Per-feature mean and inverse population sd; constant features get scale 1.
void fit_standardizer(const LabeledRows& data, ProbeModel& model) {
    const std::size_t d = data.dim, n = data.rows();
    model.feature_mean.assign(d, 0.0);
    model.feature_scale.assign(d, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = data.row(i);
        for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += r[j];
    }
    for (auto& m : model.feature_mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = data.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double c = r[j] - model.feature_mean[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        if (sd > 0) model.feature_scale[j] = 1.0 / sd;
    }
}

std::vector<double> standardized(const LabeledRows& data, const ProbeModel& model) {
    std::vector<double> z(data.x.size());
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t j = 0; j < data.dim; ++j)
            z[i * data.dim + j] = (data.x[i * data.dim + j] - model.feature_mean[j]) * model.feature_scale[j];
    return z;
}

void train_mass_mean(const LabeledRows& data, ProbeModel& model) {
    const std::size_t d = data.dim;
    std::vector<double> sum_t(d, 0.0), sum_f(d, 0.0);
    std::size_t n_t = 0, n_f = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        auto& acc = data.y[i] ? sum_t : sum_f;
        (data.y[i] ? n_t : n_f) += 1;
        const auto r = data.row(i);
        for (std::size_t j = 0; j < d; ++j) acc[j] += r[j];
    }
    std::vector<double> mean_t(d), mean_f(d);
    for (std::size_t j = 0; j < d; ++j) {
        mean_t[j] = sum_t[j] / static_cast<double>(n_t);
        mean_f[j] = sum_f[j] / static_cast<double>(n_f);
    }
    model.weights.resize(d);
    for (std::size_t j = 0; j < d; ++j) model.weights[j] = mean_t[j] - mean_f[j];
    model.threshold = 0.5 * (dot(model.weights, mean_t) + dot(model.weights, mean_f));
}

struct LogisticObjective {
    const std::vector<double>& z;
    const std::vector<std::uint8_t>& y;
    std::size_t d;
    double lambda;

    double loss(std::span<const double> w, double b) const {
        const std::size_t n = y.size();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = dot(w, {z.data() + i * d, d}) + b;
            s += y[i] ? softplus(-m) : softplus(m);
        }
        return s / static_cast<double>(n) + 0.5 * lambda * dot(w, w);
    }

    void gradient(std::span<const double> w, double b, std::vector<double>& gw, double& gb) const {
        const std::size_t n = y.size();
        gw.assign(d, 0.0);
        gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* zi = z.data() + i * d;
            const double m = dot(w, {zi, d}) + b;
            const double r = sigmoid(m) - (y[i] ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) gw[j] += r * zi[j];
            gb += r;
        }
        for (std::size_t j = 0; j < d; ++j) gw[j] = gw[j] / static_cast<double>(n) + lambda * w[j];
        gb /= static_cast<double>(n);
    }
};

// Largest eigenvalue of [Z 1]^T [Z 1] / n by power iteration.
double gram_spectral_norm(const std::vector<double>& z, std::size_t n, std::size_t d) {
    std::vector<double> v(d + 1, 1.0 / std::sqrt(static_cast<double>(d + 1)));
    std::vector<double> u(n), next(d + 1);
    double eig = 0.0;
    for (int it = 0; it < 30; ++it) {
        for (std::size_t i = 0; i < n; ++i) u[i] = dot({z.data() + i * d, d}, {v.data(), d}) + v[d];
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) next[j] += u[i] * z[i * d + j];
            next[d] += u[i];
        }
        for (auto& x : next) x /= static_cast<double>(n);
        eig = std::sqrt(dot(next, next));
        if (eig == 0.0) return 0.0;
        for (std::size_t j = 0; j <= d; ++j) v[j] = next[j] / eig;
    }
    return eig;
}

void train_logistic(const LabeledRows& data, const ProbeHyperparams& hyper, ProbeModel& model) {
    fit_standardizer(data, model);
    const auto z = standardized(data, model);
    const std::size_t d = data.dim, n = data.rows();
    const LogisticObjective obj{z, data.y, d, hyper.lr_lambda};

    std::vector<double> w(d, 0.0), gw, trial(d);
    double b = 0.0, gb = 0.0;
    double step = 1.0 / (0.25 * gram_spectral_norm(z, n, d) + hyper.lr_lambda);
    double loss = obj.loss(w, b);
    model.loss_history.push_back(loss);

    for (std::size_t it = 0; it < hyper.lr_max_iters; ++it) {
        obj.gradient(w, b, gw, gb);
        if (std::sqrt(dot(gw, gw) + gb * gb) < hyper.lr_grad_tol) break;
        // Backtrack until the objective does not increase.
        bool accepted = false;
        for (int attempt = 0; attempt < 60; ++attempt) {
            for (std::size_t j = 0; j < d; ++j) trial[j] = w[j] - step * gw[j];
            const double trial_b = b - step * gb;
            const double trial_loss = obj.loss(trial, trial_b);
            if (trial_loss <= loss) {
                w.swap(trial);
                b = trial_b;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        model.loss_history.push_back(loss);
    }
    model.weights = std::move(w);
    model.threshold = -b;
}

void train_svm(const LabeledRows& data, const ProbeHyperparams& hyper, ProbeModel& model) {
    fit_standardizer(data, model);
    const auto z = standardized(data, model);
    const std::size_t d = data.dim, n = data.rows();
    const double lambda = hyper.svm_lambda;
    const double radius = 1.0 / std::sqrt(lambda);

    // Bias is the last coordinate of an augmented constant feature.
    std::vector<double> w(d + 1, 0.0), g(d + 1);
    for (std::size_t t = 1; t <= hyper.svm_epochs; ++t) {
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        for (std::size_t j = 0; j <= d; ++j) g[j] = lambda * w[j];
        for (std::size_t i = 0; i < n; ++i) {
            const double* zi = z.data() + i * d;
            const double s = data.y[i] ? 1.0 : -1.0;
            const double margin = s * (dot({w.data(), d}, {zi, d}) + w[d]);
            if (margin < 1.0) {
                const double c = s / static_cast<double>(n);
                for (std::size_t j = 0; j < d; ++j) g[j] -= c * zi[j];
                g[d] -= c;
            }
        }
        for (std::size_t j = 0; j <= d; ++j) w[j] -= eta * g[j];
        const double norm = std::sqrt(dot(w, w));
        if (norm > radius)
            for (auto& x : w) x *= radius / norm;
    }
    model.threshold = -w[d];
    w.pop_back();
    model.weights = std::move(w);
}

double mlp_forward(const MlpParams& p, std::span<const double> z, std::vector<double>& hidden) {
    const std::size_t d = z.size();
    hidden.resize(p.width);
    double out = p.out_b;
    for (std::size_t h = 0; h < p.width; ++h) {
        const double a = dot({p.hidden_w.data() + h * d, d}, z) + p.hidden_b[h];
        hidden[h] = a > 0 ? a : 0.0;
        out += p.out_w[h] * hidden[h];
    }
    return out;
}

void train_mlp(const LabeledRows& data, const ProbeHyperparams& hyper, ProbeModel& model) {
    fit_standardizer(data, model);
    const auto z = standardized(data, model);
    const std::size_t d = data.dim, n = data.rows(), H = hyper.mlp_width;

    Rng rng(hyper.seed);
    MlpParams& p = model.mlp;
    p.width = H;
    p.hidden_w.resize(H * d);
    p.hidden_b.assign(H, 0.0);
    p.out_w.resize(H);
    p.out_b = 0.0;
    const double hidden_sd = std::sqrt(2.0 / static_cast<double>(d));
    const double out_sd = std::sqrt(1.0 / static_cast<double>(H));
    for (auto& x : p.hidden_w) x = hidden_sd * rng.normal();
    for (auto& x : p.out_w) x = out_sd * rng.normal();

    // Adam state, laid out as [hidden_w | hidden_b | out_w | out_b].
    const std::size_t n_params = H * d + 2 * H + 1;
    std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0), grad(n_params);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double beta1_t = 1.0, beta2_t = 1.0;
    auto adam = [&](double& param, std::size_t idx, double g) {
        m1[idx] = beta1 * m1[idx] + (1 - beta1) * g;
        m2[idx] = beta2 * m2[idx] + (1 - beta2) * g * g;
        const double mhat = m1[idx] / (1 - beta1_t);
        const double vhat = m2[idx] / (1 - beta2_t);
        param -= hyper.mlp_learning_rate * mhat / (std::sqrt(vhat) + eps);
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> hidden;
    const std::size_t batch = std::max<std::size_t>(1, hyper.mlp_batch);
    for (std::size_t epoch = 0; epoch < hyper.mlp_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const double inv = 1.0 / static_cast<double>(stop - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double* g_hw = grad.data();
            double* g_hb = g_hw + H * d;
            double* g_ow = g_hb + H;
            double* g_ob = g_ow + H;
            for (std::size_t s = start; s < stop; ++s) {
                const std::size_t i = order[s];
                const std::span<const double> zi{z.data() + i * d, d};
                const double out = mlp_forward(p, zi, hidden);
                const double r = (sigmoid(out) - (data.y[i] ? 1.0 : 0.0)) * inv;
                *g_ob += r;
                for (std::size_t h = 0; h < H; ++h) {
                    g_ow[h] += r * hidden[h];
                    if (hidden[h] <= 0) continue;
                    const double back = r * p.out_w[h];
                    g_hb[h] += back;
                    double* row = g_hw + h * d;
                    for (std::size_t j = 0; j < d; ++j) row[j] += back * zi[j];
                }
            }
            beta1_t *= beta1;
            beta2_t *= beta2;
            for (std::size_t k = 0; k < H * d; ++k) adam(p.hidden_w[k], k, g_hw[k]);
            for (std::size_t h = 0; h < H; ++h) adam(p.hidden_b[h], H * d + h, g_hb[h]);
            for (std::size_t h = 0; h < H; ++h) adam(p.out_w[h], H * d + H + h, g_ow[h]);
            adam(p.out_b, n_params - 1, *g_ob);
        }
    }
}

}  // namespace

std::string_view to_string(ProbeFamily f) {
    for (const auto& [k, name] : kFamilyNames)
        if (k == f) return name;
    return "?";
}

ProbeFamily probe_family_from_string(std::string_view s) {
    for (const auto& [k, name] : kFamilyNames)
        if (name == s) return k;
    throw std::invalid_argument("unknown probe family: " + std::string(s));
}

void LabeledRows::push(std::span<const double> features, bool label) {
    if (dim == 0) dim = features.size();
    if (features.size() != dim) throw std::invalid_argument("row dimension mismatch");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(label ? 1 : 0);
}

void LabeledRows::push(std::span<const float> features, bool label) {
    if (dim == 0) dim = features.size();
    if (features.size() != dim) throw std::invalid_argument("row dimension mismatch");
    for (float f : features) x.push_back(f);
    y.push_back(label ? 1 : 0);
}

LabeledRows LabeledRows::subset(std::span<const std::size_t> indices) const {
    LabeledRows out;
    out.dim = dim;
    out.x.reserve(indices.size() * dim);
    out.y.reserve(indices.size());
    for (auto i : indices) {
        const auto r = row(i);
        out.x.insert(out.x.end(), r.begin(), r.end());
        out.y.push_back(y[i]);
    }
    return out;
}

double ProbeModel::score(std::span<const double> x) const {
    std::vector<double> z;
    std::span<const double> input = x;
    if (!feature_mean.empty()) {
        z.resize(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - feature_mean[j]) * feature_scale[j];
        input = z;
    }
    if (family == ProbeFamily::MLP) {
        std::vector<double> hidden;
        return mlp_forward(mlp, input, hidden);
    }
    return dot(weights, input) - threshold;
}

double ProbeModel::accuracy(const LabeledRows& data) const {
    if (data.rows() == 0) throw std::invalid_argument("accuracy on empty data");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) correct += predict(data.row(i)) == (data.y[i] != 0);
    return static_cast<double>(correct) / static_cast<double>(data.rows());
}

Split split_statements(std::size_t n_statements, double ratio, std::uint64_t seed) {
    if (n_statements < 5) throw std::invalid_argument("split needs at least 5 statements");
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
    std::vector<std::size_t> order(n_statements);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_statements)));
    n_train = std::clamp<std::size_t>(n_train, 1, n_statements - 1);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Split split_rows(std::span<const std::uint8_t> labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
    if (by_class[0].size() < 2 || by_class[1].size() < 2) {
        throw std::invalid_argument("split needs at least two rows of each class");
    }
    Rng rng(seed);
    Split s;
    for (auto& idx : by_class) {
        rng.shuffle(idx.begin(), idx.end());
        auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

LabeledRows probe_rows(const ActivationSet& set, std::size_t layer, ContextKind context,
                       std::span<const std::size_t> statements) {
    const auto c_true = set.require_condition({TruthSide::True, context});
    const auto c_false = set.require_condition({TruthSide::False, context});
    LabeledRows rows;
    rows.dim = set.hidden_dim;
    for (auto k : statements) {
        rows.push(set.at(c_true, k, layer), true);
        rows.push(set.at(c_false, k, layer), false);
    }
    return rows;
}

ProbeModel train(ProbeFamily family, const LabeledRows& data, const ProbeHyperparams& hyper) {
    check_trainable(data);
    ProbeModel model;
    model.family = family;
    model.train_seed = hyper.seed;
    switch (family) {
        case ProbeFamily::MassMean: train_mass_mean(data, model); break;
        case ProbeFamily::LogisticRegression: train_logistic(data, hyper, model); break;
        case ProbeFamily::LinearSVM: train_svm(data, hyper, model); break;
        case ProbeFamily::MLP: train_mlp(data, hyper, model); break;
    }
    return model;
}

ProbeReport probe_report(const ActivationSet& set, ProbeFamily family, std::uint64_t seed, const ProbeOptions& options) {
    const Split split = split_statements(set.n_statements(), options.ratio, seed);
    ProbeReport report;
    report.family = family;
    report.context = options.context;
    report.ratio = options.ratio;
    report.seed = seed;
    report.layers.resize(set.n_layers);
    ProbeHyperparams hyper = options.hyper;
    hyper.seed = seed;
    parallel_for(set.n_layers, options.threads, [&](std::size_t l) {
        const auto train_rows = probe_rows(set, l, options.context, split.train);
        const auto test_rows = probe_rows(set, l, options.context, split.test);
        ProbeModel model = train(family, train_rows, hyper);
        model.layer = l + 1;
        report.layers[l] = {l + 1, model.accuracy(train_rows), model.accuracy(test_rows), train_rows.rows(),
                            test_rows.rows()};
    });
    return report;
}

LayerCurve accuracy_curve(const ProbeReport& report) {
    LayerCurve curve;
    curve.quantity = Quantity::ProbeAccuracy;
    curve.context = report.context;
    for (const auto& r : report.layers) {
        CurvePoint p;
        p.layer = r.layer;
        p.mean = r.test_accuracy;
        p.n_valid = r.n_test;
        if (r.n_test >= 2) {
            p.sem = std::sqrt(r.test_accuracy * (1.0 - r.test_accuracy) / static_cast<double>(r.n_test));
        }
        curve.points.push_back(p);
    }
    return curve;
}

LayerCurve accuracy_curve(const ActivationSet& set, ProbeFamily family, std::uint64_t seed, const ProbeOptions& options) {
    return accuracy_curve(probe_report(set, family, seed, options));
}

}  // namespace ctxtruth
