#include "ctxtruth/lens.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ctxtruth/parallel.hpp"
#include "ctxtruth/stats.hpp"

namespace ctxtruth {

std::vector<double> NormParams::apply(std::span<const float> x) const {
    const std::size_t d = x.size();
    if (weight.size() != d || (!bias.empty() && bias.size() != d)) {
        throw std::invalid_argument("normalization parameters do not match hidden size");
    }
    std::vector<double> out(d);
    if (kind == Kind::Rms) {
        double ss = 0.0;
        for (float v : x) ss += static_cast<double>(v) * v;
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        for (std::size_t i = 0; i < d; ++i) out[i] = x[i] * inv * weight[i];
    } else {
        double mean = 0.0;
        for (float v : x) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : x) var += (v - mean) * (v - mean);
        const double inv = 1.0 / std::sqrt(var / static_cast<double>(d) + eps);
        for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * weight[i] + (bias.empty() ? 0.0 : bias[i]);
    }
    return out;
}

NormParams load_norm_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open normalization parameters: " + path.string());
    const auto j = nlohmann::json::parse(in);
    NormParams p;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "rms") {
        p.kind = NormParams::Kind::Rms;
    } else if (kind == "layer") {
        p.kind = NormParams::Kind::Layer;
    } else {
        throw std::invalid_argument("unknown normalization kind: " + kind);
    }
    p.eps = j.value("eps", 1e-5);
    p.weight = j.at("weight").get<std::vector<double>>();
    if (j.contains("bias")) p.bias = j["bias"].get<std::vector<double>>();
    return p;
}

double choice_prob_diff_logits(std::span<const double> logits, std::size_t true_id, std::size_t false_id) {
    if (true_id >= logits.size() || false_id >= logits.size()) throw std::out_of_range("choice token id out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return (std::exp(logits[true_id] - m) - std::exp(logits[false_id] - m)) / z;
}

double choice_prob_diff(std::span<const float> activation, const UnembeddingBundle& bundle, const NormParams* norm) {
    if (activation.size() != bundle.hidden_dim) {
        throw std::invalid_argument("activation dim " + std::to_string(activation.size()) +
                                    " does not match unembedding dim " + std::to_string(bundle.hidden_dim));
    }
    std::vector<double> x;
    if (norm) {
        x = norm->apply(activation);
    } else {
        x.assign(activation.begin(), activation.end());
    }
    std::vector<double> logits(bundle.vocab_size);
    for (std::size_t v = 0; v < bundle.vocab_size; ++v) {
        const auto row = bundle.row(v);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * row[i];
        logits[v] = s;
    }
    return choice_prob_diff_logits(logits, bundle.true_token_id, bundle.false_token_id);
}

std::string_view to_string(LensMode m) { return m == LensMode::Ratio ? "ratio" : "difference"; }

std::string_view to_string(LensSide s) {
    switch (s) {
        case LensSide::TrueSide: return "true";
        case LensSide::FalseSide: return "false";
        case LensSide::Mean: return "mean";
    }
    return "?";
}

LensCurve normalized_p(const ActivationSet& set, const UnembeddingBundle& bundle, const LensOptions& options) {
    bundle.validate();
    if (bundle.hidden_dim != set.hidden_dim) throw std::invalid_argument("unembedding hidden size does not match dump");
    const auto t_nc = set.require_condition({TruthSide::True, ContextKind::None});
    const auto f_nc = set.require_condition({TruthSide::False, ContextKind::None});
    const auto t_c = set.require_condition({TruthSide::True, options.context});
    const auto f_c = set.require_condition({TruthSide::False, options.context});
    const NormParams* norm = options.norm ? &*options.norm : nullptr;

    auto readout = [&](std::size_t c_true, std::size_t c_false, std::size_t k, std::size_t l) {
        switch (options.side) {
            case LensSide::TrueSide: return choice_prob_diff(set.at(c_true, k, l), bundle, norm);
            case LensSide::FalseSide: return choice_prob_diff(set.at(c_false, k, l), bundle, norm);
            case LensSide::Mean:
                return 0.5 * (choice_prob_diff(set.at(c_true, k, l), bundle, norm) +
                              choice_prob_diff(set.at(c_false, k, l), bundle, norm));
        }
        throw std::logic_error("unreachable");
    };

    LensCurve curve;
    curve.options = options;
    curve.values.assign(set.n_layers, std::vector<std::optional<double>>(set.n_statements()));
    curve.points.resize(set.n_layers);
    parallel_for(set.n_layers, options.threads, [&](std::size_t l) {
        auto& row = curve.values[l];
        for (std::size_t k = 0; k < set.n_statements(); ++k) {
            const double d_nc = readout(t_nc, f_nc, k, l);
            const double d_c = readout(t_c, f_c, k, l);
            if (options.mode == LensMode::Difference) {
                row[k] = d_c - d_nc;
            } else if (std::abs(d_nc) >= options.eps_den) {
                row[k] = d_c / d_nc;
            }
        }
        curve.points[l] = aggregate(l + 1, row);
    });
    return curve;
}

namespace {

double correlate_layer(const std::vector<std::optional<double>>& p, const std::vector<std::optional<double>>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("correlate: statement counts differ");
    std::vector<double> x, y;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] && q[k]) {
            x.push_back(*p[k]);
            y.push_back(*q[k]);
        }
    }
    return pearson(x, y);
}

}  // namespace

std::vector<double> correlate(const LensCurve& lens, const StatementMatrix& other) {
    if (lens.values.size() != other.size()) throw std::invalid_argument("correlate: layer counts differ");
    std::vector<double> r(other.size());
    for (std::size_t l = 0; l < other.size(); ++l) r[l] = correlate_layer(lens.values[l], other[l]);
    return r;
}

std::vector<std::optional<double>> try_correlate(const LensCurve& lens, const StatementMatrix& other) {
    if (lens.values.size() != other.size()) throw std::invalid_argument("correlate: layer counts differ");
    std::vector<std::optional<double>> r(other.size());
    for (std::size_t l = 0; l < other.size(); ++l) {
        try {
            r[l] = correlate_layer(lens.values[l], other[l]);
        } catch (const std::invalid_argument&) {
        }
    }
    return r;
}

}  // namespace ctxtruth
