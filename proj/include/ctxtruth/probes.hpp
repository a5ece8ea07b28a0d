#pragma once

// Truth probes: linear and MLP classifiers of true vs false activations,
// trained per layer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/geometry.hpp"

namespace ctxtruth {

enum class ProbeFamily { MassMean, LogisticRegression, LinearSVM, MLP };

inline constexpr ProbeFamily kProbeFamilies[] = {ProbeFamily::MassMean, ProbeFamily::LogisticRegression,
                                                 ProbeFamily::LinearSVM, ProbeFamily::MLP};

std::string_view to_string(ProbeFamily f);
ProbeFamily probe_family_from_string(std::string_view s);

// Row-major design matrix with binary labels (1 = true, 0 = false).
struct LabeledRows {
    std::size_t dim = 0;
    std::vector<double> x;
    std::vector<std::uint8_t> y;

    std::size_t rows() const { return y.size(); }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
    void push(std::span<const double> features, bool label);
    void push(std::span<const float> features, bool label);
    LabeledRows subset(std::span<const std::size_t> indices) const;
};

struct ProbeHyperparams {
    double lr_lambda = 1e-3;
    std::size_t lr_max_iters = 500;
    double lr_grad_tol = 1e-6;
    double svm_lambda = 1e-3;
    std::size_t svm_epochs = 1000;
    std::size_t mlp_width = 256;
    std::size_t mlp_epochs = 200;
    std::size_t mlp_batch = 32;
    double mlp_learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct MlpParams {
    std::size_t width = 0;
    std::vector<double> hidden_w;  // [width][dim]
    std::vector<double> hidden_b;  // [width]
    std::vector<double> out_w;     // [width]
    double out_b = 0.0;

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct ProbeModel {
    ProbeFamily family = ProbeFamily::MassMean;
    std::size_t layer = 0;
    std::uint64_t train_seed = 0;
    // Per-feature standardization applied before the model (empty for
    // MassMean, which works on raw activations).
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    // Linear families: score = weights . x - threshold. For MassMean the
    // weights are the class-mean difference and threshold the midpoint of the
    // projected class means.
    std::vector<double> weights;
    double threshold = 0.0;
    MlpParams mlp;
    // Training objective per iteration (logistic regression only).
    std::vector<double> loss_history;

    double score(std::span<const double> x) const;
    bool predict(std::span<const double> x) const { return score(x) > 0.0; }
    double accuracy(const LabeledRows& data) const;

    friend bool operator==(const ProbeModel&, const ProbeModel&) = default;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Statement-level split: a statement's true and false rows stay together.
Split split_statements(std::size_t n_statements, double ratio, std::uint64_t seed);

// Class-stratified row split.
Split split_rows(std::span<const std::uint8_t> labels, double ratio, std::uint64_t seed);

// Rows (True, ctx) -> 1 and (False, ctx) -> 0 for the given statements at a
// 0-based layer.
LabeledRows probe_rows(const ActivationSet& set, std::size_t layer, ContextKind context,
                       std::span<const std::size_t> statements);

ProbeModel train(ProbeFamily family, const LabeledRows& data, const ProbeHyperparams& hyper = {});

struct ProbeLayerResult {
    std::size_t layer = 0;  // 1-based
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

struct ProbeReport {
    ProbeFamily family = ProbeFamily::MassMean;
    ContextKind context = ContextKind::None;
    double ratio = 0.8;
    std::uint64_t seed = 0;
    std::vector<ProbeLayerResult> layers;
};

struct ProbeOptions {
    ContextKind context = ContextKind::None;
    double ratio = 0.8;
    unsigned threads = 1;
    ProbeHyperparams hyper;
};

ProbeReport probe_report(const ActivationSet& set, ProbeFamily family, std::uint64_t seed,
                         const ProbeOptions& options = {});

// Test accuracy per layer; SEM is the binomial standard error.
LayerCurve accuracy_curve(const ProbeReport& report);
LayerCurve accuracy_curve(const ActivationSet& set, ProbeFamily family, std::uint64_t seed,
                          const ProbeOptions& options = {});

}  // namespace ctxtruth
