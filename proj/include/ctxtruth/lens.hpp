#pragma once

// Logit-lens readout of intermediate activations: the probability gap between
// the two choice tokens, with context relative to without.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/geometry.hpp"

namespace ctxtruth {

// Optional normalization applied to an activation before unembedding.
struct NormParams {
    enum class Kind { Rms, Layer };
    Kind kind = Kind::Rms;
    double eps = 1e-5;
    std::vector<double> weight;
    std::vector<double> bias;  // Layer only; empty means zero

    std::vector<double> apply(std::span<const float> x) const;
};

// JSON: {"kind": "rms"|"layer", "eps": f, "weight": [...], "bias": [...]}.
NormParams load_norm_params(const std::filesystem::path& path);

// P(true token) - P(false token) under a max-shifted softmax of the logits.
double choice_prob_diff_logits(std::span<const double> logits, std::size_t true_id, std::size_t false_id);
double choice_prob_diff(std::span<const float> activation, const UnembeddingBundle& bundle,
                        const NormParams* norm = nullptr);

enum class LensMode { Ratio, Difference };  // D_c / D_nc, or D_c - D_nc
enum class LensSide { TrueSide, FalseSide, Mean };

std::string_view to_string(LensMode m);
std::string_view to_string(LensSide s);

inline constexpr double kLensDenominatorGuard = 1e-6;

struct LensOptions {
    ContextKind context = ContextKind::Relevant;
    LensMode mode = LensMode::Ratio;
    // Which generation's activation is read out under each condition.
    LensSide side = LensSide::TrueSide;
    double eps_den = kLensDenominatorGuard;
    std::optional<NormParams> norm;
    unsigned threads = 1;
};

struct LensCurve {
    LensOptions options;
    std::vector<std::vector<std::optional<double>>> values;  // [layer][statement]
    std::vector<CurvePoint> points;                           // n_excluded counts guarded statements
};

LensCurve normalized_p(const ActivationSet& set, const UnembeddingBundle& bundle, const LensOptions& options = {});

// Per-statement values of any quantity, [layer][statement].
using StatementMatrix = std::vector<std::vector<std::optional<double>>>;

// Pearson r per layer over statements defined in both inputs. Throws when a
// layer has fewer than 3 paired statements or zero variance.
std::vector<double> correlate(const LensCurve& lens, const StatementMatrix& other);

// As correlate, but undefined layers come back empty instead of throwing.
std::vector<std::optional<double>> try_correlate(const LensCurve& lens, const StatementMatrix& other);

}  // namespace ctxtruth
