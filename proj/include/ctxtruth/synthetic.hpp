#pragma once

// Synthetic activation fixtures with planted geometry, used as validation
// oracles for the analysis pipeline.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/probes.hpp"

namespace ctxtruth {

struct PlantedContext {
    ContextKind kind = ContextKind::RandChar;
    std::vector<double> theta_deg;  // per layer
    std::vector<double> rm;         // per layer, squared-norm ratio
};

struct SyntheticSpec {
    std::size_t n_statements = 64;
    std::size_t n_layers = 30;
    std::size_t hidden_dim = 64;
    std::vector<double> theta_deg;  // relevant context, per layer, in [0, 180]
    std::vector<double> rm;         // relevant context, per layer; empty means 1
    // Per-component noise sd on every activation, as a fraction of the
    // statement's truth-vector norm divided by sqrt(hidden_dim); the noise
    // vector norm is then about noise_rel * ||v_nc||.
    double noise_rel = 0.0;
    // Weight of a per-layer shared truth direction in each statement's truth
    // vector; 0 gives independent random directions. Empty means 0 everywhere.
    std::vector<double> truth_separation;
    double activation_spread = 1.0;
    std::vector<PlantedContext> random_contexts;
    // Every n-th statement fails instruction following in one base
    // condition (0 disables).
    std::size_t fail_every = 0;

    void validate() const;
};

// Three-phase angle curve: `high` up to layer `drop_start`, linear down to
// `low` at layer `drop_end` (1-based, inclusive), flat afterwards.
std::vector<double> three_phase_curve(std::size_t n_layers, double high, double low, std::size_t drop_start,
                                      std::size_t drop_end);

ActivationSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Unembedding whose two choice-token rows are random; remaining rows are
// small random noise.
UnembeddingBundle gen_synthetic_unembedding(std::size_t vocab_size, std::size_t hidden_dim, std::uint64_t seed);

// Two isotropic Gaussian classes with means +/- separation along the first
// axis.
LabeledRows gaussian_clusters(std::size_t n_per_class, std::size_t dim, double separation, double sigma,
                              std::uint64_t seed);

// A small fixture shaped like a real run: three-phase theta, relevant
// context plus all five random kinds with weaker planted effects.
SyntheticSpec demo_spec(std::size_t n_statements = 48, std::size_t n_layers = 16, std::size_t hidden_dim = 32);

}  // namespace ctxtruth
