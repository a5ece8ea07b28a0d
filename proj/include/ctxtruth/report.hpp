#pragma once

// Pipeline wiring and output emission: curves, phases, probes, lens and the
// relevant-vs-random comparison tables, written as CSV with a JSON mirror.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/geometry.hpp"
#include "ctxtruth/lens.hpp"
#include "ctxtruth/probes.hpp"
#include "ctxtruth/stats.hpp"

namespace ctxtruth {

std::string_view version();

struct DumpRef {
    std::string name;
    std::filesystem::path path;
};

// "name=path" or a bare path (name = file stem).
DumpRef parse_dump_ref(std::string_view arg);

struct LayerSelection {
    enum class Kind { Final, All, Range };
    Kind kind = Kind::Final;
    std::size_t first = 0;  // 1-based, inclusive (Range)
    std::size_t last = 0;

    // 0-based layer indices for a model with n_layers layers.
    std::vector<std::size_t> resolve(std::size_t n_layers) const;
    std::string to_string() const;
};

// "final", "all", "N" or "A-B" (1-based).
LayerSelection parse_layers(std::string_view s);

enum class OutputFormat { Csv, Json, Both };
OutputFormat output_format_from_string(std::string_view s);
std::string_view to_string(OutputFormat f);

struct RunConfig {
    std::vector<DumpRef> dumps;
    std::optional<std::filesystem::path> unembedding;
    LayerSelection layers;  // comparison layers; curves always cover every layer
    double alpha = 0.05;
    // Tests per single-quantity table for Bonferroni; 0 counts the cells
    // actually tested. The combined table uses twice this.
    std::size_t bonferroni_n = 0;
    Alternative alternative = Alternative::Greater;
    MagnitudeMode magnitude = MagnitudeMode::SquaredNorm;
    std::uint64_t seed = 0;
    std::vector<ProbeFamily> probe_families{std::begin(kProbeFamilies), std::end(kProbeFamilies)};
    ContextKind probe_context = ContextKind::None;
    bool filter_instruction = true;
    LensMode lens_mode = LensMode::Ratio;
    LensSide lens_side = LensSide::TrueSide;
    PhaseParams phase;
    OutputFormat format = OutputFormat::Both;
    unsigned threads = 1;

    // Everything that affects results; the output location is left out so
    // reports written to different directories stay byte-identical.
    nlohmann::json to_json() const;
};

// Provenance embedded in every output file.
struct Provenance {
    nlohmann::json config;
    std::string dataset;  // empty for cross-dataset outputs
};

std::string format_number(double x);
std::string format_optional(const std::optional<double>& x);

// Files are written as <stem>.csv and/or <stem>.json; returns what was written.
std::vector<std::filesystem::path> write_curve(const LayerCurve& curve, const Provenance& prov,
                                               const std::filesystem::path& stem, OutputFormat format);
std::vector<std::filesystem::path> write_phases(const std::vector<std::pair<ContextKind, PhaseSegmentation>>& phases,
                                                const Provenance& prov, const std::filesystem::path& stem);
std::vector<std::filesystem::path> write_probe_report(const ProbeReport& report, const Provenance& prov,
                                                      const std::filesystem::path& stem, OutputFormat format);

struct LensSummary {
    LensCurve curve;
    std::vector<std::optional<double>> r_theta;  // per layer
    std::vector<std::optional<double>> r_rm;
};

LensSummary lens_summary(const ActivationSet& set, const UnembeddingBundle& bundle, const LensOptions& options,
                         MagnitudeMode magnitude = MagnitudeMode::SquaredNorm);
std::vector<std::filesystem::path> write_lens(const LensSummary& lens, const Provenance& prov,
                                              const std::filesystem::path& stem, OutputFormat format);

// One relevant-vs-random comparison cell at one layer of one dataset.
struct ComparisonCell {
    std::string dataset;
    std::size_t layer = 0;  // 1-based
    ContextKind kind = ContextKind::RandChar;
    bool present = false;
    ComparisonResult theta;
    ComparisonResult rm;
    ComparisonLabel label_raw = ComparisonLabel::None;
    ComparisonLabel label_bonferroni = ComparisonLabel::None;
};

struct ComparisonTables {
    double alpha = 0.05;
    Alternative alternative = Alternative::Greater;
    std::size_t n_single = 0;    // Bonferroni N for the theta and rm tables
    std::size_t n_combined = 0;  // Bonferroni N for the label table
    std::vector<ComparisonCell> cells;  // dataset order, then layer, then kind
};

struct NamedSet {
    std::string name;
    const ActivationSet* set = nullptr;
};

ComparisonTables compare_tables(const std::vector<NamedSet>& sets, const LayerSelection& layers, double alpha,
                                std::size_t bonferroni_n, Alternative alternative,
                                MagnitudeMode magnitude = MagnitudeMode::SquaredNorm);

// Cell text: "<mean diff>" plus "*" when significant under the policy;
// "absent" when the dataset lacks the kind.
std::string table_cell(const ComparisonResult& r, bool present, bool significant);

// Labels recomputed from the significance markers of the theta and rm
// tables; throws std::logic_error on any disagreement with the stored labels.
void check_label_consistency(const ComparisonTables& tables);

std::vector<std::filesystem::path> write_tables(const ComparisonTables& tables, const Provenance& prov,
                                                const std::filesystem::path& dir, OutputFormat format);

struct ReportBundle {
    std::vector<std::filesystem::path> files;  // relative to the output directory, in write order
    ComparisonTables tables;
};

ReportBundle run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace ctxtruth
