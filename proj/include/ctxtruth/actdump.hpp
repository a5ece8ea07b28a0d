#pragma once

// Activation dumps: the in-memory activation model and the TVD1 container.
//
// TVD1 layout (little-endian):
//   [0, 4)        magic "TVD1"
//   [4, 8)        format version, u32 = 1
//   [8, 16)       header length H, u64
//   [16, 16 + H)  UTF-8 JSON header
//   [16 + H, ...) raw f32 payload, row-major
//
// Activation files carry [condition][statement][layer][dim]; unembedding
// files carry role "unembedding" and a [vocab][dim] payload.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxtruth {

enum class TruthSide { True, False };

enum class ContextKind { None, Relevant, RandChar, RandWord, RandSalad, RandWiki, RandShuffle };

inline constexpr ContextKind kRandomKinds[] = {ContextKind::RandChar, ContextKind::RandWord,
                                               ContextKind::RandSalad, ContextKind::RandWiki,
                                               ContextKind::RandShuffle};

std::string_view to_string(TruthSide side);
std::string_view to_string(ContextKind kind);
TruthSide truth_side_from_string(std::string_view s);
ContextKind context_kind_from_string(std::string_view s);

struct ConditionLabel {
    TruthSide truth_side = TruthSide::True;
    ContextKind context_kind = ContextKind::None;

    friend bool operator==(const ConditionLabel&, const ConditionLabel&) = default;
};

class DumpError : public std::runtime_error {
public:
    enum class Code { Io, BadMagic, VersionMismatch, BadHeader, SizeMismatch, NonFinite, Invariant };

    DumpError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

struct ActivationSet {
    std::string model_name;
    std::size_t n_layers = 0;
    std::size_t hidden_dim = 0;
    std::vector<std::string> statement_ids;
    std::vector<ConditionLabel> conditions;
    std::vector<float> tensor;
    // [condition * K + statement], nonzero means the generation followed
    // the instruction.
    std::vector<std::uint8_t> instruction_ok;

    std::size_t n_statements() const { return statement_ids.size(); }
    std::size_t n_conditions() const { return conditions.size(); }

    // Flat offset of (condition, statement, layer) with 0-based layer.
    std::size_t offset(std::size_t c, std::size_t k, std::size_t l) const {
        return ((c * n_statements() + k) * n_layers + l) * hidden_dim;
    }

    std::span<const float> at(std::size_t c, std::size_t k, std::size_t l) const {
        return {tensor.data() + offset(c, k, l), hidden_dim};
    }
    std::span<float> at(std::size_t c, std::size_t k, std::size_t l) {
        return {tensor.data() + offset(c, k, l), hidden_dim};
    }

    bool ok(std::size_t c, std::size_t k) const { return instruction_ok[c * n_statements() + k] != 0; }

    std::optional<std::size_t> find_condition(ConditionLabel label) const;
    std::size_t require_condition(ConditionLabel label) const;
    bool has_context(ContextKind kind) const;

    // Allocates a zero tensor and an all-true mask for the given shape.
    static ActivationSet make(std::string model_name, std::size_t n_layers, std::size_t hidden_dim,
                              std::vector<std::string> statement_ids,
                              std::vector<ConditionLabel> conditions);

    // Throws DumpError(Invariant) on any broken invariant.
    void validate() const;

    friend bool operator==(const ActivationSet&, const ActivationSet&);
};

struct UnembeddingBundle {
    std::string model_name;
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 0;
    std::vector<float> matrix;  // [vocab][hidden]
    std::size_t true_token_id = 0;
    std::size_t false_token_id = 0;

    std::span<const float> row(std::size_t v) const { return {matrix.data() + v * hidden_dim, hidden_dim}; }

    void validate() const;

    friend bool operator==(const UnembeddingBundle&, const UnembeddingBundle&) = default;
};

inline constexpr char kDumpMagic[4] = {'T', 'V', 'D', '1'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpPreamble = 16;

void write_dump(const ActivationSet& set, const std::filesystem::path& path);
ActivationSet read_dump(const std::filesystem::path& path);

void write_unembedding(const UnembeddingBundle& bundle, const std::filesystem::path& path);
UnembeddingBundle read_unembedding(const std::filesystem::path& path);

// The JSON header text exactly as write_dump emits it.
std::string dump_header_json(const ActivationSet& set);

// Keeps statements whose mask is set under all four base conditions
// (True/False x None/Relevant), preserving order.
ActivationSet filter_instruction_following(const ActivationSet& set);

}  // namespace ctxtruth
