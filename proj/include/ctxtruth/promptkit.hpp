#pragma once

// Four-prompt protocol: for each statement, prompts that support or refute
// it, each with and without context.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"

namespace ctxtruth {

inline constexpr std::string_view kSlotStatement = "[Statement]";
inline constexpr std::string_view kSlotChoice = "[Choice]";
inline constexpr std::string_view kSlotSelected = "[Selected Choice]";
inline constexpr std::string_view kSlotContext = "[Context]";

// Template lines that contain [Context] are dropped from no-context prompts.
const std::string& default_prompt_template();

enum class Stance { Support, Refute };
std::string_view to_string(Stance s);

struct Prompt {
    Stance stance = Stance::Support;
    bool with_context = false;
    std::string text;
    std::array<std::size_t, 2> choice_order{0, 1};  // indices into choices as listed
    std::string selected_choice;
};

struct PromptQuad {
    std::string statement_id;
    std::array<std::string, 2> choices;  // (affirm, deny)
    // Order: (support, none), (refute, none), (support, ctx), (refute, ctx).
    std::array<Prompt, 4> prompts;
};

PromptQuad build_quad(std::string_view statement_id, std::string_view statement,
                      const std::array<std::string, 2>& choices, const std::optional<std::string>& context,
                      std::string_view prompt_template, std::uint64_t seed);

// True iff the completion, after leading whitespace, starts with ')' and the
// next token is selected_choice (case-sensitive, followed by a non-alphanumeric
// character or the end).
bool check_instruction(std::string_view completion, std::string_view selected_choice);

TruthSide label_truth(std::string_view selected_choice, std::string_view ground_truth,
                      const std::array<std::string, 2>& choices);

// A statement is usable iff all four base prompts passed.
bool statement_passes(std::span<const bool, 4> checks);

struct StatementInput {
    std::string statement_id;
    std::string statement;
    std::array<std::string, 2> choices;
    std::string ground_truth;
    std::optional<std::string> context;
    ContextKind context_kind = ContextKind::Relevant;
};

std::vector<StatementInput> read_statement_jsonl(const std::filesystem::path& path);

// One JSON object per quad: statement_id, choices, ground_truth and the four
// prompts with their condition labels.
std::string quad_to_json(const PromptQuad& quad, const StatementInput& input);

}  // namespace ctxtruth
