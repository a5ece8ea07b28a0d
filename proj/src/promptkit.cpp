#include "ctxtruth/promptkit.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ctxtruth/random.hpp"

namespace ctxtruth {

using nlohmann::json;

namespace {

// Single left-to-right pass so slot-like text inside substituted values is
// kept verbatim.
std::string fill_slots(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string_view>> slots) {
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        bool matched = false;
        for (const auto& [slot, value] : slots) {
            if (tmpl.substr(pos, slot.size()) == slot) {
                out.append(value);
                pos += slot.size();
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(tmpl[pos++]);
    }
    return out;
}

std::string drop_context_lines(std::string_view tmpl) {
    std::string out;
    std::size_t start = 0;
    while (start <= tmpl.size()) {
        std::size_t end = tmpl.find('\n', start);
        const bool last = end == std::string_view::npos;
        if (last) end = tmpl.size();
        const std::string_view line = tmpl.substr(start, end - start);
        if (line.find(kSlotContext) == std::string_view::npos) {
            out.append(line);
            if (!last) out.push_back('\n');
        }
        if (last) break;
        start = end + 1;
    }
    return out;
}

std::string_view lstrip(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

}  // namespace

const std::string& default_prompt_template() {
    static const std::string tmpl =
        "Context: [Context]\n"
        "Statement: [Statement]\n"
        "Is the statement correct? Choices: [Choice]\n"
        "Selected choice: [Selected Choice]\n"
        "Continue the answer below. Start with ')' followed by the selected choice, then argue for it.\n"
        "Answer: (";
    return tmpl;
}

std::string_view to_string(Stance s) { return s == Stance::Support ? "support" : "refute"; }

PromptQuad build_quad(std::string_view statement_id, std::string_view statement,
                      const std::array<std::string, 2>& choices, const std::optional<std::string>& context,
                      std::string_view prompt_template, std::uint64_t seed) {
    for (auto slot : {kSlotStatement, kSlotChoice, kSlotSelected}) {
        if (prompt_template.find(slot) == std::string_view::npos) {
            throw std::invalid_argument("prompt template is missing slot " + std::string(slot));
        }
    }
    if (!context) throw std::invalid_argument("build_quad: statement " + std::string(statement_id) + " has no context");

    std::string with_ctx(prompt_template);
    if (with_ctx.find(kSlotContext) == std::string::npos) with_ctx = std::string(kSlotContext) + "\n" + with_ctx;
    const std::string without_ctx = drop_context_lines(prompt_template);

    PromptQuad quad;
    quad.statement_id = statement_id;
    quad.choices = choices;
    Rng rng(seed);
    const Stance stances[] = {Stance::Support, Stance::Refute, Stance::Support, Stance::Refute};
    for (std::size_t i = 0; i < 4; ++i) {
        Prompt& p = quad.prompts[i];
        p.stance = stances[i];
        p.with_context = i >= 2;
        p.selected_choice = p.stance == Stance::Support ? choices[0] : choices[1];
        p.choice_order = rng.below(2) == 0 ? std::array<std::size_t, 2>{0, 1} : std::array<std::size_t, 2>{1, 0};
        const std::string listing = choices[p.choice_order[0]] + " or " + choices[p.choice_order[1]];
        const std::pair<std::string_view, std::string_view> slots[] = {
            {kSlotStatement, statement},
            {kSlotChoice, listing},
            {kSlotSelected, p.selected_choice},
            {kSlotContext, *context},
        };
        p.text = fill_slots(p.with_context ? with_ctx : without_ctx, slots);
    }
    return quad;
}

bool check_instruction(std::string_view completion, std::string_view selected_choice) {
    if (selected_choice.empty()) return false;
    std::string_view s = lstrip(completion);
    if (s.empty() || s.front() != ')') return false;
    s.remove_prefix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    if (s.substr(0, selected_choice.size()) != selected_choice) return false;
    if (s.size() == selected_choice.size()) return true;
    return std::isalnum(static_cast<unsigned char>(s[selected_choice.size()])) == 0;
}

TruthSide label_truth(std::string_view selected_choice, std::string_view ground_truth,
                      const std::array<std::string, 2>& choices) {
    if (ground_truth != choices[0] && ground_truth != choices[1]) {
        throw std::invalid_argument("ground truth '" + std::string(ground_truth) + "' is not one of the choices");
    }
    if (selected_choice != choices[0] && selected_choice != choices[1]) {
        throw std::invalid_argument("selected choice '" + std::string(selected_choice) + "' is not one of the choices");
    }
    return selected_choice == ground_truth ? TruthSide::True : TruthSide::False;
}

bool statement_passes(std::span<const bool, 4> checks) {
    return checks[0] && checks[1] && checks[2] && checks[3];
}

std::vector<StatementInput> read_statement_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::vector<StatementInput> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (lstrip(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            StatementInput s;
            s.statement_id = j.at("statement_id").get<std::string>();
            s.statement = j.at("statement").get<std::string>();
            const auto choices = j.at("choices").get<std::vector<std::string>>();
            if (choices.size() != 2) throw std::runtime_error("choices must have exactly two entries");
            s.choices = {choices[0], choices[1]};
            s.ground_truth = j.at("ground_truth").get<std::string>();
            if (j.contains("context") && !j["context"].is_null()) s.context = j["context"].get<std::string>();
            if (j.contains("context_kind")) s.context_kind = context_kind_from_string(j["context_kind"].get<std::string>());
            out.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string quad_to_json(const PromptQuad& quad, const StatementInput& input) {
    json prompts = json::array();
    for (const auto& p : quad.prompts) {
        const TruthSide side = label_truth(p.selected_choice, input.ground_truth, quad.choices);
        const ContextKind kind = p.with_context ? input.context_kind : ContextKind::None;
        prompts.push_back({
            {"stance", to_string(p.stance)},
            {"with_context", p.with_context},
            {"condition", {{"truth_side", to_string(side)}, {"context_kind", to_string(kind)}}},
            {"text", p.text},
            {"choice_order", p.choice_order},
            {"selected_choice", p.selected_choice},
        });
    }
    json j = {
        {"statement_id", quad.statement_id},
        {"choices", quad.choices},
        {"ground_truth", input.ground_truth},
        {"prompts", std::move(prompts)},
    };
    return j.dump();
}

}  // namespace ctxtruth
