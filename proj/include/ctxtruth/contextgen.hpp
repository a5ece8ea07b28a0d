#pragma once

// Random-context baselines and readability statistics for context corpora.
// Words are whitespace-separated tokens throughout.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"

namespace ctxtruth {

enum class PosTag { Article, Adjective, Noun, Verb, Adverb };

std::string_view to_string(PosTag tag);
PosTag pos_tag_from_string(std::string_view s);

using SaladTemplate = std::vector<PosTag>;

const std::vector<SaladTemplate>& default_salad_templates();

struct TaggedLexicon {
    std::map<PosTag, std::vector<std::string>> words;
};

inline constexpr std::string_view kSaladPlaceholder = "word";

std::vector<std::string> split_words(std::string_view text);
std::size_t word_count(std::string_view text);

std::string gen_random_chars(std::size_t target_words, std::uint64_t seed);
std::string gen_random_words(std::size_t target_words, std::span<const std::string> lexicon, std::uint64_t seed);
std::string gen_random_salad(std::size_t target_words, const TaggedLexicon& lexicon, std::uint64_t seed,
                             const std::vector<SaladTemplate>& templates = default_salad_templates());
std::string gen_random_wiki(std::size_t target_words, std::span<const std::string> corpus_words, std::uint64_t seed);

struct ContextRecord {
    std::string statement_id;
    std::string context;
    std::string kind;  // "relevant", "char", "word", "salad", "wiki", "shuffle"
    std::size_t word_count = 0;

    friend bool operator==(const ContextRecord&, const ContextRecord&) = default;
};

// Permutes contexts so that no statement keeps its own (rejection-sampled
// uniform derangement). Contexts are matched back to statement ids.
std::vector<ContextRecord> gen_shuffle(std::span<const ContextRecord> contexts, std::uint64_t seed);

// Index permutation used by gen_shuffle: perm[i] is the source of slot i.
std::vector<std::size_t> random_derangement(std::size_t n, std::uint64_t seed);

enum class RandomKind { Char, Word, Salad, Wiki, Shuffle };
std::string_view to_string(RandomKind kind);
RandomKind random_kind_from_string(std::string_view s);
ContextKind to_context_kind(RandomKind kind);

struct GeneratorInputs {
    std::vector<std::string> lexicon;      // word kind
    TaggedLexicon tagged;                  // salad kind
    std::vector<std::string> corpus_words; // wiki kind
    std::vector<SaladTemplate> templates = default_salad_templates();
};

// One random record per input record, seeded per record from (seed, index)
// so the result does not depend on processing order.
std::vector<ContextRecord> generate_contexts(RandomKind kind, std::span<const ContextRecord> originals,
                                             const GeneratorInputs& inputs, std::uint64_t seed);

std::size_t count_syllables(std::string_view word);

// 206.835 - 1.015 * words / sentences - 84.6 * syllables / words.
double flesch_score(std::string_view text);

struct CorpusStats {
    std::size_t n_rows = 0;
    double mean_words = 0.0;
    double flesch = 0.0;  // mean of per-row scores
};

CorpusStats corpus_stats(std::span<const ContextRecord> records);

// Lexicon file: one entry per line, either "word" or "word<TAB>tag".
struct LexiconFile {
    std::vector<std::string> words;
    TaggedLexicon tagged;
};
LexiconFile load_lexicon(const std::filesystem::path& path);
std::vector<std::string> load_corpus_words(const std::filesystem::path& path);

std::vector<ContextRecord> read_context_jsonl(const std::filesystem::path& path);
void write_context_jsonl(std::span<const ContextRecord> records, const std::filesystem::path& path);

}  // namespace ctxtruth
