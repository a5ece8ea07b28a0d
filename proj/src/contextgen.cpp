#include "ctxtruth/contextgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ctxtruth/random.hpp"

namespace ctxtruth {

using nlohmann::json;

namespace {

constexpr std::pair<PosTag, std::string_view> kTagNames[] = {
    {PosTag::Article, "article"}, {PosTag::Adjective, "adjective"}, {PosTag::Noun, "noun"},
    {PosTag::Verb, "verb"},       {PosTag::Adverb, "adverb"},
};

constexpr std::pair<RandomKind, std::string_view> kRandomKindNames[] = {
    {RandomKind::Char, "char"}, {RandomKind::Word, "word"},       {RandomKind::Salad, "salad"},
    {RandomKind::Wiki, "wiki"}, {RandomKind::Shuffle, "shuffle"},
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_vowel(char c) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool has_alnum(std::string_view token) {
    return std::any_of(token.begin(), token.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; });
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

void require_target(std::size_t target_words) {
    if (target_words == 0) throw std::invalid_argument("target word count must be positive");
}

}  // namespace

std::string_view to_string(PosTag tag) {
    for (const auto& [k, name] : kTagNames)
        if (k == tag) return name;
    return "?";
}

PosTag pos_tag_from_string(std::string_view s) {
    for (const auto& [k, name] : kTagNames)
        if (name == s) return k;
    throw std::invalid_argument("unknown part-of-speech tag: " + std::string(s));
}

std::string_view to_string(RandomKind kind) {
    for (const auto& [k, name] : kRandomKindNames)
        if (k == kind) return name;
    return "?";
}

RandomKind random_kind_from_string(std::string_view s) {
    for (const auto& [k, name] : kRandomKindNames)
        if (name == s) return k;
    throw std::invalid_argument("unknown random context kind: " + std::string(s));
}

ContextKind to_context_kind(RandomKind kind) {
    switch (kind) {
        case RandomKind::Char: return ContextKind::RandChar;
        case RandomKind::Word: return ContextKind::RandWord;
        case RandomKind::Salad: return ContextKind::RandSalad;
        case RandomKind::Wiki: return ContextKind::RandWiki;
        case RandomKind::Shuffle: return ContextKind::RandShuffle;
    }
    throw std::logic_error("unreachable");
}

const std::vector<SaladTemplate>& default_salad_templates() {
    using enum PosTag;
    static const std::vector<SaladTemplate> templates = {
        {Article, Adjective, Noun, Verb, Adverb},
        {Adjective, Adjective, Noun, Verb, Adverb},
        {Article, Noun, Verb, Article, Adjective, Noun},
        {Article, Adjective, Noun, Adverb, Verb},
        {Adjective, Noun, Verb, Article, Noun},
    };
    return templates;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

std::string gen_random_chars(std::size_t target_words, std::uint64_t seed) {
    require_target(target_words);
    Rng rng(seed);
    std::vector<std::string> words(target_words);
    for (auto& w : words) {
        const std::size_t len = 2 + rng.below(11);
        for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.below(26)));
    }
    return join(words);
}

std::string gen_random_words(std::size_t target_words, std::span<const std::string> lexicon, std::uint64_t seed) {
    require_target(target_words);
    if (lexicon.empty()) throw std::invalid_argument("random words need a nonempty lexicon");
    Rng rng(seed);
    std::vector<std::string> words(target_words);
    for (auto& w : words) w = lexicon[rng.below(lexicon.size())];
    return join(words);
}

std::string gen_random_salad(std::size_t target_words, const TaggedLexicon& lexicon, std::uint64_t seed,
                             const std::vector<SaladTemplate>& templates) {
    require_target(target_words);
    if (templates.empty() || std::any_of(templates.begin(), templates.end(), [](const auto& t) { return t.empty(); })) {
        throw std::invalid_argument("salad templates must be nonempty");
    }
    Rng rng(seed);
    std::vector<std::string> words;
    words.reserve(target_words);
    while (words.size() < target_words) {
        const auto& tmpl = templates[rng.below(templates.size())];
        const std::size_t sentence_start = words.size();
        for (PosTag tag : tmpl) {
            if (words.size() == target_words) break;
            auto it = lexicon.words.find(tag);
            if (it == lexicon.words.end() || it->second.empty()) {
                words.emplace_back(kSaladPlaceholder);
            } else {
                words.push_back(it->second[rng.below(it->second.size())]);
            }
        }
        auto& first = words[sentence_start];
        first[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(first[0])));
        words.back().push_back('.');
    }
    return join(words);
}

std::string gen_random_wiki(std::size_t target_words, std::span<const std::string> corpus_words, std::uint64_t seed) {
    require_target(target_words);
    if (corpus_words.size() < target_words) {
        throw std::invalid_argument("wiki corpus has " + std::to_string(corpus_words.size()) +
                                    " words, fewer than the requested " + std::to_string(target_words));
    }
    Rng rng(seed);
    const std::size_t offset = rng.below(corpus_words.size() - target_words + 1);
    std::vector<std::string> words(corpus_words.begin() + static_cast<std::ptrdiff_t>(offset),
                                   corpus_words.begin() + static_cast<std::ptrdiff_t>(offset + target_words));
    return join(words);
}

std::vector<std::size_t> random_derangement(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("a derangement needs at least 2 elements");
    Rng rng(seed);
    std::vector<std::size_t> perm(n);
    for (;;) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm.begin(), perm.end());
        bool fixed = false;
        for (std::size_t i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
        if (!fixed) return perm;
    }
}

std::vector<ContextRecord> gen_shuffle(std::span<const ContextRecord> contexts, std::uint64_t seed) {
    const auto perm = random_derangement(contexts.size(), seed);
    std::vector<ContextRecord> out(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        out[i].statement_id = contexts[i].statement_id;
        out[i].context = contexts[perm[i]].context;
        out[i].kind = "shuffle";
        out[i].word_count = word_count(out[i].context);
    }
    return out;
}

std::vector<ContextRecord> generate_contexts(RandomKind kind, std::span<const ContextRecord> originals,
                                             const GeneratorInputs& inputs, std::uint64_t seed) {
    if (kind == RandomKind::Shuffle) return gen_shuffle(originals, seed);
    std::vector<ContextRecord> out(originals.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const std::size_t target = word_count(originals[i].context);
        const std::uint64_t record_seed = mix_seed(seed, i);
        std::string text;
        switch (kind) {
            case RandomKind::Char: text = gen_random_chars(target, record_seed); break;
            case RandomKind::Word: text = gen_random_words(target, inputs.lexicon, record_seed); break;
            case RandomKind::Salad: text = gen_random_salad(target, inputs.tagged, record_seed, inputs.templates); break;
            case RandomKind::Wiki: text = gen_random_wiki(target, inputs.corpus_words, record_seed); break;
            case RandomKind::Shuffle: break;
        }
        out[i] = {originals[i].statement_id, std::move(text), std::string(to_string(kind)), 0};
        out[i].word_count = word_count(out[i].context);
    }
    return out;
}

std::size_t count_syllables(std::string_view word) {
    std::string letters;
    for (char c : word)
        if (std::isalpha(static_cast<unsigned char>(c))) letters.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (letters.empty()) return 1;
    std::size_t count = 0;
    bool in_run = false;
    for (char c : letters) {
        const bool v = is_vowel(c);
        if (v && !in_run) ++count;
        in_run = v;
    }
    const std::size_t n = letters.size();
    if (letters[n - 1] == 'e' && n >= 2 && !is_vowel(letters[n - 2]) && count > 0) --count;
    return std::max<std::size_t>(1, count);
}

double flesch_score(std::string_view text) {
    std::size_t words = 0, syllables = 0, sentences = 0;
    bool sentence_has_words = false;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        const std::string_view token = text.substr(start, i - start);
        if (token.empty()) break;
        // A token may close a sentence and also carry text after the terminator.
        std::size_t pos = 0;
        while (pos < token.size()) {
            std::size_t end = pos;
            while (end < token.size() && !is_terminator(token[end])) ++end;
            const std::string_view piece = token.substr(pos, end - pos);
            if (has_alnum(piece)) {
                ++words;
                syllables += count_syllables(piece);
                sentence_has_words = true;
            }
            if (end < token.size()) {
                while (end < token.size() && is_terminator(token[end])) ++end;
                if (sentence_has_words) ++sentences;
                sentence_has_words = false;
            }
            pos = end;
        }
    }
    if (sentence_has_words) ++sentences;
    if (words == 0 || sentences == 0) throw std::invalid_argument("flesch score needs at least one word");
    const double w = static_cast<double>(words);
    return 206.835 - 1.015 * (w / static_cast<double>(sentences)) - 84.6 * (static_cast<double>(syllables) / w);
}

CorpusStats corpus_stats(std::span<const ContextRecord> records) {
    CorpusStats stats;
    stats.n_rows = records.size();
    if (records.empty()) return stats;
    double words = 0.0, flesch = 0.0;
    std::size_t scored = 0;
    for (const auto& r : records) {
        words += static_cast<double>(word_count(r.context));
        if (word_count(r.context) > 0) {
            flesch += flesch_score(r.context);
            ++scored;
        }
    }
    stats.mean_words = words / static_cast<double>(records.size());
    stats.flesch = scored ? flesch / static_cast<double>(scored) : 0.0;
    return stats;
}

LexiconFile load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon: " + path.string());
    LexiconFile lex;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tab = line.find('\t');
        const auto word_part = split_words(line.substr(0, tab));
        if (word_part.empty()) continue;
        const std::string& word = word_part.front();
        lex.words.push_back(word);
        if (tab != std::string::npos) {
            const auto tag = split_words(line.substr(tab + 1));
            if (!tag.empty()) lex.tagged.words[pos_tag_from_string(tag.front())].push_back(word);
        }
    }
    return lex;
}

std::vector<std::string> load_corpus_words(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return split_words(ss.str());
}

std::vector<ContextRecord> read_context_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::vector<ContextRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (split_words(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            ContextRecord r;
            r.statement_id = j.at("statement_id").get<std::string>();
            r.context = j.at("context").get<std::string>();
            r.kind = j.value("kind", std::string("relevant"));
            r.word_count = word_count(r.context);
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_context_jsonl(std::span<const ContextRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const auto& r : records) {
        json j = {{"statement_id", r.statement_id}, {"context", r.context}, {"kind", r.kind}, {"word_count", r.word_count}};
        out << j.dump() << '\n';
    }
}

}  // namespace ctxtruth
