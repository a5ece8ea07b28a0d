#include "ctxtruth/actdump.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <json.hpp>

namespace ctxtruth {

using nlohmann::json;

namespace {

constexpr std::pair<ContextKind, std::string_view> kKindNames[] = {
    {ContextKind::None, "None"},           {ContextKind::Relevant, "Relevant"},
    {ContextKind::RandChar, "RandChar"},   {ContextKind::RandWord, "RandWord"},
    {ContextKind::RandSalad, "RandSalad"}, {ContextKind::RandWiki, "RandWiki"},
    {ContextKind::RandShuffle, "RandShuffle"},
};

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const unsigned char* p) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
    return value;
}

void append_floats(std::string& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + start, values.data(), values.size() * 4);
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(values[i]);
            for (int b = 0; b < 4; ++b) out[start + i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
        }
    }
}

std::vector<float> load_floats(const unsigned char* p, std::size_t count) {
    std::vector<float> values(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(values.data(), p, count * 4);
    } else {
        for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
    }
    return values;
}

void check_finite(const std::vector<float>& values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DumpError(DumpError::Code::NonFinite,
                            std::string(what) + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

void write_container(const std::string& header, std::span<const float> payload,
                     const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(kDumpPreamble + header.size() + payload.size() * 4);
    bytes.append(kDumpMagic, 4);
    put_le<std::uint32_t>(bytes, kDumpVersion);
    put_le<std::uint64_t>(bytes, header.size());
    bytes += header;
    append_floats(bytes, payload);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DumpError(DumpError::Code::Io, "cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DumpError(DumpError::Code::Io, "write failed: " + path.string());
}

struct Container {
    json header;
    std::vector<unsigned char> bytes;
    std::size_t payload_offset = 0;
};

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DumpError(DumpError::Code::Io, "cannot open: " + path.string());
    Container c;
    c.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

    if (c.bytes.size() < kDumpPreamble) {
        throw DumpError(DumpError::Code::SizeMismatch, "file too short for preamble: expected at least " +
                                                           std::to_string(kDumpPreamble) + " bytes, got " +
                                                           std::to_string(c.bytes.size()));
    }
    if (std::memcmp(c.bytes.data(), kDumpMagic, 4) != 0) {
        throw DumpError(DumpError::Code::BadMagic, "bad magic, expected \"TVD1\"");
    }
    const auto version = get_le<std::uint32_t>(c.bytes.data() + 4);
    if (version != kDumpVersion) {
        throw DumpError(DumpError::Code::VersionMismatch,
                        "unsupported format version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(c.bytes.data() + 8);
    if (header_len > c.bytes.size() - kDumpPreamble) {
        throw DumpError(DumpError::Code::SizeMismatch,
                        "header length " + std::to_string(header_len) + " exceeds file size " +
                            std::to_string(c.bytes.size()));
    }
    c.payload_offset = kDumpPreamble + header_len;
    try {
        c.header = json::parse(c.bytes.begin() + kDumpPreamble, c.bytes.begin() + c.payload_offset);
    } catch (const json::exception& e) {
        throw DumpError(DumpError::Code::BadHeader, std::string("header is not valid JSON: ") + e.what());
    }
    if (!c.header.is_object()) throw DumpError(DumpError::Code::BadHeader, "header is not a JSON object");
    return c;
}

const json& require_key(const json& header, const char* key) {
    auto it = header.find(key);
    if (it == header.end()) throw DumpError(DumpError::Code::BadHeader, std::string("header missing key: ") + key);
    return *it;
}

template <class T>
T header_get(const json& header, const char* key) {
    try {
        return require_key(header, key).get<T>();
    } catch (const json::exception& e) {
        throw DumpError(DumpError::Code::BadHeader, std::string("header key ") + key + ": " + e.what());
    }
}

void check_payload_size(const Container& c, std::size_t expected) {
    const std::size_t actual = c.bytes.size() - c.payload_offset;
    if (actual != expected) {
        throw DumpError(DumpError::Code::SizeMismatch, "payload size mismatch: expected " +
                                                           std::to_string(expected) + " bytes, got " +
                                                           std::to_string(actual));
    }
}

}  // namespace

std::string_view to_string(TruthSide side) { return side == TruthSide::True ? "True" : "False"; }

std::string_view to_string(ContextKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "?";
}

TruthSide truth_side_from_string(std::string_view s) {
    if (s == "True") return TruthSide::True;
    if (s == "False") return TruthSide::False;
    throw std::invalid_argument("unknown truth side: " + std::string(s));
}

ContextKind context_kind_from_string(std::string_view s) {
    for (const auto& [k, name] : kKindNames)
        if (name == s) return k;
    throw std::invalid_argument("unknown context kind: " + std::string(s));
}

std::optional<std::size_t> ActivationSet::find_condition(ConditionLabel label) const {
    auto it = std::find(conditions.begin(), conditions.end(), label);
    if (it == conditions.end()) return std::nullopt;
    return static_cast<std::size_t>(it - conditions.begin());
}

std::size_t ActivationSet::require_condition(ConditionLabel label) const {
    if (auto c = find_condition(label)) return *c;
    throw std::invalid_argument("missing condition (" + std::string(to_string(label.truth_side)) + ", " +
                                std::string(to_string(label.context_kind)) + ")");
}

bool ActivationSet::has_context(ContextKind kind) const {
    return find_condition({TruthSide::True, kind}) && find_condition({TruthSide::False, kind});
}

ActivationSet ActivationSet::make(std::string model_name, std::size_t n_layers, std::size_t hidden_dim,
                                  std::vector<std::string> statement_ids,
                                  std::vector<ConditionLabel> conditions) {
    ActivationSet s;
    s.model_name = std::move(model_name);
    s.n_layers = n_layers;
    s.hidden_dim = hidden_dim;
    s.statement_ids = std::move(statement_ids);
    s.conditions = std::move(conditions);
    s.tensor.assign(s.n_conditions() * s.n_statements() * n_layers * hidden_dim, 0.0f);
    s.instruction_ok.assign(s.n_conditions() * s.n_statements(), 1);
    return s;
}

void ActivationSet::validate() const {
    auto fail = [](const std::string& msg) { throw DumpError(DumpError::Code::Invariant, msg); };
    if (n_layers == 0) fail("n_layers must be positive");
    if (hidden_dim == 0) fail("hidden_dim must be positive");
    if (conditions.empty()) fail("at least one condition is required");
    const std::size_t expected = n_conditions() * n_statements() * n_layers * hidden_dim;
    if (tensor.size() != expected) {
        fail("tensor has " + std::to_string(tensor.size()) + " elements, expected " + std::to_string(expected));
    }
    if (instruction_ok.size() != n_conditions() * n_statements()) fail("instruction_ok has wrong shape");
    std::unordered_set<std::string> seen;
    for (const auto& id : statement_ids)
        if (!seen.insert(id).second) fail("duplicate statement id: " + id);
    for (std::size_t i = 0; i < conditions.size(); ++i)
        for (std::size_t j = i + 1; j < conditions.size(); ++j)
            if (conditions[i] == conditions[j]) fail("duplicate condition label");
}

bool operator==(const ActivationSet& a, const ActivationSet& b) {
    return a.model_name == b.model_name && a.n_layers == b.n_layers && a.hidden_dim == b.hidden_dim &&
           a.statement_ids == b.statement_ids && a.conditions == b.conditions &&
           a.instruction_ok == b.instruction_ok && a.tensor.size() == b.tensor.size() &&
           std::memcmp(a.tensor.data(), b.tensor.data(), a.tensor.size() * sizeof(float)) == 0;
}

void UnembeddingBundle::validate() const {
    auto fail = [](const std::string& msg) { throw DumpError(DumpError::Code::Invariant, msg); };
    if (vocab_size == 0 || hidden_dim == 0) fail("unembedding shape must be positive");
    if (matrix.size() != vocab_size * hidden_dim) fail("unembedding matrix has wrong element count");
    if (true_token_id >= vocab_size) fail("true token id out of range");
    if (false_token_id >= vocab_size) fail("false token id out of range");
}

std::string dump_header_json(const ActivationSet& set) {
    json conditions = json::array();
    for (const auto& c : set.conditions) {
        conditions.push_back({{"truth_side", to_string(c.truth_side)}, {"context_kind", to_string(c.context_kind)}});
    }
    json mask = json::array();
    for (std::size_t c = 0; c < set.n_conditions(); ++c) {
        json row = json::array();
        for (std::size_t k = 0; k < set.n_statements(); ++k) row.push_back(set.ok(c, k));
        mask.push_back(std::move(row));
    }
    json header = {
        {"model_name", set.model_name},
        {"n_layers", set.n_layers},
        {"hidden_dim", set.hidden_dim},
        {"statement_ids", set.statement_ids},
        {"conditions", std::move(conditions)},
        {"dtype", "f32"},
        {"instruction_ok", std::move(mask)},
    };
    return header.dump();
}

void write_dump(const ActivationSet& set, const std::filesystem::path& path) {
    set.validate();
    write_container(dump_header_json(set), set.tensor, path);
}

ActivationSet read_dump(const std::filesystem::path& path) {
    Container c = read_container(path);
    const json& h = c.header;
    if (h.contains("role") && h["role"] != "activations") {
        throw DumpError(DumpError::Code::BadHeader, "not an activation dump (role " + h["role"].dump() + ")");
    }
    if (header_get<std::string>(h, "dtype") != "f32") throw DumpError(DumpError::Code::BadHeader, "dtype must be f32");

    ActivationSet s;
    s.model_name = header_get<std::string>(h, "model_name");
    s.n_layers = header_get<std::size_t>(h, "n_layers");
    s.hidden_dim = header_get<std::size_t>(h, "hidden_dim");
    s.statement_ids = header_get<std::vector<std::string>>(h, "statement_ids");
    try {
        for (const auto& cj : require_key(h, "conditions")) {
            s.conditions.push_back({truth_side_from_string(cj.at("truth_side").get<std::string>()),
                                    context_kind_from_string(cj.at("context_kind").get<std::string>())});
        }
    } catch (const std::exception& e) {
        throw DumpError(DumpError::Code::BadHeader, std::string("bad conditions: ") + e.what());
    }
    const auto mask = header_get<std::vector<std::vector<bool>>>(h, "instruction_ok");
    if (mask.size() != s.n_conditions()) throw DumpError(DumpError::Code::BadHeader, "instruction_ok has wrong shape");
    for (const auto& row : mask) {
        if (row.size() != s.n_statements()) throw DumpError(DumpError::Code::BadHeader, "instruction_ok has wrong shape");
        for (bool b : row) s.instruction_ok.push_back(b ? 1 : 0);
    }

    const std::size_t count = s.n_conditions() * s.n_statements() * s.n_layers * s.hidden_dim;
    check_payload_size(c, count * 4);
    s.tensor = load_floats(c.bytes.data() + c.payload_offset, count);
    check_finite(s.tensor, "activation payload");
    s.validate();
    return s;
}

void write_unembedding(const UnembeddingBundle& bundle, const std::filesystem::path& path) {
    bundle.validate();
    json header = {
        {"role", "unembedding"},
        {"model_name", bundle.model_name},
        {"vocab_size", bundle.vocab_size},
        {"hidden_dim", bundle.hidden_dim},
        {"dtype", "f32"},
        {"token_ids", {{"true", bundle.true_token_id}, {"false", bundle.false_token_id}}},
    };
    write_container(header.dump(), bundle.matrix, path);
}

UnembeddingBundle read_unembedding(const std::filesystem::path& path) {
    Container c = read_container(path);
    const json& h = c.header;
    if (header_get<std::string>(h, "role") != "unembedding") {
        throw DumpError(DumpError::Code::BadHeader, "not an unembedding bundle");
    }
    if (header_get<std::string>(h, "dtype") != "f32") throw DumpError(DumpError::Code::BadHeader, "dtype must be f32");
    UnembeddingBundle b;
    b.model_name = h.value("model_name", std::string{});
    b.vocab_size = header_get<std::size_t>(h, "vocab_size");
    b.hidden_dim = header_get<std::size_t>(h, "hidden_dim");
    const auto& ids = require_key(h, "token_ids");
    try {
        b.true_token_id = ids.at("true").get<std::size_t>();
        b.false_token_id = ids.at("false").get<std::size_t>();
    } catch (const json::exception& e) {
        throw DumpError(DumpError::Code::BadHeader, std::string("bad token_ids: ") + e.what());
    }
    check_payload_size(c, b.vocab_size * b.hidden_dim * 4);
    b.matrix = load_floats(c.bytes.data() + c.payload_offset, b.vocab_size * b.hidden_dim);
    check_finite(b.matrix, "unembedding payload");
    b.validate();
    return b;
}

ActivationSet filter_instruction_following(const ActivationSet& set) {
    std::vector<std::size_t> base;
    for (auto side : {TruthSide::True, TruthSide::False})
        for (auto kind : {ContextKind::None, ContextKind::Relevant})
            if (auto c = set.find_condition({side, kind})) base.push_back(*c);

    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < set.n_statements(); ++k) {
        if (std::all_of(base.begin(), base.end(), [&](std::size_t c) { return set.ok(c, k); })) keep.push_back(k);
    }

    std::vector<std::string> ids;
    for (auto k : keep) ids.push_back(set.statement_ids[k]);
    ActivationSet out = ActivationSet::make(set.model_name, set.n_layers, set.hidden_dim, std::move(ids), set.conditions);
    const std::size_t block = set.n_layers * set.hidden_dim;
    for (std::size_t c = 0; c < set.n_conditions(); ++c) {
        for (std::size_t i = 0; i < keep.size(); ++i) {
            const float* src = set.tensor.data() + set.offset(c, keep[i], 0);
            std::copy(src, src + block, out.tensor.data() + out.offset(c, i, 0));
            out.instruction_ok[c * keep.size() + i] = set.instruction_ok[c * set.n_statements() + keep[i]];
        }
    }
    return out;
}

}  // namespace ctxtruth
