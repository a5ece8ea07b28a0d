#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "ctxtruth/actdump.hpp"
#include "fixtures.hpp"

using namespace ctxtruth;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DumpError::Code read_error(const fs::path& p) {
    try {
        read_dump(p);
    } catch (const DumpError& e) {
        return e.code();
    }
    FAIL("expected DumpError");
    return DumpError::Code::Io;
}

}  // namespace

TEST_SUITE("actdump") {
    TEST_CASE("round trip of a small set is bitwise identical") {
        const auto dir = fixtures::scratch("actdump_roundtrip");
        auto set = fixtures::random_set(2, 2, 3, 7, {{TruthSide::True, ContextKind::None},
                                                      {TruthSide::False, ContextKind::None}});
        set.instruction_ok[1] = 0;
        write_dump(set, dir / "a.tvd");
        const auto back = read_dump(dir / "a.tvd");
        CHECK(back == set);
        CHECK(std::memcmp(back.tensor.data(), set.tensor.data(), set.tensor.size() * 4) == 0);
        CHECK_FALSE(back.ok(0, 1));
    }

    TEST_CASE("duplicate statement ids are rejected") {
        auto set = ActivationSet::make("m", 1, 1, {"a", "a"}, {{TruthSide::True, ContextKind::None}});
        CHECK_THROWS_AS(set.validate(), DumpError);
        CHECK_THROWS_AS(write_dump(set, fixtures::scratch("dup") / "x.tvd"), DumpError);
    }

    TEST_CASE("file size is preamble + header + 4 bytes for a single value") {
        const auto dir = fixtures::scratch("actdump_size");
        auto set = ActivationSet::make("m", 1, 1, {"only"}, {{TruthSide::True, ContextKind::None}});
        set.tensor[0] = 0.5f;
        write_dump(set, dir / "one.tvd");
        const auto bytes = slurp(dir / "one.tvd");
        const std::string header = dump_header_json(set);
        CHECK(bytes.size() == 16 + header.size() + 4);
        CHECK(std::memcmp(bytes.data(), "TVD1", 4) == 0);
        // version 1, little-endian
        CHECK(bytes[4] == 1);
        CHECK(bytes[5] == 0);
        std::uint64_t len = 0;
        for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + i]);
        CHECK(len == header.size());
        // 0.5f == 0x3F000000
        const unsigned char tail[4] = {0x00, 0x00, 0x00, 0x3F};
        CHECK(std::memcmp(bytes.data() + bytes.size() - 4, tail, 4) == 0);
        CHECK(read_dump(dir / "one.tvd").tensor[0] == 0.5f);
    }

    TEST_CASE("corruptions map to designated errors") {
        const auto dir = fixtures::scratch("actdump_corrupt");
        const auto set = fixtures::random_set(3, 2, 4, 11);
        write_dump(set, dir / "good.tvd");
        const auto good = slurp(dir / "good.tvd");

        auto bad = good;
        std::memcpy(bad.data(), "XXXX", 4);
        spit(dir / "magic.tvd", bad);
        CHECK(read_error(dir / "magic.tvd") == DumpError::Code::BadMagic);

        bad = good;
        bad[4] = 2;
        spit(dir / "version.tvd", bad);
        CHECK(read_error(dir / "version.tvd") == DumpError::Code::VersionMismatch);

        bad.assign(good.begin(), good.end() - 5);
        spit(dir / "trunc.tvd", bad);
        try {
            read_dump(dir / "trunc.tvd");
            FAIL("expected error");
        } catch (const DumpError& e) {
            CHECK(e.code() == DumpError::Code::SizeMismatch);
            const std::string msg = e.what();
            const std::size_t expected = set.tensor.size() * 4;
            CHECK(msg.find("expected " + std::to_string(expected)) != std::string::npos);
            CHECK(msg.find("got " + std::to_string(expected - 5)) != std::string::npos);
        }

        bad = good;
        bad.push_back(0);
        spit(dir / "long.tvd", bad);
        CHECK(read_error(dir / "long.tvd") == DumpError::Code::SizeMismatch);

        bad.assign(good.begin(), good.begin() + 10);
        spit(dir / "short.tvd", bad);
        CHECK(read_error(dir / "short.tvd") == DumpError::Code::SizeMismatch);

        bad = good;
        bad[8] = static_cast<char>(0xFF);
        bad[9] = static_cast<char>(0xFF);
        spit(dir / "hdrlen.tvd", bad);
        CHECK(read_error(dir / "hdrlen.tvd") == DumpError::Code::SizeMismatch);

        bad = good;
        bad[16] = '[';
        spit(dir / "json.tvd", bad);
        CHECK(read_error(dir / "json.tvd") == DumpError::Code::BadHeader);

        CHECK(read_error(dir / "missing.tvd") == DumpError::Code::Io);
    }

    TEST_CASE("non-finite payload values are reported with their index") {
        const auto dir = fixtures::scratch("actdump_nan");
        auto set = fixtures::random_set(1, 1, 4, 3, {{TruthSide::True, ContextKind::None}});
        write_dump(set, dir / "a.tvd");
        auto bytes = slurp(dir / "a.tvd");
        const std::uint32_t nan_bits = 0x7FC00000u;
        std::memcpy(bytes.data() + bytes.size() - 8, &nan_bits, 4);  // flat index 2
        spit(dir / "a.tvd", bytes);
        try {
            read_dump(dir / "a.tvd");
            FAIL("expected error");
        } catch (const DumpError& e) {
            CHECK(e.code() == DumpError::Code::NonFinite);
            CHECK(std::string(e.what()).find("index 2") != std::string::npos);
        }
    }

    TEST_CASE("unembedding round trip and role check") {
        const auto dir = fixtures::scratch("actdump_unembed");
        UnembeddingBundle b;
        b.model_name = "toy";
        b.vocab_size = 3;
        b.hidden_dim = 2;
        b.matrix = {1, 2, 3, 4, 5, 6};
        b.true_token_id = 0;
        b.false_token_id = 2;
        write_unembedding(b, dir / "u.tvd");
        CHECK(read_unembedding(dir / "u.tvd") == b);
        CHECK_THROWS_AS(read_dump(dir / "u.tvd"), DumpError);
        b.false_token_id = 3;
        CHECK_THROWS_AS(write_unembedding(b, dir / "bad.tvd"), DumpError);
    }

    TEST_CASE("filter keeps statements passing every base condition") {
        auto set = fixtures::random_set(5, 2, 3, 5);
        SUBCASE("all pass") { CHECK(filter_instruction_following(set) == set); }
        SUBCASE("one failure removes the statement") {
            set.instruction_ok[2 * 5 + 1] = 0;  // (True, Relevant), statement 1
            const auto out = filter_instruction_following(set);
            CHECK(out.n_statements() == 4);
            CHECK(out.statement_ids == std::vector<std::string>{"s0", "s2", "s3", "s4"});
        }
        SUBCASE("3 of 5 pass keeps order and data") {
            set.instruction_ok[0 * 5 + 0] = 0;
            set.instruction_ok[3 * 5 + 3] = 0;
            const auto out = filter_instruction_following(set);
            REQUIRE(out.statement_ids == std::vector<std::string>{"s1", "s2", "s4"});
            for (std::size_t c = 0; c < 4; ++c) {
                const auto a = out.at(c, 2, 1);
                const auto b = set.at(c, 4, 1);
                CHECK(std::equal(a.begin(), a.end(), b.begin()));
            }
        }
        SUBCASE("random-kind failures do not filter") {
            auto conds = fixtures::base_conditions();
            conds.push_back({TruthSide::True, ContextKind::RandChar});
            auto s2 = fixtures::random_set(3, 1, 2, 1, conds);
            s2.instruction_ok[4 * 3 + 0] = 0;
            CHECK(filter_instruction_following(s2).n_statements() == 3);
        }
    }

    TEST_CASE("condition lookup") {
        const auto set = fixtures::random_set(2, 1, 2, 1);
        CHECK(set.require_condition({TruthSide::False, ContextKind::Relevant}) == 3);
        CHECK_FALSE(set.find_condition({TruthSide::True, ContextKind::RandWiki}).has_value());
        CHECK_THROWS_AS(set.require_condition({TruthSide::True, ContextKind::RandWiki}), std::invalid_argument);
        CHECK(set.has_context(ContextKind::Relevant));
        CHECK_FALSE(set.has_context(ContextKind::RandChar));
        CHECK(context_kind_from_string(to_string(ContextKind::RandShuffle)) == ContextKind::RandShuffle);
    }
}
