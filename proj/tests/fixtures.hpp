#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/random.hpp"

namespace fixtures {

// Fresh directory under the test working directory.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::vector<ctxtruth::ConditionLabel> base_conditions() {
    using namespace ctxtruth;
    return {{TruthSide::True, ContextKind::None},
            {TruthSide::False, ContextKind::None},
            {TruthSide::True, ContextKind::Relevant},
            {TruthSide::False, ContextKind::Relevant}};
}

inline std::vector<std::string> ids(std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back("s" + std::to_string(i));
    return out;
}

inline ctxtruth::ActivationSet random_set(std::size_t k, std::size_t l, std::size_t d, std::uint64_t seed,
                                          std::vector<ctxtruth::ConditionLabel> conds = base_conditions()) {
    auto set = ctxtruth::ActivationSet::make("toy", l, d, ids(k), std::move(conds));
    ctxtruth::Rng rng(seed);
    for (auto& x : set.tensor) x = static_cast<float>(rng.normal());
    return set;
}

inline void fill(ctxtruth::ActivationSet& set, std::size_t c, std::size_t k, std::size_t l,
                 std::initializer_list<float> values) {
    auto out = set.at(c, k, l);
    std::size_t i = 0;
    for (float v : values) out[i++] = v;
}

}  // namespace fixtures
