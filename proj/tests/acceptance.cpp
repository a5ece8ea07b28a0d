// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and runtime bounds are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/contextgen.hpp"
#include "ctxtruth/geometry.hpp"
#include "ctxtruth/probes.hpp"
#include "ctxtruth/random.hpp"
#include "ctxtruth/report.hpp"
#include "ctxtruth/stats.hpp"
#include "ctxtruth/synthetic.hpp"

using namespace ctxtruth;
namespace fs = std::filesystem;

namespace {

constexpr double kThetaTolDeg = 1e-5;
constexpr double kThetaBudgetS = 10.0;
constexpr double kRmRelTol = 1e-6;
constexpr double kRmBudgetS = 1.0;
constexpr double kPlantedTolDeg = 3.0;
constexpr std::size_t kPhaseTolLayers = 1;
constexpr double kPlantedBudgetS = 30.0;
constexpr double kWilcoxonTol = 1e-12;
constexpr double kWilcoxonBudgetS = 60.0;
constexpr double kProbeMinAcc = 0.99;
constexpr double kControlLo = 0.40, kControlHi = 0.60;
constexpr double kProbeBudgetS = 120.0;
constexpr double kFleschTol = 0.01;
constexpr double kGeneratorBudgetS = 30.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::current_path() / "acceptance_scratch" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Angle via 2*atan2(|u - v|, |u + v|) on unit vectors in long double; stable
// at both ends of the range.
long double reference_theta(const std::vector<double>& a, const std::vector<double>& b) {
    long double na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    long double dm = 0, dp = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double u = a[i] / na, v = b[i] / nb;
        dm += (u - v) * (u - v);
        dp += (u + v) * (u + v);
    }
    return 2 * std::atan2(std::sqrt(dm), std::sqrt(dp)) * 180.0L / 3.14159265358979323846264338327950288L;
}

Outcome theta_oracle() {
    Rng rng(101);
    double worst = 0;
    for (std::size_t d : {2, 64, 4096}) {
        std::vector<double> a(d), b(d);
        for (int i = 0; i < 10000; ++i) {
            for (auto& x : a) x = rng.normal();
            for (auto& x : b) x = rng.normal();
            const long double ref = reference_theta(a, b);
            worst = std::max(worst, static_cast<double>(std::fabs(theta_degrees(a, b) - ref)));
        }
    }
    std::size_t nan = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t d = i % 3 == 0 ? 2 : (i % 3 == 1 ? 64 : 4096);
        std::vector<double> a(d), b(d);
        for (auto& x : a) x = rng.normal();
        const double scale = std::ldexp(1.0, static_cast<int>(rng.below(40)) - 20);
        const double eps = std::pow(10.0, -6.0 - 12.0 * rng.uniform());
        const double sign = i % 2 == 0 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j) b[j] = sign * scale * a[j] + (i % 5 == 0 ? 0.0 : eps * rng.normal());
        const double t = theta_degrees(a, b);
        if (!(t >= 0.0 && t <= 180.0)) ++nan;
    }
    return {worst <= kThetaTolDeg && nan == 0,
            "max |err| " + fmt("%.3g", worst) + " deg over 30000 pairs, " + std::to_string(nan) + " NaN/out-of-range in 1000 near-collinear"};
}

Outcome rm_analytic() {
    Rng rng(202);
    double worst = 0;
    for (double s : {0.5, 1.0, 1.3, 2.0}) {
        // direct, on double vectors
        for (int i = 0; i < 100; ++i) {
            std::vector<double> v(64), vc(64);
            for (auto& x : v) x = rng.normal();
            for (std::size_t j = 0; j < 64; ++j) vc[j] = s * v[j];
            worst = std::max(worst, std::fabs(rel_magnitude(vc, v) - s * s) / (s * s));
        }
        // through a dataset: tc - fc = s * (tnc - fnc), stored as float32
        auto set = ActivationSet::make("rm", 1, 16, {"a", "b", "c"},
                                       {{TruthSide::True, ContextKind::None},
                                        {TruthSide::False, ContextKind::None},
                                        {TruthSide::True, ContextKind::Relevant},
                                        {TruthSide::False, ContextKind::Relevant}});
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t j = 0; j < 16; ++j) {
                // small integers keep s * v exact in float32
                const float v = static_cast<float>(static_cast<int>(rng.below(17)) - 8);
                set.at(0, k, 0)[j] = v;
                set.at(1, k, 0)[j] = 0.0f;
                set.at(2, k, 0)[j] = static_cast<float>(s) * v;
                set.at(3, k, 0)[j] = 0.0f;
            }
            set.at(0, k, 0)[0] = 1.0f;  // never all-zero
            set.at(2, k, 0)[0] = static_cast<float>(s);
        }
        const auto curve = layer_curve(set, Quantity::RmTcFc);
        worst = std::max(worst, std::fabs(*curve.points[0].mean - s * s) / (s * s));
    }
    return {worst <= kRmRelTol, "max relative error " + fmt("%.3g", worst)};
}

Outcome planted_recovery() {
    SyntheticSpec s;
    s.n_statements = 64;
    s.n_layers = 30;
    s.hidden_dim = 64;
    s.theta_deg = three_phase_curve(30, 90.0, 25.0, 8, 16);
    s.noise_rel = 0.05;
    const auto set = gen_synthetic(s, 303);
    const auto curve = layer_curve(set, Quantity::ThetaDegrees);
    double worst = 0;
    for (std::size_t l = 0; l < 30; ++l) worst = std::max(worst, std::fabs(*curve.points[l].mean - s.theta_deg[l]));
    const auto seg = phase_segment(curve);
    // planted: phase 2 starts at layer 9 (first layer below the plateau), phase 3 at 16
    auto near = [](std::size_t got, std::size_t want) {
        return got + kPhaseTolLayers >= want && got <= want + kPhaseTolLayers;
    };
    const bool phases_ok = seg.found && near(seg.p2_start, 9) && near(seg.p3_start, 16);
    return {worst <= kPlantedTolDeg && phases_ok,
            "max |err| " + fmt("%.3f", worst) + " deg, phases p2=" + std::to_string(seg.p2_start) +
                " p3=" + std::to_string(seg.p3_start) + " (planted 9, 16)"};
}

double enumerate_p(const std::vector<double>& diff, Alternative alt) {
    std::vector<double> d;
    for (double x : diff)
        if (x != 0.0) d.push_back(x);
    const std::size_t n = d.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            less += std::fabs(d[j]) < std::fabs(d[i]);
            equal += std::fabs(d[j]) == std::fabs(d[i]);
        }
        rank[i] = less + (equal + 1) / 2;
    }
    double obs = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) obs += rank[i];
    std::uint64_t ge = 0, le = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank[i];
        ge += w >= obs;
        le += w <= obs;
    }
    const double total = std::ldexp(1.0, static_cast<int>(n));
    const double pg = static_cast<double>(ge) / total, pl = static_cast<double>(le) / total;
    if (alt == Alternative::Greater) return pg;
    if (alt == Alternative::Less) return pl;
    return std::min(1.0, 2 * std::min(pg, pl));
}

Outcome wilcoxon_exact() {
    Rng rng(404);
    double worst = 0;
    std::size_t tested = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 6 + rng.below(7);
        std::vector<double> x(n), y(n), diff(n);
        const bool coarse = trial % 2 == 1;  // half the samples carry ties and zeros
        // redraw until the test is defined (at least kMinWilcoxonN nonzero differences)
        do {
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = coarse ? static_cast<double>(rng.below(5)) : rng.normal();
                y[i] = coarse ? static_cast<double>(rng.below(5)) : rng.normal();
                diff[i] = x[i] - y[i];
            }
        } while (static_cast<std::size_t>(std::count(diff.begin(), diff.end(), 0.0)) + kMinWilcoxonN > n);
        for (Alternative alt : {Alternative::Greater, Alternative::Less, Alternative::TwoSided}) {
            const auto r = wilcoxon_signed_rank(x, y, alt);
            worst = std::max(worst, std::fabs(r.p_value - enumerate_p(diff, alt)));
        }
        ++tested;
    }
    const std::vector<double> pos = {1, 2, 3, 4, 5, 6}, zero(6, 0.0);
    const double p6 = wilcoxon_signed_rank(pos, zero, Alternative::Greater).p_value;
    return {worst <= kWilcoxonTol && p6 == 0.015625 && tested == 500,
            "max |p - oracle| " + fmt("%.3g", worst) + " over " + std::to_string(tested) + " samples x 3 alternatives, n=6 all-positive p=" +
                fmt("%.17g", p6)};
}

Outcome bonferroni_exact() {
    const double a = bonferroni(0.05, 160), b = bonferroni(0.05, 320);
    return {a == 0.0003125 && b == 0.00015625, "0.05/160=" + fmt("%.17g", a) + " 0.05/320=" + fmt("%.17g", b)};
}

Outcome probe_sanity() {
    const auto data = gaussian_clusters(500, 32, 5.0, 1.0, 505);
    const auto split = split_rows(data.y, 0.8, 7);
    const auto train_rows = data.subset(split.train), test_rows = data.subset(split.test);

    LabeledRows shuffled = data;
    Rng rng(606);
    rng.shuffle(shuffled.y.begin(), shuffled.y.end());
    const auto ssplit = split_rows(shuffled.y, 0.8, 7);
    const auto strain = shuffled.subset(ssplit.train), stest = shuffled.subset(ssplit.test);

    bool ok = true;
    std::string detail;
    for (ProbeFamily f : kProbeFamilies) {
        const double acc = train(f, train_rows).accuracy(test_rows);
        const double ctrl = train(f, strain).accuracy(stest);
        ok = ok && acc >= kProbeMinAcc && ctrl >= kControlLo && ctrl <= kControlHi;
        detail += std::string(to_string(f)) + " " + fmt("%.3f", acc) + "/ctrl " + fmt("%.3f", ctrl) + ", ";
    }

    // mass-mean weights against the class means computed here
    const auto model = train(ProbeFamily::MassMean, train_rows);
    std::vector<double> st(32, 0.0), sf(32, 0.0);
    double nt = 0, nf = 0;
    for (std::size_t i = 0; i < train_rows.rows(); ++i) {
        auto& acc = train_rows.y[i] ? st : sf;
        (train_rows.y[i] ? nt : nf) += 1;
        for (std::size_t j = 0; j < 32; ++j) acc[j] += train_rows.row(i)[j];
    }
    bool bitwise = model.weights.size() == 32;
    for (std::size_t j = 0; bitwise && j < 32; ++j) {
        const double expect = st[j] / nt - sf[j] / nf;
        bitwise = std::memcmp(&expect, &model.weights[j], sizeof(double)) == 0;
    }
    detail += std::string("mass-mean weights ") + (bitwise ? "bitwise equal" : "DIFFER");
    return {ok && bitwise, detail};
}

Outcome generators() {
    TaggedLexicon tagged;
    tagged.words[PosTag::Article] = {"the", "a", "every"};
    tagged.words[PosTag::Adjective] = {"green", "quiet", "colorless"};
    tagged.words[PosTag::Noun] = {"ideas", "stones", "rivers"};
    tagged.words[PosTag::Verb] = {"sleep", "sing", "drift"};
    tagged.words[PosTag::Adverb] = {"furiously", "softly", "often"};
    GeneratorInputs in;
    in.lexicon = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
    in.tagged = tagged;
    for (int i = 0; i < 500; ++i) in.corpus_words.push_back("c" + std::to_string(i));

    Rng rng(707);
    std::vector<ContextRecord> originals;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng.below(80);
        std::string text;
        for (std::size_t w = 0; w < n; ++w) text += (w ? " " : "") + std::string("tok") + std::to_string(i) + "_" + std::to_string(w);
        originals.push_back({"s" + std::to_string(i), text, "relevant", n});
    }
    std::size_t mismatches = 0;
    for (RandomKind k : {RandomKind::Char, RandomKind::Word, RandomKind::Salad, RandomKind::Wiki}) {
        const auto out = generate_contexts(k, originals, in, 11);
        for (std::size_t i = 0; i < originals.size(); ++i)
            mismatches += word_count(out[i].context) != originals[i].word_count;
    }
    const auto shuffled = generate_contexts(RandomKind::Shuffle, originals, in, 12);
    std::size_t fixed_points = 0;
    for (std::size_t i = 0; i < originals.size(); ++i) fixed_points += shuffled[i].context == originals[i].context;
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto p = random_derangement(4, s);
        for (std::size_t i = 0; i < 4; ++i) fixed_points += p[i] == i;
        seen.insert(p);
    }
    const double flesch = flesch_score("The cat sat.");
    return {mismatches == 0 && fixed_points == 0 && seen.size() == 9 && std::fabs(flesch - 119.19) <= kFleschTol,
            std::to_string(mismatches) + " word-count mismatches in 4000, " + std::to_string(fixed_points) +
                " fixed points, " + std::to_string(seen.size()) + "/9 S4 derangements, Flesch " + fmt("%.4f", flesch)};
}

Outcome format_checks() {
    const auto dir = scratch("format");
    Rng rng(808);
    std::size_t round_trip_ok = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t K = 1 + rng.below(6), L = 1 + rng.below(5), d = 1 + rng.below(9);
        std::vector<ConditionLabel> conds;
        for (std::size_t c = 0; c < 1 + rng.below(6); ++c)
            conds.push_back({c % 2 == 0 ? TruthSide::True : TruthSide::False, static_cast<ContextKind>(c / 2 % 7)});
        std::vector<std::string> ids;
        for (std::size_t k = 0; k < K; ++k) ids.push_back("id" + std::to_string(i) + "_" + std::to_string(k));
        auto set = ActivationSet::make("m" + std::to_string(i), L, d, ids, conds);
        for (auto& x : set.tensor) x = static_cast<float>(rng.normal() * std::ldexp(1.0, static_cast<int>(rng.below(40)) - 20));
        for (auto& b : set.instruction_ok) b = static_cast<std::uint8_t>(rng.below(2));
        write_dump(set, dir / "rt.tvd");
        const auto back = read_dump(dir / "rt.tvd");
        round_trip_ok += back == set &&
                         std::memcmp(back.tensor.data(), set.tensor.data(), set.tensor.size() * sizeof(float)) == 0;
    }

    auto good_set = gen_synthetic(demo_spec(6, 6, 4), 1);
    good_set.model_name = "m";
    write_dump(good_set, dir / "good.tvd");
    const auto good = slurp(dir / "good.tvd");
    const std::string header = dump_header_json(good_set);
    using C = DumpError::Code;
    struct Case {
        const char* name;
        std::function<void(std::vector<char>&)> mutate;
        C expected;
    };
    const std::vector<Case> cases = {
        {"magic", [](auto& b) { std::memcpy(b.data(), "XXXX", 4); }, C::BadMagic},
        {"version", [](auto& b) { b[4] = 9; }, C::VersionMismatch},
        {"truncate 1", [](auto& b) { b.pop_back(); }, C::SizeMismatch},
        {"truncate half payload", [&](auto& b) { b.resize(b.size() - good_set.tensor.size() * 2); }, C::SizeMismatch},
        {"trailing byte", [](auto& b) { b.push_back(0); }, C::SizeMismatch},
        {"short preamble", [](auto& b) { b.resize(10); }, C::SizeMismatch},
        {"header length", [](auto& b) { b[14] = 0x7F; }, C::SizeMismatch},
        {"header json", [](auto& b) { b[16] = '['; }, C::BadHeader},
        {"shape mismatch",
         [&](auto& b) {
             const auto pos = header.find("\"hidden_dim\":4");
             b[16 + pos + 13] = '5';
         },
         C::SizeMismatch},
        {"non-finite",
         [](auto& b) {
             const std::uint32_t inf = 0x7F800000u;
             std::memcpy(b.data() + b.size() - 4, &inf, 4);
         },
         C::NonFinite},
    };
    std::size_t corrupt_ok = 0;
    std::string failed;
    for (const auto& c : cases) {
        auto bytes = good;
        c.mutate(bytes);
        spit(dir / "bad.tvd", bytes);
        bool hit = false;
        try {
            read_dump(dir / "bad.tvd");
        } catch (const DumpError& e) {
            hit = e.code() == c.expected;
        }
        if (hit) {
            ++corrupt_ok;
        } else {
            failed += std::string(" ") + c.name;
        }
    }
    return {round_trip_ok == 100 && corrupt_ok == cases.size(),
            std::to_string(round_trip_ok) + "/100 round trips, " + std::to_string(corrupt_ok) + "/" +
                std::to_string(cases.size()) + " corruptions" + (failed.empty() ? "" : " (failed:" + failed + ")")};
}

Outcome end_to_end_determinism() {
    const auto dir = scratch("e2e");
    write_dump(gen_synthetic(demo_spec(), 909), dir / "demo.tvd");
    write_unembedding(gen_synthetic_unembedding(64, 32, 910), dir / "unembed.tvd");
    RunConfig cfg;
    cfg.dumps = {{"demo", dir / "demo.tvd"}};
    cfg.unembedding = dir / "unembed.tvd";
    cfg.layers = parse_layers("all");
    cfg.seed = 5;
    cfg.threads = 1;
    run_pipeline(cfg, dir / "run1");
    cfg.threads = 4;
    run_pipeline(cfg, dir / "run2");

    auto listing = [](const fs::path& root) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
        std::sort(files.begin(), files.end());
        return files;
    };
    const auto a = listing(dir / "run1"), b = listing(dir / "run2");
    std::size_t differing = a == b ? 0 : 1;
    if (a == b)
        for (const auto& f : a) differing += slurp(dir / "run1" / f) != slurp(dir / "run2" / f);
    return {differing == 0 && !a.empty(),
            std::to_string(a.size()) + " files, " + std::to_string(differing) + " differing (threads 1 vs 4)"};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
        double budget_s;  // 0 = no runtime bound
    };
    const Criterion criteria[] = {
        {"theta-oracle", theta_oracle, kThetaBudgetS},
        {"rm-analytic", rm_analytic, kRmBudgetS},
        {"planted-recovery", planted_recovery, kPlantedBudgetS},
        {"wilcoxon-exact", wilcoxon_exact, kWilcoxonBudgetS},
        {"bonferroni-exact", bonferroni_exact, 0},
        {"probe-sanity", probe_sanity, kProbeBudgetS},
        {"context-generators", generators, kGeneratorBudgetS},
        {"dump-format", format_checks, 0},
        {"end-to-end-determinism", end_to_end_determinism, 0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = c.budget_s == 0 || secs < c.budget_s;
        const bool pass = o.pass && in_budget;
        failures += !pass;
        std::string timing = fmt("%.2fs", secs);
        if (c.budget_s > 0) timing += fmt(" < %.0fs", c.budget_s) + (in_budget ? "" : " EXCEEDED");
        std::printf("%s %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), timing.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
