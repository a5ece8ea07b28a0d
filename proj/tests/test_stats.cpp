#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ctxtruth/random.hpp"
#include "ctxtruth/stats.hpp"
#include "fixtures.hpp"

using namespace ctxtruth;

namespace {

// Brute-force signed-rank p-value: enumerate every sign assignment of the
// nonzero |d| ranks.
double enumerate_p(std::vector<double> d, Alternative alt) {
    d.erase(std::remove(d.begin(), d.end(), 0.0), d.end());
    const std::size_t n = d.size();
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(d[i]);
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (a[j] < a[i]) less += 1;
            if (a[j] == a[i]) equal += 1;
        }
        rank[i] = less + (equal + 1) / 2;
    }
    double obs = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) obs += rank[i];
    std::uint64_t ge = 0, le = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank[i];
        if (w >= obs) ++ge;
        if (w <= obs) ++le;
    }
    const double pg = static_cast<double>(ge) / static_cast<double>(total);
    const double pl = static_cast<double>(le) / static_cast<double>(total);
    switch (alt) {
        case Alternative::Greater: return pg;
        case Alternative::Less: return pl;
        case Alternative::TwoSided: return std::min(1.0, 2 * std::min(pg, pl));
    }
    return -1;
}

}  // namespace

TEST_SUITE("stats") {
    TEST_CASE("all-positive n=6 gives 1/64") {
        const double x[] = {1, 2, 3, 4, 5, 6}, y[] = {0, 0, 0, 0, 0, 0};
        const auto r = wilcoxon_signed_rank(x, y, Alternative::Greater);
        CHECK(r.p_value == 0.015625);
        CHECK(r.w_plus == 21.0);
        CHECK(r.n_effective == 6);
        CHECK(r.method == WilcoxonMethod::Exact);
        CHECK(wilcoxon_signed_rank(x, y, Alternative::TwoSided).p_value == 0.03125);
        CHECK(wilcoxon_signed_rank(x, y, Alternative::Less).p_value == 1.0);
    }

    TEST_CASE("error cases") {
        const double x[] = {1, 2, 3, 4, 5, 6};
        CHECK_THROWS_AS(wilcoxon_signed_rank(x, x), WilcoxonError);
        try {
            wilcoxon_signed_rank(x, x);
        } catch (const WilcoxonError& e) {
            CHECK(e.reason() == WilcoxonError::Reason::AllZero);
        }
        const double y[] = {1, 2};
        try {
            wilcoxon_signed_rank(x, y);
            FAIL("expected error");
        } catch (const WilcoxonError& e) {
            CHECK(e.reason() == WilcoxonError::Reason::LengthMismatch);
        }
    }

    TEST_CASE("exact p matches enumeration, with ties and zeros") {
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 6 + rng.below(7);
            std::vector<double> x(n), y(n, 0.0);
            for (auto& v : x) v = static_cast<double>(static_cast<int>(rng.below(9)) - 3);  // ties and zeros
            if (static_cast<std::size_t>(std::count(x.begin(), x.end(), 0.0)) + kMinWilcoxonN > n) {
                CHECK_THROWS_AS(wilcoxon_signed_rank(x, y), WilcoxonError);
                continue;
            }
            for (Alternative alt : {Alternative::Greater, Alternative::Less, Alternative::TwoSided}) {
                const auto r = wilcoxon_signed_rank(x, y, alt);
                CHECK(std::abs(r.p_value - enumerate_p(x, alt)) < 1e-12);
            }
        }
    }

    TEST_CASE("normal approximation matches a reference implementation") {
        // 30 differences, 2 zeros, many ties; reference from scipy.stats.wilcoxon
        // (method="approx", correction=True, zero_method="wilcox").
        const std::vector<double> d = {0.5, -1.0, 2.0, 2.0, 3.5, -0.5, 1.0, 4.0, 2.0, -3.0, 0.0, 1.5, 2.5, -2.0, 3.0,
                                       1.0, 0.5, 5.0, -1.5, 2.0, 3.0, 0.0, 4.5, 1.0, -0.5, 2.5, 3.5, 1.0, 6.0, -2.5};
        const std::vector<double> zero(d.size(), 0.0);
        auto g = wilcoxon_signed_rank(d, zero, Alternative::Greater);
        CHECK(g.method == WilcoxonMethod::NormalApprox);
        CHECK(g.n_effective == 28);
        CHECK(g.w_plus == 330.5);
        CHECK(g.p_value == doctest::Approx(0.0018800849863922333).epsilon(1e-10));
        CHECK(wilcoxon_signed_rank(d, zero, Alternative::Less).p_value ==
              doctest::Approx(0.9982522370476481).epsilon(1e-10));
        CHECK(wilcoxon_signed_rank(d, zero, Alternative::TwoSided).p_value ==
              doctest::Approx(0.0037601699727844665).epsilon(1e-10));
    }

    TEST_CASE("midranks") {
        const double v[] = {10, 20, 20, 5};
        CHECK(midranks(v) == std::vector<double>{2, 3.5, 3.5, 1});
    }

    TEST_CASE("bonferroni thresholds") {
        CHECK(bonferroni(0.05, 160) == 0.0003125);
        CHECK(bonferroni(0.05, 320) == 0.00015625);
        CHECK(bonferroni(0.01, 1) == 0.01);
        CHECK_THROWS_AS(bonferroni(0.05, 0), std::invalid_argument);
        CHECK_THROWS_AS(bonferroni(1.5, 3), std::invalid_argument);
    }

    TEST_CASE("paired comparisons") {
        SUBCASE("identical samples are not significant") {
            const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7};
            const auto r = compare_paired(a, a, 0.05, 1);
            CHECK(r.mean_difference == 0.0);
            CHECK_FALSE(r.significant_raw);
            CHECK_FALSE(r.significant_bonferroni);
        }
        SUBCASE("uniform +5 shift over 50 statements") {
            std::vector<double> a(50), b(50);
            Rng rng(2);
            for (std::size_t i = 0; i < 50; ++i) {
                b[i] = 40 + 20 * rng.uniform();
                a[i] = b[i] + 5;
            }
            const auto r = compare_paired(a, b, 0.05, 160);
            CHECK(r.mean_difference == doctest::Approx(5.0));
            CHECK(r.wilcoxon.p_value < 0.001);
            CHECK(r.significant_raw);
            CHECK(r.significant_bonferroni);
        }
        SUBCASE("symmetric differences are not significant") {
            std::vector<double> a, b;
            for (int i = 0; i < 20; ++i) {
                b.push_back(i);
                a.push_back(i + (i % 2 == 0 ? 5.0 : -5.0));
            }
            const auto r = compare_paired(a, b, 0.05, 1);
            CHECK(r.mean_difference == 0.0);
            CHECK_FALSE(r.significant_raw);
        }
        SUBCASE("bonferroni implies raw") {
            Rng rng(5);
            for (int t = 0; t < 100; ++t) {
                std::vector<double> a(12), b(12);
                for (std::size_t i = 0; i < 12; ++i) {
                    a[i] = rng.normal() + 0.8;
                    b[i] = rng.normal();
                }
                const auto r = compare_paired(a, b, 0.05, 3);
                CHECK((!r.significant_bonferroni || r.significant_raw));
            }
        }
        SUBCASE("too few pairs") {
            const std::vector<double> a = {1, 2, 3, 4};
            CHECK_THROWS_AS(compare_paired(a, a, 0.05, 1), std::invalid_argument);
        }
    }

    TEST_CASE("condition comparison pairs by statement id") {
        // Set b holds the same statements in reverse order; theta differences
        // must pair by id, not by position.
        const std::size_t K = 8;
        auto a = fixtures::random_set(K, 2, 5, 31);
        auto b = ActivationSet::make("toy", 2, 5, {}, fixtures::base_conditions());
        b.statement_ids.assign(a.statement_ids.rbegin(), a.statement_ids.rend());
        b.tensor.resize(a.tensor.size());
        b.instruction_ok.assign(a.instruction_ok.size(), 1);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < 2; ++l) {
                    const auto src = a.at(c, K - 1 - k, l);
                    std::copy(src.begin(), src.end(), b.at(c, k, l).begin());
                }
        CompareOptions opt;
        opt.layer = 1;
        const auto r = compare_conditions(a, ContextKind::Relevant, b, ContextKind::Relevant, Quantity::ThetaDegrees, opt);
        CHECK(r.mean_difference == 0.0);
        CHECK(r.n_pairs == K);
        CHECK_FALSE(r.significant_raw);
    }

    TEST_CASE("classification truth table") {
        CHECK(classify(true, true) == ComparisonLabel::Both);
        CHECK(classify(true, false) == ComparisonLabel::Theta);
        CHECK(classify(false, true) == ComparisonLabel::Mag);
        CHECK(classify(false, false) == ComparisonLabel::None);
        ComparisonResult t, m;
        t.significant_raw = true;
        t.significant_bonferroni = false;
        m.significant_raw = true;
        m.significant_bonferroni = true;
        CHECK(classify(t, m, Significance::Raw) == ComparisonLabel::Both);
        CHECK(classify(t, m, Significance::Bonferroni) == ComparisonLabel::Mag);
        CHECK(to_string(ComparisonLabel::Mag) == "Mag");
    }

    TEST_CASE("pearson") {
        const std::vector<double> x = {1, 2, 3, 4, 5};
        std::vector<double> y, z;
        for (double v : x) {
            y.push_back(2 * v + 1);
            z.push_back(-v);
        }
        CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-14));
        const std::vector<double> p = {1, 2, 3, 4}, q = {1, 3, 2, 4};
        CHECK(pearson(p, q) == doctest::Approx(0.8).epsilon(1e-14));
        const std::vector<double> two = {1, 2};
        CHECK_THROWS_AS(pearson(two, two), std::invalid_argument);
        const std::vector<double> flat = {3, 3, 3};
        CHECK_THROWS_AS(pearson(flat, std::vector<double>{1, 2, 3}), std::invalid_argument);
    }
}
