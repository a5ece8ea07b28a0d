#include "ctxtruth/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace ctxtruth {

std::string_view to_string(Alternative a) {
    switch (a) {
        case Alternative::Greater: return "greater";
        case Alternative::Less: return "less";
        case Alternative::TwoSided: return "two-sided";
    }
    return "?";
}

Alternative alternative_from_string(std::string_view s) {
    if (s == "greater") return Alternative::Greater;
    if (s == "less") return Alternative::Less;
    if (s == "two-sided") return Alternative::TwoSided;
    throw std::invalid_argument("unknown alternative: " + std::string(s));
}

std::string_view to_string(WilcoxonMethod m) { return m == WilcoxonMethod::Exact ? "exact" : "normal-approx"; }

std::string_view to_string(ComparisonLabel label) {
    switch (label) {
        case ComparisonLabel::Both: return "Both";
        case ComparisonLabel::Theta: return "Theta";
        case ComparisonLabel::Mag: return "Mag";
        case ComparisonLabel::None: return "None";
    }
    return "?";
}

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Number of sign assignments reaching each doubled rank sum. Midranks are
// multiples of 1/2, so doubled ranks are integers and the counts are exact.
std::vector<double> signed_rank_counts(std::span<const double> ranks) {
    std::size_t total = 0;
    std::vector<std::size_t> doubled(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        doubled[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
        total += doubled[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
        reach += r;
        for (std::size_t s = reach + 1; s-- > r;) counts[s] += counts[s - r];
    }
    return counts;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, Alternative alternative) {
    if (x.size() != y.size()) throw WilcoxonError(WilcoxonError::Reason::LengthMismatch, "wilcoxon: samples differ in length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty() && !x.empty()) throw WilcoxonError(WilcoxonError::Reason::AllZero, "wilcoxon: all differences are zero");
    if (diffs.size() < kMinWilcoxonN) {
        throw WilcoxonError(WilcoxonError::Reason::TooFew,
                            "wilcoxon: need at least 5 nonzero differences, got " + std::to_string(diffs.size()));
    }

    std::vector<double> abs_d(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) abs_d[i] = std::abs(diffs[i]);
    const auto ranks = midranks(abs_d);

    WilcoxonResult r;
    r.n_effective = diffs.size();
    r.alternative = alternative;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0) r.w_plus += ranks[i];

    const double n = static_cast<double>(r.n_effective);
    if (r.n_effective <= kExactWilcoxonMaxN) {
        r.method = WilcoxonMethod::Exact;
        const auto counts = signed_rank_counts(ranks);
        const auto observed = static_cast<std::size_t>(std::lround(2.0 * r.w_plus));
        double upper = 0.0, lower = 0.0;
        for (std::size_t s = 0; s < counts.size(); ++s) {
            if (s >= observed) upper += counts[s];
            if (s <= observed) lower += counts[s];
        }
        const double total = std::ldexp(1.0, static_cast<int>(r.n_effective));
        const double p_upper = upper / total;
        const double p_lower = lower / total;
        switch (alternative) {
            case Alternative::Greater: r.p_value = p_upper; break;
            case Alternative::Less: r.p_value = p_lower; break;
            case Alternative::TwoSided: r.p_value = std::min(1.0, 2.0 * std::min(p_upper, p_lower)); break;
        }
        return r;
    }

    r.method = WilcoxonMethod::NormalApprox;
    std::unordered_map<double, std::size_t> ties;
    for (double rank : ranks) ++ties[rank];
    double tie_term = 0.0;
    for (const auto& [rank, t] : ties) {
        const double tt = static_cast<double>(t);
        tie_term += tt * tt * tt - tt;
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double sd = std::sqrt(n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0);
    switch (alternative) {
        case Alternative::Greater: r.p_value = upper_normal_tail((r.w_plus - mean - 0.5) / sd); break;
        case Alternative::Less: r.p_value = 1.0 - upper_normal_tail((r.w_plus - mean + 0.5) / sd); break;
        case Alternative::TwoSided: {
            const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / sd;
            r.p_value = std::min(1.0, 2.0 * upper_normal_tail(z));
            break;
        }
    }
    r.p_value = std::clamp(r.p_value, 0.0, 1.0);
    return r;
}

double bonferroni(double alpha, std::size_t n_tests) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bonferroni: alpha must lie in (0, 1)");
    if (n_tests == 0) throw std::invalid_argument("bonferroni: n_tests must be positive");
    return alpha / static_cast<double>(n_tests);
}

ComparisonResult compare_paired(std::span<const double> a, std::span<const double> b, double alpha,
                                std::size_t n_tests, Alternative alternative) {
    if (a.size() != b.size()) throw std::invalid_argument("compare: unpaired samples");
    if (a.size() < kMinWilcoxonN) {
        throw std::invalid_argument("compare: need at least 5 pairs, got " + std::to_string(a.size()));
    }
    const double threshold = bonferroni(alpha, n_tests);
    ComparisonResult res;
    res.n_pairs = a.size();
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    res.mean_difference = pairwise_sum(d) / static_cast<double>(d.size());
    try {
        res.wilcoxon = wilcoxon_signed_rank(a, b, alternative);
    } catch (const WilcoxonError& e) {
        // Too few nonzero differences to test anything: report as untested.
        if (e.reason() == WilcoxonError::Reason::LengthMismatch) throw;
        res.wilcoxon = WilcoxonResult{};
        res.wilcoxon.alternative = alternative;
        res.wilcoxon.p_value = 1.0;
        for (double x : d) res.wilcoxon.n_effective += x != 0.0;
    }
    res.significant_raw = res.wilcoxon.p_value < alpha;
    res.significant_bonferroni = res.wilcoxon.p_value < threshold;
    return res;
}

ComparisonResult compare_conditions(const ActivationSet& set_a, ContextKind a, const ActivationSet& set_b,
                                    ContextKind b, Quantity quantity, const CompareOptions& options) {
    if (options.layer >= set_a.n_layers || options.layer >= set_b.n_layers) {
        throw std::invalid_argument("compare: layer out of range");
    }
    std::unordered_map<std::string, std::size_t> index_b;
    for (std::size_t k = 0; k < set_b.n_statements(); ++k) index_b.emplace(set_b.statement_ids[k], k);
    if (set_a.n_statements() != set_b.n_statements()) throw std::invalid_argument("compare: unpaired statements");

    const TruthVectors tv_a(set_a, a);
    const TruthVectors tv_b(set_b, b);
    const auto values_a = statement_values(tv_a, quantity, options.layer, options.magnitude);
    const auto values_b = statement_values(tv_b, quantity, options.layer, options.magnitude);

    std::vector<double> xa, xb;
    for (std::size_t k = 0; k < set_a.n_statements(); ++k) {
        auto it = index_b.find(set_a.statement_ids[k]);
        if (it == index_b.end()) throw std::invalid_argument("compare: unpaired statement " + set_a.statement_ids[k]);
        const auto& va = values_a[k];
        const auto& vb = values_b[it->second];
        if (va && vb) {
            xa.push_back(*va);
            xb.push_back(*vb);
        }
    }
    return compare_paired(xa, xb, options.alpha, options.n_tests, options.alternative);
}

ComparisonResult compare_conditions(const ActivationSet& set, Quantity quantity, ContextKind a, ContextKind b,
                                    const CompareOptions& options) {
    return compare_conditions(set, a, set, b, quantity, options);
}

ComparisonLabel classify(bool theta_significant, bool magnitude_significant) {
    if (theta_significant && magnitude_significant) return ComparisonLabel::Both;
    if (theta_significant) return ComparisonLabel::Theta;
    if (magnitude_significant) return ComparisonLabel::Mag;
    return ComparisonLabel::None;
}

ComparisonLabel classify(const ComparisonResult& theta_cmp, const ComparisonResult& mag_cmp, Significance policy) {
    if (policy == Significance::Bonferroni) return classify(theta_cmp.significant_bonferroni, mag_cmp.significant_bonferroni);
    return classify(theta_cmp.significant_raw, mag_cmp.significant_raw);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: series differ in length");
    if (x.size() < 3) throw std::invalid_argument("pearson: need at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = pairwise_sum(x) / n;
    const double my = pairwise_sum(y) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace ctxtruth
