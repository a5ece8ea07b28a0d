#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/geometry.hpp"

namespace ctxtruth {

enum class Alternative { Greater, Less, TwoSided };
enum class WilcoxonMethod { Exact, NormalApprox };

std::string_view to_string(Alternative a);
Alternative alternative_from_string(std::string_view s);
std::string_view to_string(WilcoxonMethod m);

inline constexpr std::size_t kExactWilcoxonMaxN = 25;
inline constexpr std::size_t kMinWilcoxonN = 5;

class WilcoxonError : public std::invalid_argument {
public:
    enum class Reason { LengthMismatch, TooFew, AllZero };
    WilcoxonError(Reason reason, const std::string& what) : std::invalid_argument(what), reason_(reason) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

struct WilcoxonResult {
    std::size_t n_effective = 0;  // after dropping zero differences
    double w_plus = 0.0;
    double p_value = 1.0;
    WilcoxonMethod method = WilcoxonMethod::Exact;
    Alternative alternative = Alternative::Greater;
};

// Signed-rank test on d_i = x_i - y_i. Zero differences are dropped, tied
// |d_i| get midranks. Exact null distribution for n <= 25, otherwise the
// normal approximation with tie-corrected variance and continuity
// correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    Alternative alternative = Alternative::Greater);

// Midranks (1-based) of values.
std::vector<double> midranks(std::span<const double> values);

double bonferroni(double alpha, std::size_t n_tests);

enum class Significance { Raw, Bonferroni };
enum class ComparisonLabel { Both, Theta, Mag, None };
std::string_view to_string(ComparisonLabel label);

struct ComparisonResult {
    double mean_difference = 0.0;
    WilcoxonResult wilcoxon;
    bool significant_raw = false;
    bool significant_bonferroni = false;
    std::size_t n_pairs = 0;
};

ComparisonResult compare_paired(std::span<const double> a, std::span<const double> b, double alpha,
                                std::size_t n_tests, Alternative alternative = Alternative::Greater);

struct CompareOptions {
    std::size_t layer = 0;  // 0-based
    double alpha = 0.05;
    std::size_t n_tests = 1;
    Alternative alternative = Alternative::Greater;
    MagnitudeMode magnitude = MagnitudeMode::SquaredNorm;
};

// Per-statement quantity under context kind `a` minus under `b`, paired by
// statement id across the two sets. Statements degenerate under either
// condition are left out of the pairing.
ComparisonResult compare_conditions(const ActivationSet& set_a, ContextKind a, const ActivationSet& set_b,
                                    ContextKind b, Quantity quantity, const CompareOptions& options);

ComparisonResult compare_conditions(const ActivationSet& set, Quantity quantity, ContextKind a, ContextKind b,
                                    const CompareOptions& options);

ComparisonLabel classify(bool theta_significant, bool magnitude_significant);
ComparisonLabel classify(const ComparisonResult& theta_cmp, const ComparisonResult& mag_cmp,
                         Significance policy = Significance::Raw);

double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace ctxtruth
