#include "ctxtruth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ctxtruth/parallel.hpp"

namespace ctxtruth {

namespace {

constexpr std::pair<Quantity, std::string_view> kQuantityNames[] = {
    {Quantity::ThetaDegrees, "theta"}, {Quantity::RmTcFc, "rm_tc_fc"},   {Quantity::RmTcFnc, "rm_tc_fnc"},
    {Quantity::RmTncFc, "rm_tnc_fc"},  {Quantity::LensP, "lens_p"},      {Quantity::ProbeAccuracy, "probe_accuracy"},
};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_same_size(std::size_t a, std::size_t b) {
    if (a != b) {
        throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

}  // namespace

std::string_view to_string(Quantity q) {
    for (const auto& [k, name] : kQuantityNames)
        if (k == q) return name;
    return "?";
}

Quantity quantity_from_string(std::string_view s) {
    for (const auto& [k, name] : kQuantityNames)
        if (name == s) return k;
    throw std::invalid_argument("unknown quantity: " + std::string(s));
}

double eps_zero(std::size_t dim) { return 1e-12 * std::sqrt(static_cast<double>(dim)); }

std::vector<double> truth_vector(std::span<const float> a_true, std::span<const float> a_false) {
    check_same_size(a_true.size(), a_false.size());
    std::vector<double> v(a_true.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(a_true[i]) - static_cast<double>(a_false[i]);
    return v;
}

std::vector<double> truth_vector(std::span<const double> a_true, std::span<const double> a_false) {
    check_same_size(a_true.size(), a_false.size());
    std::vector<double> v(a_true.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a_true[i] - a_false[i];
    return v;
}

double squared_norm(std::span<const double> v) { return dot(v, v); }

bool is_valid(std::span<const double> v) {
    if (v.empty()) return false;
    return std::sqrt(squared_norm(v)) >= eps_zero(v.size());
}

double theta_degrees(std::span<const double> v_c, std::span<const double> v_nc) {
    check_same_size(v_c.size(), v_nc.size());
    if (!is_valid(v_c) || !is_valid(v_nc)) throw InvalidVector("theta undefined for a zero-norm truth vector");
    const double cosine = std::clamp(dot(v_c, v_nc) / std::sqrt(squared_norm(v_c) * squared_norm(v_nc)), -1.0, 1.0);
    return std::acos(cosine) * (180.0 / std::numbers::pi);
}

double rel_magnitude(std::span<const double> v_num, std::span<const double> v_nc, MagnitudeMode mode) {
    check_same_size(v_num.size(), v_nc.size());
    if (!is_valid(v_nc)) throw InvalidVector("relative magnitude undefined for a zero-norm baseline");
    const double ratio = squared_norm(v_num) / squared_norm(v_nc);
    return mode == MagnitudeMode::SquaredNorm ? ratio : std::sqrt(ratio);
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double x : values) s += x;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MeanCount dataset_theta(std::span<const double> thetas) {
    if (thetas.empty()) throw std::invalid_argument("dataset_theta: no valid statements");
    return {pairwise_sum(thetas) / static_cast<double>(thetas.size()), thetas.size()};
}

TruthVectors::TruthVectors(const ActivationSet& set, ContextKind context)
    : set_(&set),
      context_(context),
      true_nc_(set.require_condition({TruthSide::True, ContextKind::None})),
      false_nc_(set.require_condition({TruthSide::False, ContextKind::None})),
      true_c_(set.require_condition({TruthSide::True, context})),
      false_c_(set.require_condition({TruthSide::False, context})) {}

std::vector<double> TruthVectors::get(VectorKind kind, std::size_t k, std::size_t l) const {
    switch (kind) {
        case VectorKind::NoContext:
            return truth_vector(set_->at(true_nc_, k, l), set_->at(false_nc_, k, l));
        case VectorKind::Context:
            return truth_vector(set_->at(true_c_, k, l), set_->at(false_c_, k, l));
        case VectorKind::TrueCtxFalseNoCtx:
            return truth_vector(set_->at(true_c_, k, l), set_->at(false_nc_, k, l));
        case VectorKind::TrueNoCtxFalseCtx:
            return truth_vector(set_->at(true_nc_, k, l), set_->at(false_c_, k, l));
    }
    throw std::logic_error("unreachable");
}

bool TruthVectors::valid(VectorKind kind, std::size_t k, std::size_t l) const { return is_valid(get(kind, k, l)); }

std::vector<double> LayerCurve::means() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (!p.mean) throw std::invalid_argument("curve undefined at layer " + std::to_string(p.layer));
        out.push_back(*p.mean);
    }
    return out;
}

CurvePoint aggregate(std::size_t layer, std::span<const std::optional<double>> values) {
    CurvePoint p;
    p.layer = layer;
    std::vector<double> defined;
    defined.reserve(values.size());
    for (const auto& v : values)
        if (v) defined.push_back(*v);
    p.n_valid = defined.size();
    p.n_excluded = values.size() - defined.size();
    if (defined.empty()) return p;
    const double n = static_cast<double>(defined.size());
    const double mean = pairwise_sum(defined) / n;
    p.mean = mean;
    if (defined.size() >= 2) {
        std::vector<double> sq(defined.size());
        for (std::size_t i = 0; i < defined.size(); ++i) sq[i] = (defined[i] - mean) * (defined[i] - mean);
        p.sem = std::sqrt(pairwise_sum(sq) / (n - 1.0)) / std::sqrt(n);
    }
    return p;
}

std::vector<std::optional<double>> statement_values(const TruthVectors& tv, Quantity quantity, std::size_t layer,
                                                    MagnitudeMode magnitude) {
    const std::size_t K = tv.set().n_statements();
    std::vector<std::optional<double>> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto v_nc = tv.get(VectorKind::NoContext, k, layer);
        if (!is_valid(v_nc)) continue;
        switch (quantity) {
            case Quantity::ThetaDegrees: {
                const auto v_c = tv.get(VectorKind::Context, k, layer);
                if (is_valid(v_c)) out[k] = theta_degrees(v_c, v_nc);
                break;
            }
            case Quantity::RmTcFc:
                out[k] = rel_magnitude(tv.get(VectorKind::Context, k, layer), v_nc, magnitude);
                break;
            case Quantity::RmTcFnc:
                out[k] = rel_magnitude(tv.get(VectorKind::TrueCtxFalseNoCtx, k, layer), v_nc, magnitude);
                break;
            case Quantity::RmTncFc:
                out[k] = rel_magnitude(tv.get(VectorKind::TrueNoCtxFalseCtx, k, layer), v_nc, magnitude);
                break;
            default:
                throw std::invalid_argument("not a geometric quantity: " + std::string(to_string(quantity)));
        }
    }
    return out;
}

LayerCurve layer_curve(const ActivationSet& set, Quantity quantity, const GeometryOptions& options) {
    const TruthVectors tv(set, options.context);
    LayerCurve curve;
    curve.quantity = quantity;
    curve.context = options.context;
    curve.points.resize(set.n_layers);
    parallel_for(set.n_layers, options.threads, [&](std::size_t l) {
        const auto values = statement_values(tv, quantity, l, options.magnitude);
        curve.points[l] = aggregate(l + 1, values);
    });
    return curve;
}

PhaseSegmentation phase_segment(std::span<const double> theta, const PhaseParams& params) {
    const std::size_t L = theta.size();
    if (L < 6) throw std::invalid_argument("phase_segment needs at least 6 layers");
    if (params.window == 0 || params.window >= L || params.flat_run == 0) {
        throw std::invalid_argument("phase_segment: bad parameters");
    }
    PhaseSegmentation seg;
    seg.params = params;
    seg.early_mean = pairwise_sum(theta.first(params.window)) / static_cast<double>(params.window);

    std::size_t p2 = L;
    for (std::size_t i = 0; i < L; ++i) {
        if (theta[i] < seg.early_mean - params.drop_deg) {
            p2 = i;
            break;
        }
    }
    if (p2 + 1 >= L) return seg;

    // Flatness is judged on a centered 3-point moving average so isolated
    // jitter below drop_deg / 4 does not break a flat run.
    std::vector<double> smooth(L);
    for (std::size_t i = 0; i < L; ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = std::min(L - 1, i + 1);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += theta[j];
        smooth[i] = s / static_cast<double>(hi - lo + 1);
    }

    std::size_t p3 = L;
    for (std::size_t j = p2 + 1; j + params.flat_run < L; ++j) {
        bool flat = true;
        for (std::size_t m = 0; m < params.flat_run && flat; ++m) {
            flat = std::abs(smooth[j + m + 1] - smooth[j + m]) < params.flat_deg;
        }
        if (flat) {
            p3 = j;
            break;
        }
    }
    if (p3 == L) {
        seg.p3_from_argmin = true;
        p3 = static_cast<std::size_t>(std::min_element(smooth.begin() + static_cast<std::ptrdiff_t>(p2) + 1, smooth.end()) -
                                      smooth.begin());
    }
    seg.found = true;
    seg.p2_start = p2 + 1;
    seg.p3_start = p3 + 1;
    return seg;
}

PhaseSegmentation phase_segment(const LayerCurve& curve, const PhaseParams& params) {
    if (curve.quantity != Quantity::ThetaDegrees) throw std::invalid_argument("phase_segment expects a theta curve");
    const auto means = curve.means();
    return phase_segment(means, params);
}

}  // namespace ctxtruth
