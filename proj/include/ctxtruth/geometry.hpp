#pragma once

// Truth-vector geometry: directional change between with- and
// without-context truth vectors, relative magnitudes, per-layer curves and
// phase segmentation of angle curves.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ctxtruth/actdump.hpp"

namespace ctxtruth {

enum class VectorKind {
    NoContext,          // a(True, none) - a(False, none)
    Context,            // a(True, ctx)  - a(False, ctx)
    TrueCtxFalseNoCtx,  // a(True, ctx)  - a(False, none)
    TrueNoCtxFalseCtx,  // a(True, none) - a(False, ctx)
};

enum class Quantity { ThetaDegrees, RmTcFc, RmTcFnc, RmTncFc, LensP, ProbeAccuracy };

std::string_view to_string(Quantity q);
Quantity quantity_from_string(std::string_view s);

enum class MagnitudeMode { SquaredNorm, Norm };

class InvalidVector : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Norm threshold below which a truth vector is treated as degenerate.
double eps_zero(std::size_t dim);

std::vector<double> truth_vector(std::span<const float> a_true, std::span<const float> a_false);
std::vector<double> truth_vector(std::span<const double> a_true, std::span<const double> a_false);

double squared_norm(std::span<const double> v);
bool is_valid(std::span<const double> v);

// Angle between v_c and v_nc in degrees, in [0, 180]. Throws InvalidVector
// if either has norm below eps_zero.
double theta_degrees(std::span<const double> v_c, std::span<const double> v_nc);

// ||v_num||^2 / ||v_nc||^2, or the unsquared ratio under MagnitudeMode::Norm.
double rel_magnitude(std::span<const double> v_num, std::span<const double> v_nc,
                     MagnitudeMode mode = MagnitudeMode::SquaredNorm);

// Fixed-tree pairwise summation; the reduction order depends only on size.
double pairwise_sum(std::span<const double> values);

struct MeanCount {
    double mean = 0.0;
    std::size_t n_valid = 0;
};

MeanCount dataset_theta(std::span<const double> thetas);

// Per-statement, per-layer truth vectors for one context kind, computed on
// demand from an ActivationSet (the set must outlive the view).
class TruthVectors {
public:
    TruthVectors(const ActivationSet& set, ContextKind context);

    std::vector<double> get(VectorKind kind, std::size_t statement, std::size_t layer) const;
    bool valid(VectorKind kind, std::size_t statement, std::size_t layer) const;

    const ActivationSet& set() const { return *set_; }
    ContextKind context() const { return context_; }

private:
    const ActivationSet* set_;
    ContextKind context_;
    std::size_t true_nc_, false_nc_, true_c_, false_c_;
};

struct CurvePoint {
    std::size_t layer = 0;  // 1-based
    std::optional<double> mean;
    std::optional<double> sem;  // defined when n_valid >= 2
    std::size_t n_valid = 0;
    std::size_t n_excluded = 0;
};

struct LayerCurve {
    Quantity quantity = Quantity::ThetaDegrees;
    ContextKind context = ContextKind::Relevant;
    std::vector<CurvePoint> points;

    std::vector<double> means() const;  // throws if any layer is undefined
};

// Mean, sample-sd SEM and count over the defined entries of one layer.
CurvePoint aggregate(std::size_t layer, std::span<const std::optional<double>> values);

struct GeometryOptions {
    ContextKind context = ContextKind::Relevant;
    MagnitudeMode magnitude = MagnitudeMode::SquaredNorm;
    unsigned threads = 1;
};

// Per-statement values of a geometric quantity at a 0-based layer; nullopt
// where a required truth vector is degenerate.
std::vector<std::optional<double>> statement_values(const TruthVectors& tv, Quantity quantity, std::size_t layer,
                                                    MagnitudeMode magnitude = MagnitudeMode::SquaredNorm);

LayerCurve layer_curve(const ActivationSet& set, Quantity quantity, const GeometryOptions& options = {});

struct PhaseParams {
    std::size_t window = 4;     // early layers averaged for the baseline
    double drop_deg = 10.0;     // phase 2 starts once theta falls this far below it
    double flat_deg = 2.0;      // per-layer change treated as flat
    std::size_t flat_run = 3;   // consecutive flat steps needed for phase 3
};

struct PhaseSegmentation {
    bool found = false;
    std::size_t p2_start = 0;  // 1-based
    std::size_t p3_start = 0;  // 1-based
    bool p3_from_argmin = false;
    double early_mean = 0.0;
    PhaseParams params;
};

PhaseSegmentation phase_segment(std::span<const double> theta_by_layer, const PhaseParams& params = {});
PhaseSegmentation phase_segment(const LayerCurve& curve, const PhaseParams& params = {});

}  // namespace ctxtruth
