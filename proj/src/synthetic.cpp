#include "ctxtruth/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ctxtruth/random.hpp"

namespace ctxtruth {

namespace {

using Vec = std::vector<double>;

double norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Vec random_unit(Rng& rng, std::size_t d) {
    Vec v(d);
    double n = 0.0;
    while (n == 0.0) {
        for (auto& x : v) x = rng.normal();
        n = norm(v);
    }
    for (auto& x : v) x /= n;
    return v;
}

// Random unit vector orthogonal to the unit vector `u`.
Vec orthogonal_unit(Rng& rng, const Vec& u) {
    for (;;) {
        Vec w = random_unit(rng, u.size());
        double proj = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) proj += w[i] * u[i];
        for (std::size_t i = 0; i < u.size(); ++i) w[i] -= proj * u[i];
        const double n = norm(w);
        if (n > 1e-6) {
            for (auto& x : w) x /= n;
            return w;
        }
    }
}

double at_or(const std::vector<double>& v, std::size_t i, double fallback) { return v.empty() ? fallback : v[i]; }

// v_nc rotated by `theta_deg` within the plane (dir, w) and scaled so that
// ||result||^2 / ||v_nc||^2 == rm.
Vec rotated(const Vec& dir, const Vec& w, double r, double theta_deg, double rm) {
    const double t = theta_deg * std::numbers::pi / 180.0;
    const double scale = std::sqrt(rm) * r;
    Vec out(dir.size());
    for (std::size_t i = 0; i < dir.size(); ++i) out[i] = scale * (std::cos(t) * dir[i] + std::sin(t) * w[i]);
    return out;
}

}  // namespace

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic spec: " + msg); };
    if (n_statements == 0 || n_layers == 0 || hidden_dim == 0) fail("shape must be positive");
    if (theta_deg.size() != n_layers) fail("theta curve must have one entry per layer");
    if (!rm.empty() && rm.size() != n_layers) fail("rm curve must have one entry per layer");
    if (!truth_separation.empty() && truth_separation.size() != n_layers) fail("separation must have one entry per layer");
    if (noise_rel < 0.0 || activation_spread < 0.0) fail("noise and spread must be nonnegative");
    auto check_curve = [&](const std::vector<double>& theta, const std::vector<double>& r) {
        for (double t : theta)
            if (!(t >= 0.0 && t <= 180.0)) fail("planted angles must lie in [0, 180]");
        for (double x : r)
            if (!(x > 0.0)) fail("planted rm must be positive");
        if (hidden_dim < 2)
            for (double t : theta)
                if (t != 0.0 && t != 180.0) fail("hidden_dim < 2 cannot realize a nonzero angle");
    };
    check_curve(theta_deg, rm);
    for (const auto& pc : random_contexts) {
        if (pc.kind == ContextKind::None || pc.kind == ContextKind::Relevant) fail("random contexts must use a random kind");
        if (pc.theta_deg.size() != n_layers) fail("random-context theta must have one entry per layer");
        if (!pc.rm.empty() && pc.rm.size() != n_layers) fail("random-context rm must have one entry per layer");
        check_curve(pc.theta_deg, pc.rm);
    }
}

std::vector<double> three_phase_curve(std::size_t n_layers, double high, double low, std::size_t drop_start,
                                      std::size_t drop_end) {
    if (!(drop_start >= 1 && drop_start < drop_end && drop_end <= n_layers)) {
        throw std::invalid_argument("three_phase_curve: need 1 <= drop_start < drop_end <= n_layers");
    }
    std::vector<double> c(n_layers);
    for (std::size_t l = 1; l <= n_layers; ++l) {
        if (l <= drop_start) {
            c[l - 1] = high;
        } else if (l >= drop_end) {
            c[l - 1] = low;
        } else {
            const double t = static_cast<double>(l - drop_start) / static_cast<double>(drop_end - drop_start);
            c[l - 1] = high + t * (low - high);
        }
    }
    return c;
}

ActivationSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t K = spec.n_statements, L = spec.n_layers, d = spec.hidden_dim;

    std::vector<ConditionLabel> conditions = {{TruthSide::True, ContextKind::None},
                                              {TruthSide::False, ContextKind::None},
                                              {TruthSide::True, ContextKind::Relevant},
                                              {TruthSide::False, ContextKind::Relevant}};
    for (const auto& pc : spec.random_contexts) {
        conditions.push_back({TruthSide::True, pc.kind});
        conditions.push_back({TruthSide::False, pc.kind});
    }
    std::vector<std::string> ids(K);
    for (std::size_t k = 0; k < K; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "s%05zu", k);
        ids[k] = buf;
    }
    ActivationSet set = ActivationSet::make("synthetic", L, d, std::move(ids), std::move(conditions));

    Rng layer_rng(mix_seed(seed, 0xfeedULL));
    std::vector<Vec> shared(L);
    for (auto& u : shared) u = random_unit(layer_rng, d);

    auto write = [&](std::size_t c, std::size_t k, std::size_t l, const Vec& base, const Vec& v, double sign,
                     double sigma, Rng& rng) {
        auto out = set.at(c, k, l);
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = static_cast<float>(base[i] + sign * 0.5 * v[i] + sigma * rng.normal());
        }
    };

    for (std::size_t k = 0; k < K; ++k) {
        Rng rng(mix_seed(seed, k + 1));
        const double r = 0.5 + rng.uniform();
        for (std::size_t l = 0; l < L; ++l) {
            const double sep = at_or(spec.truth_separation, l, 0.0);
            Vec dir = random_unit(rng, d);
            if (sep != 0.0) {
                for (std::size_t i = 0; i < d; ++i) dir[i] += sep * shared[l][i];
                const double n = norm(dir);
                for (auto& x : dir) x /= n;
            }
            Vec v_nc(d);
            for (std::size_t i = 0; i < d; ++i) v_nc[i] = r * dir[i];
            const double sigma = spec.noise_rel * r / std::sqrt(static_cast<double>(d));

            Vec base(d);
            for (auto& x : base) x = spec.activation_spread * rng.normal();
            write(0, k, l, base, v_nc, +1.0, sigma, rng);
            write(1, k, l, base, v_nc, -1.0, sigma, rng);

            auto plant = [&](std::size_t c_true, double theta, double rm) {
                // one dimension only admits 0 or 180 degrees, where w is unused
                const Vec w = d > 1 ? orthogonal_unit(rng, dir) : Vec(d, 0.0);
                const Vec v = rotated(dir, w, r, theta, rm);
                Vec shifted(d);
                for (std::size_t i = 0; i < d; ++i) shifted[i] = base[i] + 0.5 * spec.activation_spread * rng.normal();
                write(c_true, k, l, shifted, v, +1.0, sigma, rng);
                write(c_true + 1, k, l, shifted, v, -1.0, sigma, rng);
            };
            plant(2, spec.theta_deg[l], at_or(spec.rm, l, 1.0));
            for (std::size_t p = 0; p < spec.random_contexts.size(); ++p) {
                const auto& pc = spec.random_contexts[p];
                plant(4 + 2 * p, pc.theta_deg[l], at_or(pc.rm, l, 1.0));
            }
        }
        if (spec.fail_every != 0 && k % spec.fail_every == spec.fail_every - 1) {
            set.instruction_ok[(k % 4) * K + k] = 0;
        }
    }
    return set;
}

UnembeddingBundle gen_synthetic_unembedding(std::size_t vocab_size, std::size_t hidden_dim, std::uint64_t seed) {
    if (vocab_size < 2) throw std::invalid_argument("synthetic unembedding needs at least 2 tokens");
    Rng rng(seed);
    UnembeddingBundle b;
    b.model_name = "synthetic";
    b.vocab_size = vocab_size;
    b.hidden_dim = hidden_dim;
    b.matrix.resize(vocab_size * hidden_dim);
    for (std::size_t v = 0; v < vocab_size; ++v) {
        const double scale = v < 2 ? 1.0 : 0.1;
        for (std::size_t i = 0; i < hidden_dim; ++i) b.matrix[v * hidden_dim + i] = static_cast<float>(scale * rng.normal());
    }
    b.true_token_id = 0;
    b.false_token_id = 1;
    return b;
}

LabeledRows gaussian_clusters(std::size_t n_per_class, std::size_t dim, double separation, double sigma,
                              std::uint64_t seed) {
    if (dim == 0) throw std::invalid_argument("gaussian_clusters: dim must be positive");
    Rng rng(seed);
    LabeledRows rows;
    rows.dim = dim;
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const bool label = i % 2 == 0;
        for (std::size_t j = 0; j < dim; ++j) x[j] = sigma * rng.normal();
        x[0] += label ? separation : -separation;
        rows.push(std::span<const double>(x), label);
    }
    return rows;
}

SyntheticSpec demo_spec(std::size_t n_statements, std::size_t n_layers, std::size_t hidden_dim) {
    SyntheticSpec spec;
    spec.n_statements = n_statements;
    spec.n_layers = n_layers;
    spec.hidden_dim = hidden_dim;
    const std::size_t drop_start = std::max<std::size_t>(2, n_layers / 4);
    const std::size_t drop_end = std::max<std::size_t>(drop_start + 1, n_layers / 2);
    spec.theta_deg = three_phase_curve(n_layers, 88.0, 30.0, drop_start, drop_end);
    spec.rm.assign(n_layers, 1.2);
    spec.truth_separation.assign(n_layers, 0.0);
    for (std::size_t l = drop_start; l < n_layers; ++l) spec.truth_separation[l] = 3.0;
    spec.noise_rel = 0.05;
    spec.activation_spread = 0.2;
    const std::pair<ContextKind, double> kinds[] = {{ContextKind::RandChar, 12.0},
                                                    {ContextKind::RandWord, 10.0},
                                                    {ContextKind::RandSalad, 0.0},
                                                    {ContextKind::RandWiki, 6.0},
                                                    {ContextKind::RandShuffle, 4.0}};
    for (const auto& [kind, theta_gap] : kinds) {
        PlantedContext pc;
        pc.kind = kind;
        pc.theta_deg = spec.theta_deg;
        for (auto& t : pc.theta_deg) t = std::max(0.0, t - theta_gap);
        pc.rm.assign(n_layers, kind == ContextKind::RandWiki ? 1.2 : 1.0);
        spec.random_contexts.push_back(std::move(pc));
    }
    spec.fail_every = 12;
    return spec;
}

}  // namespace ctxtruth
