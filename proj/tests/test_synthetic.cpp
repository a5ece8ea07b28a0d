#include <doctest.h>

#include <cmath>

#include "ctxtruth/geometry.hpp"
#include "ctxtruth/synthetic.hpp"

using namespace ctxtruth;

namespace {

SyntheticSpec flat_spec(double theta, double rm) {
    SyntheticSpec s;
    s.n_statements = 16;
    s.n_layers = 3;
    s.hidden_dim = 24;
    s.theta_deg.assign(3, theta);
    s.rm.assign(3, rm);
    return s;
}

}  // namespace

TEST_SUITE("synthetic") {
    TEST_CASE("noise-free planting is measured back exactly") {
        for (double theta : {0.0, 37.0, 90.0, 150.0, 180.0}) {
            const auto set = gen_synthetic(flat_spec(theta, 1.0), 5);
            const auto curve = layer_curve(set, Quantity::ThetaDegrees);
            for (const auto& p : curve.points) {
                REQUIRE(p.mean.has_value());
                // float32 storage limits agreement to roughly 1e-5 degrees
                CHECK(std::abs(*p.mean - theta) < 1e-4);
                CHECK(p.n_excluded == 0);
            }
        }
        const auto set = gen_synthetic(flat_spec(45.0, 1.69), 6);
        for (const auto& p : layer_curve(set, Quantity::RmTcFc).points) CHECK(*p.mean == doctest::Approx(1.69).epsilon(1e-6));
    }

    TEST_CASE("three-phase curve shape") {
        const auto c = three_phase_curve(30, 90, 25, 8, 16);
        CHECK(c[0] == 90);
        CHECK(c[7] == 90);
        CHECK(c[11] == doctest::Approx(90 - 65 * 4.0 / 8.0));
        CHECK(c[15] == 25);
        CHECK(c[29] == 25);
        CHECK_THROWS_AS(three_phase_curve(10, 90, 25, 5, 5), std::invalid_argument);
        CHECK_THROWS_AS(three_phase_curve(10, 90, 25, 5, 11), std::invalid_argument);
    }

    TEST_CASE("planted phases are recovered") {
        SyntheticSpec s;
        s.n_statements = 64;
        s.n_layers = 30;
        s.hidden_dim = 64;
        s.theta_deg = three_phase_curve(30, 90, 25, 8, 16);
        s.noise_rel = 0.05;
        const auto set = gen_synthetic(s, 11);
        const auto curve = layer_curve(set, Quantity::ThetaDegrees);
        for (std::size_t l = 0; l < 30; ++l) CHECK(std::abs(*curve.points[l].mean - s.theta_deg[l]) < 3.0);
        const auto seg = phase_segment(curve);
        REQUIRE(seg.found);
        CHECK(seg.p2_start >= 8);
        CHECK(seg.p2_start <= 10);
        CHECK(seg.p3_start >= 15);
        CHECK(seg.p3_start <= 17);
    }

    TEST_CASE("random contexts and instruction failures") {
        auto s = demo_spec(24, 8, 16);
        const auto set = gen_synthetic(s, 2);
        CHECK(set.conditions.size() == 4 + 2 * s.random_contexts.size());
        for (ContextKind k : kRandomKinds) CHECK(set.has_context(k));
        std::size_t failed = 0;
        for (auto ok : set.instruction_ok) failed += ok == 0;
        CHECK(failed == 24 / 12);
    }

    TEST_CASE("infeasible specs are rejected") {
        auto bad = flat_spec(200.0, 1.0);
        CHECK_THROWS_AS(gen_synthetic(bad, 1), std::invalid_argument);
        bad = flat_spec(45.0, 0.0);
        CHECK_THROWS_AS(gen_synthetic(bad, 1), std::invalid_argument);
        bad = flat_spec(45.0, 1.0);
        bad.hidden_dim = 1;
        CHECK_THROWS_AS(gen_synthetic(bad, 1), std::invalid_argument);
        bad.theta_deg.assign(3, 180.0);
        CHECK_NOTHROW(gen_synthetic(bad, 1));
        bad = flat_spec(45.0, 1.0);
        bad.theta_deg.pop_back();
        CHECK_THROWS_AS(gen_synthetic(bad, 1), std::invalid_argument);
        bad = flat_spec(45.0, 1.0);
        bad.random_contexts.push_back({ContextKind::Relevant, bad.theta_deg, {}});
        CHECK_THROWS_AS(gen_synthetic(bad, 1), std::invalid_argument);
    }

    TEST_CASE("generation is deterministic in the seed") {
        const auto s = demo_spec(12, 6, 8);
        CHECK(gen_synthetic(s, 9).tensor == gen_synthetic(s, 9).tensor);
        CHECK(gen_synthetic(s, 9).tensor != gen_synthetic(s, 10).tensor);
        CHECK(gen_synthetic_unembedding(5, 8, 1).matrix == gen_synthetic_unembedding(5, 8, 1).matrix);
    }

    TEST_CASE("gaussian clusters") {
        const auto rows = gaussian_clusters(50, 3, 5.0, 1.0, 4);
        CHECK(rows.y.size() == 100);
        double m_pos = 0, m_neg = 0;
        for (std::size_t i = 0; i < 100; ++i) (rows.y[i] ? m_pos : m_neg) += rows.row(i)[0] / 50.0;
        CHECK(m_pos == doctest::Approx(5.0).epsilon(0.1));
        CHECK(m_neg == doctest::Approx(-5.0).epsilon(0.1));
    }
}
