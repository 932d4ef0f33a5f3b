#include <stdexcept>
#include <cmath>

#include "bridgelab/rng.hpp"
#include "bridgelab/schedule.hpp"
#include "doctest.h"

using namespace bridgelab;

namespace {

LatentGrid random_grid(int c, int h, int w, int tw, RngStream& rng) {
    LatentGrid g(c, h, w, tw);
    for (double& v : g.data) v = rng.normal();
    return g;
}

}  // namespace

TEST_CASE("vp schedule invariants hold for both kinds") {
    for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        NoiseSchedule s = build_vp_schedule(kind, 1000);
        REQUIRE(s.alpha.size() == 1001);
        for (int t = 0; t <= s.steps; ++t) {
            CHECK(s.alpha[t] > 0.0);
            CHECK(s.alpha[t] <= 1.0);
            CHECK(s.sigma[t] >= 0.0);
            CHECK(s.sigma[t] < 1.0);
            CHECK(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] == doctest::Approx(1.0).epsilon(1e-12));
            if (t > 0) CHECK(s.alpha[t] <= s.alpha[t - 1]);
        }
        CHECK(s.alpha[0] >= 1.0 - 1e-3);
        CHECK(s.sigma[s.steps] >= 1.0 - 1e-2);
    }
}

TEST_CASE("cosine endpoint is near pure noise") {
    NoiseSchedule s = build_vp_schedule(ScheduleKind::cosine, 1000);
    CHECK(s.sigma[1000] >= 0.99);
}

TEST_CASE("linear terminal signal matches an independent cumulative product") {
    NoiseSchedule s = build_vp_schedule(ScheduleKind::linear, 1000);
    // Oracle: direct product over the linearly spaced per-step variances.
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
        prod *= 1.0 - beta;
    }
    CHECK(s.alpha[1000] * s.alpha[1000] == doctest::Approx(prod).epsilon(1e-12));
    CHECK(s.alpha[1000] * s.alpha[1000] < 1e-4);
}

TEST_CASE("schedule construction rejects bad arguments") {
    CHECK_THROWS_AS(build_vp_schedule(ScheduleKind::linear, 1), std::invalid_argument);
    CHECK_THROWS_AS(schedule_kind_from_string("quadratic"), std::invalid_argument);
}

TEST_CASE("forward_diffuse endpoint and zero-signal cases") {
    NoiseSchedule s = build_vp_schedule(ScheduleKind::cosine, 100);
    RngStream rng(11);
    LatentGrid x0 = random_grid(2, 3, 5, 5, rng);
    LatentGrid eps = random_grid(2, 3, 5, 5, rng);

    LatentGrid at0 = forward_diffuse(x0, eps, 0, s);
    for (std::size_t i = 0; i < x0.data.size(); ++i)
        CHECK(at0.data[i] == doctest::Approx(x0.data[i]).epsilon(1e-12));

    LatentGrid zero(2, 3, 5, 5);
    LatentGrid noise_only = forward_diffuse(zero, eps, 42, s);
    for (std::size_t i = 0; i < eps.data.size(); ++i)
        CHECK(noise_only.data[i] == s.sigma[42] * eps.data[i]);
}

TEST_CASE("forward_diffuse at the alpha=sigma=sqrt(1/2) point") {
    // Hand-built schedule hitting the balanced point exactly.
    NoiseSchedule s;
    s.steps = 2;
    const double r = std::sqrt(0.5);
    s.alpha = {1.0, r, 0.01};
    s.sigma = {0.0, r, std::sqrt(1.0 - 0.0001)};
    RngStream rng(3);
    LatentGrid x0 = random_grid(1, 2, 4, 4, rng);
    LatentGrid mixed = forward_diffuse(x0, x0, 1, s);
    for (std::size_t i = 0; i < x0.data.size(); ++i)
        CHECK(mixed.data[i] == doctest::Approx(std::sqrt(2.0) * x0.data[i]).epsilon(1e-12));
}

TEST_CASE("shape and range errors are rejected") {
    NoiseSchedule s = build_vp_schedule(ScheduleKind::cosine, 10);
    RngStream rng(5);
    LatentGrid a = random_grid(1, 2, 3, 3, rng);
    LatentGrid b = random_grid(1, 2, 4, 4, rng);
    CHECK_THROWS_AS(forward_diffuse(a, b, 1, s), std::invalid_argument);
    CHECK_THROWS_AS(forward_diffuse(a, a, 11, s), std::out_of_range);
    CHECK_THROWS_AS(v_from(a, a, -1, s), std::out_of_range);
}

TEST_CASE("v-parameterization round trips are exact to 1e-10") {
    NoiseSchedule s = build_vp_schedule(ScheduleKind::cosine, 1000);
    RngStream rng(17);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int t = rng.uniform_int(0, 1000);
        LatentGrid x0 = random_grid(2, 2, 4, 4, rng);
        LatentGrid eps = random_grid(2, 2, 4, 4, rng);
        LatentGrid x_t = forward_diffuse(x0, eps, t, s);
        LatentGrid v = v_from(x0, eps, t, s);
        LatentGrid x0_rec = x0_from(x_t, v, t, s);
        LatentGrid eps_rec = eps_from(x_t, v, t, s);
        LatentGrid x_t_rec = forward_diffuse(x0_rec, eps_rec, t, s);
        for (std::size_t i = 0; i < x0.data.size(); ++i) {
            worst = std::max(worst, std::abs(x0_rec.data[i] - x0.data[i]));
            worst = std::max(worst, std::abs(eps_rec.data[i] - eps.data[i]));
            worst = std::max(worst, std::abs(x_t_rec.data[i] - x_t.data[i]));
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("bridge schedule pins, monotonicity and symmetry") {
    BridgeSchedule b = build_bridge_schedule(1000, 1e-4);
    CHECK(b.var_fwd[0] == 0.0);
    CHECK(b.var_bwd[1000] == 0.0);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(b.var_fwd[t] >= b.var_fwd[t - 1]);
        CHECK(b.var_bwd[t] <= b.var_bwd[t - 1]);
    }
    for (int t = 0; t <= 1000; ++t)
        CHECK(b.var_fwd[t] == doctest::Approx(b.var_bwd[1000 - t]).epsilon(1e-12));
}

TEST_CASE("bridge T=4 matches hand summation") {
    BridgeSchedule b = build_bridge_schedule(4, 0.1);
    // Triangle shape min(k, 5-k) = {1,2,2,1}, peak 2, so per-step
    // variances are {0.05, 0.1, 0.1, 0.05}.
    const double beta[4] = {0.05, 0.1, 0.1, 0.05};
    double acc = 0.0;
    for (int t = 1; t <= 4; ++t) {
        acc += beta[t - 1];
        CHECK(b.var_fwd[t] == doctest::Approx(acc).epsilon(1e-12));
    }
    CHECK(b.var_fwd[4] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("bridge interpolation weights sum to one") {
    BridgeSchedule b = build_bridge_schedule(500, 2e-4);
    for (int t = 1; t < 500; ++t) {
        BridgeWeights w = bridge_marginal_weights(b, t);
        CHECK(w.weight_start + w.weight_end == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w.stddev > 0.0);
    }
    CHECK(bridge_marginal_weights(b, 0).stddev == 0.0);
    CHECK(bridge_marginal_weights(b, 500).stddev == 0.0);
}

TEST_CASE("bridge construction rejects bad arguments") {
    CHECK_THROWS_AS(build_bridge_schedule(1, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(build_bridge_schedule(100, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(build_bridge_schedule(100, -1.0), std::invalid_argument);
}
