#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "bridgelab/io.hpp"
#include "bridgelab/training.hpp"
#include "doctest.h"

using namespace bridgelab;

namespace {

DenoiserConfig tiny_config(CondMode mode) {
    DenoiserConfig c;
    c.channels = 2;
    c.height = 4;
    c.width = 8;
    c.cond_mode = mode;
    c.objective = mode == CondMode::concat_channels ? Objective::v_prediction : Objective::x0_prediction;
    c.hidden_width = 16;
    c.time_embed_dim = 8;
    c.cond_dim = 4;
    c.max_timestep = 50;
    return c;
}

TestbedConfig tiny_testbed() {
    TestbedConfig t;
    t.channels = 2;
    t.height = 4;
    t.max_width = 8;
    t.alphabet = 4;
    t.min_tokens = 2;
    t.max_tokens = 2;
    t.avg_duration = 2;
    t.embed_dim = 4;
    return t;
}

}  // namespace

TEST_CASE("adam with zero gradients leaves parameters and moments at zero") {
    RngStream rng(41);
    DenoiserConfig c = tiny_config(CondMode::embed_inject);
    DenoiserParams p = DenoiserParams::random_init(c, rng);
    DenoiserParams before = p;
    AdamState state = AdamState::zeros_like(c);
    DenoiserGrads zero = DenoiserTensors::zeros_like(c);

    adam_step(p, zero, state, 1e-3);
    CHECK(state.step == 1);
    std::vector<const Eigen::MatrixXd*> pl, bl;
    visit_tensors(p.tensors, [&](const char*, Eigen::MatrixXd& m) { pl.push_back(&m); });
    visit_tensors(before.tensors, [&](const char*, Eigen::MatrixXd& m) { bl.push_back(&m); });
    for (std::size_t i = 0; i < pl.size(); ++i) CHECK((*pl[i] - *bl[i]).cwiseAbs().maxCoeff() == 0.0);
    visit_tensors(state.m, [](const char*, Eigen::MatrixXd& m) { CHECK(m.cwiseAbs().maxCoeff() == 0.0); });
    visit_tensors(state.v, [](const char*, Eigen::MatrixXd& m) { CHECK(m.cwiseAbs().maxCoeff() == 0.0); });
}

TEST_CASE("first adam step with constant gradient moves by about lr*sign") {
    RngStream rng(42);
    DenoiserConfig c = tiny_config(CondMode::embed_inject);
    DenoiserParams p = DenoiserParams::random_init(c, rng);
    DenoiserParams before = p;
    AdamState state = AdamState::zeros_like(c);

    const double g = 0.3, lr = 1e-3;
    DenoiserGrads grads = DenoiserTensors::zeros_like(c);
    visit_tensors(grads, [&](const char*, Eigen::MatrixXd& m) { m.setConstant(g); });
    adam_step(p, grads, state, lr);

    // Hand evaluation at step 1: m_hat = g, v_hat = g^2, so the update is
    // lr * g / (|g| + eps).
    const double expected = lr * g / (std::abs(g) + 1e-8);
    std::vector<const Eigen::MatrixXd*> pl, bl;
    visit_tensors(p.tensors, [&](const char*, Eigen::MatrixXd& m) { pl.push_back(&m); });
    visit_tensors(before.tensors, [&](const char*, Eigen::MatrixXd& m) { bl.push_back(&m); });
    for (std::size_t i = 0; i < pl.size(); ++i) {
        const Eigen::MatrixXd delta = *bl[i] - *pl[i];
        CHECK(std::abs(delta.minCoeff() - expected) < 1e-12);
        CHECK(std::abs(delta.maxCoeff() - expected) < 1e-12);
    }
}

TEST_CASE("adam with lr=0 updates moments only; bad gradients abort") {
    RngStream rng(43);
    DenoiserConfig c = tiny_config(CondMode::embed_inject);
    DenoiserParams p = DenoiserParams::random_init(c, rng);
    DenoiserParams before = p;
    AdamState state = AdamState::zeros_like(c);

    DenoiserGrads grads = DenoiserTensors::zeros_like(c);
    visit_tensors(grads, [&](const char*, Eigen::MatrixXd& m) { m.setConstant(0.5); });
    adam_step(p, grads, state, 0.0);
    std::vector<const Eigen::MatrixXd*> pl, bl;
    visit_tensors(p.tensors, [&](const char*, Eigen::MatrixXd& m) { pl.push_back(&m); });
    visit_tensors(before.tensors, [&](const char*, Eigen::MatrixXd& m) { bl.push_back(&m); });
    for (std::size_t i = 0; i < pl.size(); ++i) CHECK((*pl[i] - *bl[i]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(state.m.w1(0, 0) != 0.0);

    grads.w1(0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_step(p, grads, state, 1e-3), std::runtime_error);

    DenoiserGrads wrong = DenoiserTensors::zeros_like(tiny_config(CondMode::concat_channels));
    CHECK_THROWS_AS(adam_step(p, wrong, state, 1e-3), std::invalid_argument);
}

TEST_CASE("masked mse is zero for a perfect prediction") {
    RngStream rng(44);
    Testbed tb(tiny_testbed(), 7);
    LatentPair pair = tb.synth_pair(rng);
    Eigen::MatrixXd target = grid_to_vector(pair.z_audio);
    std::vector<const LatentGrid*> masks{&pair.z_audio};
    CHECK(masked_mse(target, target, masks).value == 0.0);
}

TEST_CASE("condition dropout hits every example at rate 1 and matches its rate statistically") {
    Testbed tb(tiny_testbed(), 8);
    DenoiserConfig dc = tiny_config(CondMode::embed_inject);
    BridgeSchedule bridge = build_bridge_schedule(50, 1e-3);

    RngStream gen(45);
    std::vector<LatentPair> batch(64);
    for (LatentPair& p : batch) p = tb.synth_pair(gen);

    RngStream rng(46);
    PreparedBatch all_dropped = prepare_batch(batch, TrainMode::i2sb, nullptr, &bridge, 1.0, dc, rng, 2);
    CHECK(all_dropped.dropped_conditions == 64);
    for (const StyleEmbedding* cond : all_dropped.conditions) CHECK(cond == nullptr);

    // Empirical rate within 3 standard errors over >= 10,000 draws.
    const double rate = 0.3;
    int dropped = 0, total = 0;
    for (int rep = 0; rep < 160; ++rep) {
        PreparedBatch prep = prepare_batch(batch, TrainMode::i2sb, nullptr, &bridge, rate, dc, rng, 2);
        dropped += prep.dropped_conditions;
        total += 64;
    }
    REQUIRE(total >= 10000);
    const double se = std::sqrt(rate * (1.0 - rate) / total);
    CHECK(std::abs(static_cast<double>(dropped) / total - rate) < 3.0 * se);
}

TEST_CASE("training is reproducible from the seed, including threaded fills") {
    Testbed tb(tiny_testbed(), 9);
    DenoiserConfig dc = tiny_config(CondMode::concat_channels);
    NoiseSchedule sched = build_vp_schedule(ScheduleKind::cosine, 50);

    TrainConfig tc;
    tc.batch_size = 8;
    tc.total_steps = 0;
    tc.threads = 2;
    tc.learning_rate = 1e-3;

    auto run = [&](int threads) {
        TrainConfig local = tc;
        local.threads = threads;
        RngStream init(100);
        DenoiserParams params = DenoiserParams::init(dc, init);
        AdamState adam = AdamState::zeros_like(dc);
        RngStream rng(101);
        std::vector<double> losses;
        for (int step = 0; step < 20; ++step) {
            std::vector<LatentPair> batch(local.batch_size);
            for (LatentPair& p : batch) p = tb.synth_pair(rng);
            losses.push_back(
                training_step(params, adam, batch, TrainMode::palette_ddim, &sched, nullptr, local, rng).loss);
        }
        return losses;
    };

    std::vector<double> a = run(2);
    std::vector<double> b = run(2);
    CHECK(a == b);
    std::vector<double> c = run(1);
    CHECK(a == c);  // worker count must not change the arithmetic
}

TEST_CASE("losses decrease on a tiny bridge task") {
    Testbed tb(tiny_testbed(), 10);
    DenoiserConfig dc = tiny_config(CondMode::embed_inject);
    BridgeSchedule bridge = build_bridge_schedule(50, 1e-3);

    TrainConfig tc;
    tc.batch_size = 16;
    tc.learning_rate = 3e-3;
    tc.threads = 2;

    RngStream init(200);
    DenoiserParams params = DenoiserParams::init(dc, init);
    AdamState adam = AdamState::zeros_like(dc);
    RngStream rng(201);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 300; ++step) {
        std::vector<LatentPair> batch(tc.batch_size);
        for (LatentPair& p : batch) p = tb.synth_pair(rng);
        const double loss =
            training_step(params, adam, batch, TrainMode::i2sb, nullptr, &bridge, tc, rng).loss;
        if (step == 0) first = loss;
        last = loss;
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("train driver writes checkpoints and a reproducible loss curve") {
    const std::string dir = std::filesystem::temp_directory_path() / "bridgelab_train_test";
    std::filesystem::remove_all(dir);

    Testbed tb(tiny_testbed(), 11);
    DenoiserConfig dc = tiny_config(CondMode::embed_inject);
    BridgeSchedule bridge = build_bridge_schedule(50, 1e-3);

    BatchProvider provider = [&tb](long, RngStream& rng) {
        std::vector<LatentPair> batch(8);
        for (LatentPair& p : batch) p = tb.synth_pair(rng);
        return batch;
    };

    SUBCASE("zero steps produce the initial checkpoint and an empty curve") {
        RngStream init(300);
        DenoiserParams params = DenoiserParams::init(dc, init);
        AdamState adam = AdamState::zeros_like(dc);
        TrainConfig tc;
        tc.total_steps = 0;
        tc.batch_size = 8;
        TrainResult r = train(params, adam, TrainMode::i2sb, nullptr, &bridge, tc, provider, dir, "zero");
        CHECK(r.final_step == 0);
        CHECK(std::filesystem::exists(r.final_checkpoint));
        std::ifstream csv(r.loss_csv);
        std::string line;
        REQUIRE(std::getline(csv, line));
        CHECK(line == "step,loss,seconds");
        CHECK_FALSE(std::getline(csv, line));
    }

    SUBCASE("same seed gives identical step/loss columns; resume continues the counter") {
        auto run_once = [&](const std::string& name) {
            RngStream init(301);
            DenoiserParams params = DenoiserParams::init(dc, init);
            AdamState adam = AdamState::zeros_like(dc);
            TrainConfig tc;
            tc.total_steps = 120;
            tc.batch_size = 8;
            tc.seed = 77;
            tc.checkpoint_interval = 50;
            return train(params, adam, TrainMode::i2sb, nullptr, &bridge, tc, provider, dir, name);
        };
        TrainResult r1 = run_once("runA");
        TrainResult r2 = run_once("runB");
        REQUIRE(r1.curve.size() == r2.curve.size());
        for (std::size_t i = 0; i < r1.curve.size(); ++i) {
            CHECK(r1.curve[i].first == r2.curve[i].first);
            CHECK(r1.curve[i].second == r2.curve[i].second);
        }
        CHECK(std::filesystem::exists(dir + "/runA_step000050.blcp"));
        CHECK(std::filesystem::exists(dir + "/runA_step000100.blcp"));

        Checkpoint ckpt = load_checkpoint(r1.final_checkpoint);
        REQUIRE(ckpt.has_adam);
        CHECK(ckpt.step == 120);
        TrainConfig more;
        more.total_steps = 30;
        more.batch_size = 8;
        more.seed = 78;
        TrainResult r3 = train(ckpt.params, ckpt.adam, TrainMode::i2sb, nullptr, &bridge, more, provider, dir,
                               "resumed", ckpt.step);
        CHECK(r3.final_step == 150);
        CHECK(load_checkpoint(r3.final_checkpoint).step == 150);
    }
}
