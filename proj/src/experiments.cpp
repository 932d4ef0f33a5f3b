#include "bridgelab/experiments.hpp"

#include <Eigen/Core>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "bridgelab/io.hpp"
#include "bridgelab/training.hpp"
#include "json.hpp"

namespace bridgelab {

namespace {

// Hash of the fields that determine a trained checkpoint; seeds, output
// paths and sampler settings deliberately excluded so replicas and both
// sampling experiments share the cache.
std::string recipe_hash(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["testbed"] = nlohmann::json::parse(to_canonical_json(cfg))["testbed"];
    j["schedule"] = {{"kind", to_string(cfg.schedule.kind)},
                     {"timesteps", cfg.schedule.timesteps},
                     {"bridge_timesteps", cfg.schedule.bridge_timesteps},
                     {"bridge_beta_max", cfg.schedule.bridge_beta_max}};
    j["training"] = {{"learning_rate", cfg.training.learning_rate},
                     {"batch_size", cfg.training.batch_size},
                     {"total_steps", cfg.training.total_steps},
                     {"cond_dropout", cfg.training.cond_dropout},
                     {"threads", cfg.training.threads},  // GEMM threading changes the arithmetic
                     {"mode", to_string(cfg.train_mode)},
                     {"hidden_width", cfg.hidden_width}};
    const std::string text = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::uint64_t testbed_seed(std::uint64_t replica_seed) { return mix_seed(replica_seed, 0xBED); }

BatchProvider streaming_provider(const Testbed& tb, int batch_size) {
    return [&tb, batch_size](long, RngStream& rng) {
        std::vector<LatentPair> batch(batch_size);
        for (LatentPair& p : batch) p = tb.synth_pair(rng);
        return batch;
    };
}

double held_out_loss(const DenoiserParams& params, const Testbed& tb, const ExperimentConfig& cfg,
                     TrainMode mode, const NoiseSchedule* sched, const BridgeSchedule* bridge,
                     std::uint64_t seed) {
    RngStream eval_rng = RngStream(seed).child(0xE7A1);
    double total = 0.0;
    for (int b = 0; b < cfg.eval.batches; ++b) {
        std::vector<LatentPair> batch(cfg.training.batch_size);
        for (LatentPair& p : batch) p = tb.synth_pair(eval_rng);
        total += eval_loss(params, batch, mode, sched, bridge, eval_rng, cfg.training.threads);
    }
    return total / cfg.eval.batches;
}

void snapshot_triple(const std::string& dir, const std::string& stem, const LatentGrid& z_text,
                     const LatentGrid& z_audio, const LatentGrid& output) {
    write_pgm(dir + "/" + stem + "_z_text.pgm", z_text);
    write_pgm(dir + "/" + stem + "_z_audio.pgm", z_audio);
    write_pgm(dir + "/" + stem + "_output.pgm", output);
}

LatentGrid noise_grid(int channels, int height, int width, int true_width, RngStream& rng) {
    LatentGrid g(channels, height, width, true_width);
    for (double& v : g.data) v = rng.normal();
    return g;
}

// Normalized per-field distance between two style estimates.
double style_param_distance(const TestbedConfig& cfg, const StyleParams& a, const StyleParams& b) {
    double err = 0.0;
    err += (cfg.gain_max - cfg.gain_min) > 0 ? std::abs(a.gain - b.gain) / (cfg.gain_max - cfg.gain_min) : 0.0;
    err += (cfg.pitch_max - cfg.pitch_min) > 0
               ? std::abs(a.pitch_bias - b.pitch_bias) / (cfg.pitch_max - cfg.pitch_min)
               : 0.0;
    err += (cfg.mod_max - cfg.mod_min) > 0 ? std::abs(a.mod_rate - b.mod_rate) / (cfg.mod_max - cfg.mod_min)
                                           : 0.0;
    return err / 3.0;
}

}  // namespace

DenoiserParams train_or_load(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& cache_dir) {
    std::filesystem::create_directories(cache_dir);
    const std::string run_name = "ckpt_" + recipe_hash(cfg) + "_seed" + std::to_string(seed);
    const std::string final_path = cache_dir + "/" + run_name + "_final.blcp";

    if (!std::filesystem::exists(final_path)) {
        Testbed tb(cfg.testbed, testbed_seed(seed));
        NoiseSchedule sched;
        BridgeSchedule bridge;
        const NoiseSchedule* sched_ptr = nullptr;
        const BridgeSchedule* bridge_ptr = nullptr;
        if (cfg.train_mode == TrainMode::palette_ddim) {
            sched = build_vp_schedule(cfg.schedule.kind, cfg.schedule.timesteps);
            sched_ptr = &sched;
        } else {
            bridge = build_bridge_schedule(cfg.schedule.bridge_timesteps, cfg.schedule.bridge_beta_max);
            bridge_ptr = &bridge;
        }
        RngStream init_rng = RngStream(seed).child(0x1A17);
        DenoiserParams params = DenoiserParams::init(cfg.denoiser_config(), init_rng);
        AdamState adam = AdamState::zeros_like(params.config);
        TrainConfig tc = cfg.training;
        tc.seed = seed;
        train(params, adam, cfg.train_mode, sched_ptr, bridge_ptr, tc, streaming_provider(tb, tc.batch_size),
              cache_dir, run_name);
    }
    // Evaluate what is on disk, so cached and fresh runs are identical.
    return load_checkpoint(final_path).params;
}

ExperimentReport run_gaussian_oracle(const ExperimentConfig& cfg) {
    Eigen::setNbThreads(cfg.training.threads);
    ExperimentReport report;
    report.name = "gaussian-oracle";
    report.config_hash = config_hash(cfg);
    report.seeds = cfg.seeds;

    // Small grids keep 10k-sample checks cheap; targets are chosen so the
    // 10-step discretization bias stays inside the 0.05 tolerance.
    constexpr int kSamples = 10000;
    constexpr double kTol = 0.05;
    const double ddim_mu = 0.7, ddim_s = 0.05;
    const double i2sb_mu0 = -0.5, i2sb_s0 = 0.2, i2sb_mu1 = 1.5, i2sb_s1 = 0.2;
    const double mid_mu0 = -0.5, mid_s0 = 0.9, mid_mu1 = 1.5, mid_s1 = 0.6;

    NoiseSchedule sched = build_vp_schedule(cfg.schedule.kind, cfg.schedule.timesteps);
    BridgeSchedule oracle_bridge = build_bridge_schedule(cfg.schedule.bridge_timesteps, 3e-6);
    BridgeSchedule mid_bridge = build_bridge_schedule(cfg.schedule.bridge_timesteps, 1e-4);

    std::map<std::string, std::vector<double>> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
        RngStream rng(seed);

        SamplerConfig ddim_cfg;
        ddim_cfg.mode = SamplerMode::ddim;
        ddim_cfg.steps = 10;
        AnalyticGaussianDenoiser oracle(Tensor({1}, ddim_mu), ddim_s, sched, Objective::v_prediction);
        std::vector<std::vector<double>> samples(kSamples);
        RngStream ddim_rng = rng.child(1);
        for (int i = 0; i < kSamples; ++i) {
            LatentGrid x0 = noise_grid(1, 2, 2, 2, ddim_rng);
            LatentGrid out = ddim_sample(oracle, x0, nullptr, ddim_cfg, sched, ddim_rng);
            samples[i] = out.data;
        }
        RngStream w1_rng = rng.child(2);
        MomentCheckReport mc = gaussian_moment_check(samples, {ddim_mu}, ddim_s, kTol, w1_rng);
        per_seed["ddim_mean_err"].push_back(mc.max_mean_err);
        per_seed["ddim_std_err"].push_back(mc.max_std_err);
        per_seed["ddim_w1"].push_back(mc.w1_distance);
        per_seed["ddim_pass"].push_back(mc.pass ? 1.0 : 0.0);

        BridgeGaussianDenoiser bridge_oracle(i2sb_mu0, i2sb_s0, i2sb_mu1, i2sb_s1, oracle_bridge);
        for (bool ot_ode : {false, true}) {
            SamplerConfig bc;
            bc.mode = SamplerMode::i2sb;
            bc.steps = 10;
            bc.ot_ode = ot_ode;
            bc.add_x1_noise = false;
            RngStream chain_rng = rng.child(ot_ode ? 3 : 4);
            for (int i = 0; i < kSamples; ++i) {
                LatentGrid x1(1, 2, 2, 2);
                for (double& v : x1.data) v = i2sb_mu1 + i2sb_s1 * chain_rng.normal();
                LatentGrid out = i2sb_sample(bridge_oracle, x1, nullptr, bc, oracle_bridge, chain_rng);
                samples[i] = out.data;
            }
            RngStream w1b_rng = rng.child(ot_ode ? 5 : 6);
            MomentCheckReport bmc = gaussian_moment_check(samples, {i2sb_mu0}, i2sb_s0, kTol, w1b_rng);
            const std::string tag = ot_ode ? "i2sb_ode" : "i2sb_stoch";
            per_seed[tag + "_mean_err"].push_back(bmc.max_mean_err);
            per_seed[tag + "_std_err"].push_back(bmc.max_std_err);
            per_seed[tag + "_w1"].push_back(bmc.w1_distance);
            per_seed[tag + "_pass"].push_back(bmc.pass ? 1.0 : 0.0);
        }

        // Pinned-bridge midpoint marginal vs the closed form.
        {
            const int T = mid_bridge.steps;
            const int mid = T / 2;
            std::vector<int> grid = sampling_grid(T, 10);
            RngStream path_rng = rng.child(7);
            for (int i = 0; i < kSamples; ++i) {
                LatentGrid x0(1, 2, 2, 2), x1(1, 2, 2, 2);
                for (double& v : x0.data) v = mid_mu0 + mid_s0 * path_rng.normal();
                for (double& v : x1.data) v = mid_mu1 + mid_s1 * path_rng.normal();
                LatentGrid x = x1;
                for (std::size_t j = 0; j + 1 < grid.size() && grid[j] > mid; ++j) {
                    BridgePosterior post = i2sb_posterior(x0, x, grid[j], grid[j + 1], mid_bridge);
                    x = std::move(post.mean);
                    if (post.stddev > 0.0)
                        for (double& v : x.data) v += post.stddev * path_rng.normal();
                }
                samples[i] = x.data;
            }
            const double total = mid_bridge.var_fwd[T];
            const double f = mid_bridge.var_fwd[mid];
            const double a = (total - f) / total, b = f / total;
            const double mean_true = a * mid_mu0 + b * mid_mu1;
            const double std_true =
                std::sqrt(a * a * mid_s0 * mid_s0 + b * b * mid_s1 * mid_s1 + f * (total - f) / total);
            RngStream w1m_rng = rng.child(8);
            MomentCheckReport mmc = gaussian_moment_check(samples, {mean_true}, std_true, kTol, w1m_rng);
            per_seed["bridge_mid_mean_err"].push_back(mmc.max_mean_err);
            per_seed["bridge_mid_std_err"].push_back(mmc.max_std_err);
            per_seed["bridge_mid_pass"].push_back(mmc.pass ? 1.0 : 0.0);
        }
    }

    for (const auto& [name, values] : per_seed) report.metrics[name] = summarize(values);
    return report;
}

ExperimentReport run_misalign(const ExperimentConfig& cfg) {
    Eigen::setNbThreads(cfg.training.threads);
    ExperimentReport report;
    report.name = "misalign";
    report.config_hash = config_hash(cfg);
    report.seeds = cfg.seeds;

    const std::string dir = cfg.out_dir + "/misalign";
    std::filesystem::create_directories(dir);

    NoiseSchedule sched = build_vp_schedule(cfg.schedule.kind, cfg.schedule.timesteps);
    std::vector<double> fractions, losses_aligned, losses_misaligned;

    for (std::uint64_t seed : cfg.seeds) {
        ExperimentConfig aligned_cfg = cfg;
        aligned_cfg.train_mode = TrainMode::palette_ddim;
        aligned_cfg.testbed.aligned = true;
        ExperimentConfig misaligned_cfg = aligned_cfg;
        misaligned_cfg.testbed.aligned = false;

        // Same template family for both arms; only durations differ.
        Testbed aligned_tb(aligned_cfg.testbed, testbed_seed(seed));
        Testbed misaligned_tb(misaligned_cfg.testbed, testbed_seed(seed));

        DenoiserParams aligned_params = train_or_load(aligned_cfg, seed, dir + "/checkpoints");
        DenoiserParams misaligned_params = train_or_load(misaligned_cfg, seed, dir + "/checkpoints");

        const double loss_ali =
            held_out_loss(aligned_params, aligned_tb, aligned_cfg, TrainMode::palette_ddim, &sched, nullptr, seed);
        const double loss_mis = held_out_loss(misaligned_params, misaligned_tb, misaligned_cfg,
                                              TrainMode::palette_ddim, &sched, nullptr, seed);

        losses_aligned.push_back(loss_ali);
        losses_misaligned.push_back(loss_mis);
        fractions.push_back(misalignment_fraction(loss_mis, loss_ali));

        // Snapshot one translation from the misaligned arm.
        RngStream snap_rng = RngStream(seed).child(0x59AF);
        LatentPair pair = misaligned_tb.synth_pair(snap_rng);
        MlpDenoiser model(misaligned_params, pair.z_text);
        SamplerConfig sc = cfg.sampler;
        sc.mode = SamplerMode::ddim;
        sc.guidance_w = 0.0;
        LatentGrid x_init = noise_grid(cfg.testbed.channels, cfg.testbed.height, cfg.testbed.max_width,
                                       pair.z_text.true_width, snap_rng);
        LatentGrid out = ddim_sample(model, x_init, &pair.embed, sc, sched, snap_rng);
        snapshot_triple(dir, "seed" + std::to_string(seed), pair.z_text, pair.z_audio, out);
    }

    report.metrics["misalignment_fraction"] = summarize(fractions);
    report.metrics["loss_aligned"] = summarize(losses_aligned);
    report.metrics["loss_misaligned"] = summarize(losses_misaligned);
    report.metrics["fraction_above_half"] =
        MetricValue{summarize(fractions).mean > 0.5 ? 1.0 : 0.0, 0.0, static_cast<int>(fractions.size())};
    return report;
}

namespace {

struct SweepAccumulator {
    std::map<double, std::vector<double>> content_delta;  // per w, per seed
    std::map<double, std::vector<double>> style_delta;
};

}  // namespace

ExperimentReport run_cfg_sweep(const ExperimentConfig& cfg) {
    Eigen::setNbThreads(cfg.training.threads);
    ExperimentReport report;
    report.name = "cfg-sweep";
    report.config_hash = config_hash(cfg);
    report.seeds = cfg.seeds;

    const std::string dir = cfg.out_dir + "/cfg-sweep";
    std::filesystem::create_directories(dir);
    const std::vector<double> sweep = {0.0, 1.0, 2.0, 4.0};

    ExperimentConfig recipe = cfg;
    recipe.train_mode = TrainMode::i2sb;
    BridgeSchedule bridge = build_bridge_schedule(cfg.schedule.bridge_timesteps, cfg.schedule.bridge_beta_max);

    SweepAccumulator acc;
    for (std::uint64_t seed : cfg.seeds) {
        Testbed tb(recipe.testbed, testbed_seed(seed));
        DenoiserParams params = train_or_load(recipe, seed, cfg.out_dir + "/checkpoints");
        MlpDenoiser model(params);

        RngStream eval_rng = RngStream(seed).child(0xEE);
        RngStream style_rng = RngStream(seed).child(0x57);
        std::vector<LatentPair> pairs(cfg.eval.pairs);
        for (LatentPair& p : pairs) p = tb.synth_pair(eval_rng);

        std::map<double, std::vector<LatentGrid>> outputs;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            StyleParams target;
            target.gain = style_rng.uniform(recipe.testbed.gain_min, recipe.testbed.gain_max);
            target.pitch_bias = style_rng.uniform(recipe.testbed.pitch_min, recipe.testbed.pitch_max);
            target.mod_rate = style_rng.uniform(recipe.testbed.mod_min, recipe.testbed.mod_max);
            StyleEmbedding c_target = tb.style_embedding(target, style_rng);

            for (double w : sweep) {
                SamplerConfig sc = cfg.sampler;
                sc.mode = SamplerMode::i2sb;
                sc.guidance_w = w;
                RngStream chain_rng = eval_rng.child(i);  // shared across w
                outputs[w].push_back(i2sb_sample(model, pairs[i].z_text, &c_target, sc, bridge, chain_rng));
            }
        }

        for (double w : sweep) {
            double content_sum = 0.0, style_sum = 0.0;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                const double base = content_score(tb, outputs[0.0][i], pairs[i].content).value;
                const double cur = content_score(tb, outputs[w][i], pairs[i].content).value;
                content_sum += base - cur;
                StyleParams est_base, est_cur;
                try {
                    est_base = tb.oracle_style_estimate(outputs[0.0][i]);
                    est_cur = tb.oracle_style_estimate(outputs[w][i]);
                    style_sum += style_param_distance(recipe.testbed, est_base, est_cur);
                } catch (const DecodeError&) {
                    style_sum += 1.0;  // fully degenerate output counts as maximal change
                }
            }
            acc.content_delta[w].push_back(content_sum / pairs.size());
            acc.style_delta[w].push_back(style_sum / pairs.size());
        }

        snapshot_triple(dir, "seed" + std::to_string(seed), pairs[0].z_text, pairs[0].z_audio,
                        outputs[sweep.back()][0]);
    }

    for (double w : sweep) {
        const std::string suffix = "_w" + std::to_string(static_cast<int>(w));
        report.metrics["content_delta" + suffix] = summarize(acc.content_delta[w]);
        report.metrics["style_delta" + suffix] = summarize(acc.style_delta[w]);
    }
    return report;
}

ExperimentReport run_speaker_swap(const ExperimentConfig& cfg) {
    Eigen::setNbThreads(cfg.training.threads);
    if (cfg.testbed.speakers < 2)
        throw std::invalid_argument("speaker-swap: testbed must configure at least 2 speakers");

    ExperimentReport report;
    report.name = "speaker-swap";
    report.config_hash = config_hash(cfg);
    report.seeds = cfg.seeds;

    const std::string dir = cfg.out_dir + "/speaker-swap";
    std::filesystem::create_directories(dir);

    ExperimentConfig recipe = cfg;
    recipe.train_mode = TrainMode::i2sb;
    BridgeSchedule bridge = build_bridge_schedule(cfg.schedule.bridge_timesteps, cfg.schedule.bridge_beta_max);

    std::vector<double> embed_effects, decoder_effects, embed_content, decoder_content;
    for (std::uint64_t seed : cfg.seeds) {
        Testbed tb(recipe.testbed, testbed_seed(seed));
        DenoiserParams params = train_or_load(recipe, seed, cfg.out_dir + "/checkpoints");
        MlpDenoiser model(params);

        RngStream pair_rng = RngStream(seed).child(0x5B);
        std::vector<LatentPair> pairs(cfg.eval.pairs);
        for (LatentPair& p : pairs) p = tb.synth_pair(pair_rng);

        SamplerConfig sc = cfg.sampler;
        sc.mode = SamplerMode::i2sb;

        // Average the effect sizes over several speaker/style pairings;
        // a single draw is dominated by how different the two sampled
        // voices happen to be.
        constexpr int kDraws = 6;
        SwapEffects sum;
        RngStream rng = RngStream(seed).child(0x5A);
        for (int draw = 0; draw < kDraws; ++draw) {
            StyleParams style_a, style_b;
            style_a.gain = rng.uniform(recipe.testbed.gain_min, recipe.testbed.gain_max);
            style_a.pitch_bias = rng.uniform(recipe.testbed.pitch_min, recipe.testbed.pitch_max);
            style_a.mod_rate = rng.uniform(recipe.testbed.mod_min, recipe.testbed.mod_max);
            style_b.gain = rng.uniform(recipe.testbed.gain_min, recipe.testbed.gain_max);
            style_b.pitch_bias = rng.uniform(recipe.testbed.pitch_min, recipe.testbed.pitch_max);
            style_b.mod_rate = rng.uniform(recipe.testbed.mod_min, recipe.testbed.mod_max);
            StyleEmbedding c_a = tb.style_embedding(style_a, rng, 0.0);
            StyleEmbedding c_b = tb.style_embedding(style_b, rng, 0.0);
            const int speaker_a = rng.uniform_int(0, recipe.testbed.speakers - 1);
            int speaker_b = rng.uniform_int(0, recipe.testbed.speakers - 2);
            if (speaker_b >= speaker_a) ++speaker_b;

            RngStream swap_rng = RngStream(seed).child(0x5C0 + draw);
            SwapEffects fx =
                swap_effect_sizes(model, tb, speaker_a, speaker_b, c_a, c_b, pairs, sc, bridge, swap_rng);
            sum.embed_effect += fx.embed_effect;
            sum.decoder_effect += fx.decoder_effect;
            sum.embed_content_delta += fx.embed_content_delta;
            sum.decoder_content_delta += fx.decoder_content_delta;
        }
        embed_effects.push_back(sum.embed_effect / kDraws);
        decoder_effects.push_back(sum.decoder_effect / kDraws);
        embed_content.push_back(sum.embed_content_delta / kDraws);
        decoder_content.push_back(sum.decoder_content_delta / kDraws);

        RngStream snap_rng = RngStream(seed).child(0x5D);
        LatentGrid base = i2sb_sample(model, pairs[0].z_text, &pairs[0].embed, sc, bridge, snap_rng);
        snapshot_triple(dir, "seed" + std::to_string(seed), pairs[0].z_text, pairs[0].z_audio, base);
    }

    report.metrics["embed_effect"] = summarize(embed_effects);
    report.metrics["decoder_effect"] = summarize(decoder_effects);
    report.metrics["embed_content_delta"] = summarize(embed_content);
    report.metrics["decoder_content_delta"] = summarize(decoder_content);
    MetricValue diff;
    diff.n = static_cast<int>(cfg.seeds.size());
    diff.mean = report.metrics["decoder_effect"].mean - report.metrics["embed_effect"].mean;
    report.metrics["decoder_minus_embed"] = diff;
    return report;
}

ExperimentReport run_experiment(const std::string& name, const ExperimentConfig& cfg) {
    validate(cfg);
    ExperimentReport report;
    if (name == "gaussian-oracle")
        report = run_gaussian_oracle(cfg);
    else if (name == "misalign")
        report = run_misalign(cfg);
    else if (name == "cfg-sweep")
        report = run_cfg_sweep(cfg);
    else if (name == "speaker-swap")
        report = run_speaker_swap(cfg);
    else
        throw std::invalid_argument("unknown experiment '" + name +
                                    "' (expected gaussian-oracle, misalign, cfg-sweep or speaker-swap)");

    const std::string dir = cfg.out_dir + "/" + name;
    std::filesystem::create_directories(dir);
    write_report_csv(dir + "/report.csv", report);
    write_report_json(dir + "/report.json", report);
    return report;
}

}  // namespace bridgelab
