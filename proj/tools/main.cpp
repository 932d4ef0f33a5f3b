#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "bridgelab/config.hpp"
#include "bridgelab/experiments.hpp"
#include "bridgelab/io.hpp"
#include "bridgelab/metrics.hpp"
#include "bridgelab/sampler.hpp"
#include "bridgelab/training.hpp"
#include "json.hpp"

namespace bl = bridgelab;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<int> steps;
    std::optional<double> eta;
    std::optional<double> guidance_w;
    bool ot_ode = false;
    bool add_x1_noise = false;
};

bl::ExperimentConfig resolve_config(const GlobalOptions& opts) {
    bl::ExperimentConfig cfg =
        opts.config_path.empty() ? bl::default_config() : bl::load_config_file(opts.config_path);
    if (opts.seed) cfg.seeds = {*opts.seed};
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.steps) cfg.sampler.steps = *opts.steps;
    if (opts.eta) cfg.sampler.eta = *opts.eta;
    if (opts.guidance_w) cfg.sampler.guidance_w = *opts.guidance_w;
    if (opts.ot_ode) cfg.sampler.ot_ode = true;
    if (opts.add_x1_noise) cfg.sampler.add_x1_noise = true;
    bl::validate(cfg);
    return cfg;
}

std::uint64_t primary_seed(const bl::ExperimentConfig& cfg) { return cfg.seeds.front(); }

int cmd_gen_data(const bl::ExperimentConfig& cfg, long count) {
    if (count < 0) throw std::invalid_argument("gen-data: count must be >= 0");
    std::filesystem::create_directories(cfg.out_dir);
    const std::uint64_t seed = primary_seed(cfg);
    bl::Testbed tb(cfg.testbed, bl::mix_seed(seed, 0xBED));
    bl::RngStream rng = bl::RngStream(seed).child(0xDA7A);

    std::vector<bl::LatentPair> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) pairs.push_back(tb.synth_pair(rng));

    const std::string path = cfg.dataset_path();
    bl::save_dataset(path, pairs);

    nlohmann::json manifest;
    manifest["config_hash"] = bl::config_hash(cfg);
    manifest["count"] = count;
    manifest["seed"] = seed;
    std::ofstream mf(path + ".manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";

    std::printf("wrote %ld pairs to %s (config %s)\n", count, path.c_str(), bl::config_hash(cfg).c_str());
    return 0;
}

int cmd_train(const bl::ExperimentConfig& cfg, const std::string& resume) {
    const std::string dataset_path = cfg.dataset_path();
    if (!std::filesystem::exists(dataset_path))
        throw std::runtime_error("train: missing prerequisite dataset '" + dataset_path +
                                 "' (run gen-data first)");
    std::vector<bl::LatentPair> dataset = bl::load_dataset(dataset_path);
    if (dataset.empty()) throw std::runtime_error("train: dataset is empty");

    bl::NoiseSchedule sched;
    bl::BridgeSchedule bridge;
    const bl::NoiseSchedule* sched_ptr = nullptr;
    const bl::BridgeSchedule* bridge_ptr = nullptr;
    if (cfg.train_mode == bl::TrainMode::palette_ddim) {
        sched = bl::build_vp_schedule(cfg.schedule.kind, cfg.schedule.timesteps);
        sched_ptr = &sched;
    } else {
        bridge = bl::build_bridge_schedule(cfg.schedule.bridge_timesteps, cfg.schedule.bridge_beta_max);
        bridge_ptr = &bridge;
    }

    const std::uint64_t seed = primary_seed(cfg);
    bl::TrainConfig tc = cfg.training;
    tc.seed = seed;

    bl::DenoiserParams params;
    bl::AdamState adam;
    long start_step = 0;
    if (!resume.empty()) {
        bl::Checkpoint ckpt = bl::load_checkpoint(resume);
        if (!ckpt.has_adam) throw std::runtime_error("train: checkpoint has no optimizer state, cannot resume");
        params = std::move(ckpt.params);
        adam = std::move(ckpt.adam);
        start_step = ckpt.step;
        std::printf("resuming from %s at step %ld\n", resume.c_str(), start_step);
    } else {
        bl::RngStream init_rng = bl::RngStream(seed).child(0x1A17);
        params = bl::DenoiserParams::init(cfg.denoiser_config(), init_rng);
        adam = bl::AdamState::zeros_like(params.config);
    }

    bl::BatchProvider provider = [&dataset, &tc](long, bl::RngStream& rng) {
        std::vector<bl::LatentPair> batch(tc.batch_size);
        for (bl::LatentPair& p : batch)
            p = dataset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(dataset.size()) - 1))];
        return batch;
    };

    bl::TrainResult result = bl::train(params, adam, cfg.train_mode, sched_ptr, bridge_ptr, tc, provider,
                                       cfg.out_dir, "train_seed" + std::to_string(seed), start_step);

    nlohmann::json manifest;
    manifest["config_hash"] = bl::config_hash(cfg);
    manifest["seed"] = seed;
    manifest["final_step"] = result.final_step;
    manifest["checkpoint"] = result.final_checkpoint;
    std::ofstream mf(cfg.out_dir + "/train_seed" + std::to_string(seed) + ".manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";

    std::printf("trained to step %ld, final loss %.6f\ncheckpoint: %s\nloss curve: %s\n", result.final_step,
                result.final_loss, result.final_checkpoint.c_str(), result.loss_csv.c_str());
    return 0;
}

int cmd_sample(const bl::ExperimentConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty())
        throw std::runtime_error("sample: missing prerequisite checkpoint (pass --checkpoint <path>)");
    bl::Checkpoint ckpt = bl::load_checkpoint(checkpoint);
    const std::uint64_t seed = primary_seed(cfg);
    bl::Testbed tb(cfg.testbed, bl::mix_seed(seed, 0xBED));
    bl::RngStream rng = bl::RngStream(seed).child(0x5A3);
    bl::LatentPair pair = tb.synth_pair(rng);

    std::filesystem::create_directories(cfg.out_dir);
    bl::LatentGrid out;
    if (cfg.sampler.mode == bl::SamplerMode::i2sb) {
        bl::BridgeSchedule bridge =
            bl::build_bridge_schedule(cfg.schedule.bridge_timesteps, cfg.schedule.bridge_beta_max);
        bl::MlpDenoiser model(ckpt.params);
        out = bl::i2sb_sample(model, pair.z_text, &pair.embed, cfg.sampler, bridge, rng);
    } else {
        bl::NoiseSchedule sched = bl::build_vp_schedule(cfg.schedule.kind, cfg.schedule.timesteps);
        bl::MlpDenoiser model(ckpt.params, pair.z_text);
        bl::LatentGrid x_init(pair.z_text.channels, pair.z_text.height, pair.z_text.width,
                              pair.z_text.true_width);
        for (double& v : x_init.data) v = rng.normal();
        out = bl::ddim_sample(model, x_init, &pair.embed, cfg.sampler, sched, rng);
    }

    bl::write_pgm(cfg.out_dir + "/sample_z_text.pgm", pair.z_text);
    bl::write_pgm(cfg.out_dir + "/sample_z_audio.pgm", pair.z_audio);
    bl::write_pgm(cfg.out_dir + "/sample_output.pgm", out);

    bl::ScoreResult content = bl::content_score(tb, out, pair.content);
    bl::ScoreResult style = bl::style_score(tb, out, pair.style);
    std::printf("content score %.3f%s, style error %.3f%s\nsnapshots in %s\n", content.value,
                content.degenerate ? " (degenerate)" : "", style.value, style.degenerate ? " (degenerate)" : "",
                cfg.out_dir.c_str());
    return 0;
}

int cmd_grad_check(const bl::ExperimentConfig& cfg) {
    const std::uint64_t seed = primary_seed(cfg);
    bl::Testbed tb(cfg.testbed, bl::mix_seed(seed, 0xBED));
    bl::RngStream rng = bl::RngStream(seed).child(0x6C);

    bl::DenoiserParams params = bl::DenoiserParams::random_init(cfg.denoiser_config(), rng);
    const bool concat = params.config.cond_mode == bl::CondMode::concat_channels;

    std::vector<bl::LatentPair> pairs(4);
    std::vector<bl::LatentGrid> states;
    for (bl::LatentPair& p : pairs) p = tb.synth_pair(rng);
    for (bl::LatentPair& p : pairs) {
        bl::LatentGrid noisy = p.z_audio;
        for (double& v : noisy.data) v += 0.3 * rng.normal();
        states.push_back(std::move(noisy));
    }

    const int max_t = params.config.max_timestep;
    std::vector<bl::DenoiserInput> batch;
    std::vector<const bl::LatentGrid*> targets;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const int t = 1 + static_cast<int>(i * (max_t - 1) / pairs.size());
        batch.push_back(bl::DenoiserInput{&states[i], concat ? &pairs[i].z_text : nullptr, t, &pairs[i].embed});
        targets.push_back(&pairs[i].z_audio);
    }

    bl::GradCheckReport report = bl::grad_check(params, batch, targets, 1e-4, 120, rng);
    std::printf("grad-check: %d parameters, max relative error %.3e at %s[%zu] -> %s\n", report.n_checked,
                report.max_rel_error, report.worst_param.c_str(), report.worst_index,
                report.pass ? "PASS" : "FAIL");
    return report.pass ? 0 : 1;
}

int cmd_experiment(const bl::ExperimentConfig& cfg, const std::string& name) {
    bl::ExperimentReport report = bl::run_experiment(name, cfg);
    std::printf("experiment %s (config %s)\n", name.c_str(), report.config_hash.c_str());
    for (const auto& [metric, value] : report.metrics)
        std::printf("  %-28s %12.6f +- %.6f (n=%d)\n", metric.c_str(), value.mean, value.stderr, value.n);
    if (name == "misalign") {
        const double fraction = report.metrics.at("misalignment_fraction").mean;
        std::printf("misalignment fraction %.4f -> %s (threshold 0.5)\n", fraction,
                    fraction > 0.5 ? "PASS" : "FAIL");
    }
    std::printf("reports in %s/%s\n", cfg.out_dir.c_str(), name.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bridgelab: diffusion and bridge samplers over a synthetic latent style-transfer testbed"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "JSON experiment config (defaults are built in)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed list with one seed");
    app.add_option("--out", opts.out_dir, "override the output directory");

    int steps_value = 0;
    double eta_value = 0.0, w_value = 0.0;
    auto* steps_opt = app.add_option("--steps", steps_value, "sampling steps");
    auto* eta_opt = app.add_option("--eta", eta_value, "DDIM stochasticity in [0,1]");
    auto* w_opt = app.add_option("--guidance-w", w_value, "classifier-free guidance weight");
    app.add_flag("--ot-ode", opts.ot_ode, "noise-free bridge sampling");
    app.add_flag("--add-x1-noise", opts.add_x1_noise, "perturb the boundary sample before sampling");

    long gen_count = 1024;
    auto* gen = app.add_subcommand("gen-data", "synthesize a paired-latent dataset");
    gen->add_option("--count", gen_count, "number of pairs");

    std::string resume_path;
    auto* train = app.add_subcommand("train", "train the configured model on the dataset");
    train->add_option("--resume", resume_path, "checkpoint to continue from");

    std::string checkpoint_path;
    auto* sample = app.add_subcommand("sample", "run the configured sampler from a checkpoint");
    sample->add_option("--checkpoint", checkpoint_path, "trained checkpoint (.blcp)");

    auto* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient verification");

    std::string experiment_name;
    auto* experiment = app.add_subcommand("experiment", "run a named experiment");
    experiment
        ->add_option("name", experiment_name, "gaussian-oracle | misalign | cfg-sweep | speaker-swap")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*seed_opt) opts.seed = seed_value;
        if (*steps_opt) opts.steps = steps_value;
        if (*eta_opt) opts.eta = eta_value;
        if (*w_opt) opts.guidance_w = w_value;
        bl::ExperimentConfig cfg = resolve_config(opts);

        if (gen->parsed()) return cmd_gen_data(cfg, gen_count);
        if (train->parsed()) return cmd_train(cfg, resume_path);
        if (sample->parsed()) return cmd_sample(cfg, checkpoint_path);
        if (gradcheck->parsed()) return cmd_grad_check(cfg);
        if (experiment->parsed()) return cmd_experiment(cfg, experiment_name);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
