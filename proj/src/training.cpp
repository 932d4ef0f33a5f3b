#include "bridgelab/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "bridgelab/io.hpp"

namespace bridgelab {

AdamState AdamState::zeros_like(const DenoiserConfig& config) {
    AdamState s;
    s.m = DenoiserTensors::zeros_like(config);
    s.v = DenoiserTensors::zeros_like(config);
    return s;
}

namespace {

std::vector<Eigen::MatrixXd*> tensor_list(DenoiserTensors& t) {
    std::vector<Eigen::MatrixXd*> list;
    visit_tensors(t, [&](const char*, Eigen::MatrixXd& m) { list.push_back(&m); });
    return list;
}

}  // namespace

void adam_step(DenoiserParams& params, const DenoiserGrads& grads, AdamState& state, double learning_rate) {
    std::vector<Eigen::MatrixXd*> p = tensor_list(params.tensors);
    std::vector<Eigen::MatrixXd*> g = tensor_list(const_cast<DenoiserGrads&>(grads));
    std::vector<Eigen::MatrixXd*> m = tensor_list(state.m);
    std::vector<Eigen::MatrixXd*> v = tensor_list(state.v);

    // Validate everything before mutating any state.
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols() || m[i]->rows() != p[i]->rows() ||
            v[i]->rows() != p[i]->rows())
            throw std::invalid_argument("adam_step: gradient shapes do not match parameters");
        if (!g[i]->allFinite()) throw std::runtime_error("adam_step: non-finite gradients, step aborted");
    }

    state.step += 1;
    const double b1 = state.config.beta1;
    const double b2 = state.config.beta2;
    const double eps = state.config.eps_hat;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < p.size(); ++i) {
        *m[i] = b1 * *m[i] + (1.0 - b1) * *g[i];
        *v[i] = b2 * *v[i] + (1.0 - b2) * g[i]->cwiseProduct(*g[i]);
        p[i]->array() -= learning_rate * (m[i]->array() / corr1) / ((v[i]->array() / corr2).sqrt() + eps);
    }
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "palette_ddim") return TrainMode::palette_ddim;
    if (name == "i2sb") return TrainMode::i2sb;
    throw std::invalid_argument("unknown training mode: '" + name + "'");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::palette_ddim ? "palette_ddim" : "i2sb"; }

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
    if (cfg.total_steps < 0) throw std::invalid_argument("training: total_steps must be >= 0");
    if (cfg.cond_dropout < 0.0 || cfg.cond_dropout > 1.0)
        throw std::invalid_argument("training: cond_dropout must be in [0, 1]");
    if (cfg.threads < 1) throw std::invalid_argument("training: threads must be >= 1");
    if (cfg.checkpoint_interval < 0) throw std::invalid_argument("training: checkpoint_interval must be >= 0");
}

std::vector<DenoiserInput> PreparedBatch::inputs() const {
    std::vector<DenoiserInput> ins(states.size());
    for (std::size_t k = 0; k < states.size(); ++k)
        ins[k] = DenoiserInput{&states[k], sources[k], timesteps[k], conditions[k]};
    return ins;
}

PreparedBatch prepare_batch(const std::vector<LatentPair>& batch, TrainMode mode, const NoiseSchedule* sched,
                            const BridgeSchedule* bridge, double cond_dropout, const DenoiserConfig& config,
                            RngStream& rng, int threads) {
    if (batch.empty()) throw std::invalid_argument("prepare_batch: empty batch");
    if (mode == TrainMode::palette_ddim && sched == nullptr)
        throw std::invalid_argument("prepare_batch: palette_ddim needs a noise schedule");
    if (mode == TrainMode::i2sb && bridge == nullptr)
        throw std::invalid_argument("prepare_batch: i2sb needs a bridge schedule");
    if (mode == TrainMode::palette_ddim && config.cond_mode != CondMode::concat_channels)
        throw std::invalid_argument("prepare_batch: palette_ddim trains a concat_channels network");
    if (mode == TrainMode::i2sb && config.cond_mode != CondMode::embed_inject)
        throw std::invalid_argument("prepare_batch: i2sb trains an embed_inject network");

    const std::size_t n = batch.size();
    PreparedBatch out;
    out.states.resize(n);
    out.sources.assign(n, nullptr);
    out.timesteps.resize(n);
    out.conditions.assign(n, nullptr);
    out.masks.resize(n);
    out.target.resize(config.output_dim(), static_cast<Eigen::Index>(n));

    // Per-example seeds drawn up front keep the fill deterministic for
    // any worker count.
    std::vector<std::uint64_t> seeds(n);
    for (std::uint64_t& s : seeds) s = rng.next_u64();

    std::vector<int> dropped(n, 0);
    const int total_t = mode == TrainMode::palette_ddim ? sched->steps : bridge->steps;

    auto fill = [&](std::size_t k) {
        const LatentPair& pair = batch[k];
        require_same_shape(pair.z_text, pair.z_audio, "prepare_batch");
        if (pair.z_audio.channels != config.channels || pair.z_audio.height != config.height ||
            pair.z_audio.width != config.width)
            throw std::invalid_argument("prepare_batch: pair shape does not match network configuration");

        RngStream ex(seeds[k]);
        const int t = ex.uniform_int(1, total_t);
        const bool drop = cond_dropout >= 1.0 || (cond_dropout > 0.0 && ex.uniform() < cond_dropout);
        out.timesteps[k] = t;
        out.conditions[k] = drop ? nullptr : &pair.embed;
        dropped[k] = drop ? 1 : 0;
        out.masks[k] = &pair.z_audio;

        if (mode == TrainMode::palette_ddim) {
            LatentGrid eps = pair.z_audio;
            for (double& v : eps.data) v = ex.normal();
            out.states[k] = forward_diffuse(pair.z_audio, eps, t, *sched);
            out.sources[k] = &pair.z_text;
            out.target.col(static_cast<Eigen::Index>(k)) = grid_to_vector(v_from(pair.z_audio, eps, t, *sched));
        } else {
            const BridgeWeights w = bridge_marginal_weights(*bridge, t);
            LatentGrid state = pair.z_audio;
            for (std::size_t i = 0; i < state.data.size(); ++i)
                state.data[i] = w.weight_start * pair.z_audio.data[i] + w.weight_end * pair.z_text.data[i] +
                                w.stddev * ex.normal();
            out.states[k] = std::move(state);
            out.target.col(static_cast<Eigen::Index>(k)) = grid_to_vector(pair.z_audio);
        }
    };

    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t k = 0; k < n; ++k) fill(k);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t k = static_cast<std::size_t>(w); k < n; k += workers) fill(k);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    for (int d : dropped) out.dropped_conditions += d;
    return out;
}

TrainStepStats training_step(DenoiserParams& params, AdamState& state, const std::vector<LatentPair>& batch,
                             TrainMode mode, const NoiseSchedule* sched, const BridgeSchedule* bridge,
                             const TrainConfig& cfg, RngStream& rng) {
    PreparedBatch prep =
        prepare_batch(batch, mode, sched, bridge, cfg.cond_dropout, params.config, rng, cfg.threads);

    ForwardCache cache;
    std::vector<DenoiserInput> inputs = prep.inputs();
    Eigen::MatrixXd y = denoiser_forward_batch(params, inputs, &cache);
    MaskedLoss loss = masked_mse(y, prep.target, prep.masks);
    DenoiserGrads grads = denoiser_backward(params, cache, loss.grad);
    adam_step(params, grads, state, cfg.learning_rate);
    return TrainStepStats{loss.value, prep.dropped_conditions};
}

double eval_loss(const DenoiserParams& params, const std::vector<LatentPair>& batch, TrainMode mode,
                 const NoiseSchedule* sched, const BridgeSchedule* bridge, RngStream& rng, int threads) {
    PreparedBatch prep = prepare_batch(batch, mode, sched, bridge, 0.0, params.config, rng, threads);
    std::vector<DenoiserInput> inputs = prep.inputs();
    Eigen::MatrixXd y = denoiser_forward_batch(params, inputs, nullptr);
    return masked_mse(y, prep.target, prep.masks).value;
}

TrainResult train(DenoiserParams& params, AdamState& state, TrainMode mode, const NoiseSchedule* sched,
                  const BridgeSchedule* bridge, const TrainConfig& cfg, const BatchProvider& provider,
                  const std::string& out_dir, const std::string& run_name, long start_step) {
    validate(cfg);
    Eigen::setNbThreads(cfg.threads);  // GEMM threads are part of the run configuration
    std::filesystem::create_directories(out_dir);

    TrainResult result;
    result.loss_csv = out_dir + "/" + run_name + "_loss.csv";
    std::ofstream csv(result.loss_csv, std::ios::trunc);
    if (!csv) throw std::runtime_error("train: cannot open " + result.loss_csv);
    csv << "step,loss,seconds\n";

    RngStream run_rng = RngStream(cfg.seed).child(0xDA7A);
    const auto t0 = std::chrono::steady_clock::now();
    double loss_value = 0.0;

    const long end_step = start_step + cfg.total_steps;
    for (long step = start_step; step < end_step; ++step) {
        std::vector<LatentPair> batch = provider(step, run_rng);
        TrainStepStats stats = training_step(params, state, batch, mode, sched, bridge, cfg, run_rng);
        loss_value = stats.loss;
        if (!std::isfinite(loss_value))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1));

        const long done = step + 1;
        if (done % 50 == 0 || done == end_step) {
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            csv << done << "," << loss_value << "," << seconds << "\n";
            result.curve.emplace_back(done, loss_value);
        }
        if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 && done != end_step) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "_step%06ld", done);
            save_checkpoint(out_dir + "/" + run_name + buf + ".blcp", params, &state, done);
        }
    }

    result.final_step = end_step;
    result.final_loss = loss_value;
    result.final_checkpoint = out_dir + "/" + run_name + "_final.blcp";
    save_checkpoint(result.final_checkpoint, params, &state, end_step);
    csv.close();
    return result;
}

}  // namespace bridgelab
