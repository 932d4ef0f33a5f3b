#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bridgelab/denoiser.hpp"
#include "bridgelab/schedule.hpp"
#include "bridgelab/testbed.hpp"

namespace bridgelab {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

struct AdamState {
    DenoiserTensors m;  // first moments
    DenoiserTensors v;  // second moments
    long step = 0;
    AdamConfig config;

    static AdamState zeros_like(const DenoiserConfig& config);
};

// Bias-corrected Adam update, in place. Throws on shape mismatch or
// non-finite gradients (the step is aborted before any state changes).
void adam_step(DenoiserParams& params, const DenoiserGrads& grads, AdamState& state, double learning_rate);

enum class TrainMode { palette_ddim, i2sb };

TrainMode train_mode_from_string(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 64;
    int total_steps = 5000;
    double cond_dropout = 0.1;
    std::uint64_t seed = 0;
    int threads = 2;              // batch-parallel workers / GEMM threads
    int checkpoint_interval = 0;  // 0 = final checkpoint only
};

void validate(const TrainConfig& cfg);

// Everything the network consumes for one optimization or evaluation
// step. Pointer members reference the originating LatentPair batch, which
// must stay alive.
struct PreparedBatch {
    std::vector<LatentGrid> states;                 // x_t per example
    std::vector<const LatentGrid*> sources;         // z_text in concat mode, else nullptr
    std::vector<int> timesteps;
    std::vector<const StyleEmbedding*> conditions;  // nullptr after dropout
    Eigen::MatrixXd target;                         // output_dim x B
    std::vector<const LatentGrid*> masks;           // loss mask carriers (z_audio)
    int dropped_conditions = 0;

    std::vector<DenoiserInput> inputs() const;
};

// Draws (t, noise, dropout) per example and assembles the step inputs.
// palette_ddim: x_t = forward_diffuse(z_audio, eps, t), target = v.
// i2sb: x_t from the bridge pinned at (z_audio, z_text), target = z_audio.
// Per-example randomness comes from child streams seeded off `rng`, so
// results do not depend on how the fill work is scheduled.
PreparedBatch prepare_batch(const std::vector<LatentPair>& batch, TrainMode mode, const NoiseSchedule* sched,
                            const BridgeSchedule* bridge, double cond_dropout, const DenoiserConfig& config,
                            RngStream& rng, int threads);

struct TrainStepStats {
    double loss = 0.0;
    int dropped_conditions = 0;
};

// One optimization step: masked MSE on the prepared batch, exact
// backward pass, one Adam update.
TrainStepStats training_step(DenoiserParams& params, AdamState& state, const std::vector<LatentPair>& batch,
                             TrainMode mode, const NoiseSchedule* sched, const BridgeSchedule* bridge,
                             const TrainConfig& cfg, RngStream& rng);

// Masked MSE without updating anything; dropout is disabled so the
// conditional model is what gets measured.
double eval_loss(const DenoiserParams& params, const std::vector<LatentPair>& batch, TrainMode mode,
                 const NoiseSchedule* sched, const BridgeSchedule* bridge, RngStream& rng, int threads);

using BatchProvider = std::function<std::vector<LatentPair>(long step, RngStream& rng)>;

struct TrainResult {
    long final_step = 0;
    double final_loss = 0.0;
    std::vector<std::pair<long, double>> curve;  // rows mirrored from the CSV
    std::string final_checkpoint;
    std::string loss_csv;
};

// Full training loop. Writes <run_name>_loss.csv (header step,loss,seconds,
// one row every 50 steps plus the final step) and checkpoints under
// out_dir; the final checkpoint always exists, even at total_steps = 0.
TrainResult train(DenoiserParams& params, AdamState& state, TrainMode mode, const NoiseSchedule* sched,
                  const BridgeSchedule* bridge, const TrainConfig& cfg, const BatchProvider& provider,
                  const std::string& out_dir, const std::string& run_name, long start_step = 0);

}  // namespace bridgelab
