#pragma once

#include <string>
#include <vector>

#include "bridgelab/denoiser.hpp"
#include "bridgelab/grid.hpp"
#include "bridgelab/rng.hpp"
#include "bridgelab/schedule.hpp"

namespace bridgelab {

enum class SamplerMode { ddim, i2sb };

SamplerMode sampler_mode_from_string(const std::string& name);
std::string to_string(SamplerMode mode);

struct SamplerConfig {
    int steps = 10;
    double eta = 0.0;          // DDIM stochasticity in [0, 1]
    double guidance_w = 0.0;   // classifier-free guidance weight, >= 0
    SamplerMode mode = SamplerMode::ddim;
    bool ot_ode = false;       // drop the bridge posterior noise
    bool add_x1_noise = false; // perturb the boundary sample once before sampling
    double x1_noise_std = 0.1;
};

void validate(const SamplerConfig& cfg, int schedule_steps);

// Evenly spaced integer grid from T down to 0 inclusive (steps+1 points,
// strictly decreasing).
std::vector<int> sampling_grid(int schedule_steps, int steps);

// One DDIM update from time t to s_next < t. With eta == 0 this is the
// deterministic alpha[s]*x0_hat + sigma[s]*eps_hat move and the random
// stream is never touched.
LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& v_pred, int t, int s_next,
                     const NoiseSchedule& sched, double eta, RngStream& rng);

// Full DDIM chain. `cond` may be nullptr for unconditional sampling;
// guidance kicks in when cfg.guidance_w > 0.
LatentGrid ddim_sample(const Denoiser& denoiser, const LatentGrid& x_init, const StyleEmbedding* cond,
                       const SamplerConfig& cfg, const NoiseSchedule& sched, RngStream& rng);

struct BridgePosterior {
    LatentGrid mean;
    double stddev = 0.0;
};

// Posterior of the pinned bridge at time s_next, given the prediction of
// the time-0 endpoint and the current state at time t. Throws on
// var_fwd[t] == 0 (degenerate pin; the caller must stop at t == 0).
BridgePosterior i2sb_posterior(const LatentGrid& x0_pred, const LatentGrid& x_t, int t, int s_next,
                               const BridgeSchedule& bridge);

// Bridge sampling chain from the boundary sample x1 (time T) down to
// time 0. The denoiser must predict x0 directly.
LatentGrid i2sb_sample(const Denoiser& denoiser, const LatentGrid& x1, const StyleEmbedding* cond,
                       const SamplerConfig& cfg, const BridgeSchedule& bridge, RngStream& rng);

// cond_pred + w * (cond_pred - uncond_pred); exact at w == 0 and exact
// cancellation when cond is the null embedding.
LatentGrid cfg_predict(const Denoiser& denoiser, const LatentGrid& x_t, int t, const StyleEmbedding& cond,
                       double w);

}  // namespace bridgelab
