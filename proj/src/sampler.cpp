#include "bridgelab/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

SamplerMode sampler_mode_from_string(const std::string& name) {
    if (name == "ddim") return SamplerMode::ddim;
    if (name == "i2sb") return SamplerMode::i2sb;
    throw std::invalid_argument("unknown sampler mode: '" + name + "'");
}

std::string to_string(SamplerMode mode) { return mode == SamplerMode::ddim ? "ddim" : "i2sb"; }

void validate(const SamplerConfig& cfg, int schedule_steps) {
    if (cfg.steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
    if (cfg.steps > schedule_steps) throw std::invalid_argument("sampler: steps must not exceed schedule T");
    if (cfg.eta < 0.0 || cfg.eta > 1.0) throw std::invalid_argument("sampler: eta must be in [0, 1]");
    if (cfg.guidance_w < 0.0) throw std::invalid_argument("sampler: guidance_w must be >= 0");
    if (cfg.x1_noise_std < 0.0) throw std::invalid_argument("sampler: x1_noise_std must be >= 0");
}

std::vector<int> sampling_grid(int schedule_steps, int steps) {
    if (steps < 1 || steps > schedule_steps) throw std::invalid_argument("sampling_grid: invalid step count");
    std::vector<int> grid(steps + 1);
    for (int j = 0; j <= steps; ++j)
        grid[j] = static_cast<int>(std::lround(static_cast<double>(schedule_steps) * (steps - j) / steps));
    for (int j = 1; j <= steps; ++j)
        if (grid[j] >= grid[j - 1]) throw std::logic_error("sampling_grid: grid not strictly decreasing");
    return grid;
}

LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& v_pred, int t, int s_next,
                     const NoiseSchedule& sched, double eta, RngStream& rng) {
    require_same_shape(x_t, v_pred, "ddim_step");
    check_timestep(t, sched.steps, "ddim_step");
    check_timestep(s_next, sched.steps, "ddim_step");
    if (s_next >= t) throw std::invalid_argument("ddim_step: require s_next < t");

    LatentGrid x0_hat = x0_from(x_t, v_pred, t, sched);
    LatentGrid eps_hat = eps_from(x_t, v_pred, t, sched);

    const double a_s = sched.alpha[s_next];
    const double sg_s = sched.sigma[s_next];

    LatentGrid out = x_t;
    if (eta == 0.0) {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = a_s * x0_hat.data[i] + sg_s * eps_hat.data[i];
        return out;
    }

    // Stochastic DDIM: noise std eta * sigma_ts with
    // sigma_ts^2 = (sigma_s^2 / sigma_t^2) * (1 - alpha_t^2 / alpha_s^2).
    const double a_t = sched.alpha[t];
    const double sg_t = sched.sigma[t];
    double var_ts = 0.0;
    if (sg_t > 0.0) var_ts = (sg_s * sg_s) / (sg_t * sg_t) * (1.0 - (a_t * a_t) / (a_s * a_s));
    const double noise_std = eta * std::sqrt(std::max(var_ts, 0.0));
    const double dir = std::sqrt(std::max(sg_s * sg_s - noise_std * noise_std, 0.0));
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a_s * x0_hat.data[i] + dir * eps_hat.data[i] + noise_std * rng.normal();
    return out;
}

namespace {

// Prediction in the denoiser's native objective, with guidance applied
// when w > 0.
LatentGrid guided_predict(const Denoiser& denoiser, const LatentGrid& x_t, int t, const StyleEmbedding* cond,
                          double w) {
    if (w > 0.0 && cond != nullptr) return cfg_predict(denoiser, x_t, t, *cond, w);
    return denoiser.predict(x_t, t, cond);
}

LatentGrid predict_v(const Denoiser& denoiser, const LatentGrid& x_t, int t, const StyleEmbedding* cond,
                     double w, const NoiseSchedule& sched) {
    LatentGrid pred = guided_predict(denoiser, x_t, t, cond, w);
    if (denoiser.objective() == Objective::v_prediction) return pred;
    return v_from_x0_pred(x_t, pred, t, sched);
}

}  // namespace

LatentGrid ddim_sample(const Denoiser& denoiser, const LatentGrid& x_init, const StyleEmbedding* cond,
                       const SamplerConfig& cfg, const NoiseSchedule& sched, RngStream& rng) {
    if (cfg.mode != SamplerMode::ddim) throw std::invalid_argument("ddim_sample: config mode is not ddim");
    validate(cfg, sched.steps);

    std::vector<int> grid = sampling_grid(sched.steps, cfg.steps);
    LatentGrid x = x_init;
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const int t = grid[j];
        const int s_next = grid[j + 1];
        LatentGrid v = predict_v(denoiser, x, t, cond, cfg.guidance_w, sched);
        x = ddim_step(x, v, t, s_next, sched, cfg.eta, rng);
    }
    x.rezero_padding();
    return x;
}

BridgePosterior i2sb_posterior(const LatentGrid& x0_pred, const LatentGrid& x_t, int t, int s_next,
                               const BridgeSchedule& bridge) {
    require_same_shape(x0_pred, x_t, "i2sb_posterior");
    check_timestep(t, bridge.steps, "i2sb_posterior");
    check_timestep(s_next, bridge.steps, "i2sb_posterior");
    if (s_next >= t) throw std::invalid_argument("i2sb_posterior: require s_next < t");

    const double f_t = bridge.var_fwd[t];
    const double f_s = bridge.var_fwd[s_next];
    if (f_t <= 0.0)
        throw std::domain_error("i2sb_posterior: var_fwd[t] is zero; terminate the chain at t = 0 directly");

    const double w0 = (f_t - f_s) / f_t;
    const double w1 = f_s / f_t;

    BridgePosterior post;
    post.mean = x_t;
    for (std::size_t i = 0; i < post.mean.data.size(); ++i)
        post.mean.data[i] = w0 * x0_pred.data[i] + w1 * x_t.data[i];
    post.stddev = std::sqrt(f_s * (f_t - f_s) / f_t);
    return post;
}

LatentGrid i2sb_sample(const Denoiser& denoiser, const LatentGrid& x1, const StyleEmbedding* cond,
                       const SamplerConfig& cfg, const BridgeSchedule& bridge, RngStream& rng) {
    if (cfg.mode != SamplerMode::i2sb) throw std::invalid_argument("i2sb_sample: config mode is not i2sb");
    validate(cfg, bridge.steps);
    if (denoiser.objective() != Objective::x0_prediction)
        throw std::invalid_argument("i2sb_sample: bridge sampling needs an x0-predicting denoiser");

    LatentGrid x = x1;
    if (cfg.add_x1_noise && cfg.x1_noise_std > 0.0)
        for (double& v : x.data) v += cfg.x1_noise_std * rng.normal();

    std::vector<int> grid = sampling_grid(bridge.steps, cfg.steps);
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const int t = grid[j];
        const int s_next = grid[j + 1];
        LatentGrid x0_hat = guided_predict(denoiser, x, t, cond, cfg.guidance_w);
        BridgePosterior post = i2sb_posterior(x0_hat, x, t, s_next, bridge);
        x = std::move(post.mean);
        if (!cfg.ot_ode && post.stddev > 0.0)
            for (double& v : x.data) v += post.stddev * rng.normal();
    }
    x.rezero_padding();
    return x;
}

LatentGrid cfg_predict(const Denoiser& denoiser, const LatentGrid& x_t, int t, const StyleEmbedding& cond,
                       double w) {
    LatentGrid cond_pred = denoiser.predict(x_t, t, cond.is_null() ? nullptr : &cond);
    if (w == 0.0) return cond_pred;
    LatentGrid uncond_pred = denoiser.predict(x_t, t, nullptr);
    // cond + w*(cond - uncond): algebraically (1+w)*cond - w*uncond, but
    // this form cancels exactly when the two predictions coincide.
    for (std::size_t i = 0; i < cond_pred.data.size(); ++i)
        cond_pred.data[i] += w * (cond_pred.data[i] - uncond_pred.data[i]);
    return cond_pred;
}

}  // namespace bridgelab
