#include "bridgelab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bridgelab {

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind: '" + name + "' (expected 'linear' or 'cosine')");
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::linear ? "linear" : "cosine";
}

void check_timestep(int t, int steps, const std::string& where) {
    if (t < 0 || t > steps)
        throw std::out_of_range(where + ": timestep " + std::to_string(t) + " outside [0, " +
                                std::to_string(steps) + "]");
}

NoiseSchedule build_vp_schedule(ScheduleKind kind, int steps) {
    if (steps < 2) throw std::invalid_argument("build_vp_schedule: need at least 2 timesteps");

    NoiseSchedule s;
    s.steps = steps;
    s.alpha.resize(steps + 1);
    s.sigma.resize(steps + 1);

    if (kind == ScheduleKind::linear) {
        constexpr double beta_start = 1e-4;
        constexpr double beta_end = 0.02;
        double signal_sq = 1.0;  // cumulative product of (1 - beta)
        s.alpha[0] = 1.0;
        s.sigma[0] = 0.0;
        for (int t = 1; t <= steps; ++t) {
            double beta = beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(steps - 1);
            signal_sq *= 1.0 - beta;
            s.alpha[t] = std::sqrt(signal_sq);
            s.sigma[t] = std::sqrt(1.0 - signal_sq);
        }
    } else {
        constexpr double offset = 0.008;
        constexpr double min_signal_sq = 1e-8;  // keeps alpha strictly positive at t = T
        auto curve = [&](double u) {
            double x = (u + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
            double c = std::cos(x);
            return c * c;
        };
        double norm = curve(0.0);
        for (int t = 0; t <= steps; ++t) {
            double signal_sq = std::clamp(curve(static_cast<double>(t) / steps) / norm, min_signal_sq, 1.0);
            s.alpha[t] = std::sqrt(signal_sq);
            s.sigma[t] = std::sqrt(1.0 - signal_sq);
        }
    }
    return s;
}

namespace {

LatentGrid axpby(double a, const LatentGrid& x, double b, const LatentGrid& y) {
    LatentGrid out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x.data[i] + b * y.data[i];
    return out;
}

}  // namespace

LatentGrid forward_diffuse(const LatentGrid& x0, const LatentGrid& eps, int t, const NoiseSchedule& s) {
    require_same_shape(x0, eps, "forward_diffuse");
    check_timestep(t, s.steps, "forward_diffuse");
    return axpby(s.alpha[t], x0, s.sigma[t], eps);
}

LatentGrid v_from(const LatentGrid& x0, const LatentGrid& eps, int t, const NoiseSchedule& s) {
    require_same_shape(x0, eps, "v_from");
    check_timestep(t, s.steps, "v_from");
    return axpby(s.alpha[t], eps, -s.sigma[t], x0);
}

LatentGrid x0_from(const LatentGrid& x_t, const LatentGrid& v, int t, const NoiseSchedule& s) {
    require_same_shape(x_t, v, "x0_from");
    check_timestep(t, s.steps, "x0_from");
    return axpby(s.alpha[t], x_t, -s.sigma[t], v);
}

LatentGrid eps_from(const LatentGrid& x_t, const LatentGrid& v, int t, const NoiseSchedule& s) {
    require_same_shape(x_t, v, "eps_from");
    check_timestep(t, s.steps, "eps_from");
    return axpby(s.sigma[t], x_t, s.alpha[t], v);
}

LatentGrid v_from_x0_pred(const LatentGrid& x_t, const LatentGrid& x0_pred, int t, const NoiseSchedule& s) {
    require_same_shape(x_t, x0_pred, "v_from_x0_pred");
    check_timestep(t, s.steps, "v_from_x0_pred");
    if (s.sigma[t] <= 0.0)
        throw std::domain_error("v_from_x0_pred: sigma[t] is zero, conversion undefined at t=" + std::to_string(t));
    return axpby(s.alpha[t] / s.sigma[t], x_t, -1.0 / s.sigma[t], x0_pred);
}

BridgeSchedule build_bridge_schedule(int steps, double beta_max) {
    if (steps < 2) throw std::invalid_argument("build_bridge_schedule: need at least 2 timesteps");
    if (!(beta_max > 0.0)) throw std::invalid_argument("build_bridge_schedule: beta_max must be positive");

    // Per-step variance beta_k, k in 1..T, proportional to min(k, T+1-k):
    // a symmetric triangle whose peak equals beta_max.
    BridgeSchedule b;
    b.steps = steps;
    b.var_fwd.assign(steps + 1, 0.0);
    b.var_bwd.assign(steps + 1, 0.0);

    double peak = (steps + 1) / 2;  // max over k of min(k, T+1-k)
    std::vector<double> beta(steps + 1, 0.0);
    for (int k = 1; k <= steps; ++k) {
        double shape = std::min(k, steps + 1 - k);
        beta[k] = beta_max * shape / peak;
    }
    for (int t = 1; t <= steps; ++t) b.var_fwd[t] = b.var_fwd[t - 1] + beta[t];
    for (int t = steps - 1; t >= 0; --t) b.var_bwd[t] = b.var_bwd[t + 1] + beta[t + 1];
    return b;
}

BridgeWeights bridge_marginal_weights(const BridgeSchedule& b, int t) {
    check_timestep(t, b.steps, "bridge_marginal_weights");
    BridgeWeights w;
    double total = b.var_fwd[t] + b.var_bwd[t];
    if (total <= 0.0) throw std::domain_error("bridge_marginal_weights: degenerate schedule");
    w.weight_start = b.var_bwd[t] / total;
    w.weight_end = b.var_fwd[t] / total;
    w.stddev = std::sqrt(b.var_fwd[t] * b.var_bwd[t] / total);
    return w;
}

}  // namespace bridgelab
