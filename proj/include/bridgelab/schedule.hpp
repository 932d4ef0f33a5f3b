#pragma once

#include <string>
#include <vector>

#include "bridgelab/grid.hpp"

namespace bridgelab {

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

// Variance-preserving schedule: alpha[t]^2 + sigma[t]^2 == 1 for all
// t in {0..steps}. Tables are filled at construction and never mutated,
// so concurrent reads are safe.
struct NoiseSchedule {
    int steps = 0;  // T
    std::vector<double> alpha;  // size steps+1, non-increasing, in (0,1]
    std::vector<double> sigma;  // size steps+1, in [0,1)
};

// linear: per-step variances rise linearly from 1e-4 to 0.02 and
// alpha[t] is the square root of the cumulative product of (1 - beta).
// cosine: squared-cosine cumulative signal curve with the 0.008 offset,
// clamped away from zero signal at the far end.
NoiseSchedule build_vp_schedule(ScheduleKind kind, int steps);

// x_t = alpha[t] * x0 + sigma[t] * eps
LatentGrid forward_diffuse(const LatentGrid& x0, const LatentGrid& eps, int t, const NoiseSchedule& s);

// v = alpha[t] * eps - sigma[t] * x0
LatentGrid v_from(const LatentGrid& x0, const LatentGrid& eps, int t, const NoiseSchedule& s);

// x0 = alpha[t] * x_t - sigma[t] * v
LatentGrid x0_from(const LatentGrid& x_t, const LatentGrid& v, int t, const NoiseSchedule& s);

// eps = sigma[t] * x_t + alpha[t] * v
LatentGrid eps_from(const LatentGrid& x_t, const LatentGrid& v, int t, const NoiseSchedule& s);

// Inverse of x0_from at fixed x_t: v = (alpha[t] * x_t - x0) / sigma[t].
// Requires sigma[t] > 0.
LatentGrid v_from_x0_pred(const LatentGrid& x_t, const LatentGrid& x0_pred, int t, const NoiseSchedule& s);

// Accumulated variances of a pinned bridge: var_fwd[t] is the variance
// gathered walking from time 0 to t, var_bwd[t] walking back from T.
// var_fwd[0] == 0, var_bwd[T] == 0, and both are monotone.
struct BridgeSchedule {
    int steps = 0;
    std::vector<double> var_fwd;  // size steps+1
    std::vector<double> var_bwd;
};

// Symmetric triangular per-step variance peaking at mid-schedule, scaled
// so the peak per-step variance equals beta_max.
BridgeSchedule build_bridge_schedule(int steps, double beta_max);

// Interpolation weights of the pinned bridge marginal at time t:
// weight_start + weight_end == 1 for interior t.
struct BridgeWeights {
    double weight_start = 0.0;  // on the time-0 pin
    double weight_end = 0.0;    // on the time-T pin
    double stddev = 0.0;        // marginal standard deviation
};

BridgeWeights bridge_marginal_weights(const BridgeSchedule& b, int t);

void check_timestep(int t, int steps, const std::string& where);

}  // namespace bridgelab
