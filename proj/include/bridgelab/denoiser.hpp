#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "bridgelab/grid.hpp"
#include "bridgelab/rng.hpp"
#include "bridgelab/schedule.hpp"

namespace bridgelab {

enum class CondMode { concat_channels, embed_inject };
enum class Objective { v_prediction, x0_prediction };

CondMode cond_mode_from_string(const std::string& name);
Objective objective_from_string(const std::string& name);
std::string to_string(CondMode mode);
std::string to_string(Objective objective);

// Style condition vector. The null embedding is all zeros with the flag
// set; its projection contributes exactly zero to the network.
struct StyleEmbedding {
    std::vector<double> values;
    bool null_flag = false;

    static StyleEmbedding null_embedding(int dim);
    bool is_null() const { return null_flag; }
};

struct DenoiserConfig {
    int channels = 8;
    int height = 16;
    int width = 64;
    CondMode cond_mode = CondMode::concat_channels;
    Objective objective = Objective::v_prediction;
    int hidden_width = 256;
    int time_embed_dim = 64;
    int cond_dim = 16;
    int max_timestep = 1000;

    int grid_dim() const { return channels * height * width; }
    int input_dim() const { return cond_mode == CondMode::concat_channels ? 2 * grid_dim() : grid_dim(); }
    int output_dim() const { return grid_dim(); }
};

bool operator==(const DenoiserConfig& a, const DenoiserConfig& b);

// All parameter tensors of the MLP trunk. Biases are stored as n x 1
// matrices so every parameter can be visited uniformly.
struct DenoiserTensors {
    Eigen::MatrixXd w1, b1, time_proj, cond_proj, w2, b2, w3, b3;

    static DenoiserTensors zeros_like(const DenoiserConfig& config);
    std::size_t total_parameters() const;
};

// Fixed visit order; Adam, checkpointing and the gradient checker all
// rely on it being stable.
template <typename Tensors, typename F>
void visit_tensors(Tensors& t, F&& f) {
    f("w1", t.w1);
    f("b1", t.b1);
    f("time_proj", t.time_proj);
    f("cond_proj", t.cond_proj);
    f("w2", t.w2);
    f("b2", t.b2);
    f("w3", t.w3);
    f("b3", t.b3);
}

using DenoiserGrads = DenoiserTensors;

struct DenoiserParams {
    DenoiserConfig config;
    DenoiserTensors tensors;

    // Hidden layers uniform in +-sqrt(6/(fan_in+fan_out)), final layer
    // zero so the initial prediction is the zero grid.
    static DenoiserParams init(const DenoiserConfig& config, RngStream& rng);
    // Every layer random including the final one; gives the gradient
    // checker a nondegenerate operating point.
    static DenoiserParams random_init(const DenoiserConfig& config, RngStream& rng);
};

// One training/evaluation example. `source` is required in
// concat_channels mode and must be absent otherwise. A nullptr `cond`
// selects the null condition.
struct DenoiserInput {
    const LatentGrid* x_t = nullptr;
    const LatentGrid* source = nullptr;
    int t = 0;
    const StyleEmbedding* cond = nullptr;
};

struct ForwardCache {
    Eigen::MatrixXd x, temb, cond;
    Eigen::MatrixXd h1_pre, h1, h2_pre, h2, y;
};

Eigen::VectorXd sinusoidal_time_embedding(int t, int dim);

Eigen::VectorXd grid_to_vector(const LatentGrid& g);
LatentGrid vector_to_grid(const Eigen::VectorXd& v, int channels, int height, int width, int true_width);

// Batched forward pass; columns are examples. Fills `cache` when given.
Eigen::MatrixXd denoiser_forward_batch(const DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                                       ForwardCache* cache);

LatentGrid denoiser_forward(const DenoiserParams& params, const LatentGrid& x_t, const LatentGrid* source,
                            int t, const StyleEmbedding* cond);

// Exact gradients for the cached forward pass, given dL/dY.
DenoiserGrads denoiser_backward(const DenoiserParams& params, const ForwardCache& cache,
                                const Eigen::MatrixXd& loss_grad);

struct MaskedLoss {
    double value = 0.0;
    Eigen::MatrixXd grad;  // dL/dY
    std::size_t n_unmasked = 0;
};

// Mean squared error over elements whose column index is below the
// matching grid's true_width; padded columns never contribute.
MaskedLoss masked_mse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target,
                      const std::vector<const LatentGrid*>& mask_like);

// ---------------------------------------------------------------------
// Prediction interface used by the samplers.

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Objective objective() const = 0;
    virtual LatentGrid predict(const LatentGrid& x_t, int t, const StyleEmbedding* cond) const = 0;
};

// Wraps trained parameters; in concat mode the conditioning grid is
// bound once at construction. Keeps references only: both the params and
// the source must outlive the wrapper.
class MlpDenoiser : public Denoiser {
public:
    explicit MlpDenoiser(const DenoiserParams& params);
    MlpDenoiser(const DenoiserParams& params, const LatentGrid& source);

    Objective objective() const override { return params_->config.objective; }
    LatentGrid predict(const LatentGrid& x_t, int t, const StyleEmbedding* cond) const override;

private:
    const DenoiserParams* params_;
    const LatentGrid* source_;
};

// Optimal prediction for data ~ N(mu, s^2 I) under a VP schedule:
// x0_hat = mu + alpha s^2 / (alpha^2 s^2 + sigma^2) * (x_t - alpha mu),
// converted to the configured objective.
LatentGrid analytic_gaussian_denoiser(const Tensor& mu, double s, const LatentGrid& x_t, int t,
                                      const NoiseSchedule& sched, Objective objective);

class AnalyticGaussianDenoiser : public Denoiser {
public:
    AnalyticGaussianDenoiser(Tensor mu, double s, const NoiseSchedule& sched, Objective objective);

    Objective objective() const override { return objective_; }
    LatentGrid predict(const LatentGrid& x_t, int t, const StyleEmbedding* cond) const override;

private:
    Tensor mu_;
    double s_;
    const NoiseSchedule* sched_;
    Objective objective_;
};

// Optimal x0 prediction for a bridge between independent Gaussian
// endpoints x0 ~ N(mu0, s0^2 I) at time 0 and x1 ~ N(mu1, s1^2 I) at
// time T, i.e. E[x0 | x_t] under the pinned-bridge marginal.
class BridgeGaussianDenoiser : public Denoiser {
public:
    BridgeGaussianDenoiser(double mu0, double s0, double mu1, double s1, const BridgeSchedule& bridge);

    Objective objective() const override { return Objective::x0_prediction; }
    LatentGrid predict(const LatentGrid& x_t, int t, const StyleEmbedding* cond) const override;

private:
    double mu0_, s0_, mu1_, s1_;
    const BridgeSchedule* bridge_;
};

// ---------------------------------------------------------------------
// Finite-difference gradient verification.

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;  // flat column-major index within worst_param
    int n_checked = 0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central differences with step 1e-5 on n_samples randomly chosen
// parameters, against analytic gradients of the masked MSE loss.
GradCheckReport grad_check(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                           const std::vector<const LatentGrid*>& targets, double tolerance, int n_samples,
                           RngStream& rng);

// Same comparison against externally supplied analytic gradients; lets
// tests inject a corrupted gradient and confirm it is caught.
GradCheckReport grad_check_against(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                                   const std::vector<const LatentGrid*>& targets, const DenoiserGrads& analytic,
                                   double tolerance, int n_samples, RngStream& rng);

}  // namespace bridgelab
