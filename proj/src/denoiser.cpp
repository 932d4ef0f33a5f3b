#include "bridgelab/denoiser.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace bridgelab {

CondMode cond_mode_from_string(const std::string& name) {
    if (name == "concat_channels") return CondMode::concat_channels;
    if (name == "embed_inject") return CondMode::embed_inject;
    throw std::invalid_argument("unknown conditioning mode: '" + name + "'");
}

Objective objective_from_string(const std::string& name) {
    if (name == "v_prediction") return Objective::v_prediction;
    if (name == "x0_prediction") return Objective::x0_prediction;
    throw std::invalid_argument("unknown objective: '" + name + "'");
}

std::string to_string(CondMode mode) {
    return mode == CondMode::concat_channels ? "concat_channels" : "embed_inject";
}

std::string to_string(Objective objective) {
    return objective == Objective::v_prediction ? "v_prediction" : "x0_prediction";
}

StyleEmbedding StyleEmbedding::null_embedding(int dim) {
    StyleEmbedding e;
    e.values.assign(dim, 0.0);
    e.null_flag = true;
    return e;
}

bool operator==(const DenoiserConfig& a, const DenoiserConfig& b) {
    return a.channels == b.channels && a.height == b.height && a.width == b.width &&
           a.cond_mode == b.cond_mode && a.objective == b.objective && a.hidden_width == b.hidden_width &&
           a.time_embed_dim == b.time_embed_dim && a.cond_dim == b.cond_dim && a.max_timestep == b.max_timestep;
}

DenoiserTensors DenoiserTensors::zeros_like(const DenoiserConfig& c) {
    DenoiserTensors t;
    t.w1 = Eigen::MatrixXd::Zero(c.hidden_width, c.input_dim());
    t.b1 = Eigen::MatrixXd::Zero(c.hidden_width, 1);
    t.time_proj = Eigen::MatrixXd::Zero(c.hidden_width, c.time_embed_dim);
    t.cond_proj = Eigen::MatrixXd::Zero(c.hidden_width, c.cond_dim);
    t.w2 = Eigen::MatrixXd::Zero(c.hidden_width, c.hidden_width);
    t.b2 = Eigen::MatrixXd::Zero(c.hidden_width, 1);
    t.w3 = Eigen::MatrixXd::Zero(c.output_dim(), c.hidden_width);
    t.b3 = Eigen::MatrixXd::Zero(c.output_dim(), 1);
    return t;
}

std::size_t DenoiserTensors::total_parameters() const {
    std::size_t n = 0;
    visit_tensors(*this, [&](const char*, const Eigen::MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

namespace {

void fill_uniform(Eigen::MatrixXd& m, double bound, RngStream& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

double glorot_bound(Eigen::Index fan_out, Eigen::Index fan_in) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_grad(double z) {
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

}  // namespace

DenoiserParams DenoiserParams::init(const DenoiserConfig& config, RngStream& rng) {
    DenoiserParams p;
    p.config = config;
    p.tensors = DenoiserTensors::zeros_like(config);
    fill_uniform(p.tensors.w1, glorot_bound(p.tensors.w1.rows(), p.tensors.w1.cols()), rng);
    fill_uniform(p.tensors.time_proj, glorot_bound(p.tensors.time_proj.rows(), p.tensors.time_proj.cols()), rng);
    fill_uniform(p.tensors.cond_proj, glorot_bound(p.tensors.cond_proj.rows(), p.tensors.cond_proj.cols()), rng);
    fill_uniform(p.tensors.w2, glorot_bound(p.tensors.w2.rows(), p.tensors.w2.cols()), rng);
    // w3, b3 and the biases stay zero.
    return p;
}

DenoiserParams DenoiserParams::random_init(const DenoiserConfig& config, RngStream& rng) {
    DenoiserParams p = init(config, rng);
    fill_uniform(p.tensors.w3, glorot_bound(p.tensors.w3.rows(), p.tensors.w3.cols()), rng);
    fill_uniform(p.tensors.b1, 0.05, rng);
    fill_uniform(p.tensors.b2, 0.05, rng);
    fill_uniform(p.tensors.b3, 0.05, rng);
    return p;
}

Eigen::VectorXd sinusoidal_time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_time_embedding: dim must be even and >= 2");
    Eigen::VectorXd e(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

Eigen::VectorXd grid_to_vector(const LatentGrid& g) {
    return Eigen::Map<const Eigen::VectorXd>(g.data.data(), static_cast<Eigen::Index>(g.data.size()));
}

LatentGrid vector_to_grid(const Eigen::VectorXd& v, int channels, int height, int width, int true_width) {
    LatentGrid g(channels, height, width, true_width);
    if (v.size() != static_cast<Eigen::Index>(g.data.size()))
        throw std::invalid_argument("vector_to_grid: size mismatch");
    Eigen::Map<Eigen::VectorXd>(g.data.data(), v.size()) = v;
    return g;
}

namespace {

void validate_input(const DenoiserConfig& c, const DenoiserInput& in) {
    if (in.x_t == nullptr) throw std::invalid_argument("denoiser forward: missing x_t");
    if (in.x_t->channels != c.channels || in.x_t->height != c.height || in.x_t->width != c.width)
        throw std::invalid_argument("denoiser forward: x_t shape does not match network configuration");
    if (in.t < 0 || in.t > c.max_timestep)
        throw std::out_of_range("denoiser forward: timestep " + std::to_string(in.t) + " outside [0, " +
                                std::to_string(c.max_timestep) + "]");
    if (c.cond_mode == CondMode::concat_channels) {
        if (in.source == nullptr)
            throw std::invalid_argument("denoiser forward: concat_channels mode requires a source grid");
        require_same_shape(*in.x_t, *in.source, "denoiser forward");
    } else if (in.source != nullptr) {
        throw std::invalid_argument("denoiser forward: embed_inject mode takes no source grid");
    }
    if (in.cond != nullptr && !in.cond->is_null() &&
        static_cast<int>(in.cond->values.size()) != c.cond_dim)
        throw std::invalid_argument("denoiser forward: condition dimension mismatch");
}

}  // namespace

Eigen::MatrixXd denoiser_forward_batch(const DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                                       ForwardCache* cache) {
    const DenoiserConfig& c = params.config;
    const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
    if (b == 0) throw std::invalid_argument("denoiser forward: empty batch");

    Eigen::MatrixXd x(c.input_dim(), b);
    Eigen::MatrixXd temb(c.time_embed_dim, b);
    Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(c.cond_dim, b);

    const Eigen::Index grid_dim = c.grid_dim();
    for (Eigen::Index k = 0; k < b; ++k) {
        const DenoiserInput& in = batch[k];
        validate_input(c, in);
        x.col(k).head(grid_dim) = grid_to_vector(*in.x_t);
        if (c.cond_mode == CondMode::concat_channels) x.col(k).tail(grid_dim) = grid_to_vector(*in.source);
        temb.col(k) = sinusoidal_time_embedding(in.t, c.time_embed_dim);
        if (in.cond != nullptr && !in.cond->is_null()) {
            for (int i = 0; i < c.cond_dim; ++i) cond(i, k) = in.cond->values[i];
        }
    }

    const DenoiserTensors& w = params.tensors;
    Eigen::MatrixXd h1_pre = w.w1 * x + w.time_proj * temb + w.cond_proj * cond;
    h1_pre.colwise() += Eigen::VectorXd(w.b1.col(0));
    Eigen::MatrixXd h1 = h1_pre.unaryExpr([](double z) { return silu(z); });
    Eigen::MatrixXd h2_pre = w.w2 * h1;
    h2_pre.colwise() += Eigen::VectorXd(w.b2.col(0));
    Eigen::MatrixXd h2 = h2_pre.unaryExpr([](double z) { return silu(z); });
    Eigen::MatrixXd y = w.w3 * h2;
    y.colwise() += Eigen::VectorXd(w.b3.col(0));

    if (cache != nullptr) {
        cache->x = std::move(x);
        cache->temb = std::move(temb);
        cache->cond = std::move(cond);
        cache->h1_pre = std::move(h1_pre);
        cache->h1 = std::move(h1);
        cache->h2_pre = std::move(h2_pre);
        cache->h2 = std::move(h2);
        cache->y = y;
    }
    return y;
}

LatentGrid denoiser_forward(const DenoiserParams& params, const LatentGrid& x_t, const LatentGrid* source,
                            int t, const StyleEmbedding* cond) {
    std::vector<DenoiserInput> batch{DenoiserInput{&x_t, source, t, cond}};
    Eigen::MatrixXd y = denoiser_forward_batch(params, batch, nullptr);
    return vector_to_grid(y.col(0), x_t.channels, x_t.height, x_t.width, x_t.true_width);
}

DenoiserGrads denoiser_backward(const DenoiserParams& params, const ForwardCache& cache,
                                const Eigen::MatrixXd& loss_grad) {
    if (cache.y.rows() == 0) throw std::invalid_argument("denoiser backward: missing forward cache");
    if (loss_grad.rows() != cache.y.rows() || loss_grad.cols() != cache.y.cols())
        throw std::invalid_argument("denoiser backward: loss gradient shape mismatch");

    const DenoiserTensors& w = params.tensors;
    DenoiserGrads g = DenoiserTensors::zeros_like(params.config);

    g.w3.noalias() = loss_grad * cache.h2.transpose();
    g.b3.col(0) = loss_grad.rowwise().sum();

    Eigen::MatrixXd dh2 = w.w3.transpose() * loss_grad;
    Eigen::MatrixXd dh2_pre = dh2.cwiseProduct(cache.h2_pre.unaryExpr([](double z) { return silu_grad(z); }));
    g.w2.noalias() = dh2_pre * cache.h1.transpose();
    g.b2.col(0) = dh2_pre.rowwise().sum();

    Eigen::MatrixXd dh1 = w.w2.transpose() * dh2_pre;
    Eigen::MatrixXd dh1_pre = dh1.cwiseProduct(cache.h1_pre.unaryExpr([](double z) { return silu_grad(z); }));
    g.w1.noalias() = dh1_pre * cache.x.transpose();
    g.b1.col(0) = dh1_pre.rowwise().sum();
    g.time_proj.noalias() = dh1_pre * cache.temb.transpose();
    g.cond_proj.noalias() = dh1_pre * cache.cond.transpose();
    return g;
}

MaskedLoss masked_mse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& target,
                      const std::vector<const LatentGrid*>& mask_like) {
    if (y.rows() != target.rows() || y.cols() != target.cols())
        throw std::invalid_argument("masked_mse: prediction/target shape mismatch");
    if (static_cast<std::size_t>(y.cols()) != mask_like.size())
        throw std::invalid_argument("masked_mse: one mask grid per column required");

    MaskedLoss out;
    out.grad = Eigen::MatrixXd::Zero(y.rows(), y.cols());

    // First pass counts unmasked elements so the gradient scale is known.
    for (const LatentGrid* g : mask_like)
        out.n_unmasked += static_cast<std::size_t>(g->channels) * g->height * g->true_width;
    if (out.n_unmasked == 0) throw std::invalid_argument("masked_mse: empty mask");

    double sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(out.n_unmasked);
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
        const LatentGrid& m = *mask_like[k];
        for (int c = 0; c < m.channels; ++c) {
            for (int h = 0; h < m.height; ++h) {
                const Eigen::Index row0 = (static_cast<Eigen::Index>(c) * m.height + h) * m.width;
                for (int wcol = 0; wcol < m.true_width; ++wcol) {
                    const Eigen::Index r = row0 + wcol;
                    const double d = y(r, k) - target(r, k);
                    sum += d * d;
                    out.grad(r, k) = 2.0 * d * inv_n;
                }
            }
        }
    }
    out.value = sum * inv_n;
    return out;
}

// ---------------------------------------------------------------------

MlpDenoiser::MlpDenoiser(const DenoiserParams& params) : params_(&params), source_(nullptr) {
    if (params.config.cond_mode == CondMode::concat_channels)
        throw std::invalid_argument("MlpDenoiser: concat_channels mode requires a bound source grid");
}

MlpDenoiser::MlpDenoiser(const DenoiserParams& params, const LatentGrid& source)
    : params_(&params), source_(&source) {
    if (params.config.cond_mode != CondMode::concat_channels)
        throw std::invalid_argument("MlpDenoiser: source grid is only used in concat_channels mode");
}

LatentGrid MlpDenoiser::predict(const LatentGrid& x_t, int t, const StyleEmbedding* cond) const {
    return denoiser_forward(*params_, x_t, source_, t, cond);
}

LatentGrid analytic_gaussian_denoiser(const Tensor& mu, double s, const LatentGrid& x_t, int t,
                                      const NoiseSchedule& sched, Objective objective) {
    if (!(s > 0.0)) throw std::invalid_argument("analytic_gaussian_denoiser: s must be positive");
    check_timestep(t, sched.steps, "analytic_gaussian_denoiser");
    const bool broadcast = mu.size() == 1;
    if (!broadcast && mu.size() != x_t.size())
        throw std::invalid_argument("analytic_gaussian_denoiser: mu size mismatch");

    const double a = sched.alpha[t];
    const double sg = sched.sigma[t];
    const double gain = a * s * s / (a * a * s * s + sg * sg);

    LatentGrid x0_hat = x_t;
    for (std::size_t i = 0; i < x0_hat.data.size(); ++i) {
        const double m = broadcast ? mu.data[0] : mu.data[i];
        x0_hat.data[i] = m + gain * (x_t.data[i] - a * m);
    }
    if (objective == Objective::x0_prediction) return x0_hat;
    return v_from_x0_pred(x_t, x0_hat, t, sched);
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(Tensor mu, double s, const NoiseSchedule& sched,
                                                   Objective objective)
    : mu_(std::move(mu)), s_(s), sched_(&sched), objective_(objective) {
    if (!(s_ > 0.0)) throw std::invalid_argument("AnalyticGaussianDenoiser: s must be positive");
}

LatentGrid AnalyticGaussianDenoiser::predict(const LatentGrid& x_t, int t, const StyleEmbedding*) const {
    return analytic_gaussian_denoiser(mu_, s_, x_t, t, *sched_, objective_);
}

BridgeGaussianDenoiser::BridgeGaussianDenoiser(double mu0, double s0, double mu1, double s1,
                                               const BridgeSchedule& bridge)
    : mu0_(mu0), s0_(s0), mu1_(mu1), s1_(s1), bridge_(&bridge) {}

LatentGrid BridgeGaussianDenoiser::predict(const LatentGrid& x_t, int t, const StyleEmbedding*) const {
    check_timestep(t, bridge_->steps, "BridgeGaussianDenoiser");
    const double total = bridge_->var_fwd[bridge_->steps];
    const double f = bridge_->var_fwd[t];
    const double a = (total - f) / total;           // weight on the time-0 endpoint
    const double b = f / total;                     // weight on the time-T endpoint
    const double c2 = f * (total - f) / total;      // pinned-bridge marginal variance
    const double mean_t = a * mu0_ + b * mu1_;
    const double var_t = a * a * s0_ * s0_ + b * b * s1_ * s1_ + c2;
    const double gain = a * s0_ * s0_ / var_t;

    LatentGrid x0_hat = x_t;
    for (double& v : x0_hat.data) v = mu0_ + gain * (v - mean_t);
    return x0_hat;
}

// ---------------------------------------------------------------------

namespace {

struct FlatParamRef {
    const char* name;
    Eigen::MatrixXd* mat;
    std::size_t offset;  // within the flattened parameter vector
};

std::vector<FlatParamRef> flatten_params(DenoiserTensors& t) {
    std::vector<FlatParamRef> refs;
    std::size_t offset = 0;
    visit_tensors(t, [&](const char* name, Eigen::MatrixXd& m) {
        refs.push_back({name, &m, offset});
        offset += static_cast<std::size_t>(m.size());
    });
    return refs;
}

double batch_loss(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                  const Eigen::MatrixXd& target, const std::vector<const LatentGrid*>& masks) {
    Eigen::MatrixXd y = denoiser_forward_batch(params, batch, nullptr);
    return masked_mse(y, target, masks).value;
}

GradCheckReport run_grad_check(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                               const std::vector<const LatentGrid*>& targets, const DenoiserGrads& analytic,
                               double tolerance, int n_samples, RngStream& rng) {
    Eigen::MatrixXd target(params.config.output_dim(), static_cast<Eigen::Index>(targets.size()));
    for (std::size_t k = 0; k < targets.size(); ++k)
        target.col(static_cast<Eigen::Index>(k)) = grid_to_vector(*targets[k]);

    std::vector<FlatParamRef> refs = flatten_params(params.tensors);
    DenoiserGrads analytic_copy = analytic;
    std::vector<FlatParamRef> grad_refs = flatten_params(analytic_copy);
    const std::size_t total = params.tensors.total_parameters();

    constexpr double fd_step = 1e-5;
    GradCheckReport report;
    report.tolerance = tolerance;

    std::set<std::size_t> seen;
    for (int sample = 0; sample < n_samples; ++sample) {
        std::size_t flat = static_cast<std::size_t>(rng.uniform() * static_cast<double>(total));
        if (flat >= total) flat = total - 1;
        if (!seen.insert(flat).second) continue;

        std::size_t which = refs.size() - 1;
        while (refs[which].offset > flat) --which;
        const std::size_t local = flat - refs[which].offset;

        double* slot = refs[which].mat->data() + local;
        const double saved = *slot;
        *slot = saved + fd_step;
        const double loss_hi = batch_loss(params, batch, target, targets);
        *slot = saved - fd_step;
        const double loss_lo = batch_loss(params, batch, target, targets);
        *slot = saved;

        const double numeric = (loss_hi - loss_lo) / (2.0 * fd_step);
        const double exact = grad_refs[which].mat->data()[local];
        const double denom = std::max(std::abs(numeric), std::abs(exact));
        const double rel = denom < 1e-10 ? 0.0 : std::abs(numeric - exact) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = refs[which].name;
            report.worst_index = local;
        }
        ++report.n_checked;
    }
    report.pass = !(report.max_rel_error > tolerance);  // tolerance=inf always passes
    return report;
}

}  // namespace

GradCheckReport grad_check(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                           const std::vector<const LatentGrid*>& targets, double tolerance, int n_samples,
                           RngStream& rng) {
    Eigen::MatrixXd target(params.config.output_dim(), static_cast<Eigen::Index>(targets.size()));
    for (std::size_t k = 0; k < targets.size(); ++k)
        target.col(static_cast<Eigen::Index>(k)) = grid_to_vector(*targets[k]);

    ForwardCache cache;
    Eigen::MatrixXd y = denoiser_forward_batch(params, batch, &cache);
    MaskedLoss loss = masked_mse(y, target, targets);
    DenoiserGrads analytic = denoiser_backward(params, cache, loss.grad);
    return run_grad_check(params, batch, targets, analytic, tolerance, n_samples, rng);
}

GradCheckReport grad_check_against(DenoiserParams& params, const std::vector<DenoiserInput>& batch,
                                   const std::vector<const LatentGrid*>& targets, const DenoiserGrads& analytic,
                                   double tolerance, int n_samples, RngStream& rng) {
    return run_grad_check(params, batch, targets, analytic, tolerance, n_samples, rng);
}

}  // namespace bridgelab
