#include "bridgelab/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace bridgelab {

namespace {

constexpr double kModulationDepth = 0.3;

double clamp_index_interp(const std::vector<double>& column, int height, int base, double src) {
    int i0 = static_cast<int>(std::floor(src));
    double w = src - i0;
    int lo = std::clamp(i0, 0, height - 1);
    int hi = std::clamp(i0 + 1, 0, height - 1);
    return (1.0 - w) * column[base + lo] + w * column[base + hi];
}

}  // namespace

ToySpeaker ToySpeaker::identity(int height) {
    ToySpeaker s;
    s.row_scale.assign(height, 1.0);
    s.row_bias.assign(height, 0.0);
    return s;
}

void validate(const TestbedConfig& cfg) {
    if (cfg.channels < 1 || cfg.height < 2 || cfg.max_width < 2)
        throw std::invalid_argument("testbed: grid extents too small");
    if (cfg.alphabet < 2) throw std::invalid_argument("testbed: alphabet must have at least 2 tokens");
    if (cfg.min_tokens < 1 || cfg.min_tokens > cfg.max_tokens)
        throw std::invalid_argument("testbed: invalid token count range");
    if (cfg.avg_duration < 2) throw std::invalid_argument("testbed: avg_duration must be >= 2");
    const int max_total = cfg.max_tokens * static_cast<int>(std::floor(1.5 * cfg.avg_duration));
    if (max_total > cfg.max_width)
        throw std::invalid_argument("testbed: max_tokens * floor(1.5*avg_duration) = " +
                                    std::to_string(max_total) + " exceeds max_width " +
                                    std::to_string(cfg.max_width));
    if (!(cfg.gain_min > 0.0) || cfg.gain_min > cfg.gain_max)
        throw std::invalid_argument("testbed: invalid gain range");
    if (cfg.pitch_min > cfg.pitch_max) throw std::invalid_argument("testbed: invalid pitch range");
    if (cfg.mod_min < 0.0 || cfg.mod_min > cfg.mod_max || cfg.mod_max > 0.5)
        throw std::invalid_argument("testbed: mod range must lie within [0, 0.5]");
    if (cfg.speakers < 1) throw std::invalid_argument("testbed: need at least one speaker");
    if (cfg.embed_dim < 3) throw std::invalid_argument("testbed: embed_dim must be >= 3");
    if (cfg.embed_noise_std < 0.0) throw std::invalid_argument("testbed: embed_noise_std must be >= 0");
}

Testbed::Testbed(const TestbedConfig& config, std::uint64_t seed) : config_(config) {
    validate(config_);
    const int ch = config_.channels * config_.height;

    // Token templates: smoothed white noise per [C,H] column pattern,
    // normalized to a common energy. Smoothness keeps fractional row
    // shifts well conditioned for the readout oracles.
    RngStream tmpl_rng = RngStream(seed).child(0x7001);
    templates_.resize(config_.alphabet);
    for (auto& tmpl : templates_) {
        tmpl.resize(ch);
        for (double& v : tmpl) v = tmpl_rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<double> smoothed(ch);
            for (int c = 0; c < config_.channels; ++c) {
                const int base = c * config_.height;
                for (int h = 0; h < config_.height; ++h) {
                    const int lo = std::max(h - 1, 0);
                    const int hi = std::min(h + 1, config_.height - 1);
                    smoothed[base + h] =
                        0.25 * tmpl[base + lo] + 0.5 * tmpl[base + h] + 0.25 * tmpl[base + hi];
                }
            }
            tmpl = std::move(smoothed);
        }
        double norm = std::sqrt(std::inner_product(tmpl.begin(), tmpl.end(), tmpl.begin(), 0.0));
        const double target = std::sqrt(static_cast<double>(ch));
        for (double& v : tmpl) v *= target / norm;
    }

    RngStream map_rng = RngStream(seed).child(0x7002);
    embed_map_.resize(static_cast<std::size_t>(config_.embed_dim) * 3);
    for (double& v : embed_map_) v = map_rng.normal();

    // Speaker voices combine a global level with per-row coloration, so
    // switching the decoder moves the output style much more than the
    // style variation the latent itself carries.
    RngStream spk_rng = RngStream(seed).child(0x7003);
    speakers_.resize(config_.speakers);
    for (auto& spk : speakers_) {
        spk.row_scale.resize(config_.height);
        spk.row_bias.resize(config_.height);
        const double level = std::exp(spk_rng.uniform(-1.0, 1.0));
        for (int h = 0; h < config_.height; ++h) {
            spk.row_scale[h] = level * std::exp(spk_rng.uniform(-0.5, 0.5));
            spk.row_bias[h] = spk_rng.uniform(-0.3, 0.3);
        }
    }
}

const std::vector<double>& Testbed::token_template(int token) const {
    if (token < 0 || token >= config_.alphabet) throw std::out_of_range("token_template: token out of range");
    return templates_[token];
}

std::vector<double> Testbed::shifted_template(int token, double shift) const {
    const std::vector<double>& tmpl = templates_[token];
    std::vector<double> out(tmpl.size());
    for (int c = 0; c < config_.channels; ++c) {
        const int base = c * config_.height;
        for (int h = 0; h < config_.height; ++h)
            out[base + h] = clamp_index_interp(tmpl, config_.height, base, h - shift);
    }
    return out;
}

LatentGrid Testbed::render_latent(const ContentSeq& content, const std::vector<int>& durations,
                                  const StyleParams& style) const {
    if (content.tokens.empty()) throw std::invalid_argument("render_latent: empty content");
    if (content.tokens.size() != durations.size())
        throw std::invalid_argument("render_latent: one duration per token required");
    int total = 0;
    for (std::size_t k = 0; k < durations.size(); ++k) {
        if (durations[k] <= 0) throw std::invalid_argument("render_latent: durations must be positive");
        if (content.tokens[k] < 0 || content.tokens[k] >= config_.alphabet)
            throw std::invalid_argument("render_latent: token out of alphabet");
        total += durations[k];
    }
    if (total > config_.max_width)
        throw std::invalid_argument("render_latent: total width " + std::to_string(total) +
                                    " exceeds max_width " + std::to_string(config_.max_width));

    LatentGrid grid(config_.channels, config_.height, config_.max_width, total);
    int col = 0;
    for (std::size_t k = 0; k < content.tokens.size(); ++k) {
        std::vector<double> pattern = shifted_template(content.tokens[k], style.pitch_bias);
        for (double& v : pattern) v *= style.gain;
        for (int d = 0; d < durations[k]; ++d, ++col) {
            const double mod = 1.0 + kModulationDepth * std::sin(2.0 * std::numbers::pi * style.mod_rate * col);
            for (int c = 0; c < config_.channels; ++c)
                for (int h = 0; h < config_.height; ++h)
                    grid.at(c, h, col) = pattern[c * config_.height + h] * mod;
        }
    }
    return grid;
}

LatentPair Testbed::synth_pair(RngStream& rng) const {
    LatentPair pair;
    const int count = rng.uniform_int(config_.min_tokens, config_.max_tokens);
    pair.content.tokens.resize(count);
    int prev = -1;
    for (int k = 0; k < count; ++k) {
        if (prev < 0) {
            pair.content.tokens[k] = rng.uniform_int(0, config_.alphabet - 1);
        } else {
            // Adjacent repeats would make segment boundaries unobservable,
            // so draw from the alphabet minus the previous token.
            int r = rng.uniform_int(0, config_.alphabet - 2);
            pair.content.tokens[k] = r + (r >= prev ? 1 : 0);
        }
        prev = pair.content.tokens[k];
    }

    pair.style.gain = rng.uniform(config_.gain_min, config_.gain_max);
    pair.style.pitch_bias = rng.uniform(config_.pitch_min, config_.pitch_max);
    pair.style.mod_rate = rng.uniform(config_.mod_min, config_.mod_max);
    pair.speaker = rng.uniform_int(0, config_.speakers - 1);

    const std::vector<int> text_durations(count, config_.avg_duration);
    std::vector<int> audio_durations = text_durations;
    if (!config_.aligned) {
        const int lo = static_cast<int>(std::ceil(0.5 * config_.avg_duration));
        const int hi = static_cast<int>(std::floor(1.5 * config_.avg_duration));
        for (int& d : audio_durations) d = rng.uniform_int(lo, hi);
    }

    pair.z_text = render_latent(pair.content, text_durations, StyleParams{});
    pair.z_audio = render_latent(pair.content, audio_durations, pair.style);
    pair.embed = style_embedding(pair.style, rng);
    return pair;
}

StyleEmbedding Testbed::style_embedding(const StyleParams& style, RngStream& rng) const {
    return style_embedding(style, rng, config_.embed_noise_std);
}

StyleEmbedding Testbed::style_embedding(const StyleParams& style, RngStream& rng, double noise_std) const {
    auto to_unit = [](double v, double lo, double hi) {
        if (hi <= lo) return 0.0;
        return 2.0 * (v - lo) / (hi - lo) - 1.0;
    };
    const double u[3] = {to_unit(style.gain, config_.gain_min, config_.gain_max),
                         to_unit(style.pitch_bias, config_.pitch_min, config_.pitch_max),
                         to_unit(style.mod_rate, config_.mod_min, config_.mod_max)};
    StyleEmbedding e;
    e.values.resize(config_.embed_dim);
    for (int i = 0; i < config_.embed_dim; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j) acc += embed_map_[static_cast<std::size_t>(i) * 3 + j] * u[j];
        e.values[i] = acc;
    }
    if (noise_std > 0.0)
        for (double& v : e.values) v += noise_std * rng.normal();
    return e;
}

FeatureMap Testbed::toy_decode(const LatentGrid& z, int speaker_id) const {
    if (speaker_id < 0 || speaker_id >= static_cast<int>(speakers_.size()))
        throw std::out_of_range("toy_decode: unknown speaker id " + std::to_string(speaker_id));
    return toy_decode(z, speakers_[speaker_id]);
}

FeatureMap Testbed::toy_decode(const LatentGrid& z, const ToySpeaker& speaker) const {
    if (static_cast<int>(speaker.row_scale.size()) != z.height)
        throw std::invalid_argument("toy_decode: speaker profile height mismatch");
    FeatureMap f;
    f.height = z.height;
    f.width = z.true_width;
    f.data.assign(static_cast<std::size_t>(f.height) * f.width, 0.0);
    const double inv_c = 1.0 / z.channels;
    for (int h = 0; h < z.height; ++h) {
        for (int w = 0; w < z.true_width; ++w) {
            double mean = 0.0;
            for (int c = 0; c < z.channels; ++c) mean += z.at(c, h, w);
            mean *= inv_c;
            f.at(h, w) = speaker.row_scale[h] * mean + speaker.row_bias[h];
        }
    }
    return f;
}

namespace {

double column_dot(const LatentGrid& z, int col, const std::vector<double>& pattern, int channels, int height) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
        for (int h = 0; h < height; ++h) acc += z.at(c, h, col) * pattern[c * height + h];
    return acc;
}

double column_norm_sq(const LatentGrid& z, int col, int channels, int height) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
        for (int h = 0; h < height; ++h) acc += z.at(c, h, col) * z.at(c, h, col);
    return acc;
}

}  // namespace

Testbed::DecodeState Testbed::decode_columns(const LatentGrid& z) const {
    if (z.channels != config_.channels || z.height != config_.height)
        throw std::invalid_argument("decode: grid shape does not match testbed family");
    const int width = z.true_width;
    if (width < 1) throw DecodeError("decode: empty grid");

    double energy = 0.0;
    for (int col = 0; col < width; ++col) energy += column_norm_sq(z, col, z.channels, z.height);
    if (energy < 1e-20) throw DecodeError("decode: degenerate all-zero grid");

    const int a_count = config_.alphabet;

    // Cosine similarity of every column against every token template at a
    // candidate global row shift; gain and column modulation cancel.
    auto shift_score = [&](double shift, std::vector<std::vector<double>>* emissions) {
        std::vector<std::vector<double>> shifted(a_count);
        std::vector<double> norms(a_count);
        for (int a = 0; a < a_count; ++a) {
            shifted[a] = shifted_template(a, shift);
            norms[a] = std::sqrt(
                std::inner_product(shifted[a].begin(), shifted[a].end(), shifted[a].begin(), 0.0));
        }
        double total = 0.0;
        if (emissions != nullptr) emissions->assign(width, std::vector<double>(a_count, 1.0));
        for (int col = 0; col < width; ++col) {
            const double cnorm = std::sqrt(column_norm_sq(z, col, z.channels, z.height));
            double best = 0.0;
            for (int a = 0; a < a_count; ++a) {
                double cosine = 0.0;
                if (cnorm > 1e-15 && norms[a] > 1e-15)
                    cosine = column_dot(z, col, shifted[a], z.channels, z.height) / (cnorm * norms[a]);
                if (emissions != nullptr) (*emissions)[col][a] = 1.0 - cosine;
                best = std::max(best, cosine);
            }
            total += best;
        }
        return total;
    };

    constexpr double coarse_step = 0.25;
    double best_shift = config_.pitch_min;
    double best_score = -std::numeric_limits<double>::infinity();
    for (double shift = config_.pitch_min; shift <= config_.pitch_max + 1e-9; shift += coarse_step) {
        const double score = shift_score(shift, nullptr);
        if (score > best_score) {
            best_score = score;
            best_shift = shift;
        }
    }
    // Parabolic refinement over the coarse neighbours.
    {
        const double lo = std::max(config_.pitch_min, best_shift - coarse_step);
        const double hi = std::min(config_.pitch_max, best_shift + coarse_step);
        const double s_lo = shift_score(lo, nullptr);
        const double s_hi = shift_score(hi, nullptr);
        const double denom = s_lo - 2.0 * best_score + s_hi;
        if (std::abs(denom) > 1e-12 && lo < best_shift && best_shift < hi) {
            double offset = 0.5 * (s_lo - s_hi) / denom;
            offset = std::clamp(offset, -coarse_step, coarse_step);
            best_shift = std::clamp(best_shift + offset, config_.pitch_min, config_.pitch_max);
        }
    }

    std::vector<std::vector<double>> emissions;
    shift_score(best_shift, &emissions);

    // Viterbi with a small switch penalty; absorbs column-level noise in
    // model outputs without disturbing clean renders.
    constexpr double switch_penalty = 0.25;
    std::vector<std::vector<double>> cost(width, std::vector<double>(a_count));
    std::vector<std::vector<int>> back(width, std::vector<int>(a_count, 0));
    for (int a = 0; a < a_count; ++a) cost[0][a] = emissions[0][a];
    for (int col = 1; col < width; ++col) {
        double prev_best = cost[col - 1][0];
        int prev_arg = 0;
        for (int a = 1; a < a_count; ++a)
            if (cost[col - 1][a] < prev_best) {
                prev_best = cost[col - 1][a];
                prev_arg = a;
            }
        for (int a = 0; a < a_count; ++a) {
            const double stay = cost[col - 1][a];
            const double swap = prev_best + switch_penalty;
            if (stay <= swap) {
                cost[col][a] = stay + emissions[col][a];
                back[col][a] = a;
            } else {
                cost[col][a] = swap + emissions[col][a];
                back[col][a] = prev_arg;
            }
        }
    }

    DecodeState state;
    state.shift = best_shift;
    state.labels.resize(width);
    int arg = 0;
    for (int a = 1; a < a_count; ++a)
        if (cost[width - 1][a] < cost[width - 1][arg]) arg = a;
    for (int col = width - 1; col >= 0; --col) {
        state.labels[col] = arg;
        arg = back[col][arg];
    }

    state.scales.resize(width);
    std::vector<std::vector<double>> shifted(a_count);
    std::vector<double> norms_sq(a_count);
    for (int a = 0; a < a_count; ++a) {
        shifted[a] = shifted_template(a, best_shift);
        norms_sq[a] = std::inner_product(shifted[a].begin(), shifted[a].end(), shifted[a].begin(), 0.0);
    }
    for (int col = 0; col < width; ++col) {
        const int a = state.labels[col];
        state.scales[col] = column_dot(z, col, shifted[a], z.channels, z.height) / norms_sq[a];
    }
    return state;
}

ContentSeq Testbed::oracle_content_decode(const LatentGrid& z) const {
    DecodeState state = decode_columns(z);
    ContentSeq seq;
    for (std::size_t col = 0; col < state.labels.size(); ++col)
        if (col == 0 || state.labels[col] != state.labels[col - 1]) seq.tokens.push_back(state.labels[col]);
    return seq;
}

StyleParams Testbed::oracle_style_estimate(const LatentGrid& z) const {
    DecodeState state = decode_columns(z);
    const int width = static_cast<int>(state.scales.size());

    // The render family fixes the modulation depth, so the per-column
    // scales follow A * (1 + 0.3 sin(2 pi f c)). Fitting the single gain
    // A per candidate frequency stays well conditioned even on short
    // windows and slow modulations.
    double best_residual = std::numeric_limits<double>::infinity();
    double best_f = 0.0, best_a = 0.0;
    constexpr double f_step = 0.0025;
    for (double f = 0.0; f <= 0.5 + 1e-12; f += f_step) {
        const double sw = 2.0 * std::numbers::pi * f;
        double bb = 0.0, by = 0.0;
        for (int col = 0; col < width; ++col) {
            const double basis = 1.0 + kModulationDepth * std::sin(sw * col);
            bb += basis * basis;
            by += basis * state.scales[col];
        }
        const double a = bb > 0.0 ? by / bb : 0.0;
        double res = 0.0;
        for (int col = 0; col < width; ++col) {
            const double basis = 1.0 + kModulationDepth * std::sin(sw * col);
            const double d = state.scales[col] - a * basis;
            res += d * d;
        }
        // Strict-improvement margin: frequencies whose sine vanishes on
        // integer columns (f = 0.5) tie with f = 0 up to roundoff, and
        // ties must resolve to the simplest explanation.
        if (res < best_residual * (1.0 - 1e-6) - 1e-18) {
            best_residual = res;
            best_f = f;
            best_a = a;
        }
    }

    StyleParams est;
    est.gain = best_a;
    est.mod_rate = best_f;
    est.pitch_bias = state.shift;
    est.gain = std::clamp(est.gain, config_.gain_min, config_.gain_max);
    est.pitch_bias = std::clamp(est.pitch_bias, config_.pitch_min, config_.pitch_max);
    est.mod_rate = std::clamp(est.mod_rate, config_.mod_min, config_.mod_max);
    return est;
}

}  // namespace bridgelab
