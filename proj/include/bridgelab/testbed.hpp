#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "bridgelab/denoiser.hpp"
#include "bridgelab/grid.hpp"
#include "bridgelab/rng.hpp"

namespace bridgelab {

struct ContentSeq {
    std::vector<int> tokens;
};

struct StyleParams {
    double gain = 1.0;       // amplitude multiplier
    double pitch_bias = 0.0; // vertical pattern shift in rows
    double mod_rate = 0.0;   // sinusoidal width-axis modulation, cycles/column
};

// Per-speaker affine output transform applied by the toy decoder.
struct ToySpeaker {
    std::vector<double> row_scale;  // positive
    std::vector<double> row_bias;

    static ToySpeaker identity(int height);
};

struct LatentPair {
    LatentGrid z_text;   // neutral style, average durations
    LatentGrid z_audio;  // styled, stochastic durations
    ContentSeq content;
    StyleParams style;
    int speaker = 0;
    StyleEmbedding embed;
};

struct TestbedConfig {
    int channels = 8;
    int height = 16;
    int max_width = 64;
    int alphabet = 8;
    int min_tokens = 2;
    int max_tokens = 8;
    int avg_duration = 5;
    double gain_min = 0.5, gain_max = 2.0;
    double pitch_min = -3.0, pitch_max = 3.0;
    double mod_min = 0.0, mod_max = 0.5;
    bool aligned = false;  // force z_audio durations to match z_text's
    int speakers = 4;
    int embed_dim = 16;
    double embed_noise_std = 0.05;
};

void validate(const TestbedConfig& cfg);

struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

// Frozen synthetic data family: per-token templates, the style->embedding
// map and the speaker bank are all fixed at construction from the seed.
// Generation and readout are pure given an explicit stream.
class Testbed {
public:
    Testbed(const TestbedConfig& config, std::uint64_t seed);

    const TestbedConfig& config() const { return config_; }

    // Paints each token's template across its duration columns, then
    // applies gain, a clamped fractional row shift and the sinusoidal
    // column modulation. Deterministic.
    LatentGrid render_latent(const ContentSeq& content, const std::vector<int>& durations,
                             const StyleParams& style) const;

    LatentPair synth_pair(RngStream& rng) const;

    StyleEmbedding style_embedding(const StyleParams& style, RngStream& rng, double noise_std) const;
    StyleEmbedding style_embedding(const StyleParams& style, RngStream& rng) const;

    FeatureMap toy_decode(const LatentGrid& z, int speaker_id) const;
    FeatureMap toy_decode(const LatentGrid& z, const ToySpeaker& speaker) const;

    // Column-to-template alignment; absorbs duration changes and the
    // style transforms. Throws DecodeError on degenerate input.
    ContentSeq oracle_content_decode(const LatentGrid& z) const;
    StyleParams oracle_style_estimate(const LatentGrid& z) const;

    const std::vector<ToySpeaker>& speaker_bank() const { return speakers_; }
    // Token column pattern (channels x height, flattened) as painted by a
    // neutral render.
    const std::vector<double>& token_template(int token) const;

private:
    struct DecodeState {
        double shift = 0.0;
        std::vector<int> labels;       // per-column token ids
        std::vector<double> scales;    // per-column projection coefficients
    };
    DecodeState decode_columns(const LatentGrid& z) const;
    std::vector<double> shifted_template(int token, double shift) const;

    TestbedConfig config_;
    std::vector<std::vector<double>> templates_;  // [alphabet][channels*height]
    std::vector<double> embed_map_;               // [embed_dim x 3], row-major
    std::vector<ToySpeaker> speakers_;
};

}  // namespace bridgelab
