#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bridgelab/grid.hpp"
#include "bridgelab/rng.hpp"
#include "bridgelab/sampler.hpp"
#include "bridgelab/testbed.hpp"

namespace bridgelab {

struct ScoreResult {
    double value = 0.0;
    bool degenerate = false;
};

// Token accuracy of the content oracle against the truth sequence under
// alignment-tolerant matching (longest common subsequence over the
// longer length). Decode failure scores 0 with the degenerate flag set.
ScoreResult content_score(const Testbed& tb, const LatentGrid& output, const ContentSeq& truth);

// Mean per-field error of the style oracle against the target, each
// field normalized by its configured range width.
ScoreResult style_score(const Testbed& tb, const LatentGrid& output, const StyleParams& target);

struct MomentCheckReport {
    double max_mean_err = 0.0;
    double max_std_err = 0.0;
    double w1_distance = 0.0;  // sliced 1-D Wasserstein-1 vs fresh oracle draws
    bool pass = false;
};

// Per-coordinate sample mean/std against an isotropic N(mu, s^2) within
// tol. `mu` is broadcast when it has a single element.
MomentCheckReport gaussian_moment_check(const std::vector<std::vector<double>>& samples,
                                        const std::vector<double>& mu, double s, double tol, RngStream& rng);

// (loss_misaligned - loss_aligned) / loss_misaligned, clipped to [0, 1].
double misalignment_fraction(double loss_misaligned, double loss_aligned);

// Coarse style readout of decoded features: overall level, vertical mass
// placement, and width-axis energy variation.
struct StyleDescriptor {
    double amplitude = 0.0;
    double row_centroid = 0.0;
    double column_variation = 0.0;
};

StyleDescriptor feature_style_descriptor(const FeatureMap& features);
double style_descriptor_distance(const StyleDescriptor& a, const StyleDescriptor& b);

struct SwapEffects {
    double embed_effect = 0.0;           // decoded style shift, c_A -> c_B at fixed decoder A
    double decoder_effect = 0.0;         // decoded style shift, decoder A -> B at fixed c_A
    double embed_content_delta = 0.0;    // content_score drop under the embedding swap
    double decoder_content_delta = 0.0;  // always 0: the decoder cannot alter the latent
};

// Runs the bridge sampler per evaluation pair under the three
// conditioning arrangements and measures decoded style/content changes.
// Per-pair child streams make the base and swapped runs share the same
// boundary perturbation.
SwapEffects swap_effect_sizes(const Denoiser& model, const Testbed& tb, int speaker_a, int speaker_b,
                              const StyleEmbedding& c_a, const StyleEmbedding& c_b,
                              const std::vector<LatentPair>& eval_set, const SamplerConfig& cfg,
                              const BridgeSchedule& bridge, RngStream& rng);

struct MetricValue {
    double mean = 0.0;
    double stderr = 0.0;
    int n = 0;
};

MetricValue summarize(const std::vector<double>& per_seed);

struct ExperimentReport {
    std::string name;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, MetricValue> metrics;

    bool single_seed_flag() const { return seeds.size() < 3; }
};

// CSV rows are `metric,mean,stderr,n_seeds`; the JSON mirror is flat.
void write_report_csv(const std::string& path, const ExperimentReport& report);
void write_report_json(const std::string& path, const ExperimentReport& report);

}  // namespace bridgelab
