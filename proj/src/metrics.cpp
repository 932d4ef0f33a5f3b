#include "bridgelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace bridgelab {

namespace {

std::size_t lcs_length(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

ScoreResult content_score(const Testbed& tb, const LatentGrid& output, const ContentSeq& truth) {
    if (truth.tokens.empty()) throw std::invalid_argument("content_score: empty truth sequence");
    ContentSeq decoded;
    try {
        decoded = tb.oracle_content_decode(output);
    } catch (const DecodeError&) {
        return ScoreResult{0.0, true};
    }
    const std::size_t longest = std::max(truth.tokens.size(), decoded.tokens.size());
    return ScoreResult{static_cast<double>(lcs_length(truth.tokens, decoded.tokens)) / longest, false};
}

ScoreResult style_score(const Testbed& tb, const LatentGrid& output, const StyleParams& target) {
    StyleParams est;
    try {
        est = tb.oracle_style_estimate(output);
    } catch (const DecodeError&) {
        return ScoreResult{1.0, true};
    }
    const TestbedConfig& cfg = tb.config();
    const double gain_range = cfg.gain_max - cfg.gain_min;
    const double pitch_range = cfg.pitch_max - cfg.pitch_min;
    const double mod_range = cfg.mod_max - cfg.mod_min;
    double err = 0.0;
    err += gain_range > 0 ? std::abs(est.gain - target.gain) / gain_range : 0.0;
    err += pitch_range > 0 ? std::abs(est.pitch_bias - target.pitch_bias) / pitch_range : 0.0;
    err += mod_range > 0 ? std::abs(est.mod_rate - target.mod_rate) / mod_range : 0.0;
    return ScoreResult{err / 3.0, false};
}

MomentCheckReport gaussian_moment_check(const std::vector<std::vector<double>>& samples,
                                        const std::vector<double>& mu, double s, double tol,
                                        RngStream& rng) {
    if (samples.size() < 1000) throw std::invalid_argument("gaussian_moment_check: need at least 1000 samples");
    const std::size_t dim = samples.front().size();
    if (dim == 0) throw std::invalid_argument("gaussian_moment_check: empty samples");
    const bool broadcast = mu.size() == 1;
    if (!broadcast && mu.size() != dim) throw std::invalid_argument("gaussian_moment_check: mu size mismatch");

    MomentCheckReport report;
    const double n = static_cast<double>(samples.size());
    double w1_sum = 0.0;
    std::vector<double> coord(samples.size());
    std::vector<double> oracle(samples.size());
    for (std::size_t d = 0; d < dim; ++d) {
        const double target_mean = broadcast ? mu[0] : mu[d];
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].size() != dim) throw std::invalid_argument("gaussian_moment_check: ragged samples");
            const double v = samples[i][d];
            coord[i] = v;
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / n;
        const double var = std::max(sum_sq / n - mean * mean, 0.0);
        report.max_mean_err = std::max(report.max_mean_err, std::abs(mean - target_mean));
        report.max_std_err = std::max(report.max_std_err, std::abs(std::sqrt(var) - s));

        for (std::size_t i = 0; i < oracle.size(); ++i) oracle[i] = target_mean + s * rng.normal();
        std::sort(coord.begin(), coord.end());
        std::sort(oracle.begin(), oracle.end());
        double w1 = 0.0;
        for (std::size_t i = 0; i < coord.size(); ++i) w1 += std::abs(coord[i] - oracle[i]);
        w1_sum += w1 / n;
    }
    report.w1_distance = w1_sum / static_cast<double>(dim);
    report.pass = !(report.max_mean_err > tol) && !(report.max_std_err > tol);
    return report;
}

double misalignment_fraction(double loss_misaligned, double loss_aligned) {
    if (!(loss_misaligned > 0.0))
        throw std::invalid_argument("misalignment_fraction: loss_misaligned must be positive");
    return std::clamp((loss_misaligned - loss_aligned) / loss_misaligned, 0.0, 1.0);
}

StyleDescriptor feature_style_descriptor(const FeatureMap& f) {
    StyleDescriptor d;
    if (f.height == 0 || f.width == 0) return d;
    const std::size_t n = f.data.size();
    double total = 0.0;
    for (double v : f.data) total += std::abs(v);
    d.amplitude = total / static_cast<double>(n);

    if (total > 0.0) {
        double weighted = 0.0;
        for (int h = 0; h < f.height; ++h) {
            double row_mass = 0.0;
            for (int w = 0; w < f.width; ++w) row_mass += std::abs(f.at(h, w));
            weighted += row_mass * (f.height > 1 ? static_cast<double>(h) / (f.height - 1) : 0.5);
        }
        d.row_centroid = weighted / total;
    } else {
        d.row_centroid = 0.5;
    }

    double col_mean = 0.0;
    std::vector<double> col_mass(f.width, 0.0);
    for (int w = 0; w < f.width; ++w) {
        for (int h = 0; h < f.height; ++h) col_mass[w] += std::abs(f.at(h, w));
        col_mean += col_mass[w];
    }
    col_mean /= f.width;
    if (col_mean > 0.0) {
        double var = 0.0;
        for (double m : col_mass) var += (m - col_mean) * (m - col_mean);
        d.column_variation = std::sqrt(var / f.width) / col_mean;
    }
    return d;
}

double style_descriptor_distance(const StyleDescriptor& a, const StyleDescriptor& b) {
    const double amp_scale = std::max({std::abs(a.amplitude), std::abs(b.amplitude), 1e-12});
    const double cv_scale = std::max({a.column_variation, b.column_variation, 1.0});
    return (std::abs(a.amplitude - b.amplitude) / amp_scale + std::abs(a.row_centroid - b.row_centroid) +
            std::abs(a.column_variation - b.column_variation) / cv_scale) /
           3.0;
}

SwapEffects swap_effect_sizes(const Denoiser& model, const Testbed& tb, int speaker_a, int speaker_b,
                              const StyleEmbedding& c_a, const StyleEmbedding& c_b,
                              const std::vector<LatentPair>& eval_set, const SamplerConfig& cfg,
                              const BridgeSchedule& bridge, RngStream& rng) {
    if (eval_set.empty()) throw std::invalid_argument("swap_effect_sizes: empty evaluation set");

    SwapEffects totals;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const LatentPair& pair = eval_set[i];
        RngStream base_rng = rng.child(i);
        RngStream swap_rng = rng.child(i);  // same stream: identical boundary noise
        const LatentGrid base = i2sb_sample(model, pair.z_text, &c_a, cfg, bridge, base_rng);
        const LatentGrid embed_swapped = i2sb_sample(model, pair.z_text, &c_b, cfg, bridge, swap_rng);

        const StyleDescriptor d_base = feature_style_descriptor(tb.toy_decode(base, speaker_a));
        const StyleDescriptor d_embed = feature_style_descriptor(tb.toy_decode(embed_swapped, speaker_a));
        const StyleDescriptor d_decoder = feature_style_descriptor(tb.toy_decode(base, speaker_b));

        totals.embed_effect += style_descriptor_distance(d_base, d_embed);
        totals.decoder_effect += style_descriptor_distance(d_base, d_decoder);

        const double score_base = content_score(tb, base, pair.content).value;
        const double score_embed = content_score(tb, embed_swapped, pair.content).value;
        totals.embed_content_delta += score_base - score_embed;
        // The decoder swap reuses the base latent; its content delta is 0
        // by construction and stays 0 in the report.
    }
    const double n = static_cast<double>(eval_set.size());
    totals.embed_effect /= n;
    totals.decoder_effect /= n;
    totals.embed_content_delta /= n;
    return totals;
}

MetricValue summarize(const std::vector<double>& per_seed) {
    MetricValue m;
    m.n = static_cast<int>(per_seed.size());
    if (per_seed.empty()) return m;
    double sum = 0.0;
    for (double v : per_seed) sum += v;
    m.mean = sum / m.n;
    if (m.n > 1) {
        double var = 0.0;
        for (double v : per_seed) var += (v - m.mean) * (v - m.mean);
        m.stderr = std::sqrt(var / (m.n - 1)) / std::sqrt(static_cast<double>(m.n));
    }
    return m;
}

void write_report_csv(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot open " + path);
    out << "metric,mean,stderr,n_seeds\n";
    out.precision(12);
    for (const auto& [name, value] : report.metrics)
        out << name << "," << value.mean << "," << value.stderr << "," << value.n << "\n";
}

void write_report_json(const std::string& path, const ExperimentReport& report) {
    nlohmann::json j;
    j["experiment"] = report.name;
    j["config_hash"] = report.config_hash;
    j["seeds"] = report.seeds;
    j["single_seed_flag"] = report.single_seed_flag();
    for (const auto& [name, value] : report.metrics) {
        j[name] = value.mean;
        j[name + "_stderr"] = value.stderr;
        j[name + "_n"] = value.n;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace bridgelab
