#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgelab/sampler.hpp"
#include "bridgelab/schedule.hpp"
#include "bridgelab/testbed.hpp"
#include "bridgelab/training.hpp"

namespace bridgelab {

struct ScheduleSection {
    ScheduleKind kind = ScheduleKind::cosine;
    int timesteps = 1000;
    int bridge_timesteps = 1000;
    double bridge_beta_max = 1e-4;
};

struct EvalSection {
    int pairs = 64;     // evaluation pairs per seed for the experiments
    int batches = 50;   // held-out batches for loss evaluation
};

// Full, serializable description of a run. JSON is the wire format with
// a strict schema: unknown keys are rejected and validation is total
// before any work begins.
struct ExperimentConfig {
    TestbedConfig testbed;
    ScheduleSection schedule;
    SamplerConfig sampler;
    TrainConfig training;
    TrainMode train_mode = TrainMode::i2sb;
    int hidden_width = 256;
    EvalSection eval;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "out";
    std::string dataset;  // empty -> "<out_dir>/dataset.blds"

    std::string dataset_path() const { return dataset.empty() ? out_dir + "/dataset.blds" : dataset; }

    // Network configuration implied by the training mode: palette_ddim
    // trains a concat_channels v-predictor, i2sb an embed_inject
    // x0-predictor.
    DenoiserConfig denoiser_config() const;
};

ExperimentConfig default_config();

ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical serialization (sorted keys); hashing and re-serialization of
// a parsed config are stable.
std::string to_canonical_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Cross-section validation; throws std::invalid_argument naming the
// offending field.
void validate(const ExperimentConfig& cfg);

}  // namespace bridgelab
