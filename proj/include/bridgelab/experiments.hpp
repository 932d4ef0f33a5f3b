#pragma once

#include <string>

#include "bridgelab/config.hpp"
#include "bridgelab/metrics.hpp"

namespace bridgelab {

// Sampler-vs-closed-form transport checks with the analytic denoisers;
// no training involved.
ExperimentReport run_gaussian_oracle(const ExperimentConfig& cfg);

// Aligned vs misaligned training arms at identical budgets; reports the
// held-out loss of each arm and the misalignment fraction per seed.
ExperimentReport run_misalign(const ExperimentConfig& cfg);

// Guidance sweep w in {0,1,2,4} on a trained bridge model conditioned on
// a swapped target style; reports content/style change relative to w=0.
ExperimentReport run_cfg_sweep(const ExperimentConfig& cfg);

// Embedding swap vs decoder-speaker swap on a trained bridge model;
// reports both effect sizes on decoded features.
ExperimentReport run_speaker_swap(const ExperimentConfig& cfg);

// Dispatch by name (gaussian-oracle, misalign, cfg-sweep, speaker-swap),
// writes report.csv / report.json and PGM snapshots under
// <out_dir>/<name>/.
ExperimentReport run_experiment(const std::string& name, const ExperimentConfig& cfg);

// Trains the configured model for one replica seed, or loads the cached
// checkpoint when the same recipe+seed was trained before. The returned
// parameters always round-trip through the checkpoint so repeated runs
// evaluate identical weights.
DenoiserParams train_or_load(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& cache_dir);

}  // namespace bridgelab
