#pragma once

#include <string>
#include <vector>

#include "bridgelab/denoiser.hpp"
#include "bridgelab/testbed.hpp"
#include "bridgelab/training.hpp"

namespace bridgelab {

// Checkpoint container: magic "BLCP", u32 format version, then named
// tensor records (u32 name length + bytes, u32 rank, u64 extents,
// row-major little-endian f32 data) until end of file. Network
// configuration, optimizer moments and the step counter all travel as
// named tensors. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const DenoiserParams& params, const AdamState* adam, long step);

struct Checkpoint {
    DenoiserParams params;
    AdamState adam;
    bool has_adam = false;
    long step = 0;
};

Checkpoint load_checkpoint(const std::string& path);

// Dataset container: magic "BLDS", u64 pair count, then per-pair records:
// both grids in the LGRD sub-format (tag "LGRD", u32 rank, u64 extents,
// u32 true_width, f32 data), token list, style triple, speaker id and the
// embedding vector.
void save_dataset(const std::string& path, const std::vector<LatentPair>& pairs);
std::vector<LatentPair> load_dataset(const std::string& path);

// Binary P5 at maxval 255, channels stacked vertically, min-max
// normalized per image.
void write_pgm(const std::string& path, const LatentGrid& grid);

std::vector<unsigned char> read_file_bytes(const std::string& path);

}  // namespace bridgelab
