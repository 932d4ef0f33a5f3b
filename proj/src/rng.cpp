#include "bridgelab/rng.hpp"

namespace bridgelab {

namespace {

// splitmix64 finalizer; decorrelates nearby seeds before feeding mt19937_64.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t id) {
    return splitmix64(seed ^ splitmix64(id + 0x5851F42D4C957F2Dull));
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

double RngStream::normal() { return normal_(gen_); }

double RngStream::uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
}

double RngStream::uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
}

int RngStream::uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(gen_);
}

std::uint64_t RngStream::next_u64() { return gen_(); }

RngStream RngStream::child(std::uint64_t id) const { return RngStream(mix_seed(seed_, id)); }

}  // namespace bridgelab
