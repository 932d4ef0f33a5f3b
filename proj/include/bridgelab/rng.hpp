#pragma once

#include <cstdint>
#include <random>

namespace bridgelab {

// Seeded random stream. Streams are cheap to derive: child(id) yields an
// independent stream whose seed is a mix of the parent seed and id, so
// per-example / per-worker randomness stays deterministic no matter how
// the work is scheduled.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    double normal();                      // N(0, 1)
    double uniform();                     // [0, 1)
    double uniform(double lo, double hi); // [lo, hi)
    int uniform_int(int lo, int hi);      // inclusive bounds
    std::uint64_t next_u64();

    RngStream child(std::uint64_t id) const;
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t id);

}  // namespace bridgelab
