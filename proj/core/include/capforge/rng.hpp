#pragma once

#include <cstdint>

namespace capforge {

// SplitMix64 counter generator. Every stochastic path in the library draws
// from one of these, so a (seed, stream) pair pins behavior bit-exactly
// across platforms and runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Derive an independent stream; advancing the child never touches the
    // parent beyond this one draw.
    Rng split() { return Rng(next_u64()); }

private:
    std::uint64_t state_;
};

}  // namespace capforge
