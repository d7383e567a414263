#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace upl {

// Deterministic random source. mt19937_64's raw output sequence is fixed by
// the standard; the distribution transforms below are hand-rolled so that
// identical seeds give bit-identical streams on every platform and compiler.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; consumes two raw draws per call
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // uniform integer in [0, n)
    std::uint64_t index(std::uint64_t n) {
        // multiply-shift; bias is < 2^-64 per draw, far below anything we test
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

  private:
    std::mt19937_64 eng_;
};

// SplitMix64 round; used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace upl
