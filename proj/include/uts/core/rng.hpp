#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace uts {

/// Seeded random source. mt19937_64 supplies the bits; the value mappings
/// are written out here instead of using std:: distributions, whose output
/// is implementation-defined. Same seed, same stream, same sequence,
/// on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(mix(seed, stream)) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform double in [0,1).
    double uniform() {
        return static_cast<double>(bits() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive. Rejection-sampled, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) return lo;
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(bits());  // full 64-bit span
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t r;
        do {
            r = bits();
        } while (r >= limit);
        return lo + static_cast<std::int64_t>(r % range);
    }

    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Rayleigh with scale sigma (mode), via inverse CDF.
    double rayleigh(double sigma) {
        double u = uniform();
        while (u >= 1.0) u = uniform();
        return sigma * std::sqrt(-2.0 * std::log(1.0 - u));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 over (seed, stream) so substreams decorrelate.
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace uts
