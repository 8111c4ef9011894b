#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace mmgs {

/// Seeded generator with platform-independent real-valued draws.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined; everything that feeds generated data or weight
/// initialization goes through this wrapper instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Derive an independent stream, e.g. one per frame.
    Rng fork(std::uint64_t salt) {
        std::seed_seq seq{static_cast<std::uint32_t>(engine_() >> 32),
                          static_cast<std::uint32_t>(salt),
                          static_cast<std::uint32_t>(salt >> 32)};
        return Rng(std::mt19937_64(seq));
    }

private:
    explicit Rng(std::mt19937_64 engine) : engine_(engine) {}

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mmgs
