#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tcmf {

/// Counter-based pseudo-random stream with cheap key-derived sub-streams.
///
/// Each stream is identified by a 64-bit key; the i-th output is
/// mix(key + i*gamma) (SplitMix64). Sub-streams derived via child() are
/// statistically independent of the parent and of each other, and their
/// output does not depend on how much the parent has been consumed.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(mix(key + kSalt)) {}

    /// Derive an independent sub-stream. Same (key, tag) always yields the
    /// same child, regardless of draws already taken from *this.
    [[nodiscard]] RngStream child(std::uint64_t tag) const {
        return RngStream(key_ ^ mix(tag * kGamma + kSalt));
    }
    [[nodiscard]] RngStream child(std::uint64_t tag, std::uint64_t index) const {
        return child(tag).child(index + 1);
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

    /// Uniform on [0,1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0,1] (safe for log()).
    double next_double_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (one value per call).
    double next_gaussian() {
        const double u1 = next_double_open();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Poisson count with the given mean. Exact for any mean >= 0; large
    /// means are split into chunks so the product method stays in range.
    std::uint64_t next_poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 25.0) {
            total += poisson_knuth(25.0);
            mean -= 25.0;
        }
        if (mean > 0.0) total += poisson_knuth(mean);
        return total;
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t kSalt = 0xD1B54A32D192ED03ull;

    // SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return x;
    }

    std::uint64_t poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_double_open();
        } while (p > limit);
        return k - 1;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Stream tags used across the library so sub-stream layout is stable.
namespace stream_tag {
inline constexpr std::uint64_t intensity_b = 1;
inline constexpr std::uint64_t intensity_h = 2;
inline constexpr std::uint64_t gaussian = 3;
inline constexpr std::uint64_t poisson = 4;
inline constexpr std::uint64_t particle = 5;
inline constexpr std::uint64_t copy_ensemble = 6;
}  // namespace stream_tag

}  // namespace tcmf
