#pragma once

// Counter-based random streams. A value is a pure function of
// (seed, stream id, counter), so results never depend on thread schedule.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace apsim {

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

/// Uniform double in (0, 1) from 53 random bits.
[[nodiscard]] constexpr double to_unit_open(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

class CounterStream {
public:
    constexpr CounterStream() = default;
    constexpr CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept : key_(hash_combine(seed, stream)) {}

    [[nodiscard]] constexpr std::uint64_t bits_at(std::uint64_t counter) const noexcept {
        return hash_combine(key_, counter);
    }

    constexpr std::uint64_t next_bits() noexcept { return bits_at(counter_++); }
    constexpr double next_uniform() noexcept { return to_unit_open(next_bits()); }

    /// Standard normal via Box-Muller (one variate per two draws).
    double next_normal() noexcept {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n) by rejection (n > 0).
    std::uint64_t next_below(std::uint64_t n) noexcept {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        for (;;) {
            const auto b = next_bits();
            if (b < limit) return b % n;
        }
    }

    [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }
    constexpr void seek(std::uint64_t counter) noexcept { counter_ = counter; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace apsim
