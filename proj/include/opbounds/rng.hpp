#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace opbounds {

/// Counter-based random source. Every value is a pure function of
/// (seed, stream, i, j), so generation order and thread schedule never
/// affect results.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

    [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t i, std::uint64_t j = 0) const noexcept {
        return mix(key_ ^ mix(i * 0x9e3779b97f4a7c15ULL + mix(j + 0xbf58476d1ce4e5b9ULL)));
    }

    /// Uniform in [0, 1) with 53 random bits.
    [[nodiscard]] double uniform(std::uint64_t i, std::uint64_t j = 0) const noexcept {
        return static_cast<double>(bits(i, j) >> 11) * 0x1.0p-53;
    }

    [[nodiscard]] double uniform(double lo, double hi, std::uint64_t i, std::uint64_t j = 0) const noexcept {
        return lo + (hi - lo) * uniform(i, j);
    }

    [[nodiscard]] double rademacher(std::uint64_t i, std::uint64_t j = 0) const noexcept {
        return (bits(i, j) >> 63) != 0 ? 1.0 : -1.0;
    }

    /// Standard normal via Box-Muller on two decorrelated counters.
    [[nodiscard]] double gaussian(std::uint64_t i, std::uint64_t j = 0) const noexcept {
        const double u1 = (static_cast<double>(bits(i, 2 * j) >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(bits(i, 2 * j + 1) >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Derive an independent child stream.
    [[nodiscard]] constexpr CounterRng child(std::uint64_t tag) const noexcept {
        CounterRng r(0);
        r.key_ = mix(key_ + mix(tag ^ 0x94d049bb133111ebULL));
        return r;
    }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_;
};

}  // namespace opbounds
