#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

namespace loadslip {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive child seeds so that adding a run or a
// noise channel never shifts the streams of its siblings.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

// Fixed channel ids for the simulator's independent noise sources.
enum class NoiseChannel : std::uint64_t { Tracking = 1, Corner = 2, OnlineStep = 3, Texture = 4 };

[[nodiscard]] constexpr std::uint64_t channel_seed(std::uint64_t seed, NoiseChannel ch) noexcept {
    return derive_seed(seed, static_cast<std::uint64_t>(ch));
}

// Two independent standard normals addressed by (seed, index) instead of by
// stream position (Box-Muller on hashed uniforms). A noise process defined
// this way does not change when the sequence it is sampled on is extended.
[[nodiscard]] inline std::pair<double, double> hashed_normal_pair(std::uint64_t seed, std::uint64_t index) noexcept {
    const std::uint64_t h = derive_seed(seed, index);
    const double u1 = (static_cast<double>(mix_seed(h) >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(mix_seed(h ^ 0xd1b54a32d192ed03ULL) >> 11) + 0.5) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace loadslip
