#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace semilin {

// Counter-based RNG (Philox4x32-10).  A draw is a pure function of
// (seed, path, step, purpose), so any path can be replayed exactly without
// storing its states, and parallel schedules cannot change the stream.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

struct Block {
    std::array<std::uint32_t, 4> x;
};

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline Block generate(std::uint64_t key, std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, k0, k1);
        k0 += kW32A;
        k1 += kW32B;
    }
    return Block{ctr};
}

}  // namespace philox

/// Stream purposes keep independent uses of the same seed from colliding.
enum class StreamPurpose : std::uint32_t {
    Simulation = 0,
    BrownianEnv = 1,
    Probe = 2,
};

inline philox::Block rng_block(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                               StreamPurpose purpose) {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(step),
        static_cast<std::uint32_t>(step >> 32),
        static_cast<std::uint32_t>(path),
        static_cast<std::uint32_t>(((path >> 32) & 0xffffu) |
                                   (static_cast<std::uint32_t>(purpose) << 16)),
    };
    return philox::generate(seed, ctr);
}

inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
    // 53 significant bits mapped into (0, 1]; never returns 0, so log() is safe.
    const std::uint64_t wide = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>((wide >> 11) + 1) * 0x1.0p-53;
}

/// One standard normal per (seed, path, step, purpose) tuple via Box-Muller.
inline double rng_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                         StreamPurpose purpose = StreamPurpose::Simulation) {
    const philox::Block b = rng_block(seed, path, step, purpose);
    const double u1 = to_unit_open(b.x[0], b.x[1]);
    const double u2 = to_unit_open(b.x[2], b.x[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace semilin
