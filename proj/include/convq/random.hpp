#pragma once

#include <cstdint>
#include <random>

namespace convq {

/// Generator for stream `stream` of a master seed. Distinct streams are
/// used per bootstrap resample, fold or group so results do not depend on
/// the order in which work is scheduled.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

/// A 64-bit seed for a sub-task, derived from a master seed and stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return seeded_rng(seed, stream)();
}

}  // namespace convq
