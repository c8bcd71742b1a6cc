#pragma once

#include <cstdint>
#include <random>

namespace jumpvol {

// Independent sub-stream for (purpose, index) under one master seed. The
// seed sequence mixes all words, so neighbouring indices are decorrelated.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(purpose >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// Stream purposes. Distinct tags keep e.g. the h-solver bank independent of
// the wealth paths drawn under the same seed.
namespace stream {
inline constexpr std::uint64_t phi_bank = 1;
inline constexpr std::uint64_t wealth_path = 2;
inline constexpr std::uint64_t nested_outer = 3;
inline constexpr std::uint64_t nested_inner = 4;
inline constexpr std::uint64_t factor_path = 5;
inline constexpr std::uint64_t test = 99;
}  // namespace stream

}  // namespace jumpvol
