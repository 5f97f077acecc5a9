#pragma once

#include <cstdint>
#include <random>

namespace sfdiff {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, index); lets parallel producers
// reproduce the serial byte stream.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

// Stream tags, one per consumer of the global seed.
namespace streams {
inline constexpr std::uint64_t kTrainSample = 0x7472'6169'6e00;
inline constexpr std::uint64_t kTestRoom = 0x7465'7374'0000;
inline constexpr std::uint64_t kParameters = 0x7061'7261'6d00;
inline constexpr std::uint64_t kTraining = 0x7374'6570'0000;
inline constexpr std::uint64_t kSampling = 0x7361'6d70'6c00;
inline constexpr std::uint64_t kBaselineMask = 0x6d61'736b'0000;
inline constexpr std::uint64_t kShuffle = 0x7368'7566'0000;
}  // namespace streams

}  // namespace sfdiff
