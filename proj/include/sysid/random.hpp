#pragma once

#include <cstdint>
#include <limits>

namespace sysid {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of substream (stream, index) under a master seed.
///
/// Every random quantity in the library is drawn from its own substream, keyed
/// by what it is (stream) and when it happens (index), so draws for disjoint
/// time steps never share generator state.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
    return mix64(mix64(mix64(master) ^ (stream * 0xd1b54a32d192ed03ULL)) ^
                 (index * 0x8cb92ba72f3d8dd7ULL + 0x2545f4914f6cdd1dULL));
}

/// Well-known substream identifiers.
namespace streams {
inline constexpr std::uint64_t input = 1;
inline constexpr std::uint64_t process = 2;
inline constexpr std::uint64_t observation = 3;
inline constexpr std::uint64_t initial = 4;
inline constexpr std::uint64_t sample = 5;
inline constexpr std::uint64_t directions = 6;
inline constexpr std::uint64_t trial = 7;
inline constexpr std::uint64_t system = 8;
}  // namespace streams

/// Counter-based SplitMix64 generator; satisfies UniformRandomBitGenerator.
class CounterRng {
   public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t seed) noexcept : state_(seed) {}
    constexpr CounterRng(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept
        : state_(derive_seed(master, stream, index)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

   private:
    std::uint64_t state_;
};

}  // namespace sysid
