#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lhb {

/// Philox4x32-10 block function (Salmon et al., Random123). Maps a 128-bit
/// counter and a 64-bit key to 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Independent substreams used by the simulators. Each round of a replication
/// draws from its own (stream, round) block, so the draws of one stream do not
/// depend on how many values another stream consumed.
enum class Stream : std::uint32_t {
    truth = 1,
    gating = 2,
    arms = 3,
    group = 4,
    noise = 5,
    explore = 6,
    resample = 7,
    folds = 8,
    gmm = 9,
    probe = 10,
    perturb = 11,
};

/// Counter-based 64-bit generator satisfying UniformRandomBitGenerator.
///
/// The stream is fully determined by (seed, stream, block); output k is the
/// k-th 64-bit word of philox4x32(counter = {k/2, stream, block_lo, block_hi}, key = seed).
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t block = 0) noexcept
        : CounterRng(seed, static_cast<std::uint32_t>(stream), block) {}

    CounterRng(std::uint64_t seed, std::uint32_t stream, std::uint64_t block) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream),
          block_(block) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_;
    std::uint64_t block_;
    std::uint32_t counter_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
};

/// Seed of replication `rep`: base_seed XOR rep.
constexpr std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t rep) noexcept {
    return base_seed ^ rep;
}

/// Derives a child seed from a parent seed and a tag (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

}  // namespace lhb
