// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. Every random quantity in the library is a
// pure function of (root_seed, stream_id, index), so results never depend on
// which worker produced them or in which order.
#pragma once

#include <cstdint>
#include <limits>

namespace homog {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014). Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for sample `index` of stream `stream` under `root`.
///
/// Each argument is folded in through a full finalizer round, so seeds for
/// neighbouring (stream, index) pairs are decorrelated.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                    std::uint64_t index) noexcept
{
    std::uint64_t h = mix64(root);
    h = mix64(h ^ mix64(stream + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ mix64(index + 0x85157af5a6b2c3d1ULL));
    return h;
}

/// Counter-mode generator: output i is mix64(key + i * golden).
/// Satisfies UniformRandomBitGenerator so it plugs into <random>
/// distributions.
class CounterRng
{
  public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_{key} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept
    {
        return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace homog
