#pragma once

#include <cstdint>
#include <limits>

namespace mipnerf {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

/// Counter-based generator: the i-th output of stream `key` is a pure function of
/// (key, i), so results never depend on how work is scheduled across threads.
/// Satisfies UniformRandomBitGenerator for use with <random> distributions.
class CounterRng {
  public:
    using result_type = std::uint64_t;

    CounterRng() = default;
    explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(hash_combine(mix64(seed), stream)) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream)
        : key_(hash_combine(hash_combine(mix64(seed), stream), substream)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_ = 0x853C49E6748FEA9BULL;
    std::uint64_t counter_ = 0;
};

}  // namespace mipnerf
