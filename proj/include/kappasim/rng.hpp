#pragma once

#include <cstdint>
#include <initializer_list>

namespace kappasim {

/// Counter-based 64-bit generator (SplitMix64 output function over a Weyl
/// counter). The state is a plain counter, so every stochastic operation can
/// run on its own stream derived from (seed, indices...) and campaigns are
/// bit-reproducible regardless of evaluation order.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed = 0) noexcept : counter_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~static_cast<result_type>(0); }

    result_type operator()() noexcept {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix(counter_);
    }

    /// Bijective 64-bit finalizer; also used for seed derivation.
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

private:
    std::uint64_t counter_;
};

/// Folds stream indices into a master seed so that distinct index tuples give
/// statistically independent substreams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = CounterRng::mix(seed + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t p : path) {
        s = CounterRng::mix(s ^ (p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2)));
    }
    return s;
}

} // namespace kappasim
