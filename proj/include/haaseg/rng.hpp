#pragma once

#include "haaseg/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace haaseg {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by `parts`, e.g. derive_seed(seed, {sample_idx}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = mix64(seed);
    for (auto p : parts)
        h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    /// Uniform integer in [lo, hi].
    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Tensor with i.i.d. N(0, stddev^2) entries.
Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0);
/// Tensor with i.i.d. U(lo, hi) entries.
Tensor uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);

} // namespace haaseg
