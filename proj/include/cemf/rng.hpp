#pragma once

// Counter-based random numbers (Philox4x32-10).  Every draw is a pure function
// of (seed, stream, counter), so parallel trials reproduce regardless of the
// order in which threads pick them up.

#include <array>
#include <cstdint>
#include <limits>

namespace cemf::rng {

using Block = std::array<std::uint32_t, 4>;

Block philox(Block counter, std::uint64_t key);

// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Stream ids reserved by the samplers.  Keeping them distinct means a GOE
// perturbation and a Bernoulli base matrix drawn from the same seed are
// independent.
namespace streams {
inline constexpr std::uint64_t goe = 0x474f45;
inline constexpr std::uint64_t wigner = 0x574947;
inline constexpr std::uint64_t erdos_renyi = 0x4552;
inline constexpr std::uint64_t regular = 0x524547;
inline constexpr std::uint64_t levy = 0x4c4556;
inline constexpr std::uint64_t haar = 0x48414152;
inline constexpr std::uint64_t see = 0x534545;
inline constexpr std::uint64_t generic = 0x47454e;
} // namespace streams

// Uniform on the open interval (0,1) from the top 53 bits.
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Entry-addressed draws: value depends only on (seed, stream, i, j).
double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t i, std::uint64_t j);
double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t i, std::uint64_t j);

// Sequential stream satisfying UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, std::uint64_t stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();
    double uniform() { return to_unit((*this)()); }
    double normal();
    double exponential();
    // Uniform integer in [0, bound) without modulo bias.
    std::uint64_t below(std::uint64_t bound);

private:
    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block block_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cemf::rng
