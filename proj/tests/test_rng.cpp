#include "cemf/parallel.hpp"
#include "cemf/rng.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace cemf;

TEST_CASE("philox matches the Random123 known-answer vectors") {
    const rng::Block zero = rng::philox({0, 0, 0, 0}, 0);
    CHECK(zero == rng::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const rng::Block ones = rng::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, 0xffffffffffffffffull);
    CHECK(ones == rng::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    const rng::Block pi = rng::philox({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, 0x299f31d0a4093822ull);
    CHECK(pi == rng::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("entry-addressed draws are pure functions of their address") {
    CHECK(rng::normal_at(3, 4, 5, 6) == rng::normal_at(3, 4, 5, 6));
    CHECK(rng::normal_at(3, 4, 5, 6) != rng::normal_at(3, 4, 6, 5));
    CHECK(rng::uniform_at(1, 2, 3, 4) != rng::uniform_at(1, 3, 3, 4));
}

TEST_CASE("normal draws have unit variance") {
    const int n = 200000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int k = 0; k < n; ++k) {
        const double z = rng::normal_at(11, 0, static_cast<std::uint64_t>(k), 0);
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("stream draws: exponential mean and unbiased bounded integers") {
    rng::Stream gen(5, 9);
    const int n = 100000;
    double sum = 0;
    for (int k = 0; k < n; ++k) sum += gen.exponential();
    CHECK(std::abs(sum / n - 1.0) < 4.0 / std::sqrt(n));

    std::vector<int> counts(7, 0);
    for (int k = 0; k < 70000; ++k) ++counts[gen.below(7)];
    double chi2 = 0;
    for (int c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
    CHECK(chi2 < 22.5); // 6 degrees of freedom, p ~ 0.001
}

TEST_CASE("streams with equal seeds replay, distinct stream ids diverge") {
    rng::Stream a(1, 2), b(1, 2), c(1, 3);
    for (int k = 0; k < 10; ++k) {
        const auto x = a();
        CHECK(x == b());
        CHECK(x != c());
    }
}

TEST_CASE("parallel_for covers every index once and rethrows") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t k) {
                        if (k == 7) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}
