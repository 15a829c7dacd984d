// SPDX-License-Identifier: Apache-2.0
#include "mopd/random.hpp"

#include <cmath>
#include <numbers>

namespace mopd {

std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream RngStream::keyed(std::initializer_list<std::uint64_t> key) noexcept
{
    std::uint64_t h = 0x6A09E667F3BCC908ULL;
    for (std::uint64_t k : key) {
        h = mix64(h ^ mix64(k));
    }
    return RngStream(h);
}

double RngStream::uniform() noexcept
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept
{
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

double RngStream::normal() noexcept
{
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace mopd
