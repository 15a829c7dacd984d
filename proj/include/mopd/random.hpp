// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mopd {

/// splitmix64 finalizer; used to key independent sub-streams.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic random stream. Draws are built from raw mt19937_64 output
/// (whose sequence the standard fixes), not from std distributions, so
/// results match across standard libraries.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) noexcept
        : engine_(mix64(seed))
    {
    }

    /// Stream keyed by a sequence of integers, e.g. (seed, prompt id, rollout index).
    static RngStream keyed(std::initializer_list<std::uint64_t> key) noexcept;

    std::uint64_t next_u64() noexcept { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal (Box-Muller, no caching).
    double normal() noexcept;

    friend bool operator==(const RngStream& a, const RngStream& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace mopd
