#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace granular {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream for (master seed, stream index). Streams never depend
/// on how work is split across threads.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(master_seed)),
                      static_cast<std::uint32_t>(splitmix64(master_seed) >> 32),
                      static_cast<std::uint32_t>(splitmix64(index ^ 0x5851f42d4c957f2dULL)),
                      static_cast<std::uint32_t>(splitmix64(index + master_seed) >> 32)};
    return Rng{seq};
}

/// Uniform draw on the open interval (0, 1).
inline double uniform_open(Rng& rng)
{
    for (;;) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u > 0.0) {
            return u;
        }
    }
}

inline double exponential1(Rng& rng)
{
    return -std::log(uniform_open(rng));
}

inline std::int64_t poisson_draw(double mean, Rng& rng)
{
    if (!(mean > 0.0)) {
        return 0;
    }
    std::poisson_distribution<std::int64_t> dist(mean);
    return dist(rng);
}

} // namespace granular
