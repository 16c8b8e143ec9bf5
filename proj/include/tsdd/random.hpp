#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace tsdd {

/// SplitMix64 finalizer; used only to derive independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Random stream bound to (seed, patch, index).
 *
 * Every sample of every patch draws from its own std::mt19937_64 whose seed is
 * a SplitMix64 hash of the triple, so offline builds give identical samples in
 * any processing order. Uniform and normal variates are produced here rather
 * than with <random> distributions, whose output is implementation defined;
 * this keeps dictionaries identical across standard libraries.
 */
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t patch, std::uint64_t index, std::uint64_t attempt = 0)
        : engine_(derive(seed, patch, index, attempt)) {}

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t patch, std::uint64_t index,
                                std::uint64_t attempt) noexcept
    {
        std::uint64_t s = splitmix64(seed);
        s = splitmix64(s ^ (patch * 0x632be59bd9b4e019ULL));
        s = splitmix64(s ^ (index * 0x85ebca77c2b2ae63ULL));
        return splitmix64(s ^ (attempt * 0xc2b2ae3d27d4eb4fULL));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open0() { return 1.0 - uniform(); }

    /// Standard normal via Box-Muller.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(ang);
        has_spare_ = true;
        return rad * std::cos(ang);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace tsdd
