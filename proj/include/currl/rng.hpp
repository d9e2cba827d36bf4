#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace currl {

/// One round of the SplitMix64 output function.  Used both as a seed mixer
/// and as the core of the counter-based noise generator below.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed.  Each consumer of
/// randomness (run loop, network init, observation noise, ...) gets its own
/// stream id so adding draws to one consumer never shifts another.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    return splitmix64(s);
}

/// Stream ids for derive_seed.  Frozen: changing these renumbers every run.
enum : std::uint64_t {
    kStreamRun = 1,      // scheduler + environment training draws, in loop order
    kStreamNetInit = 2,  // Q-network weight initialization
    kStreamObs = 3,      // observation noise (counter-based, see counter_gaussian)
    kStreamData = 4,     // learned-student dataset generation
    kStreamEnvInit = 5,  // learned-student model initialization
};

/// Deterministic random stream.  Every draw primitive used anywhere in the
/// library is pinned here, so a logged run replays bit-identically.  The
/// mapping from engine output to values is part of the file format contract:
/// do not change it without bumping log schema versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Raw 64-bit engine output.
    std::uint64_t raw() { return engine_(); }

    /// Uniform double in [0, 1) with 53-bit resolution.  Consumes one draw.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), n > 0.  Consumes one draw.  Plain modulo is
    /// deliberate: n is tiny (task counts, buffer sizes) so the bias is
    /// negligible, and the draw count per call stays fixed at one.
    int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

    /// Standard normal via Box-Muller.  Always consumes exactly two draws and
    /// never caches the second deviate, so draw counts stay predictable.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        // log1p(-u1) = log(1 - u1); 1 - u1 is in (0, 1] so the log is finite.
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(two_pi() * u2);
    }

    /// Normal with explicit mean and standard deviation.  Two draws.
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    static constexpr double two_pi() { return 6.283185307179586476925287; }

    std::mt19937_64 engine_;
};

/// Counter-based standard normal: a pure function of (seed, a, b, c).  Used
/// for observation noise so that reading a student's state is exactly
/// read-only -- probing twice with the same counters returns the same value
/// and consumes nothing from any sequential stream.
inline double counter_gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
    std::uint64_t s = seed;
    for (std::uint64_t v : {a, b, c}) {
        s += 0x9e3779b97f4a7c15ULL * (v + 0x632be59bd9b4e019ULL);
        s = splitmix64(s);
    }
    double u1 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace currl
