#ifndef ONLINEFDR_RNG_HPP
#define ONLINEFDR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace onlinefdr {

// splitmix64 finalizer; used both for seed derivation and for whitening
// user-supplied seeds before they reach the engine.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives an independent child seed; used to split a master seed across
/// scenarios and iterations.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(master) ^ a) ^ mix64(b + 0x1234567887654321ull));
}

/// Deterministic stream generator: mt19937_64 with hand-rolled conversions,
/// so that the byte stream of draws is identical across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniform_pos() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; two fresh uniforms per draw.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t next_u64() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

} // namespace onlinefdr

#endif
