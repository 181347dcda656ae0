#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace llmcache {

/// Seeded generator wrapper. mt19937_64 has a standard-mandated output
/// sequence, and every mapping below is spelled out here rather than taken
/// from <random> distributions (whose algorithms are implementation-defined),
/// so equal seeds give equal streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, bound). Modulo bias is irrelevant at the bounds used here.
    std::uint64_t next_below(std::uint64_t bound) { return engine_() % bound; }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (cosine branch only; one draw per call).
    double next_gaussian() {
        double u1 = next_unit();
        if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::mt19937_64 engine_;
};

/// FNV-1a over a byte range; the stable hash used for tokenization.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace llmcache
