// Seeded PRNG for deterministic world generation and training.
//
// std::uniform_*_distribution output is implementation-defined, so every
// sampling primitive here is spelled out explicitly. Given the same seed the
// byte stream is identical across platforms and standard libraries.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace r3 {

/// splitmix64 — tiny, well-mixed, and easy to reproduce anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates shuffle with this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// FNV-1a, used to fold strings and counters into derived seeds.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derive an independent stream from a base seed and a label.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& label) {
    std::uint64_t h = fnv1a(label);
    return base ^ (h + 0x9E3779B97F4A7C15ULL + (base << 6) + (base >> 2));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t n) {
    Rng r(base ^ (n * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL));
    return r.next_u64();
}

}  // namespace r3
