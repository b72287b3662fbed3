#pragma once

#include <cstdint>
#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

namespace relgraph {

// 64-bit FNV-1a. Used for corpus fingerprints, config hashes and checkpoint
// checksums, so it must stay stable across releases.
inline std::uint64_t fnv1a_init() { return 1469598103934665603ULL; }

inline std::uint64_t fnv1a_byte(std::uint64_t h, unsigned char b) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 1099511628211ULL;
    return h;
}

inline std::uint64_t fnv1a_bytes(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = fnv1a_byte(h, p[i]);
    return h;
}

inline std::uint64_t fnv1a_str(std::uint64_t h, std::string_view s) {
    return fnv1a_bytes(h, s.data(), s.size());
}

inline std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) h = fnv1a_byte(h, static_cast<unsigned char>((v >> (i * 8)) & 0xFF));
    return h;
}

// splitmix64 finalizer; mixes seeds with stream tags so derived streams
// (per epoch, per database, ...) are decorrelated but reproducible.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
    return derive_seed(derive_seed(seed, tag_a), tag_b);
}

// Deterministic RNG facade. All sampling in the library goes through this
// wrapper; the raw mt19937_64 integer stream is pinned by the standard, and
// the derived draws below avoid std::*_distribution, whose output is
// implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be positive. Modulo bias is
    // negligible for the desk-scale ranges used here.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(n));
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_index(static_cast<std::size_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return next_double() < p; }

    // k distinct indices from [0, n), order of selection preserved
    // (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) k = n;
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + next_index(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace relgraph
