#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace slimstack {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Deterministic, splittable random stream. Every piece of randomness in the
// project descends from one root seed; children are derived by hashing a
// label into the parent seed, so adding a new consumer never perturbs the
// streams of existing ones. mt19937_64 is fully specified by the standard and
// the Gaussian transform is our own, so sequences are identical across
// platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    Rng split(std::string_view label) const {
        return Rng(detail::splitmix64(seed_ ^ detail::fnv1a64(label)));
    }

    Rng split(std::string_view label, std::uint64_t index) const {
        return Rng(detail::splitmix64(detail::splitmix64(seed_ ^ detail::fnv1a64(label)) + index));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1]; never returns 0 so it is safe under log().
    double uniform_pos() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    std::size_t uniform_index(std::size_t n) {
        // n is tiny in this codebase; modulo bias is irrelevant at 64 bits.
        return static_cast<std::size_t>(engine_() % n);
    }

    // Box-Muller with one cached value.
    double gaussian() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cache_ = r * std::sin(theta);
        has_cache_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::swap(v[i], v[uniform_index(i + 1)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace slimstack
