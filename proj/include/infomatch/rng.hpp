#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "infomatch/common.hpp"

namespace infomatch {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Combines a base seed with stream coordinates (step, purpose, index) so
// every consumer owns an independent deterministic stream.
inline std::uint64_t mix_seed(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
    return mix_seed(splitmix64(seed ^ splitmix64(next)), rest...);
}

// Deterministic RNG with fixed algorithms for every distribution we draw
// from. std::* distributions are avoided on purpose: their algorithms are
// implementation-defined, ours must reproduce bit-exactly from a seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased
    std::uint64_t uniform_below(std::uint64_t n) {
        require(n > 0, "Rng::uniform_below: n must be positive");
        const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= lim);
        return x % n;
    }

    int uniform_int(int n) { return static_cast<int>(uniform_below(static_cast<std::uint64_t>(n))); }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

    bool coin() { return (gen_() >> 63) != 0; }

    // Box-Muller; always consumes exactly two uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
    double gamma(double shape) {
        require(shape > 0.0, "Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return g * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            while (u <= 0.0) u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(p[i], p[j]);
        }
        return p;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
        if (!is) throw FormatError("Rng::deserialize: malformed state string");
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace infomatch
