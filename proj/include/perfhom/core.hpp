#pragma once

// Small shared utilities: fixed-capacity vectors for n in {2,3}, a
// deterministic cross-platform RNG, and index helpers used throughout.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace perfhom {

// Physical points/vectors. Dimension n is runtime (2 or 3); unused
// components stay zero so dot/norm work unconditionally.
using Vec = std::array<double, 3>;
using IVec = std::array<int, 3>;

inline Vec vec2(double x, double y) { return {x, y, 0.0}; }
inline Vec vec3(double x, double y, double z) { return {x, y, z}; }

inline Vec add(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec sub(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec scale(const Vec& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
inline double dist(const Vec& a, const Vec& b) { return norm(sub(a, b)); }

inline Vec normalized(const Vec& a) {
    double n = norm(a);
    if (n == 0.0) throw std::invalid_argument("normalized: zero vector");
    return scale(a, 1.0 / n);
}

// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
    switch (n) {
        case 1: return 2.0;
        case 2: return 3.14159265358979323846;
        case 3: return 4.0 / 3.0 * 3.14159265358979323846;
        default: throw std::invalid_argument("unit_ball_volume: n must be 1, 2 or 3");
    }
}

constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937 is portable but the std distributions are
// not; we use splitmix64 with explicit mappings so every stream is bit-stable
// across platforms and compilers.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless hash of a key tuple; used for site occupancy and field samples so
// values are translation-independent data, not stream position dependent.
inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a * 0x9e3779b97f4a7c15ULL + b;
    return splitmix64(s);
}

struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0) : state(seed ^ 0xd1b54a32d192ed03ULL) {
        // decorrelate trivially related seeds
        splitmix64(state);
    }

    std::uint64_t next_u64() { return splitmix64(state); }

    // uniform in [0,1)
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [0, m)
    std::uint64_t uniform_below(std::uint64_t m) { return next_u64() % m; }
};

inline double hash_uniform01(std::uint64_t key, std::uint64_t salt) {
    return double(hash_mix(key, salt) >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Misc
// ---------------------------------------------------------------------------

inline double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace perfhom
