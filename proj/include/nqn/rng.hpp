#pragma once

// Deterministic random streams.
//
// All draws come from std::mt19937_64, whose output sequence is fixed by the
// standard. Uniforms and normals use explicit maps instead of the std::
// distributions so the same seed gives the same numbers on every platform:
//
//   uniform01: u = ((x >> 11) + 1) * 2^-53, in (0, 1]
//   normal:    Box-Muller on two fresh uniforms, cosine branch only
//
// Child seeds for suite cells are
//
//   splitmix64(master ^ splitmix64(fnv1a64(label + '\x1f' + method + '\x1f' + replicate)))
//
// with the replicate index written in decimal.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

namespace nqn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t child_seed(std::uint64_t master, std::string_view problem_label,
                                std::string_view method_id, std::uint64_t replicate) {
    std::string key;
    key.reserve(problem_label.size() + method_id.size() + 24);
    key.append(problem_label);
    key.push_back('\x1f');
    key.append(method_id);
    key.push_back('\x1f');
    key.append(std::to_string(replicate));
    return splitmix64(master ^ splitmix64(fnv1a64(key)));
}

/// Seeded stream. Copying forks the stream deterministically.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() {
        constexpr double kScale = 1.0 / 9007199254740992.0; // 2^-53
        return static_cast<double>((engine_() >> 11) + 1) * kScale;
    }

    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace nqn
