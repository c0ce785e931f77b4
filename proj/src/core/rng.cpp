#include "trackbench/core/rng.hpp"

#include <cmath>
#include <numbers>

namespace trackbench {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string_view label)
    : Rng(splitmix64(splitmix64(seed) ^ fnv1a64(label))) {}

Rng::Rng(std::uint64_t key) : key_(key), engine_(key) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n <= 1) {
        return 0;
    }
    std::uint64_t const limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = 0;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

int Rng::uniform_int(int lo, int hi_inclusive) {
    auto const span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi_inclusive) - lo + 1);
    return lo + static_cast<int>(uniform_index(span));
}

double Rng::normal() {
    // Box-Muller, one output per pair so the stream position is draw-count independent.
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    double const u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::child(std::string_view label) const {
    return Rng(splitmix64(key_ ^ fnv1a64(label)));
}

} // namespace trackbench
