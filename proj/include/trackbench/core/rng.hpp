#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trackbench {

/// Deterministic random stream keyed by (seed, label).
///
/// Draws are produced from the standard-specified std::mt19937_64 sequence and
/// converted with hand-written transforms, so streams are identical across
/// standard libraries and platforms.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view label);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    int uniform_int(int lo, int hi_inclusive);
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    /// Child stream whose key extends this stream's key with `label`.
    [[nodiscard]] Rng child(std::string_view label) const;

    [[nodiscard]] std::uint64_t key() const { return key_; }

private:
    explicit Rng(std::uint64_t key);

    std::uint64_t key_;
    std::mt19937_64 engine_;
};

inline Rng seeded_rng(std::uint64_t seed, std::string_view stream_label) {
    return Rng(seed, stream_label);
}

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

} // namespace trackbench
