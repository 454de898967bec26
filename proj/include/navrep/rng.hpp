#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace navrep {

// Deterministic random stream. The engine (mt19937_64) is fully specified by
// the standard; the distributions below are hand-rolled because the stdlib
// ones are implementation-defined and would break cross-compiler
// reproducibility of generated datasets.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of randomness.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller (always consumes two uniforms).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Bernoulli draw.
    bool coin(double p) { return uniform() < p; }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Derive an independent stream keyed off this stream's seed (not its
    // current state), so derivation order does not matter.
    Rng substream(const std::string& tag) const;
    Rng substream(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

// splitmix64 step; the standard seed-mixing primitive used for stream derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(const std::string& s);

}  // namespace navrep
