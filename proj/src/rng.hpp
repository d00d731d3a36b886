#pragma once

#include <cstdint>
#include <string_view>

namespace mnif {

// Deterministic splitmix64 generator with stable substreams. Forks derive
// from the construction seed, not the current position, so a component's
// stream is unaffected by how many draws unrelated code has made.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) { return lo + static_cast<float>(uniform()) * (hi - lo); }

    // Box-Muller; consumes two uniforms per pair, caches the spare.
    float normal(float mean = 0.0f, float stddev = 1.0f);

    Rng fork(std::string_view name) const { return Rng(mix(seed_, hash_name(name))); }
    Rng fork(uint64_t index) const { return Rng(mix(seed_, 0x6A09E667F3BCC909ULL ^ index)); }

    uint64_t seed() const { return seed_; }

private:
    static uint64_t hash_name(std::string_view name) {
        uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mnif
