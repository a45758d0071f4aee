#pragma once

#include <cstdint>
#include <string_view>

namespace moevl {

// Counter-free splitmix64 stream. Every random draw in the project goes
// through this generator so that a run is a pure function of its root seed;
// derive_seed() fans the root seed out into independent streams keyed by a
// label plus up to two integer coordinates (stage, epoch, step, ...).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    // Uniform in [0, bound). Modulo bias is negligible for the small bounds
    // used here (class counts, token positions, permutation swaps).
    int next_int(int bound) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(bound));
    }

private:
    std::uint64_t state_;
};

// FNV-1a over arbitrary bytes; also used for config hashing and the tensor
// checksums printed by the checkpoint inspector.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a(label.data(), label.size());
    h = fnv1a(&root, sizeof root, h);
    h = fnv1a(&a, sizeof a, h);
    h = fnv1a(&b, sizeof b, h);
    // Run the hash through one splitmix round so adjacent coordinates do not
    // produce adjacent stream states.
    return Rng(h).next_u64();
}

}  // namespace moevl
