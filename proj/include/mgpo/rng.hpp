#ifndef MGPO_RNG_HPP
#define MGPO_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace mgpo {

// SplitMix64 finalizer. Used to derive independent stream seeds from
// (base seed, index...) tuples so that every episode, node and draw index
// gets its own reproducible stream.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (auto p : parts) {
        h = mix64(h ^ mix64(p));
    }
    return h;
}

// Small, fast UniformRandomBitGenerator. Cheap to construct, which matters
// for the per-(node, draw) observation streams.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

using Rng = std::mt19937_64;

template <class URBG>
double standard_normal(URBG& gen) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(gen);
}

template <class URBG>
double uniform01(URBG& gen) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(gen);
}

template <class URBG>
std::size_t uniform_index(URBG& gen, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(gen);
}

} // namespace mgpo

#endif // MGPO_RNG_HPP
