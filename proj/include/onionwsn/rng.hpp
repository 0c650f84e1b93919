#ifndef ONIONWSN_RNG_HPP
#define ONIONWSN_RNG_HPP

#include "onionwsn/common.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace onionwsn {

// Seeded random source. Every random draw in the library goes through one of
// these so a (seed, config) pair reproduces a run bit for bit. Instances are
// single-owner; derive() hands out independent child streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform01();

    // Uniform on [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer on [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    void fill(std::span<std::uint8_t> out);
    Bytes bytes(std::size_t len);

    // Child stream whose seed mixes this stream's seed with the given tags.
    // Does not advance this stream.
    Rng derive(std::initializer_list<std::uint64_t> tags) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace onionwsn

#endif // ONIONWSN_RNG_HPP
