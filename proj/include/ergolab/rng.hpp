#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ergolab {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x);

// Seed of the substream for realization `index` under `master`.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index);

// mt19937_64 with explicit transforms so draws are identical on every
// standard library (the std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next() { return engine_(); }
    double uniform();            // [0, 1)
    double uniform_open();       // (0, 1)
    double normal();             // standard normal, Box-Muller
    std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ergolab
