#pragma once

#include <cstdint>
#include <string_view>

namespace tba {

// Counter-based generator: sample k is a fixed mix of (seed, k), so a stream
// is reproducible regardless of evaluation order and can be forked into
// labeled substreams that never overlap.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform01();
    // uniform in [lo, hi)
    double uniform(double lo, double hi);
    // integer uniform in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    // standard normal via Box-Muller (two words per draw)
    double normal();

    // Independent substream derived from this rng's seed and a label.
    Rng fork(std::string_view label) const;

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace tba
