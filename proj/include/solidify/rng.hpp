#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace solidify {

// Counter-based stream: output i is a SplitMix64 finalizer applied to
// key + i * golden.  Streams are derived, never advanced in lock-step, so a
// replica's numbers do not depend on how many workers ran before it.
class Stream {
  public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key = 0) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // uniform on [0,1)
    double uniform();
    // uniform on (0,1]
    double uniform_pos() { return 1.0 - uniform(); }
    // standard normal, Box-Muller on two fresh uniforms (no cached state)
    double normal();
    // exponential with mean 1
    double exponential();

    Stream split(std::uint64_t index) const;
    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);
std::uint64_t hash_name(std::string_view name);

// (seed, kind, replica) -> independent stream
Stream derive_stream(std::uint64_t seed, std::string_view kind, std::uint64_t replica);

} // namespace solidify
