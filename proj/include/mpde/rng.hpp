#pragma once

#include <cstdint>

namespace mpde {

// SplitMix64 generator. Small state, fully deterministic across platforms,
// and cheap to split into decorrelated child streams, which is what the
// training loops use to make every problem's content a pure function of
// (master seed, problem index) rather than of batch composition.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in the open interval (0, 1); used for interior-point sampling
    // so samples never land on the domain boundary.
    double next_open_unit() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Child stream `stream` of this generator's current state. Children with
    // distinct stream ids are decorrelated from each other and from the
    // parent sequence.
    Rng child(std::uint64_t stream) const {
        return Rng(mix(state_ ^ mix(stream + 0x632BE59BD9B4E019ull)));
    }

    std::uint64_t state() const { return state_; }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

  private:
    std::uint64_t state_;
};

// Stable seed for item `index` of a stream owned by `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return Rng(master).child(index).state();
}

}  // namespace mpde
