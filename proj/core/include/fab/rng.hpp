#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace fab {

// Counter-based generator: every draw is a pure function of (key, counter),
// so substreams can be handed to worker threads and replayed in any order
// without changing the output. Substream derivation re-keys with the mix
// function, one level per call: rng.substream(dataset).substream(purpose).
//
// Outputs are reproducible for a fixed build of this library; they are not
// promised to match other implementations.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x6A09E667F3BCC908ull)) {}

    CounterRng substream(std::uint64_t id) const {
        CounterRng r(*this);
        r.key_ = mix(key_ ^ mix(id + 0xBB67AE8584CAA73Bull));
        return r;
    }

    std::uint64_t bits(std::uint64_t counter) const {
        return mix(key_ + counter * 0x9E3779B97F4A7C15ull);
    }

    // Uniform on (0,1), strictly inside the interval.
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal draw; consumes counters 2c and 2c+1 (Box-Muller).
    double normal(std::uint64_t counter) const {
        const double u1 = uniform(2 * counter);
        const double u2 = uniform(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Index sampled from the given probability weights (assumed to sum to 1).
    int categorical(std::uint64_t counter, std::span<const double> probs) const {
        double u = uniform(counter);
        for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
            if (u < probs[k]) return static_cast<int>(k);
            u -= probs[k];
        }
        return static_cast<int>(probs.size()) - 1;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
};

} // namespace fab
