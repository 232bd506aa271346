#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace spikegan {

// xoshiro256++ with splitmix64 seeding. The standard <random> engines have
// fully specified sequences but the distributions do not, and training
// checkpoints must round-trip the exact generator state, so the whole
// sampling path is pinned down here: 4x u64 state, explicit Box-Muller.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : state_) {
            // splitmix64
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; draws two uniforms per call so the
    // stream position is a pure function of the call count.
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // [0, n)
    int64_t uniform_int(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

    // In-place Fisher-Yates.
    template <typename I>
    void shuffle(std::vector<I>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            const int64_t j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

// Stable mixer for deriving per-epoch substreams from (seed, epoch) so that
// resuming at epoch k reproduces the exact same batch order.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace spikegan
