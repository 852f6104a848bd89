#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace scoregen {

// Deterministic RNG with hand-rolled distributions. std:: distributions are
// implementation-defined across standard libraries, which would break the
// replayability contract between builds, so everything random in the
// pipeline goes through this.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // xorshift64* — small, fast, deterministic everywhere
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        std::uint64_t threshold = (~n + 1) % n;  // (2^64 - n) mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s ? s : 1; have_spare_ = false; }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable per-stage seed derivation: one pipeline seed fans out to independent
// streams keyed by stage name.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& stage) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ base;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    h ^= base >> 32;
    h *= 0x100000001b3ull;
    return h ? h : 1;
}

}  // namespace scoregen
