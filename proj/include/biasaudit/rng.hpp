#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace biasaudit {

// All randomness in the toolkit flows through this engine so that runs are
// reproducible from config seeds alone. The draw helpers are written out
// explicitly because the std distribution objects are not guaranteed to
// produce the same stream across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(static_cast<std::mt19937_64::result_type>(seed)) {}

    // Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo bias is not a
    // concern at the scales used here, but keep it unbiased anyway.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    int coin() { return engine_() & 1u ? 1 : 0; }

    // Fisher-Yates shuffle with sequential draws from this engine.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace biasaudit
