#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ganlab {

// Mixes several integers into one seed (splitmix64 finalizer). Used to derive
// independent, reproducible substreams, e.g. (run seed, iteration, update index).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull;
    auto finalize = [](std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    };
    z = finalize(z) + b * 0x9e3779b97f4a7c15ull;
    z = finalize(z) + c * 0x9e3779b97f4a7c15ull;
    return finalize(z);
}

// The mt19937_64 engine is fully specified by the standard, so sequences are
// portable. The std::*_distribution adapters are not; we map raw draws to
// doubles ourselves to keep outputs identical everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; caches the second variate
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        return engine_() % n; // modulo bias irrelevant at our n
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace ganlab
