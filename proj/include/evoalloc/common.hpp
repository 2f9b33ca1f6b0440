#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evoalloc {

// Thrown when an input is malformed (wrong arity, NaN coordinates, bad
// config). Distinct from a well-formed but constraint-violating candidate,
// which scores 0 instead of throwing.
class input_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Misconfiguration (missing template, bad budget, unknown policy).
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The execution environment is unusable (sandbox interpreter missing,
// endpoint unreachable after retries at the run level). Halts the run.
class environment_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Counter-based splittable RNG. std::mt19937_64 seeded through splitmix64
// so that (seed, stream-index) pairs give independent, reproducible
// streams. Doubles and gaussians are generated from raw bits rather than
// std:: distributions so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(splitmix(seed) ^ splitmix(stream * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    }

    std::uint64_t next_u64() {
        // xorshift* layered on a splitmix-advanced counter
        std::uint64_t z = (counter_ += 0x9e3779b97f4a7c15ULL) + state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

    double gaussian();

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace evoalloc
