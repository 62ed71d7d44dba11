#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace polarbev {

// Error taxonomy shared across modules. The CLI maps these onto exit codes.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("configuration error: " + msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error("numerical error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

// Worker count for the OpenMP kernels. 0 means "library default".
// Every parallel kernel assigns each output element to exactly one thread and
// keeps the per-element accumulation order identical to the serial reference,
// so results are bitwise reproducible for any thread count.
void set_thread_count(int n);
int thread_count();

// Deterministic RNG. Normal deviates are produced by Box-Muller on top of
// mt19937_64 so that streams do not depend on the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // uniform integer in [0, n)
    std::int64_t index(std::int64_t n);
    // derive an independent stream (e.g. per scene, per parameter)
    Rng fork(std::uint64_t salt) const;

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace polarbev
