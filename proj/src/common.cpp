#include "polarbev/common.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace polarbev {

namespace {
int g_threads = 0;
}

void set_thread_count(int n) {
    g_threads = n < 0 ? 0 : n;
#ifdef _OPENMP
    if (g_threads > 0) {
        omp_set_num_threads(g_threads);
    }
#endif
}

int thread_count() {
#ifdef _OPENMP
    return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
    return 1;
#endif
}

std::uint64_t Rng::next_u64() {
    // splitmix64; passes through zero seeds without collapsing
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
}

std::int64_t Rng::index(std::int64_t n) {
    return n <= 0 ? 0 : static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
}

Rng Rng::fork(std::uint64_t salt) const {
    Rng child(state_ ^ (salt * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    child.next_u64();
    return child;
}

} // namespace polarbev
