#include "blend/rng.hpp"

#include <cmath>
#include <numbers>

namespace blend {

std::uint64_t SplitMix64::next() noexcept {
    m_state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = m_state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::next_uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double GaussianStream::next() noexcept {
    if (m_spare) {
        const double v = *m_spare;
        m_spare.reset();
        return v;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - m_rng.next_uniform();
    const double u2 = m_rng.next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    m_spare = r * std::sin(theta);
    return r * std::cos(theta);
}

void GaussianStream::fill(std::span<double> out) noexcept {
    for (double& v : out) {
        v = next();
    }
}

}  // namespace blend
