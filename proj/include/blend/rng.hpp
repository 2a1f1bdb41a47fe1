#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace blend {

// SplitMix64 generator. This is the only noise source in the project, so
// latents are reproducible bit-for-bit across processes and languages.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : m_state(seed) {}

    std::uint64_t next() noexcept;

    // Uniform double in [0, 1) built from the top 53 bits.
    double next_uniform() noexcept;

private:
    std::uint64_t m_state;
};

// Standard normal samples from a SplitMix64 stream via Box-Muller.
// Each pair of uniforms (u1, u2) yields (r cos 2πu2, r sin 2πu2) with
// r = sqrt(-2 ln(1 - u1)); the cosine sample is emitted first.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) noexcept : m_rng(seed) {}

    double next() noexcept;

    void fill(std::span<double> out) noexcept;

private:
    SplitMix64 m_rng;
    std::optional<double> m_spare;
};

}  // namespace blend
