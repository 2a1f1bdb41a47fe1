#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blend/embedding.hpp"
#include "blend/unet_routing.hpp"

namespace blend {

inline constexpr int kDefaultSteps = 25;
inline constexpr double kDefaultGuidance = 7.5;

struct LatentShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

// Channel-major (C, H, W) latent tensor.
struct Latent {
    LatentShape shape;
    std::vector<double> data;

    static Latent zeros(LatentShape shape) { return Latent{shape, std::vector<double>(shape.size(), 0.0)}; }

    double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape.height + y) * shape.width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * shape.height + y) * shape.width + x];
    }
    bool all_finite() const noexcept;
    std::span<const std::byte> bytes() const noexcept { return std::as_bytes(std::span<const double>(data)); }

    friend bool operator==(const Latent&, const Latent&) = default;
};

double l2_distance(const Latent& a, const Latent& b);

// Linear RGB image, interleaved (y, x, channel). Values are not clamped; 0.5
// is mid-gray and [0, 1] is the displayable range.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> rgb;

    double at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
    std::vector<std::uint8_t> to_rgb8() const;

    friend bool operator==(const Image&, const Image&) = default;
};

struct BackendDescriptor {
    std::string name;
    LatentShape latent_shape;
    std::size_t tokens_length = 0;
    std::size_t embedding_dim = 0;
    std::vector<BlockId> block_ids;
    std::string scheduler_name;
    int default_steps = kDefaultSteps;
    double default_guidance = kDefaultGuidance;

    // True when all seven cross-attention blocks can be routed independently.
    bool supports_block_routing() const noexcept;
};

// The embedding each cross-attention block consumes on the conditional pass.
class BlockConditioning {
public:
    static BlockConditioning uniform(const PromptEmbedding& embedding) noexcept;
    static BlockConditioning routed(const BlockSplit& split, const PromptEmbedding& e1,
                                    const PromptEmbedding& e2) noexcept;

    const PromptEmbedding& at(BlockId block) const noexcept { return *m_blocks[index_of(block)]; }

private:
    std::array<const PromptEmbedding*, kBlockCount> m_blocks{};
};

struct InstrumentationEntry {
    int step = 0;
    BlockId block = BlockId::E0;
    std::uint64_t embedding_fingerprint = 0;
};

struct NoiseTrajectoryState {
    int step_index = 0;  // iterations completed so far
    int total_steps = 0;
    Latent latent;
    std::vector<double> scheduler_state;  // backend-specific
    std::vector<InstrumentationEntry> log;  // conditional-pass block consumption

    bool finished() const noexcept { return step_index >= total_steps; }
};

// Standard-normal latent from GaussianStream(seed), filled in row-major
// (C, H, W) order.
Latent init_latent(std::uint64_t seed, LatentShape shape);

// Classifier-free guidance: eps_u + s * (eps_c - eps_u).
void apply_guidance(std::span<const double> eps_uncond, std::span<const double> eps_cond, double guidance,
                    std::span<double> out);

// Text encoder + block-routable denoiser + scheduler + decoder. One
// trajectory runs strictly sequentially; an instance must not interleave the
// steps of two trajectories. Implementations serialize their own calls.
class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;

    virtual const BackendDescriptor& descriptor() const noexcept = 0;

    virtual PromptEmbedding encode_prompt(std::string_view text, EncodeOptions options = {}) = 0;

    virtual Latent init_latent(std::uint64_t seed) const { return blend::init_latent(seed, descriptor().latent_shape); }

    virtual NoiseTrajectoryState start(Latent initial, int total_steps) = 0;

    // One scheduler update. guidance == 1 runs only the conditional pass.
    virtual NoiseTrajectoryState denoise_step(NoiseTrajectoryState state, const BlockConditioning& cond,
                                              const PromptEmbedding& uncond, double guidance) = 0;

    virtual Image decode(const Latent& latent) = 0;
};

}  // namespace blend
