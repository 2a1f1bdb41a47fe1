#include "blend/backend.hpp"

#include <algorithm>
#include <cmath>

#include "blend/errors.hpp"
#include "blend/rng.hpp"

namespace blend {

bool Latent::all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double l2_distance(const Latent& a, const Latent& b) {
    if (a.shape != b.shape) {
        throw ShapeMismatchError("l2_distance on latents of different shape");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<std::uint8_t> Image::to_rgb8() const {
    std::vector<std::uint8_t> out(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const double v = std::clamp(rgb[i], 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

bool BackendDescriptor::supports_block_routing() const noexcept {
    return std::all_of(kBlockOrder.begin(), kBlockOrder.end(), [this](BlockId b) {
        return std::find(block_ids.begin(), block_ids.end(), b) != block_ids.end();
    });
}

BlockConditioning BlockConditioning::uniform(const PromptEmbedding& embedding) noexcept {
    BlockConditioning c;
    c.m_blocks.fill(&embedding);
    return c;
}

BlockConditioning BlockConditioning::routed(const BlockSplit& split, const PromptEmbedding& e1,
                                            const PromptEmbedding& e2) noexcept {
    BlockConditioning c;
    for (BlockId b : kBlockOrder) {
        c.m_blocks[index_of(b)] = &embedding_for_block(split, b, e1, e2);
    }
    return c;
}

Latent init_latent(std::uint64_t seed, LatentShape shape) {
    if (shape.size() == 0) {
        throw ValidationError("latent shape " + std::to_string(shape.channels) + "x" + std::to_string(shape.height) +
                              "x" + std::to_string(shape.width) + " is empty");
    }
    Latent latent = Latent::zeros(shape);
    GaussianStream(seed).fill(latent.data);
    return latent;
}

void apply_guidance(std::span<const double> eps_uncond, std::span<const double> eps_cond, double guidance,
                    std::span<double> out) {
    if (eps_uncond.size() != eps_cond.size() || out.size() != eps_cond.size()) {
        throw ShapeMismatchError("guidance inputs differ in size");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eps_uncond[i] + guidance * (eps_cond[i] - eps_uncond[i]);
    }
}

}  // namespace blend
