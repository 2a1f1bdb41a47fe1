#pragma once

#include <functional>
#include <mutex>

#include "blend/backend.hpp"

namespace blend {

// Hooks an inference runtime must provide to drive SD v1.4 through the
// blending pipeline. Weights, tokenizer and scheduler numerics live behind
// these callbacks; the adapter owns guidance, routing bookkeeping and
// validation.
struct SdComponents {
    // CLIP ViT-L/14 text encoder: 77 x 768 hidden states. Must raise on
    // over-length input unless truncate is set.
    std::function<PromptEmbedding(std::string_view text, bool truncate)> text_encoder;

    // U-Net noise prediction. The callback must feed cond.at(block) to the
    // matching cross-attention block (3 down, mid, 3 up).
    std::function<std::vector<double>(const Latent& latent, int step, int total_steps, const BlockConditioning& cond)>
        unet;

    // Native scheduler update (UniPC multistep for the reference setup).
    // Updates state.latent and state.scheduler_state in place.
    std::function<void(NoiseTrajectoryState& state, std::span<const double> eps)> scheduler_step;

    std::function<Image(const Latent& latent)> vae_decode;
};

class StableDiffusionAdapter final : public DiffusionBackend {
public:
    static constexpr LatentShape kLatentShape{4, 64, 64};
    static constexpr std::size_t kTokens = 77;
    static constexpr std::size_t kEmbedDim = 768;

    explicit StableDiffusionAdapter(SdComponents components);

    const BackendDescriptor& descriptor() const noexcept override { return m_descriptor; }
    PromptEmbedding encode_prompt(std::string_view text, EncodeOptions options = {}) override;
    NoiseTrajectoryState start(Latent initial, int total_steps) override;
    NoiseTrajectoryState denoise_step(NoiseTrajectoryState state, const BlockConditioning& cond,
                                      const PromptEmbedding& uncond, double guidance) override;
    Image decode(const Latent& latent) override;

private:
    void check_embedding(const PromptEmbedding& e) const;

    SdComponents m_components;
    BackendDescriptor m_descriptor;
    std::mutex m_mutex;
};

}  // namespace blend
