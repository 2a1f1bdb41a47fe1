#include "blend/sd_adapter.hpp"

#include <cmath>

#include "blend/errors.hpp"

namespace blend {

StableDiffusionAdapter::StableDiffusionAdapter(SdComponents components) : m_components(std::move(components)) {
    if (!m_components.text_encoder || !m_components.unet || !m_components.scheduler_step ||
        !m_components.vae_decode) {
        throw ValidationError("Stable Diffusion adapter needs text_encoder, unet, scheduler_step and vae_decode");
    }
    m_descriptor.name = "sd-v1.4";
    m_descriptor.latent_shape = kLatentShape;
    m_descriptor.tokens_length = kTokens;
    m_descriptor.embedding_dim = kEmbedDim;
    m_descriptor.block_ids.assign(kBlockOrder.begin(), kBlockOrder.end());
    m_descriptor.scheduler_name = "UniPCMultistepScheduler";
}

void StableDiffusionAdapter::check_embedding(const PromptEmbedding& e) const {
    if (e.tokens_length() != kTokens || e.dim() != kEmbedDim) {
        throw ShapeMismatchError("embedding shape " + std::to_string(e.tokens_length()) + "x" +
                                 std::to_string(e.dim()) + " does not match CLIP ViT-L/14 (77x768)");
    }
}

PromptEmbedding StableDiffusionAdapter::encode_prompt(std::string_view text, EncodeOptions options) {
    std::lock_guard lock(m_mutex);
    PromptEmbedding e = m_components.text_encoder(text, options.truncate);
    check_embedding(e);
    return e;
}

NoiseTrajectoryState StableDiffusionAdapter::start(Latent initial, int total_steps) {
    if (total_steps < 1) {
        throw ValidationError("total steps must be positive");
    }
    if (initial.shape != kLatentShape) {
        throw ShapeMismatchError("latent shape does not match SD v1.4 (4x64x64)");
    }
    if (!initial.all_finite()) {
        throw NonFiniteError("initial latent is not finite", 0);
    }
    NoiseTrajectoryState state;
    state.total_steps = total_steps;
    state.latent = std::move(initial);
    return state;
}

NoiseTrajectoryState StableDiffusionAdapter::denoise_step(NoiseTrajectoryState state, const BlockConditioning& cond,
                                                          const PromptEmbedding& uncond, double guidance) {
    std::lock_guard lock(m_mutex);
    if (state.finished()) {
        throw ValidationError("trajectory already completed");
    }
    for (BlockId b : kBlockOrder) {
        check_embedding(cond.at(b));
    }
    check_embedding(uncond);
    const int step = state.step_index + 1;
    std::vector<double> eps = m_components.unet(state.latent, step, state.total_steps, cond);
    if (eps.size() != state.latent.data.size()) {
        throw ShapeMismatchError("U-Net returned " + std::to_string(eps.size()) + " values");
    }
    if (guidance != 1.0) {
        const auto eps_u = m_components.unet(state.latent, step, state.total_steps, BlockConditioning::uniform(uncond));
        apply_guidance(eps_u, eps, guidance, eps);
    }
    for (BlockId b : kBlockOrder) {
        state.log.push_back({step, b, cond.at(b).fingerprint()});
    }
    m_components.scheduler_step(state, eps);
    if (!state.latent.all_finite()) {
        throw NonFiniteError("latent became non-finite", step);
    }
    state.step_index = step;
    return state;
}

Image StableDiffusionAdapter::decode(const Latent& latent) {
    std::lock_guard lock(m_mutex);
    if (!latent.all_finite()) {
        throw NonFiniteError("cannot decode a non-finite latent", 0);
    }
    return m_components.vae_decode(latent);
}

}  // namespace blend
