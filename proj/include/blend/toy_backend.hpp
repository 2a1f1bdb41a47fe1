#pragma once

#include <array>
#include <mutex>
#include <vector>

#include "blend/backend.hpp"

namespace blend {

// Small, fully deterministic stand-in for an SD v1.x pipeline.
//
// Text encoder: prompts are lower-cased and split into alphanumeric words
// (at most kMaxWords). Row 0 of the 8x16 embedding is a fixed BOS vector,
// rows 1..7 start from fixed padding vectors and word i adds a vector drawn
// from GaussianStream(hash(word) ^ position salt) to row 1 + i % 7.
//
// Denoiser: a U-Net over a 4x8x8 latent with hidden width 16. Encoder stages
// run at 8x8, 4x4 and 2x2 (2x2 average pooling between them), the bottleneck
// at 2x2, decoder stages at 2x2, 4x4 and 8x8 (nearest upsampling) with
// encoder skips added on entry. Every stage is a 3x3-neighbourhood linear mix
// with tanh and a residual, followed by single-head cross-attention over the
// 8 prompt tokens; these seven attentions are the routable blocks. All
// weights come from GaussianStream(kWeightSeed) scaled by 1/sqrt(fan_in).
//
// Scheduler: x <- x - gamma_i * eps for iterations i = 1..T with
// gamma_i = kGammaMax * (T - i + 1) / T.
//
// Decoder: bilinear 8x upsampling followed by a fixed 4->3 latent-to-RGB
// projection, pixel = 0.5 + 0.5 * (M^T z).
class ToyBackend final : public DiffusionBackend {
public:
    static constexpr std::size_t kTokens = 8;
    static constexpr std::size_t kEmbedDim = 16;
    static constexpr std::size_t kHidden = 16;
    static constexpr std::size_t kMaxWords = 16;
    static constexpr LatentShape kLatentShape{4, 8, 8};
    static constexpr std::size_t kUpscale = 8;
    static constexpr std::uint64_t kWeightSeed = 0x70795F626C656E64ULL;
    static constexpr double kGammaMax = 0.1;

    ToyBackend();

    const BackendDescriptor& descriptor() const noexcept override { return m_descriptor; }

    PromptEmbedding encode_prompt(std::string_view text, EncodeOptions options = {}) override;

    NoiseTrajectoryState start(Latent initial, int total_steps) override;

    NoiseTrajectoryState denoise_step(NoiseTrajectoryState state, const BlockConditioning& cond,
                                      const PromptEmbedding& uncond, double guidance) override;

    Image decode(const Latent& latent) override;

    // The embedding of the empty prompt, built directly from the BOS and
    // padding rows.
    const PromptEmbedding& unconditional() const noexcept { return m_uncond; }

    // Single noise prediction for 1-based iteration `step` of `total_steps`.
    std::vector<double> predict_noise(const Latent& latent, int step, int total_steps,
                                      const BlockConditioning& cond) const;

    static double step_size(int step, int total_steps) noexcept;

private:
    struct Stage {
        std::vector<double> mix;  // kHidden x kHidden
        std::vector<double> mix_bias;
        std::vector<double> query;  // kHidden x kHidden
        std::vector<double> key;    // kHidden x kEmbedDim
        std::vector<double> value;  // kHidden x kEmbedDim
        std::vector<double> out;    // kHidden x kHidden
    };

    struct Features {
        std::size_t side = 0;
        std::vector<double> data;  // (side*side) x kHidden
    };

    void run_stage(const Stage& stage, Features& h, const PromptEmbedding& context,
                   std::span<const double> time_embedding) const;
    void check_embedding(const PromptEmbedding& e) const;

    BackendDescriptor m_descriptor;
    std::vector<double> m_in_proj;  // kHidden x 4
    std::vector<double> m_in_bias;
    std::array<Stage, kBlockCount> m_stages;
    std::vector<double> m_out_proj;  // 4 x kHidden
    std::vector<double> m_bos;
    std::vector<double> m_padding;  // (kTokens - 1) x kEmbedDim
    PromptEmbedding m_uncond;
    mutable std::mutex m_mutex;
};

}  // namespace blend
