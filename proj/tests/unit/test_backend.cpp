#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "blend/backend.hpp"
#include "blend/errors.hpp"
#include "blend/sd_adapter.hpp"
#include "blend/toy_backend.hpp"

namespace blend {
namespace {

// Regression golden for the toy network: sum of the latent after one
// guided step (seed 0, "lion", 25 steps). Frozen from this implementation.
constexpr double kStepOneGoldenSum = -47.69097220516558;
constexpr double kGoldenTolerance = 1e-9;

TEST(ToyBackend, DescriptorExposesSevenBlocks) {
    ToyBackend b;
    const auto& d = b.descriptor();
    EXPECT_EQ(d.name, "toy");
    EXPECT_EQ(d.latent_shape, (LatentShape{4, 8, 8}));
    EXPECT_EQ(d.tokens_length, 8u);
    EXPECT_EQ(d.embedding_dim, 16u);
    EXPECT_TRUE(d.supports_block_routing());
    EXPECT_EQ(d.default_steps, 25);
    EXPECT_EQ(d.default_guidance, 7.5);
}

TEST(ToyBackend, EncodeIsDeterministicAcrossInstances) {
    ToyBackend a;
    ToyBackend b;
    EXPECT_EQ(a.encode_prompt("kung fu panda"), b.encode_prompt("kung fu panda"));
    EXPECT_NE(a.encode_prompt("lion"), a.encode_prompt("cat"));
}

TEST(ToyBackend, EmptyPromptIsUnconditional) {
    ToyBackend b;
    EXPECT_EQ(b.encode_prompt(""), b.unconditional());
    EXPECT_EQ(encode_prompt(b, ""), b.unconditional());
}

TEST(ToyBackend, OverlongPromptNeedsTruncation) {
    ToyBackend b;
    std::string text;
    for (int i = 0; i < 17; ++i) text += "w" + std::to_string(i) + " ";
    EXPECT_THROW(b.encode_prompt(text), ValidationError);
    EXPECT_NO_THROW(b.encode_prompt(text, {.truncate = true}));
}

TEST(ToyBackend, RejectsForeignShapes) {
    ToyBackend b;
    EXPECT_THROW(b.start(Latent::zeros({4, 64, 64}), 25), ShapeMismatchError);
    const PromptEmbedding wrong(77, 768, std::vector<double>(77 * 768), "x");
    auto state = b.start(b.init_latent(0), 25);
    EXPECT_THROW(b.denoise_step(state, BlockConditioning::uniform(wrong), b.unconditional(), 7.5),
                 ShapeMismatchError);
}

TEST(ToyBackend, StepOneGoldenChecksum) {
    ToyBackend b;
    const auto e = b.encode_prompt("lion");
    auto state = b.start(b.init_latent(0), 25);
    state = b.denoise_step(std::move(state), BlockConditioning::uniform(e), b.unconditional(), 7.5);
    const double sum = std::accumulate(state.latent.data.begin(), state.latent.data.end(), 0.0);
    EXPECT_NEAR(sum, kStepOneGoldenSum, kGoldenTolerance);
    EXPECT_EQ(state.step_index, 1);
    EXPECT_EQ(state.log.size(), kBlockCount);
}

TEST(ToyBackend, LogsSevenEntriesPerStepInBlockOrder) {
    ToyBackend b;
    const auto e1 = b.encode_prompt("lion");
    const auto e2 = b.encode_prompt("cat");
    for (int n = 0; n <= 7; ++n) {
        const BlockSplit split(n);
        auto state = b.start(b.init_latent(3), 25);
        for (int i = 0; i < 25; ++i) {
            state = b.denoise_step(std::move(state), BlockConditioning::routed(split, e1, e2), b.unconditional(), 7.5);
        }
        ASSERT_EQ(state.log.size(), 25u * kBlockCount);
        for (std::size_t j = 0; j < state.log.size(); ++j) {
            const auto& entry = state.log[j];
            EXPECT_EQ(entry.step, static_cast<int>(j / kBlockCount) + 1);
            EXPECT_EQ(entry.block, kBlockOrder[j % kBlockCount]);
            const auto& expected = embedding_for_block(split, entry.block, e1, e2);
            EXPECT_EQ(entry.embedding_fingerprint, expected.fingerprint());
        }
    }
}

TEST(ToyBackend, RefusesStepsPastTheEnd) {
    ToyBackend b;
    const auto e = b.encode_prompt("x");
    auto state = b.start(b.init_latent(0), 1);
    state = b.denoise_step(std::move(state), BlockConditioning::uniform(e), b.unconditional(), 7.5);
    EXPECT_TRUE(state.finished());
    EXPECT_THROW(b.denoise_step(state, BlockConditioning::uniform(e), b.unconditional(), 7.5), ValidationError);
}

TEST(ToyBackend, NonFiniteLatentReportsStep) {
    ToyBackend b;
    const auto e = b.encode_prompt("x");
    auto state = b.start(b.init_latent(0), 25);
    state = b.denoise_step(std::move(state), BlockConditioning::uniform(e), b.unconditional(), 7.5);
    std::fill(state.latent.data.begin(), state.latent.data.end(), std::numeric_limits<double>::max());
    try {
        b.denoise_step(std::move(state), BlockConditioning::uniform(e), b.unconditional(), 7.5);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& err) {
        EXPECT_EQ(err.step(), 2);
    }
}

TEST(ToyBackend, DecodeMeanNearMidGray) {
    ToyBackend b;
    const Image img = b.decode(Latent::zeros({4, 8, 8}));
    EXPECT_EQ(img.width, 64u);
    EXPECT_EQ(img.height, 64u);
    for (double v : img.rgb) EXPECT_DOUBLE_EQ(v, 0.5);
    const Image noisy = b.decode(b.init_latent(0));
    const double mean = std::accumulate(noisy.rgb.begin(), noisy.rgb.end(), 0.0) / noisy.rgb.size();
    EXPECT_NEAR(mean, 0.5, 0.1);
}

TEST(Guidance, Identities) {
    const std::vector<double> u = {1.0, -2.0, 0.5};
    const std::vector<double> c = {3.0, 0.0, -0.5};
    std::vector<double> out(3);
    apply_guidance(u, c, 0.0, out);
    EXPECT_EQ(out, u);
    apply_guidance(u, c, 1.0, out);
    EXPECT_EQ(out, c);
    apply_guidance(u, c, 7.5, out);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out[i], u[i] + 7.5 * (c[i] - u[i]));
    std::vector<double> shorter(2);
    EXPECT_THROW(apply_guidance(u, c, 1.0, shorter), ShapeMismatchError);
}

TEST(Guidance, ScaleOneSkipsTheUnconditionalPass) {
    ToyBackend b;
    const auto e = b.encode_prompt("owl");
    const auto cond = BlockConditioning::uniform(e);
    auto state = b.start(b.init_latent(4), 25);
    Latent manual = state.latent;
    for (int step = 1; step <= 25; ++step) {
        state = b.denoise_step(std::move(state), cond, b.unconditional(), 1.0);
        const auto eps = b.predict_noise(manual, step, 25, cond);
        const double gamma = ToyBackend::step_size(step, 25);
        for (std::size_t i = 0; i < eps.size(); ++i) manual.data[i] -= gamma * eps[i];
    }
    EXPECT_EQ(state.latent, manual);
}

TEST(ToyBackend, StepSizeSchedule) {
    EXPECT_DOUBLE_EQ(ToyBackend::step_size(1, 25), 0.1);
    EXPECT_DOUBLE_EQ(ToyBackend::step_size(25, 25), 0.1 / 25);
}

SdComponents fake_sd() {
    SdComponents c;
    c.text_encoder = [](std::string_view text, bool) {
        return PromptEmbedding(77, 768, std::vector<double>(77 * 768, text.empty() ? 0.0 : 1.0), std::string(text));
    };
    c.unet = [](const Latent& z, int, int, const BlockConditioning& cond) {
        std::vector<double> eps(z.data.size(), cond.at(BlockId::E0).data()[0]);
        return eps;
    };
    c.scheduler_step = [](NoiseTrajectoryState& s, std::span<const double> eps) {
        for (std::size_t i = 0; i < eps.size(); ++i) s.latent.data[i] -= 0.01 * eps[i];
    };
    c.vae_decode = [](const Latent&) { return Image{512, 512, std::vector<double>(512 * 512 * 3, 0.5)}; };
    return c;
}

TEST(StableDiffusionAdapter, RequiresAllComponents) {
    auto c = fake_sd();
    c.unet = nullptr;
    EXPECT_THROW(StableDiffusionAdapter{c}, ValidationError);
}

TEST(StableDiffusionAdapter, DescriptorAndShapes) {
    StableDiffusionAdapter sd(fake_sd());
    EXPECT_EQ(sd.descriptor().latent_shape, (LatentShape{4, 64, 64}));
    EXPECT_EQ(sd.descriptor().tokens_length, 77u);
    EXPECT_EQ(sd.descriptor().embedding_dim, 768u);
    EXPECT_TRUE(sd.descriptor().supports_block_routing());
    EXPECT_THROW(sd.start(Latent::zeros({4, 8, 8}), 25), ShapeMismatchError);
    const auto e = sd.encode_prompt("lion");
    auto state = sd.start(sd.init_latent(0), 2);
    state = sd.denoise_step(std::move(state), BlockConditioning::uniform(e), sd.encode_prompt(""), 7.5);
    EXPECT_EQ(state.log.size(), kBlockCount);
    EXPECT_EQ(state.latent.data.size(), 4u * 64 * 64);
}

}  // namespace
}  // namespace blend
