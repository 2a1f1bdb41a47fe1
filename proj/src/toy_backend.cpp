#include "blend/toy_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "blend/errors.hpp"
#include "blend/rng.hpp"

namespace blend {

namespace {

constexpr std::size_t kLatentChannels = ToyBackend::kLatentShape.channels;

// Latent-to-RGB factors commonly used for SD v1 latent previews.
constexpr double kLatentToRgb[4][3] = {
    {0.298, 0.207, 0.208},
    {0.187, 0.286, 0.173},
    {-0.158, 0.189, 0.264},
    {-0.184, -0.271, -0.473},
};

std::vector<double> draw(GaussianStream& g, std::size_t rows, std::size_t cols, double scale) {
    std::vector<double> m(rows * cols);
    g.fill(m);
    for (double& v : m) {
        v *= scale;
    }
    return m;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// y = W x for a row-major rows x cols matrix.
void matvec(const std::vector<double>& w, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* row = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
}

void time_embedding(int step, int total_steps, std::span<double> out) {
    // Timestep counts down from T to 1 as iterations count up.
    const double tau = static_cast<double>(total_steps - step + 1) / total_steps;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double freq = std::pow(2.0, static_cast<double>(j / 2));
        out[j] = 0.5 * (j % 2 == 0 ? std::sin(tau * freq) : std::cos(tau * freq));
    }
}

}  // namespace

ToyBackend::ToyBackend() {
    m_descriptor.name = "toy";
    m_descriptor.latent_shape = kLatentShape;
    m_descriptor.tokens_length = kTokens;
    m_descriptor.embedding_dim = kEmbedDim;
    m_descriptor.block_ids.assign(kBlockOrder.begin(), kBlockOrder.end());
    m_descriptor.scheduler_name = "toy-linear-gamma";

    // Draw order is part of the backend definition; do not reorder.
    GaussianStream g(kWeightSeed);
    const double s_in = 1.0 / std::sqrt(static_cast<double>(kLatentChannels));
    const double s_h = 1.0 / std::sqrt(static_cast<double>(kHidden));
    const double s_e = 1.0 / std::sqrt(static_cast<double>(kEmbedDim));
    m_in_proj = draw(g, kHidden, kLatentChannels, s_in);
    m_in_bias = draw(g, kHidden, 1, 0.1);
    for (Stage& st : m_stages) {
        st.mix = draw(g, kHidden, kHidden, s_h);
        st.mix_bias = draw(g, kHidden, 1, 0.1);
        st.query = draw(g, kHidden, kHidden, s_h);
        st.key = draw(g, kHidden, kEmbedDim, s_e);
        st.value = draw(g, kHidden, kEmbedDim, s_e);
        st.out = draw(g, kHidden, kHidden, s_h);
    }
    m_out_proj = draw(g, kLatentChannels, kHidden, s_h);
    m_bos = draw(g, 1, kEmbedDim, 1.0);
    m_padding = draw(g, kTokens - 1, kEmbedDim, 0.5);

    std::vector<double> uncond;
    uncond.reserve(kTokens * kEmbedDim);
    uncond.insert(uncond.end(), m_bos.begin(), m_bos.end());
    uncond.insert(uncond.end(), m_padding.begin(), m_padding.end());
    m_uncond = PromptEmbedding(kTokens, kEmbedDim, std::move(uncond), "");
}

PromptEmbedding ToyBackend::encode_prompt(std::string_view text, EncodeOptions options) {
    std::lock_guard lock(m_mutex);
    auto words = split_words(text);
    if (words.size() > kMaxWords) {
        if (!options.truncate) {
            throw ValidationError("prompt '" + std::string(text) + "' has " + std::to_string(words.size()) +
                                  " tokens; the toy encoder accepts at most " + std::to_string(kMaxWords));
        }
        words.resize(kMaxWords);
    }
    std::vector<double> data(m_uncond.data().begin(), m_uncond.data().end());
    std::vector<double> vec(kEmbedDim);
    for (std::size_t i = 0; i < words.size(); ++i) {
        GaussianStream(fnv1a(words[i]) ^ (0x9E3779B97F4A7C15ULL * (i + 1))).fill(vec);
        const std::size_t row = 1 + i % (kTokens - 1);
        for (std::size_t d = 0; d < kEmbedDim; ++d) {
            data[row * kEmbedDim + d] += 0.8 * vec[d];
        }
    }
    return PromptEmbedding(kTokens, kEmbedDim, std::move(data), std::string(text));
}

void ToyBackend::check_embedding(const PromptEmbedding& e) const {
    if (e.tokens_length() != kTokens || e.dim() != kEmbedDim) {
        throw ShapeMismatchError("embedding shape " + std::to_string(e.tokens_length()) + "x" +
                                 std::to_string(e.dim()) + " does not match the toy backend (8x16)");
    }
}

NoiseTrajectoryState ToyBackend::start(Latent initial, int total_steps) {
    if (total_steps < 1) {
        throw ValidationError("total steps must be positive");
    }
    if (initial.shape != kLatentShape || initial.data.size() != kLatentShape.size()) {
        throw ShapeMismatchError("latent shape does not match the toy backend (4x8x8)");
    }
    if (!initial.all_finite()) {
        throw NonFiniteError("initial latent is not finite", 0);
    }
    NoiseTrajectoryState state;
    state.total_steps = total_steps;
    state.latent = std::move(initial);
    state.log.reserve(static_cast<std::size_t>(total_steps) * kBlockCount);
    return state;
}

double ToyBackend::step_size(int step, int total_steps) noexcept {
    return kGammaMax * static_cast<double>(total_steps - step + 1) / total_steps;
}

void ToyBackend::run_stage(const Stage& st, Features& h, const PromptEmbedding& context,
                           std::span<const double> temb) const {
    const std::size_t side = h.side;
    const std::size_t n = side * side;
    std::vector<double> local(kHidden);
    std::vector<double> pre(kHidden);
    std::vector<double> next = h.data;

    // 3x3-style mixing: centre plus zero-padded 4-neighbourhood.
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const double* centre = &h.data[(y * side + x) * kHidden];
            for (std::size_t c = 0; c < kHidden; ++c) {
                local[c] = 0.5 * centre[c];
            }
            auto add = [&](std::size_t yy, std::size_t xx) {
                const double* nb = &h.data[(yy * side + xx) * kHidden];
                for (std::size_t c = 0; c < kHidden; ++c) {
                    local[c] += 0.125 * nb[c];
                }
            };
            if (y > 0) add(y - 1, x);
            if (y + 1 < side) add(y + 1, x);
            if (x > 0) add(y, x - 1);
            if (x + 1 < side) add(y, x + 1);
            matvec(st.mix, kHidden, kHidden, local.data(), pre.data());
            double* dst = &next[(y * side + x) * kHidden];
            for (std::size_t c = 0; c < kHidden; ++c) {
                dst[c] += std::tanh(pre[c] + st.mix_bias[c] + temb[c]);
            }
        }
    }

    // Single-head cross-attention over the prompt tokens.
    std::vector<double> keys(kTokens * kHidden);
    std::vector<double> values(kTokens * kHidden);
    for (std::size_t t = 0; t < kTokens; ++t) {
        const double* tok = context.data().data() + t * kEmbedDim;
        matvec(st.key, kHidden, kEmbedDim, tok, &keys[t * kHidden]);
        matvec(st.value, kHidden, kEmbedDim, tok, &values[t * kHidden]);
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(kHidden));
    std::vector<double> q(kHidden);
    std::vector<double> attended(kHidden);
    std::vector<double> proj(kHidden);
    std::array<double, kTokens> weights{};
    for (std::size_t p = 0; p < n; ++p) {
        double* hp = &next[p * kHidden];
        matvec(st.query, kHidden, kHidden, hp, q.data());
        double max_score = -INFINITY;
        for (std::size_t t = 0; t < kTokens; ++t) {
            double s = 0.0;
            for (std::size_t c = 0; c < kHidden; ++c) {
                s += q[c] * keys[t * kHidden + c];
            }
            weights[t] = s * inv_sqrt_d;
            max_score = std::max(max_score, weights[t]);
        }
        double total = 0.0;
        for (double& w : weights) {
            w = std::exp(w - max_score);
            total += w;
        }
        std::fill(attended.begin(), attended.end(), 0.0);
        for (std::size_t t = 0; t < kTokens; ++t) {
            const double w = weights[t] / total;
            for (std::size_t c = 0; c < kHidden; ++c) {
                attended[c] += w * values[t * kHidden + c];
            }
        }
        matvec(st.out, kHidden, kHidden, attended.data(), proj.data());
        for (std::size_t c = 0; c < kHidden; ++c) {
            hp[c] += proj[c];
        }
    }
    h.data = std::move(next);
}

std::vector<double> ToyBackend::predict_noise(const Latent& latent, int step, int total_steps,
                                              const BlockConditioning& cond) const {
    const std::size_t side = kLatentShape.width;
    std::array<double, kHidden> temb{};
    time_embedding(step, total_steps, temb);

    Features h{side, std::vector<double>(side * side * kHidden)};
    std::array<double, kLatentChannels> px{};
    for (std::size_t p = 0; p < side * side; ++p) {
        for (std::size_t c = 0; c < kLatentChannels; ++c) {
            px[c] = latent.data[c * side * side + p];
        }
        double* dst = &h.data[p * kHidden];
        matvec(m_in_proj, kHidden, kLatentChannels, px.data(), dst);
        for (std::size_t c = 0; c < kHidden; ++c) {
            dst[c] += m_in_bias[c];
        }
    }

    auto pool = [](const Features& f) {
        Features out{f.side / 2, std::vector<double>((f.side / 2) * (f.side / 2) * kHidden, 0.0)};
        for (std::size_t y = 0; y < f.side; ++y) {
            for (std::size_t x = 0; x < f.side; ++x) {
                const double* src = &f.data[(y * f.side + x) * kHidden];
                double* dst = &out.data[((y / 2) * out.side + x / 2) * kHidden];
                for (std::size_t c = 0; c < kHidden; ++c) {
                    dst[c] += 0.25 * src[c];
                }
            }
        }
        return out;
    };
    auto upsample = [](const Features& f) {
        Features out{f.side * 2, std::vector<double>((f.side * 2) * (f.side * 2) * kHidden)};
        for (std::size_t y = 0; y < out.side; ++y) {
            for (std::size_t x = 0; x < out.side; ++x) {
                std::copy_n(&f.data[((y / 2) * f.side + x / 2) * kHidden], kHidden,
                            &out.data[(y * out.side + x) * kHidden]);
            }
        }
        return out;
    };
    auto add_skip = [](Features& f, const Features& skip) {
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            f.data[i] += skip.data[i];
        }
    };
    auto stage = [&](BlockId b, Features& f) { run_stage(m_stages[index_of(b)], f, cond.at(b), temb); };

    stage(BlockId::E0, h);
    const Features skip0 = h;
    h = pool(h);
    stage(BlockId::E1, h);
    const Features skip1 = h;
    h = pool(h);
    stage(BlockId::E2, h);
    const Features skip2 = h;
    stage(BlockId::B, h);
    add_skip(h, skip2);
    stage(BlockId::D0, h);
    h = upsample(h);
    add_skip(h, skip1);
    stage(BlockId::D1, h);
    h = upsample(h);
    add_skip(h, skip0);
    stage(BlockId::D2, h);

    std::vector<double> eps(kLatentShape.size());
    std::array<double, kLatentChannels> out{};
    for (std::size_t p = 0; p < side * side; ++p) {
        matvec(m_out_proj, kLatentChannels, kHidden, &h.data[p * kHidden], out.data());
        for (std::size_t c = 0; c < kLatentChannels; ++c) {
            eps[c * side * side + p] = out[c];
        }
    }
    return eps;
}

NoiseTrajectoryState ToyBackend::denoise_step(NoiseTrajectoryState state, const BlockConditioning& cond,
                                              const PromptEmbedding& uncond, double guidance) {
    std::lock_guard lock(m_mutex);
    if (state.finished()) {
        throw ValidationError("trajectory already completed " + std::to_string(state.total_steps) + " steps");
    }
    if (state.latent.shape != kLatentShape) {
        throw ShapeMismatchError("latent shape does not match the toy backend (4x8x8)");
    }
    if (!std::isfinite(guidance)) {
        throw ValidationError("guidance scale must be finite");
    }
    for (BlockId b : kBlockOrder) {
        check_embedding(cond.at(b));
    }
    check_embedding(uncond);

    const int step = state.step_index + 1;
    std::vector<double> eps = predict_noise(state.latent, step, state.total_steps, cond);
    if (guidance != 1.0) {
        const std::vector<double> eps_u =
            predict_noise(state.latent, step, state.total_steps, BlockConditioning::uniform(uncond));
        apply_guidance(eps_u, eps, guidance, eps);
    }
    for (BlockId b : kBlockOrder) {
        state.log.push_back({step, b, cond.at(b).fingerprint()});
    }

    const double gamma = step_size(step, state.total_steps);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        state.latent.data[i] -= gamma * eps[i];
    }
    if (!state.latent.all_finite()) {
        throw NonFiniteError("latent became non-finite", step);
    }
    state.step_index = step;
    return state;
}

Image ToyBackend::decode(const Latent& latent) {
    std::lock_guard lock(m_mutex);
    if (latent.shape != kLatentShape) {
        throw ShapeMismatchError("latent shape does not match the toy backend (4x8x8)");
    }
    if (!latent.all_finite()) {
        throw NonFiniteError("cannot decode a non-finite latent", 0);
    }
    const std::size_t lw = kLatentShape.width;
    const std::size_t lh = kLatentShape.height;
    Image img;
    img.width = lw * kUpscale;
    img.height = lh * kUpscale;
    img.rgb.resize(img.width * img.height * 3);
    const double scale = static_cast<double>(kUpscale);
    for (std::size_t y = 0; y < img.height; ++y) {
        const double sy = std::clamp((static_cast<double>(y) + 0.5) / scale - 0.5, 0.0, static_cast<double>(lh - 1));
        const auto y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, lh - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < img.width; ++x) {
            const double sx =
                std::clamp((static_cast<double>(x) + 0.5) / scale - 0.5, 0.0, static_cast<double>(lw - 1));
            const auto x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, lw - 1);
            const double fx = sx - static_cast<double>(x0);
            std::array<double, 3> rgb{};
            for (std::size_t c = 0; c < kLatentChannels; ++c) {
                const double z = (1 - fy) * ((1 - fx) * latent.at(c, y0, x0) + fx * latent.at(c, y0, x1)) +
                                 fy * ((1 - fx) * latent.at(c, y1, x0) + fx * latent.at(c, y1, x1));
                for (std::size_t k = 0; k < 3; ++k) {
                    rgb[k] += kLatentToRgb[c][k] * z;
                }
            }
            for (std::size_t k = 0; k < 3; ++k) {
                img.rgb[(y * img.width + x) * 3 + k] = 0.5 + 0.5 * rgb[k];
            }
        }
    }
    return img;
}

}  // namespace blend
