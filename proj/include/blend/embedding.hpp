#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blend {

class DiffusionBackend;

inline constexpr double kDefaultBlendRatio = 0.5;

// Encoded prompt: a tokens_length x dim row-major matrix consumed by the
// denoiser's cross-attention blocks.
class PromptEmbedding {
public:
    PromptEmbedding() = default;
    PromptEmbedding(std::size_t tokens_length, std::size_t dim, std::vector<double> data,
                    std::string source_text);

    std::size_t tokens_length() const noexcept { return m_tokens_length; }
    std::size_t dim() const noexcept { return m_dim; }
    std::span<const double> data() const noexcept { return m_data; }
    std::span<const double> token(std::size_t index) const;
    const std::string& source_text() const noexcept { return m_source_text; }

    bool same_shape(const PromptEmbedding& other) const noexcept {
        return m_tokens_length == other.m_tokens_length && m_dim == other.m_dim;
    }

    // FNV-1a over the raw element bytes. Used by instrumentation to tell
    // which embedding a block consumed without copying it.
    std::uint64_t fingerprint() const noexcept;

    friend bool operator==(const PromptEmbedding& a, const PromptEmbedding& b) noexcept {
        return a.same_shape(b) && a.m_data == b.m_data;
    }

private:
    std::size_t m_tokens_length = 0;
    std::size_t m_dim = 0;
    std::vector<double> m_data;
    std::string m_source_text;
};

struct EncodeOptions {
    // Drop tokens past the backend limit instead of failing.
    bool truncate = false;
};

// Encodes text with the backend's text encoder. The empty string yields the
// unconditional embedding used for classifier-free guidance.
PromptEmbedding encode_prompt(DiffusionBackend& backend, std::string_view text,
                              EncodeOptions options = {});

// Weighted mix alpha * e1 + (1 - alpha) * e2 over every token position,
// padding included. alpha must lie in [0, 1]; extrapolation is rejected.
// Positions where e1 and e2 agree are copied through unchanged, so mixing an
// embedding with itself is exact for every alpha.
PromptEmbedding interpolate(const PromptEmbedding& e1, const PromptEmbedding& e2,
                            double alpha = kDefaultBlendRatio);

double l2_distance(const PromptEmbedding& a, const PromptEmbedding& b);

}  // namespace blend
