#include "blend/embedding.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "blend/backend.hpp"
#include "blend/errors.hpp"

namespace blend {

PromptEmbedding::PromptEmbedding(std::size_t tokens_length, std::size_t dim, std::vector<double> data,
                                 std::string source_text)
    : m_tokens_length(tokens_length), m_dim(dim), m_data(std::move(data)), m_source_text(std::move(source_text)) {
    if (m_data.size() != m_tokens_length * m_dim) {
        throw ShapeMismatchError("embedding data has " + std::to_string(m_data.size()) + " elements, expected " +
                                 std::to_string(m_tokens_length) + "x" + std::to_string(m_dim));
    }
    for (double v : m_data) {
        if (!std::isfinite(v)) {
            throw NonFiniteError("embedding for '" + m_source_text + "' contains a non-finite value", 0);
        }
    }
}

std::span<const double> PromptEmbedding::token(std::size_t index) const {
    if (index >= m_tokens_length) {
        throw std::out_of_range("token index " + std::to_string(index) + " out of range");
    }
    return std::span<const double>(m_data).subspan(index * m_dim, m_dim);
}

std::uint64_t PromptEmbedding::fingerprint() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(&m_tokens_length, sizeof(m_tokens_length));
    mix(&m_dim, sizeof(m_dim));
    mix(m_data.data(), m_data.size() * sizeof(double));
    return h;
}

PromptEmbedding encode_prompt(DiffusionBackend& backend, std::string_view text, EncodeOptions options) {
    return backend.encode_prompt(text, options);
}

PromptEmbedding interpolate(const PromptEmbedding& e1, const PromptEmbedding& e2, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        std::ostringstream msg;
        msg << "blend ratio alpha=" << alpha << " is outside [0, 1]";
        throw ValidationError(msg.str());
    }
    if (!e1.same_shape(e2)) {
        throw ShapeMismatchError("cannot interpolate embeddings of shape " + std::to_string(e1.tokens_length()) + "x" +
                                 std::to_string(e1.dim()) + " and " + std::to_string(e2.tokens_length()) + "x" +
                                 std::to_string(e2.dim()));
    }
    const auto a = e1.data();
    const auto b = e2.data();
    const double beta = 1.0 - alpha;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] == b[i] ? a[i] : alpha * a[i] + beta * b[i];
    }
    std::ostringstream label;
    label << "interpolate(" << e1.source_text() << " | " << e2.source_text() << " ; alpha=" << alpha << ")";
    return PromptEmbedding(e1.tokens_length(), e1.dim(), std::move(out), label.str());
}

double l2_distance(const PromptEmbedding& a, const PromptEmbedding& b) {
    if (!a.same_shape(b)) {
        throw ShapeMismatchError("l2_distance on embeddings of different shape");
    }
    double acc = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace blend
