#include "blend/unet_routing.hpp"

#include <charconv>
#include <cmath>

#include "blend/errors.hpp"

namespace blend {

std::string_view to_string(BlockId block) noexcept {
    switch (block) {
        case BlockId::E0: return "E0";
        case BlockId::E1: return "E1";
        case BlockId::E2: return "E2";
        case BlockId::B: return "B";
        case BlockId::D0: return "D0";
        case BlockId::D1: return "D1";
        case BlockId::D2: return "D2";
    }
    return "?";
}

BlockSplit::BlockSplit(int n_first) : m_n_first(n_first) {
    if (n_first < 0 || n_first > static_cast<int>(kBlockCount)) {
        throw ValidationError("block split n_first=" + std::to_string(n_first) + " is outside [0, 7]");
    }
}

BlockSplit BlockSplit::parse(std::string_view text) {
    auto parse_int = [&text](std::string_view part) {
        int value = 0;
        const auto* end = part.data() + part.size();
        auto [ptr, ec] = std::from_chars(part.data(), end, value);
        if (ec != std::errc{} || ptr != end || part.empty()) {
            throw ValidationError("invalid block split '" + std::string(text) + "'");
        }
        return value;
    };
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) {
        return BlockSplit(parse_int(text));
    }
    const int n = parse_int(text.substr(0, dash));
    const int m = parse_int(text.substr(dash + 1));
    if (n + m != static_cast<int>(kBlockCount)) {
        throw ValidationError("block split '" + std::string(text) + "' does not cover the 7 blocks");
    }
    return BlockSplit(n);
}

std::array<PromptSelector, kBlockCount> BlockSplit::mapping() const noexcept {
    std::array<PromptSelector, kBlockCount> out{};
    for (BlockId b : kBlockOrder) {
        out[index_of(b)] = selector(b);
    }
    return out;
}

std::string BlockSplit::to_string() const {
    return std::to_string(m_n_first) + "-" + std::to_string(static_cast<int>(kBlockCount) - m_n_first);
}

BlockSplit split_from_ratio(double ratio_p1) {
    if (!(ratio_p1 >= 0.0 && ratio_p1 <= 1.0)) {
        throw ValidationError("ratio " + std::to_string(ratio_p1) + " is outside [0, 1]");
    }
    return BlockSplit(static_cast<int>(std::lround(ratio_p1 * static_cast<double>(kBlockCount))));
}

}  // namespace blend
