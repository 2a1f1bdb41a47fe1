#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "blend/embedding.hpp"
#include "blend/schedule.hpp"

namespace blend {

// Cross-attention blocks of an SD v1.x style U-Net, in traversal order:
// three encoder blocks, the bottleneck, three decoder blocks.
enum class BlockId : std::size_t { E0 = 0, E1, E2, B, D0, D1, D2 };

inline constexpr std::size_t kBlockCount = 7;

inline constexpr std::array<BlockId, kBlockCount> kBlockOrder = {
    BlockId::E0, BlockId::E1, BlockId::E2, BlockId::B, BlockId::D0, BlockId::D1, BlockId::D2,
};

constexpr std::size_t index_of(BlockId block) noexcept { return static_cast<std::size_t>(block); }

std::string_view to_string(BlockId block) noexcept;

// Prefix assignment of blocks to prompts: the first n_first blocks in
// traversal order see P1, the rest see P2. Written "n-m" with m = 7 - n.
class BlockSplit {
public:
    explicit BlockSplit(int n_first);

    // Accepts "n-m" (n + m must be 7) or a bare "n".
    static BlockSplit parse(std::string_view text);

    int n_first() const noexcept { return m_n_first; }
    PromptSelector selector(BlockId block) const noexcept {
        return static_cast<int>(index_of(block)) < m_n_first ? PromptSelector::P1 : PromptSelector::P2;
    }
    std::array<PromptSelector, kBlockCount> mapping() const noexcept;

    std::string to_string() const;

    friend bool operator==(BlockSplit a, BlockSplit b) noexcept { return a.m_n_first == b.m_n_first; }

private:
    int m_n_first;
};

inline BlockSplit make_block_split(int n_first) { return BlockSplit(n_first); }

// Encoder and bottleneck on P1, decoder on P2.
inline constexpr int kDefaultSplitFirst = 4;

// n_first = round(ratio_p1 * 7). A ratio of 0.5 lands on 3.5 and rounds up to
// 4, which keeps the bottleneck with P1.
BlockSplit split_from_ratio(double ratio_p1);

// The embedding a block consumes under the split.
inline const PromptEmbedding& embedding_for_block(const BlockSplit& split, BlockId block, const PromptEmbedding& e1,
                                                  const PromptEmbedding& e2) noexcept {
    return split.selector(block) == PromptSelector::P1 ? e1 : e2;
}

}  // namespace blend
