#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "blend/experiments.hpp"

namespace blend {

struct GridLayout {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> row_labels;  // optional, size rows when given
    std::vector<std::string> col_labels;  // optional, size cols when given
};

// Tiles the images referenced by `manifests` row-major into one PNG. Tile
// labels and the layout are stored as a JSON tEXt chunk under "layout".
// Throws NotFoundError naming every run whose image is missing.
void compose_grid(std::span<const std::filesystem::path> manifests, const GridLayout& layout,
                  const std::filesystem::path& out);

// Rows are the batch variants in declared order, columns the seeds.
void compose_batch_grid(const BatchManifest& batch, std::string_view pair_id, const std::filesystem::path& out);

inline constexpr std::size_t kGridGutter = 2;

}  // namespace blend
