#include "blend/grid.hpp"

#include <algorithm>

#include "blend/errors.hpp"
#include "blend/image_io.hpp"

namespace blend {

void compose_grid(std::span<const std::filesystem::path> manifests, const GridLayout& layout,
                  const std::filesystem::path& out) {
    if (manifests.empty()) {
        throw ValidationError("cannot compose a grid from an empty manifest list");
    }
    if (layout.rows * layout.cols != manifests.size()) {
        throw ValidationError("grid of " + std::to_string(layout.rows) + "x" + std::to_string(layout.cols) +
                              " does not fit " + std::to_string(manifests.size()) + " images");
    }
    if ((!layout.row_labels.empty() && layout.row_labels.size() != layout.rows) ||
        (!layout.col_labels.empty() && layout.col_labels.size() != layout.cols)) {
        throw ValidationError("grid labels do not match the grid dimensions");
    }

    std::vector<std::filesystem::path> images;
    std::string missing;
    for (const auto& m : manifests) {
        std::filesystem::path image = m.parent_path() / "image.png";
        if (std::filesystem::exists(m)) {
            const auto j = read_manifest(m);
            image = m.parent_path() / j.value("image", std::string("image.png"));
        }
        if (!std::filesystem::exists(m) || !std::filesystem::exists(image)) {
            missing += (missing.empty() ? "" : ", ") + m.parent_path().generic_string();
        }
        images.push_back(std::move(image));
    }
    if (!missing.empty()) {
        throw NotFoundError("missing run images: " + missing);
    }

    std::vector<Rgb8Image> tiles;
    tiles.reserve(images.size());
    for (const auto& p : images) {
        tiles.push_back(read_png(p));
        if (tiles.back().width != tiles.front().width || tiles.back().height != tiles.front().height) {
            throw ShapeMismatchError("grid tiles differ in size: " + p.generic_string());
        }
    }

    const std::size_t tw = tiles.front().width;
    const std::size_t th = tiles.front().height;
    Rgb8Image grid;
    grid.width = layout.cols * tw + (layout.cols + 1) * kGridGutter;
    grid.height = layout.rows * th + (layout.rows + 1) * kGridGutter;
    grid.pixels.assign(grid.width * grid.height * 3, 255);

    nlohmann::json tile_labels = nlohmann::json::array();
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const std::size_t r = i / layout.cols;
        const std::size_t c = i % layout.cols;
        const std::size_t x0 = kGridGutter + c * (tw + kGridGutter);
        const std::size_t y0 = kGridGutter + r * (th + kGridGutter);
        for (std::size_t y = 0; y < th; ++y) {
            const auto* src = tiles[i].pixels.data() + y * tw * 3;
            std::copy(src, src + tw * 3, grid.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * grid.width + x0) * 3));
        }
        tile_labels.push_back({
            {"row", r},
            {"col", c},
            {"run", manifests[i].parent_path().generic_string()},
        });
    }
    const nlohmann::json meta = {
        {"rows", layout.rows},
        {"cols", layout.cols},
        {"tile_width", tw},
        {"tile_height", th},
        {"gutter", kGridGutter},
        {"row_labels", layout.row_labels},
        {"col_labels", layout.col_labels},
        {"tiles", tile_labels},
    };
    if (!out.parent_path().empty()) {
        std::filesystem::create_directories(out.parent_path());
    }
    write_png(out, grid, {{"layout", meta.dump()}});
}

void compose_batch_grid(const BatchManifest& batch, std::string_view pair_id, const std::filesystem::path& out) {
    GridLayout layout;
    std::vector<std::filesystem::path> manifests;
    for (const auto& variant : batch.variants) {
        std::vector<std::filesystem::path> row;
        for (auto seed : batch.seeds) {
            const auto it = std::find_if(batch.runs.begin(), batch.runs.end(), [&](const RunRecord& r) {
                return r.spec.pair_id == pair_id && r.spec.variant == variant && r.spec.config.seed == seed;
            });
            if (it != batch.runs.end()) {
                row.push_back(batch.root / it->manifest_path);
            }
        }
        if (row.empty()) {
            continue;
        }
        if (layout.cols == 0) {
            layout.cols = row.size();
        } else if (row.size() != layout.cols) {
            throw ValidationError("variant '" + variant + "' has a different number of seeds than the others");
        }
        layout.row_labels.push_back(variant);
        manifests.insert(manifests.end(), row.begin(), row.end());
        ++layout.rows;
    }
    if (manifests.empty()) {
        throw NotFoundError("batch has no runs for pair '" + std::string(pair_id) + "'");
    }
    // Column labels only when every row uses the same seeds in the same order.
    for (auto seed : batch.seeds) {
        layout.col_labels.push_back("seed " + std::to_string(seed));
    }
    if (layout.col_labels.size() != layout.cols) {
        layout.col_labels.clear();
    }
    compose_grid(manifests, layout, out);
}

}  // namespace blend
