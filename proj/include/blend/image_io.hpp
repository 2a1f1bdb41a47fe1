#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "blend/backend.hpp"

namespace blend {

// 8-bit RGB raster, the on-disk form of an Image.
struct Rgb8Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB
};

using PngText = std::vector<std::pair<std::string, std::string>>;

void write_png(const std::filesystem::path& path, const Rgb8Image& image, const PngText& text = {});
void write_png(const std::filesystem::path& path, const Image& image, const PngText& text = {});

Rgb8Image read_png(const std::filesystem::path& path);

}  // namespace blend
