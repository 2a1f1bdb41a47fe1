#include "blend/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "blend/errors.hpp"

namespace blend {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};

// Kept free of objects with destructors between setjmp and any longjmp.
bool write_png_raw(std::FILE* fp, const Rgb8Image& image, std::vector<png_text>& text) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!text.empty()) {
        png_set_text(png, info, text.data(), static_cast<int>(text.size()));
    }
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
        png_write_row(png, image.pixels.data() + y * image.width * 3);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Rgb8Image& image, const PngText& text) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
        throw ValidationError("cannot write an empty or malformed image to " + path.string());
    }
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw BlendError("cannot open " + path.string() + " for writing");
    }
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
        chunks[i].key = const_cast<char*>(text[i].first.c_str());
        chunks[i].text = const_cast<char*>(text[i].second.c_str());
        chunks[i].text_length = text[i].second.size();
    }
    if (!write_png_raw(fp.get(), image, chunks)) {
        throw BlendError("libpng failed writing " + path.string());
    }
}

void write_png(const std::filesystem::path& path, const Image& image, const PngText& text) {
    write_png(path, Rgb8Image{image.width, image.height, image.to_rgb8()}, text);
}

Rgb8Image read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
        throw BlendError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    Rgb8Image out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
        png_image_free(&img);
        throw BlendError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    return out;
}

}  // namespace blend
