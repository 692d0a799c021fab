#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>

#include <png.h>

#include "trf4d/geometry.hpp"

namespace trf4d {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors via longjmp; keep everything destructible allocated
// before setjmp and only touch png calls after it.

}  // namespace detail

/// Writes an 8-bit PNG (gray for 1 channel, RGB for 3); values quantized by
/// round(255 * x).
inline void write_png(const std::filesystem::path& path, const Image& img) {
    require(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = std::min(1.f, std::max(0.f, img.data[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(255.0f * v));
    }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width * img.channels;

    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads an 8/16-bit PNG into a [0,1] float image; palette/gray expand to
/// their natural channel count, alpha is stripped. Throws IoError when the
/// file is missing, DecodeError when it cannot be parsed.
inline Image read_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path.string());

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw DecodeError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng allocation failed");
    }

    std::vector<unsigned char> bytes;
    std::vector<png_bytep> rows;
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3)
        png_error(png, "unsupported channel count");

    img = Image(static_cast<int>(w), static_cast<int>(h), channels);
    bytes.resize(img.data.size());
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
    return img;
}

}  // namespace trf4d
