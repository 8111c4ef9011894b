#include "mmgs/io/image.hpp"

#include "mmgs/common/error.hpp"
#include "mmgs/io/binary.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace mmgs::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw FormatError("cannot open " + path.string());
    }
    return f;
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;
};

DecodedPng decode(const std::filesystem::path& path, bool want_gray) {
    const auto file = open(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng initialization failed");
    }
    DecodedPng out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (want_gray) {
        if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw FormatError("mask is not a grayscale PNG: " + path.string());
        }
    } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.data.resize(stride * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) {
        rows[y] = out.data.data() + y * stride;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type,
            const std::uint8_t* data, std::size_t stride) {
    const auto file = open(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, data + y * stride);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

Image read_png(const std::filesystem::path& path) {
    const auto png = decode(path, false);
    Image img{png.width, png.height, std::vector<float>(static_cast<std::size_t>(png.width) * png.height * 3)};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = static_cast<float>(png.data[i]) / 255.0f;
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    std::vector<std::uint8_t> bytes(image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    encode(path, image.width, image.height, PNG_COLOR_TYPE_RGB, bytes.data(),
           static_cast<std::size_t>(image.width) * 3);
}

Mask read_mask_png(const std::filesystem::path& path) {
    auto png = decode(path, true);
    return {png.width, png.height, std::move(png.data)};
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    encode(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, mask.labels.data(),
           static_cast<std::size_t>(mask.width));
}

namespace {
constexpr char kImageMagic[8] = {'M', 'M', 'G', 'S', 'I', 'M', 'G', '1'};
}

void write_float_dump(const std::filesystem::path& path, const Image& image) {
    ByteWriter w;
    w.bytes(kImageMagic, 8);
    w.u32(static_cast<std::uint32_t>(image.width));
    w.u32(static_cast<std::uint32_t>(image.height));
    w.u32(3);
    for (float v : image.pixels) {
        w.f32(v);
    }
    w.save(path);
}

Image read_float_dump(const std::filesystem::path& path) {
    ByteReader r = ByteReader::from_file(path);
    char magic[8];
    r.bytes(magic, 8);
    if (!std::equal(magic, magic + 8, kImageMagic)) {
        throw FormatError(path.string() + ": not a float image dump");
    }
    Image img;
    img.width = static_cast<int>(r.u32());
    img.height = static_cast<int>(r.u32());
    if (r.u32() != 3) {
        throw FormatError(path.string() + ": expected 3 channels");
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (auto& v : img.pixels) {
        v = r.f32();
    }
    return img;
}

} // namespace mmgs::io
