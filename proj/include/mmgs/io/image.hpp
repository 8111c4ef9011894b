#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmgs::io {

/// Row-major H x W x 3 image with values in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    float at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Row-major H x W 8-bit labels.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;
};

/// 8-bit RGB (or RGBA / gray, converted) PNG to floats in [0, 1].
Image read_png(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Image& image);

/// 8-bit single-channel PNG.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Raw float dump: "MMGSIMG1", u32 width, u32 height, u32 channels (3), then
/// little-endian f32 pixels in row-major order.
void write_float_dump(const std::filesystem::path& path, const Image& image);
Image read_float_dump(const std::filesystem::path& path);

} // namespace mmgs::io
