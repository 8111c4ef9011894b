#pragma once

// Little-endian byte streams for the binary file formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmgs::io {

class ByteWriter {
public:
    void bytes(const void* data, std::size_t size);
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);

    const std::vector<std::uint8_t>& buffer() const { return buffer_; }
    /// Writes to a temporary sibling and renames it into place.
    void save(const std::filesystem::path& path) const;

private:
    void little_endian(std::uint64_t v, int width);
    std::vector<std::uint8_t> buffer_;
};

/// Reader that reports the byte offset of any truncation.
class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> data, std::string source);
    static ByteReader from_file(const std::filesystem::path& path);

    void bytes(void* out, std::size_t size);
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    float f32();
    double f64();

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return data_.size() - offset_; }
    const std::string& source() const { return source_; }

private:
    std::uint64_t little_endian(int width);
    std::vector<std::uint8_t> data_;
    std::string source_;
    std::size_t offset_ = 0;
};

} // namespace mmgs::io
