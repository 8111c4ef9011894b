#include "mmgs/io/binary.hpp"

#include "mmgs/common/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mmgs::io {

void ByteWriter::bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + size);
}

void ByteWriter::little_endian(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
        buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u16(std::uint16_t v) { little_endian(v, 2); }
void ByteWriter::u32(std::uint32_t v) { little_endian(v, 4); }
void ByteWriter::f32(float v) { little_endian(std::bit_cast<std::uint32_t>(v), 4); }
void ByteWriter::f64(double v) { little_endian(std::bit_cast<std::uint64_t>(v), 8); }

void ByteWriter::save(const std::filesystem::path& path) const {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
        if (!out) {
            throw FormatError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

ByteReader::ByteReader(std::vector<std::uint8_t> data, std::string source)
    : data_(std::move(data)), source_(std::move(source)) {}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {std::move(data), path.string()};
}

void ByteReader::bytes(void* out, std::size_t size) {
    if (size > remaining()) {
        throw FormatError(source_ + ": truncated at byte offset " + std::to_string(offset_) + " (needed " +
                          std::to_string(size) + " more bytes)");
    }
    std::memcpy(out, data_.data() + offset_, size);
    offset_ += size;
}

std::uint64_t ByteReader::little_endian(int width) {
    std::uint8_t raw[8];
    bytes(raw, static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    }
    return v;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(little_endian(1)); }
std::uint16_t ByteReader::u16() { return static_cast<std::uint16_t>(little_endian(2)); }
std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(little_endian(4)); }
float ByteReader::f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(little_endian(4))); }
double ByteReader::f64() { return std::bit_cast<double>(little_endian(8)); }

} // namespace mmgs::io
