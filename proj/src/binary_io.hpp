#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ltre/error.hpp"

namespace ltre::detail {

/// Little-endian encoder independent of host byte order.
class ByteWriter {
  public:
    void magic(const char (&tag)[5]) {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<std::byte>(tag[i]));
        }
    }
    void u8(std::uint8_t v) {
        bytes_.push_back(static_cast<std::byte>(v));
    }
    void u32(std::uint32_t v) {
        put(v, 4);
    }
    void u64(std::uint64_t v) {
        put(v, 8);
    }
    void f32(float v) {
        put(std::bit_cast<std::uint32_t>(v), 4);
    }
    void f64(double v) {
        put(std::bit_cast<std::uint64_t>(v), 8);
    }
    std::vector<std::byte>& bytes() noexcept {
        return bytes_;
    }

  private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) {
            bytes_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
        }
    }
    std::vector<std::byte> bytes_;
};

class ByteReader {
  public:
    ByteReader(std::span<const std::byte> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(const char (&tag)[5]) {
        need(4);
        for (int i = 0; i < 4; ++i) {
            if (bytes_[pos_ + i] != static_cast<std::byte>(tag[i])) {
                throw FormatError(what_ + ": bad magic, expected '" + std::string(tag, 4) + "'");
            }
        }
        pos_ += 4;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        return static_cast<std::uint32_t>(get(4));
    }
    std::uint64_t u64() {
        return get(8);
    }
    float f32() {
        return std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    }
    double f64() {
        return std::bit_cast<double>(get(8));
    }

    /// a * b, or a FormatError when a header declares an absurd size.
    std::uint64_t checked_product(std::uint64_t a, std::uint64_t b) const {
        if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
            throw FormatError(what_ + ": declared payload size overflows");
        }
        return a * b;
    }

    /// Throws unless exactly `payload` more bytes remain.
    void expect_remaining(std::uint64_t payload) const {
        const std::uint64_t actual = bytes_.size() - pos_;
        if (actual != payload) {
            throw FormatError(what_ + ": expected " + std::to_string(pos_ + payload) + " bytes, found " +
                              std::to_string(bytes_.size()));
        }
    }
    std::size_t remaining() const noexcept {
        return bytes_.size() - pos_;
    }

  private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(what_ + ": truncated header, expected at least " + std::to_string(pos_ + n) +
                              " bytes, found " + std::to_string(bytes_.size()));
        }
    }
    std::uint64_t get(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::span<const std::byte> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

} // namespace ltre::detail
