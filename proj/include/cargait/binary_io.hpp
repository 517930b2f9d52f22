#pragma once

#include "cargait/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace cargait::detail {

// Little-endian primitives. Values are assembled byte by byte so the on-disk
// layout does not depend on host endianness.

class ByteWriter {
public:
    void bytes(std::string_view raw) { buffer_.insert(buffer_.end(), raw.begin(), raw.end()); }

    void u16(std::uint16_t v) {
        buffer_.push_back(static_cast<char>(v & 0xFF));
        buffer_.push_back(static_cast<char>((v >> 8) & 0xFF));
    }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    /// u16 length prefix followed by the raw UTF-8 bytes.
    void short_string(std::string_view s, std::string_view what) {
        if (s.size() > 0xFFFF) {
            fail(ErrorKind::invalid_argument, std::string(what) + " longer than 65535 bytes");
        }
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s);
    }

    const std::vector<char>& data() const { return buffer_; }

    void write_to(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorKind::io, "cannot open '" + path + "' for writing");
        }
        out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!out) {
            fail(ErrorKind::io, "write to '" + path + "' failed");
        }
    }

private:
    std::vector<char> buffer_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            fail(ErrorKind::io, "cannot open '" + path + "' for reading");
        }
        std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(data));
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    std::size_t position() const { return pos_; }

    std::string bytes(std::size_t n) {
        need(n);
        std::string out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) {
            v |= static_cast<std::uint16_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string short_string() { return bytes(u16()); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) {
            fail(ErrorKind::truncated, "unexpected end of data at byte " + std::to_string(pos_) + " (need " +
                                           std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
        }
    }

    std::vector<char> data_;
    std::size_t pos_ = 0;
};

} // namespace cargait::detail
