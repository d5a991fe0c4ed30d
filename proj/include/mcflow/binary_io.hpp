#pragma once

// Little-endian primitive IO shared by the MCKP, MCLT and MCVD formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mcflow/error.hpp"

namespace mcflow::io {

class FormatError : public Error {
public:
    enum class Kind { bad_magic, truncated, dim_overflow, io };
    FormatError(Kind kind, std::size_t offset, const std::string& what)
        : Error(what + " at byte offset " + std::to_string(offset)), kind_(kind), offset_(offset) {}
    Kind kind() const noexcept { return kind_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::size_t offset_;
};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void magic(const char (&m)[5]) { bytes(m, 4); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
    const std::vector<unsigned char>& buffer() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void expect_magic(const char (&m)[5]) {
        need(4, "truncated header");
        if (std::memcmp(data_.data() + pos_, m, 4) != 0) {
            throw FormatError(FormatError::Kind::bad_magic, pos_, std::string("bad magic, expected \"") + m + "\"");
        }
        pos_ += 4;
    }
    std::uint8_t u8(const char* what = "truncated payload") {
        need(1, what);
        return data_[pos_++];
    }
    std::uint32_t u32(const char* what = "truncated header") {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what = "truncated payload") {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }
    std::string str(std::size_t n) {
        need(n, "truncated name");
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(FormatError::Kind::truncated, pos_, what);
    }

private:
    std::vector<unsigned char> data_;
    std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& data);

}  // namespace mcflow::io
