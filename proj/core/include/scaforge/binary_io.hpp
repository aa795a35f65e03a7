#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "scaforge/errors.hpp"

namespace scaforge::io {

// Little-endian encoder for the library's binary containers.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void magic(std::string_view tag) {
        for (char c : tag) buf_.push_back(static_cast<std::uint8_t>(c));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        std::array<std::uint8_t, sizeof(T)> raw;
        std::memcpy(raw.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(raw.begin(), raw.end());
        buf_.insert(buf_.end(), raw.begin(), raw.end());
    }

    template <typename T>
    void put_all(std::span<const T> values) {
        for (const auto& v : values) put(v);
    }

    void zeros(std::size_t n) { buf_.insert(buf_.end(), n, 0); }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked decoder; running off the end raises FormatErrc::truncated.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

    std::span<const std::uint8_t> bytes(std::size_t n) {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    void expect_magic(std::string_view tag) {
        if (remaining() < tag.size())
            throw FormatError(FormatErrc::bad_magic, "file too short for magic '" + std::string(tag) + "'");
        auto got = bytes(tag.size());
        if (!std::equal(tag.begin(), tag.end(), got.begin(),
                        [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
            throw FormatError(FormatErrc::bad_magic, "expected magic '" + std::string(tag) + "'");
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        auto raw = bytes(sizeof(T));
        std::array<std::uint8_t, sizeof(T)> tmp;
        std::copy(raw.begin(), raw.end(), tmp.begin());
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(tmp.begin(), tmp.end());
        T value;
        std::memcpy(&value, tmp.data(), sizeof(T));
        return value;
    }

    template <typename T>
    std::vector<T> get_vector(std::size_t n) {
        require_elements(n, sizeof(T));
        std::vector<T> out(n);
        for (auto& v : out) v = get<T>();
        return out;
    }

    void require_elements(std::size_t n, std::size_t size) const {
        if (size != 0 && n > remaining() / size)
            throw FormatError(FormatErrc::truncated, "payload shorter than declared");
    }

    void expect_end() const {
        if (remaining() != 0)
            throw FormatError(FormatErrc::length_mismatch,
                              std::to_string(remaining()) + " trailing bytes after payload");
    }

private:
    void require(std::size_t n) const {
        if (n > remaining()) throw FormatError(FormatErrc::truncated, "unexpected end of data");
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace scaforge::io
