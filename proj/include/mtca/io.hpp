// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mtca/errors.hpp"

namespace mtca {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = seed ^ 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace detail {

template <typename UInt>
void append_le(std::vector<std::uint8_t>& out, UInt value) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFFu));
}

template <typename UInt>
UInt read_le(std::span<const std::uint8_t> in, std::size_t offset) {
    if (offset + sizeof(UInt) > in.size()) throw DataError("unexpected end of binary payload");
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        value |= static_cast<UInt>(in[offset + i]) << (8 * i);
    return value;
}

} // namespace detail

inline void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) { detail::append_le(out, v); }
inline void append_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) { detail::append_le(out, v); }
inline void append_f32le(std::vector<std::uint8_t>& out, float v) {
    detail::append_le(out, std::bit_cast<std::uint32_t>(v));
}
inline void append_f64le(std::vector<std::uint8_t>& out, double v) {
    detail::append_le(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32le(std::span<const std::uint8_t> in, std::size_t off) {
    return detail::read_le<std::uint32_t>(in, off);
}
inline std::uint64_t read_u64le(std::span<const std::uint8_t> in, std::size_t off) {
    return detail::read_le<std::uint64_t>(in, off);
}
inline float read_f32le(std::span<const std::uint8_t> in, std::size_t off) {
    return std::bit_cast<float>(detail::read_le<std::uint32_t>(in, off));
}
inline double read_f64le(std::span<const std::uint8_t> in, std::size_t off) {
    return std::bit_cast<double>(detail::read_le<std::uint64_t>(in, off));
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot open for writing: " + path.string());
    file.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!file) throw DataError("write failed: " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot open for writing: " + path.string());
    file << text;
    if (!file) throw DataError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary | std::ios::ate);
    if (!file) throw DataError("cannot open for reading: " + path.string());
    const auto size = file.tellg();
    file.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    file.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!file) throw DataError("read failed: " + path.string());
    return bytes;
}

inline std::string read_file_text(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

inline bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
    return read_file_bytes(a) == read_file_bytes(b);
}

} // namespace mtca
