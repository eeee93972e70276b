#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossway {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are not supported");

// Data or checkpoint problems that map to exit code 3 at the CLI.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint32_t crc32(const void* data, size_t n, uint32_t seed = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

inline void write_file(const std::filesystem::path& path, const void* data, size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("short write: " + path.string());
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IntegrityError("cannot open: " + path.string());
    auto n = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<size_t>(n));
    f.read(buf.data(), n);
    if (!f) throw IntegrityError("short read: " + path.string());
    return buf;
}

template <class Vec>
void write_blob(const std::filesystem::path& path, const Vec& v) {
    write_file(path, v.data(), v.size() * sizeof(typename Vec::value_type));
}

template <class T>
std::vector<T> read_blob(const std::filesystem::path& path, size_t expected_count) {
    auto raw = read_file(path);
    if (raw.size() != expected_count * sizeof(T))
        throw IntegrityError("blob size mismatch: " + path.string());
    std::vector<T> v(expected_count);
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
}

// Reads straight into an existing buffer (large arrays skip the temp copy).
template <class T>
void read_blob_into(const std::filesystem::path& path, T* dst, size_t count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IntegrityError("cannot open: " + path.string());
    auto n = static_cast<size_t>(f.tellg());
    if (n != count * sizeof(T)) throw IntegrityError("blob size mismatch: " + path.string());
    f.seekg(0);
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!f) throw IntegrityError("short read: " + path.string());
}

inline std::string zero_pad(int64_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace crossway
