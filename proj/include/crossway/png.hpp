#pragma once

#include "crossway/util.hpp"

namespace crossway {

// Minimal PNG support: 8-bit RGB, no interlace, zlib stream with stored
// (uncompressed) deflate blocks. Enough for reconstruction dumps and plots;
// the reader only handles files this writer produces.
namespace pngdet {

inline void put_u32(std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

inline void chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    std::vector<unsigned char> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc32(body.data(), body.size()));
}

inline uint32_t adler32(const unsigned char* p, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + p[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

}  // namespace pngdet

// rgb is row-major [H][W][3], 8-bit.
inline void write_png(const std::filesystem::path& path, int w, int h,
                      const std::vector<unsigned char>& rgb) {
    if (static_cast<size_t>(w) * h * 3 != rgb.size()) throw std::invalid_argument("write_png: size mismatch");
    // Filter byte 0 per scanline.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + static_cast<size_t>(y) * w * 3,
                   rgb.begin() + static_cast<size_t>(y + 1) * w * 3);
    }
    // zlib wrapper with stored deflate blocks.
    std::vector<unsigned char> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size() || raw.empty()) {
        size_t n = std::min<size_t>(65535, raw.size() - off);
        bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<unsigned char>(n & 0xFF));
        z.push_back(static_cast<unsigned char>(n >> 8));
        z.push_back(static_cast<unsigned char>(~n & 0xFF));
        z.push_back(static_cast<unsigned char>((~n >> 8) & 0xFF));
        z.insert(z.end(), raw.begin() + static_cast<ptrdiff_t>(off),
                 raw.begin() + static_cast<ptrdiff_t>(off + n));
        off += n;
        if (last || raw.empty()) break;
    }
    pngdet::put_u32(z, pngdet::adler32(raw.data(), raw.size()));

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<unsigned char> ihdr;
    pngdet::put_u32(ihdr, static_cast<uint32_t>(w));
    pngdet::put_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    pngdet::chunk(out, "IHDR", ihdr);
    pngdet::chunk(out, "IDAT", z);
    pngdet::chunk(out, "IEND", {});
    write_file(path, out.data(), out.size());
}

// Decodes PNGs produced by write_png (stored blocks only). Returns (w, h, rgb).
inline std::tuple<int, int, std::vector<unsigned char>> read_png(const std::filesystem::path& path) {
    auto rawf = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(rawf.data());
    size_t n = rawf.size();
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (n < 8 || std::memcmp(p, sig, 8) != 0) throw IntegrityError("not a PNG: " + path.string());
    size_t off = 8;
    int w = 0, h = 0;
    std::vector<unsigned char> z;
    auto rd_u32 = [&](size_t at) {
        return (uint32_t(p[at]) << 24) | (uint32_t(p[at + 1]) << 16) | (uint32_t(p[at + 2]) << 8) |
               uint32_t(p[at + 3]);
    };
    while (off + 8 <= n) {
        uint32_t len = rd_u32(off);
        std::string type(reinterpret_cast<const char*>(p + off + 4), 4);
        if (off + 12 + len > n) throw IntegrityError("truncated PNG chunk");
        uint32_t want = rd_u32(off + 8 + len);
        if (crc32(p + off + 4, 4 + len) != want) throw IntegrityError("PNG chunk CRC mismatch");
        const unsigned char* body = p + off + 8;
        if (type == "IHDR") {
            w = static_cast<int>(rd_u32(off + 8));
            h = static_cast<int>(rd_u32(off + 12));
            if (body[8] != 8 || body[9] != 2) throw IntegrityError("unsupported PNG format");
        } else if (type == "IDAT") {
            z.insert(z.end(), body, body + len);
        } else if (type == "IEND") {
            break;
        }
        off += 12 + len;
    }
    if (z.size() < 6) throw IntegrityError("PNG missing image data");
    // Inflate stored blocks.
    std::vector<unsigned char> raw;
    size_t zo = 2;
    for (;;) {
        if (zo + 5 > z.size()) throw IntegrityError("bad zlib stream");
        unsigned char bfinal = z[zo] & 1;
        if ((z[zo] >> 1) != 0) throw IntegrityError("compressed PNG not supported by this reader");
        size_t blen = z[zo + 1] | (size_t(z[zo + 2]) << 8);
        raw.insert(raw.end(), z.begin() + static_cast<ptrdiff_t>(zo + 5),
                   z.begin() + static_cast<ptrdiff_t>(zo + 5 + blen));
        zo += 5 + blen;
        if (bfinal) break;
    }
    std::vector<unsigned char> rgb;
    rgb.reserve(static_cast<size_t>(w) * h * 3);
    size_t stride = 1 + static_cast<size_t>(w) * 3;
    if (raw.size() != stride * static_cast<size_t>(h)) throw IntegrityError("PNG scanline size mismatch");
    for (int y = 0; y < h; ++y) {
        if (raw[static_cast<size_t>(y) * stride] != 0) throw IntegrityError("filtered PNG not supported");
        rgb.insert(rgb.end(), raw.begin() + static_cast<ptrdiff_t>(y * stride + 1),
                   raw.begin() + static_cast<ptrdiff_t>((y + 1) * stride));
    }
    return {w, h, std::move(rgb)};
}

}  // namespace crossway
