#include "rclip/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "rclip/errors.hpp"

namespace rclip {

namespace {

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

int channels_for_color_type(int ct) {
    switch (ct) {
        case 0: return 1;
        case 2: return 3;
        case 4: return 2;
        case 6: return 4;
        default: return 0;
    }
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return uint8_t(a);
    if (pb <= pc) return uint8_t(b);
    return uint8_t(c);
}

std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t n, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf dst_len = expected;
    int rc = uncompress(out.data(), &dst_len, data, static_cast<uLong>(n));
    if (rc != Z_OK || dst_len != expected) throw Error("png: zlib inflate failed");
    return out;
}

std::vector<uint8_t> zlib_deflate(const uint8_t* data, size_t n) {
    uLongf bound = compressBound(static_cast<uLong>(n));
    std::vector<uint8_t> out(bound);
    int rc = compress2(out.data(), &bound, data, static_cast<uLong>(n), 6);
    if (rc != Z_OK) throw Error("png: zlib deflate failed");
    out.resize(bound);
    return out;
}

}  // namespace

ImageU8 read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("png: cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw Error("png: bad signature in " + path.string());

    ImageU8 img;
    int bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool seen_iend = false;
    while (pos + 12 <= bytes.size() && !seen_iend) {
        uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw Error("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* payload = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw Error("png: bad IHDR");
            img.w = static_cast<int>(be32(payload));
            img.h = static_cast<int>(be32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw Error("png: interlaced images unsupported");
            if (bit_depth != 8) throw Error("png: only 8-bit depth supported");
            img.channels = channels_for_color_type(color_type);
            if (img.channels == 0) throw Error("png: unsupported color type (palette?)");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (img.w <= 0 || img.h <= 0) throw Error("png: missing IHDR");
    if (idat.empty()) throw Error("png: missing IDAT");

    const size_t stride = static_cast<size_t>(img.w) * img.channels;
    const size_t raw_len = (stride + 1) * img.h;
    std::vector<uint8_t> raw = zlib_inflate(idat.data(), idat.size(), raw_len);

    img.pix.resize(stride * img.h);
    const int bpp = img.channels;
    for (int y = 0; y < img.h; ++y) {
        const uint8_t filter = raw[(stride + 1) * y];
        const uint8_t* src = &raw[(stride + 1) * y + 1];
        uint8_t* cur = &img.pix[stride * y];
        const uint8_t* up = y > 0 ? &img.pix[stride * (y - 1)] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= size_t(bpp) ? cur[x - bpp] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= size_t(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw Error("png: unknown filter type");
            }
            cur[x] = uint8_t(v);
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    int color_type;
    switch (img.channels) {
        case 1: color_type = 0; break;
        case 3: color_type = 2; break;
        case 4: color_type = 6; break;
        default: throw Error("png: unsupported channel count for writing");
    }
    if (img.pix.size() != static_cast<size_t>(img.h) * img.w * img.channels)
        throw ShapeMismatch("png: pixel buffer size");

    const size_t stride = static_cast<size_t>(img.w) * img.channels;
    std::vector<uint8_t> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw[(stride + 1) * y] = 0;  // filter: none
        std::memcpy(&raw[(stride + 1) * y + 1], &img.pix[stride * y], stride);
    }
    std::vector<uint8_t> compressed = zlib_deflate(raw.data(), raw.size());

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    auto chunk = [&out](const char* type, const std::vector<uint8_t>& payload) {
        put_be32(out, static_cast<uint32_t>(payload.size()));
        size_t start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
        put_be32(out, crc);
    };

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(static_cast<uint8_t>(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("png: cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("png: write failed for " + path.string());
}

}  // namespace rclip
