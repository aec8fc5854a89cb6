#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rclip {

// 8-bit interleaved image row-major, channels = 1 (gray), 2 (gray+alpha),
// 3 (RGB) or 4 (RGBA).
struct ImageU8 {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<uint8_t> pix;

    uint8_t at(int y, int x, int c) const {
        return pix[(static_cast<size_t>(y) * w + x) * channels + c];
    }
    uint8_t& at(int y, int x, int c) {
        return pix[(static_cast<size_t>(y) * w + x) * channels + c];
    }
};

// 8-bit depth, non-interlaced PNGs only; palette images are rejected.
ImageU8 read_png(const std::filesystem::path& path);

// color_type derived from img.channels (1 -> gray, 3 -> RGB, 4 -> RGBA).
void write_png(const std::filesystem::path& path, const ImageU8& img);

}  // namespace rclip
