#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mitodet::corpus {

struct ImageU8 {
    int w = 0;
    int h = 0;
    std::vector<uint8_t> rgb;  // interleaved, 3 * w * h

    uint8_t at(int y, int x, int c) const {
        return rgb[(static_cast<size_t>(y) * w + x) * 3 + c];
    }
    uint8_t& at(int y, int x, int c) {
        return rgb[(static_cast<size_t>(y) * w + x) * 3 + c];
    }
};

// 8-bit RGB PNG. Writing uses a fixed filter choice and pinned zlib
// settings so identical pixels produce identical files. Reading handles
// any 8-bit RGB/RGBA/gray PNG with standard filtering.
void png_write(const std::string& path, const ImageU8& img);
ImageU8 png_read(const std::string& path);

}  // namespace mitodet::corpus
