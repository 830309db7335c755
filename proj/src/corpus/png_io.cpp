#include "mitodet/corpus/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "mitodet/core/error.hpp"

namespace mitodet::corpus {

namespace {

const uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4],
                 const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    const size_t type_pos = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + type_pos, static_cast<uInt>(4 + data.size())));
    put_be32(out, crc);
}

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& in) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    // Pinned settings: output depends only on input for a given zlib build.
    if (deflateInit2(&zs, 6, Z_DEFLATED, 15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error("png_write: deflateInit2 failed");
    }
    std::vector<uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error("png_write: deflate failed");
    out.resize(out.size() - zs.avail_out);
    return out;
}

std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t size,
                                     size_t expected) {
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit(&zs) != Z_OK) throw Error("png_read: inflateInit failed");
    std::vector<uint8_t> out(expected);
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(size);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error("png_read: corrupt or oversized zlib stream");
    if (zs.avail_out != 0) throw Error("png_read: truncated pixel data");
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void png_write(const std::string& path, const ImageU8& img) {
    if (img.w <= 0 || img.h <= 0 ||
        img.rgb.size() != static_cast<size_t>(img.w) * img.h * 3) {
        throw Error("png_write: image buffer does not match dimensions");
    }

    // Sub filter on every row: deterministic and effective on smooth tissue.
    const size_t row_bytes = static_cast<size_t>(img.w) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((row_bytes + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        const uint8_t* row = img.rgb.data() + row_bytes * y;
        raw.push_back(1);  // filter type: Sub
        for (size_t i = 0; i < row_bytes; ++i) {
            const uint8_t left = (i >= 3) ? row[i - 3] : 0;
            raw.push_back(static_cast<uint8_t>(row[i] - left));
        }
    }

    std::vector<uint8_t> file(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    write_chunk(file, "IHDR", ihdr);
    write_chunk(file, "IDAT", zlib_compress(raw));
    write_chunk(file, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("png_write: cannot open " + path);
    os.write(reinterpret_cast<const char*>(file.data()),
             static_cast<std::streamsize>(file.size()));
    if (!os) throw Error("png_write: write failed for " + path);
}

ImageU8 png_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("png_read: cannot open " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0) {
        throw Error("png_read: not a PNG file: " + path);
    }

    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 12 <= file.size() && !saw_iend) {
        const uint32_t len = get_be32(&file[pos]);
        if (pos + 12 + len > file.size()) throw Error("png_read: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
        const uint8_t* data = &file[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw Error("png_read: bad IHDR in " + path);
            w = static_cast<int>(get_be32(data));
            h = static_cast<int>(get_be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || w <= 0 || h <= 0) throw Error("png_read: missing IHDR in " + path);
    if (bit_depth != 8) throw Error("png_read: only 8-bit PNGs supported: " + path);
    if (interlace != 0) throw Error("png_read: interlaced PNGs unsupported: " + path);
    int channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw Error("png_read: unsupported color type in " + path);
    }

    const size_t row_bytes = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw =
        zlib_decompress(idat.data(), idat.size(), (row_bytes + 1) * h);

    // Unfilter in place (into prev/cur rows).
    std::vector<uint8_t> cur(row_bytes), prev(row_bytes, 0);
    ImageU8 img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = raw[(row_bytes + 1) * y];
        const uint8_t* src = &raw[(row_bytes + 1) * y + 1];
        for (size_t i = 0; i < row_bytes; ++i) {
            const int a = (i >= static_cast<size_t>(channels)) ? cur[i - channels] : 0;
            const int b = prev[i];
            const int c = (i >= static_cast<size_t>(channels)) ? prev[i - channels] : 0;
            int v;
            switch (filter) {
                case 0: v = src[i]; break;
                case 1: v = src[i] + a; break;
                case 2: v = src[i] + b; break;
                case 3: v = src[i] + (a + b) / 2; break;
                case 4: v = src[i] + paeth(a, b, c); break;
                default: throw Error("png_read: bad filter byte in " + path);
            }
            cur[i] = static_cast<uint8_t>(v);
        }
        for (int x = 0; x < w; ++x) {
            uint8_t r, g, bch;
            if (channels == 1) {
                r = g = bch = cur[static_cast<size_t>(x)];
            } else {
                r = cur[static_cast<size_t>(x) * channels];
                g = cur[static_cast<size_t>(x) * channels + 1];
                bch = cur[static_cast<size_t>(x) * channels + 2];
            }
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = bch;
        }
        std::swap(cur, prev);
    }
    return img;
}

}  // namespace mitodet::corpus
