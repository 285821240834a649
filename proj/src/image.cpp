#include "cidis/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cidis/error.hpp"

namespace cidis {

ImageU8 ImageU8::make(std::uint32_t w, std::uint32_t h, std::uint32_t c, std::uint8_t fill) {
    if (w == 0 || h == 0 || (c != 1 && c != 3 && c != 4)) {
        throw ShapeError("bad image extent " + std::to_string(w) + "x" + std::to_string(h) +
                         "x" + std::to_string(c));
    }
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
    return img;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::uint8_t* data, std::size_t len) {
    put_be32(out, static_cast<std::uint32_t>(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(4 + len)));
    put_be32(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    if (img.channels != 3) throw ShapeError("png encoder expects an RGB image");
    if (img.width == 0 || img.height == 0) throw ShapeError("png encoder: empty image");

    // Raw scanlines, each with a leading filter byte of 0.
    std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * img.height);
    for (std::uint32_t y = 0; y < img.height; ++y) {
        raw[y * (stride + 1)] = 0;
        std::memcpy(raw.data() + y * (stride + 1) + 1, img.pixels.data() + y * stride, stride);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK) {
        throw IoError("png encoder: deflate failed");
    }
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.width);
    ihdr[4] = static_cast<std::uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter method
    ihdr[12] = 0;  // no interlace
    put_chunk(out, "IHDR", ihdr, 13);
    put_chunk(out, "IDAT", compressed.data(), compressed.size());
    put_chunk(out, "IEND", nullptr, 0);
    return out;
}

ImageU8 decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
        throw CorruptDataError("not a png stream");
    }

    std::uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = -1, interlace = 0;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;

    std::size_t off = 8;
    while (off + 8 <= bytes.size()) {
        std::uint32_t len = get_be32(bytes.data() + off);
        if (off + 12 + static_cast<std::size_t>(len) > bytes.size()) {
            throw CorruptDataError("png chunk overruns the stream");
        }
        const char* type = reinterpret_cast<const char*>(bytes.data() + off + 4);
        const std::uint8_t* data = bytes.data() + off + 8;
        std::uint32_t want_crc = get_be32(data + len);
        std::uint32_t have_crc = static_cast<std::uint32_t>(
            crc32(0, bytes.data() + off + 4, static_cast<uInt>(4 + len)));
        if (want_crc != have_crc) throw CorruptDataError("png chunk crc mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw CorruptDataError("bad IHDR length");
            width = get_be32(data);
            height = get_be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        off += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) {
        throw CorruptDataError("png stream is missing required chunks");
    }
    if (width == 0 || height == 0) throw CorruptDataError("png has zero extent");
    if (bit_depth != 8) throw FormatError("only 8-bit png is supported");
    if (interlace != 0) throw FormatError("interlaced png is not supported");
    std::uint32_t channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw FormatError("unsupported png color type " + std::to_string(color_type));
    }

    std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::size_t raw_len = (stride + 1) * height;
    std::vector<std::uint8_t> raw(raw_len);
    uLongf dest_len = static_cast<uLongf>(raw_len);
    int zret = uncompress(raw.data(), &dest_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zret != Z_OK || dest_len != raw_len) {
        throw CorruptDataError("png idat payload does not inflate cleanly");
    }

    ImageU8 img = ImageU8::make(width, height, channels);
    std::size_t bpp = channels;  // bytes per pixel at 8-bit depth
    for (std::uint32_t y = 0; y < height; ++y) {
        const std::uint8_t* line = raw.data() + y * (stride + 1);
        std::uint8_t filter = line[0];
        std::uint8_t* cur = img.pixels.data() + y * stride;
        const std::uint8_t* prev = y ? img.pixels.data() + (y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int x = line[1 + i];
            int a = i >= bpp ? cur[i - bpp] : 0;
            int b = prev ? prev[i] : 0;
            int c = (prev && i >= bpp) ? prev[i - bpp] : 0;
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, c); break;
                default: throw CorruptDataError("bad png filter type");
            }
            cur[i] = static_cast<std::uint8_t>(v & 0xFF);
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PPM (P6)
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_ppm(const ImageU8& img) {
    if (img.channels != 3) throw ShapeError("ppm encoder expects an RGB image");
    std::string header = "P6\n" + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

namespace {

// Reads one whitespace-delimited token, skipping `#` comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& off) {
    while (off < bytes.size()) {
        if (std::isspace(bytes[off])) {
            ++off;
        } else if (bytes[off] == '#') {
            while (off < bytes.size() && bytes[off] != '\n') ++off;
        } else {
            break;
        }
    }
    std::string tok;
    while (off < bytes.size() && !std::isspace(bytes[off])) tok.push_back(bytes[off++]);
    if (tok.empty()) throw CorruptDataError("truncated ppm header");
    return tok;
}

std::uint32_t ppm_number(std::span<const std::uint8_t> bytes, std::size_t& off) {
    std::string tok = ppm_token(bytes, off);
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw CorruptDataError("bad ppm header token: " + tok);
    return static_cast<std::uint32_t>(std::stoul(tok));
}

}  // namespace

ImageU8 decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    if (ppm_token(bytes, off) != "P6") throw CorruptDataError("not a P6 ppm stream");
    std::uint32_t w = ppm_number(bytes, off);
    std::uint32_t h = ppm_number(bytes, off);
    std::uint32_t maxval = ppm_number(bytes, off);
    if (maxval != 255) throw FormatError("only maxval 255 ppm is supported");
    if (w == 0 || h == 0) throw CorruptDataError("ppm has zero extent");
    ++off;  // single whitespace after maxval
    std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (off + need > bytes.size()) throw CorruptDataError("ppm pixel payload truncated");
    ImageU8 img = ImageU8::make(w, h, 3);
    std::memcpy(img.pixels.data(), bytes.data() + off, need);
    return img;
}

// ---------------------------------------------------------------------------
// File dispatch
// ---------------------------------------------------------------------------

ImageU8 read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
        return decode_png(bytes);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        return decode_ppm(bytes);
    }
    throw CorruptDataError("unrecognized image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const ImageU8& img) {
    std::vector<std::uint8_t> bytes;
    auto ext = path.extension().string();
    if (ext == ".png") {
        bytes = encode_png(img);
    } else if (ext == ".ppm") {
        bytes = encode_ppm(img);
    } else {
        throw ConfigError("unsupported image extension: " + ext);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write image " + path.string());
}

// ---------------------------------------------------------------------------
// Conversions and geometry
// ---------------------------------------------------------------------------

ImageU8 to_rgb(const ImageU8& img) {
    if (img.channels == 3) return img;
    ImageU8 out = ImageU8::make(img.width, img.height, 3);
    for (std::uint32_t y = 0; y < img.height; ++y)
        for (std::uint32_t x = 0; x < img.width; ++x) {
            if (img.channels == 1) {
                std::uint8_t v = img.at(x, y, 0);
                out.set(x, y, 0, v);
                out.set(x, y, 1, v);
                out.set(x, y, 2, v);
            } else {  // RGBA: alpha dropped
                out.set(x, y, 0, img.at(x, y, 0));
                out.set(x, y, 1, img.at(x, y, 1));
                out.set(x, y, 2, img.at(x, y, 2));
            }
        }
    return out;
}

ImageU8 resize_bilinear(const ImageU8& img, std::uint32_t w, std::uint32_t h) {
    if (w == 0 || h == 0) throw ShapeError("resize target must be positive");
    if (img.width == w && img.height == h) return img;
    ImageU8 out = ImageU8::make(w, h, img.channels);
    double sx = static_cast<double>(img.width) / w;
    double sy = static_cast<double>(img.height) / h;
    for (std::uint32_t y = 0; y < h; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        double y0f = std::floor(fy);
        double wy = fy - y0f;
        long y0 = static_cast<long>(y0f);
        long y1 = std::min(y0 + 1, static_cast<long>(img.height) - 1);
        for (std::uint32_t x = 0; x < w; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            double x0f = std::floor(fx);
            double wx = fx - x0f;
            long x0 = static_cast<long>(x0f);
            long x1 = std::min(x0 + 1, static_cast<long>(img.width) - 1);
            for (std::uint32_t c = 0; c < img.channels; ++c) {
                double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
                double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
                double v = top * (1 - wy) + bot * wy;
                out.set(x, y, c, static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))));
            }
        }
    }
    return out;
}

ImageU8 rotate90(const ImageU8& img) {
    ImageU8 out = ImageU8::make(img.height, img.width, img.channels);
    for (std::uint32_t y = 0; y < img.height; ++y)
        for (std::uint32_t x = 0; x < img.width; ++x)
            for (std::uint32_t c = 0; c < img.channels; ++c)
                out.set(img.height - 1 - y, x, c, img.at(x, y, c));
    return out;
}

ImageU8 rotate180(const ImageU8& img) {
    ImageU8 out = ImageU8::make(img.width, img.height, img.channels);
    for (std::uint32_t y = 0; y < img.height; ++y)
        for (std::uint32_t x = 0; x < img.width; ++x)
            for (std::uint32_t c = 0; c < img.channels; ++c)
                out.set(img.width - 1 - x, img.height - 1 - y, c, img.at(x, y, c));
    return out;
}

ImageU8 rotate270(const ImageU8& img) {
    ImageU8 out = ImageU8::make(img.height, img.width, img.channels);
    for (std::uint32_t y = 0; y < img.height; ++y)
        for (std::uint32_t x = 0; x < img.width; ++x)
            for (std::uint32_t c = 0; c < img.channels; ++c)
                out.set(y, img.width - 1 - x, c, img.at(x, y, c));
    return out;
}

float rgb_to_hue(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    float rf = r / 255.0f, gf = g / 255.0f, bf = b / 255.0f;
    float mx = std::max({rf, gf, bf});
    float mn = std::min({rf, gf, bf});
    float d = mx - mn;
    if (d == 0.0f) return 0.0f;
    float h;
    if (mx == rf) {
        h = 60.0f * std::fmod((gf - bf) / d, 6.0f);
    } else if (mx == gf) {
        h = 60.0f * ((bf - rf) / d + 2.0f);
    } else {
        h = 60.0f * ((rf - gf) / d + 4.0f);
    }
    if (h < 0.0f) h += 360.0f;
    return h;
}

Tensor normalize(const ImageU8& img) {
    if (img.channels != 3) throw ShapeError("normalize expects an RGB image");
    auto t = Tensor::zeros({3, img.height, img.width});
    for (std::uint32_t c = 0; c < 3; ++c)
        for (std::uint32_t y = 0; y < img.height; ++y)
            for (std::uint32_t x = 0; x < img.width; ++x)
                t[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
                    img.at(x, y, c) / 255.0f;
    return t;
}

ImageU8 denormalize(const Tensor& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("denormalize expects [3,h,w]");
    ImageU8 img = ImageU8::make(chw.dim(2), chw.dim(1), 3);
    for (std::uint32_t c = 0; c < 3; ++c)
        for (std::uint32_t y = 0; y < chw.dim(1); ++y)
            for (std::uint32_t x = 0; x < chw.dim(2); ++x) {
                float v = chw[(static_cast<std::size_t>(c) * chw.dim(1) + y) * chw.dim(2) + x];
                img.set(x, y, c, static_cast<std::uint8_t>(
                                     std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
            }
    return img;
}

}  // namespace cidis
