#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cidis/tensor.hpp"

namespace cidis {

/// Interleaved 8-bit image, row-major. channels is 1 (gray), 3 (RGB) or
/// 4 (RGBA).
struct ImageU8 {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 0;
    std::vector<std::uint8_t> pixels;

    static ImageU8 make(std::uint32_t w, std::uint32_t h, std::uint32_t c,
                        std::uint8_t fill = 0);

    std::size_t idx(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
        return pixels[idx(x, y, c)];
    }
    void set(std::uint32_t x, std::uint32_t y, std::uint32_t c, std::uint8_t v) {
        pixels[idx(x, y, c)] = v;
    }
};

/// PNG, 8-bit only: encodes RGB; decodes gray / RGB / RGBA, non-interlaced.
std::vector<std::uint8_t> encode_png(const ImageU8& img);
ImageU8 decode_png(std::span<const std::uint8_t> bytes);

/// Binary PPM (P6), RGB.
std::vector<std::uint8_t> encode_ppm(const ImageU8& img);
ImageU8 decode_ppm(std::span<const std::uint8_t> bytes);

/// Dispatch on file magic (read) or extension .png/.ppm (write).
ImageU8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageU8& img);

ImageU8 to_rgb(const ImageU8& img);  // gray replicated, alpha dropped
ImageU8 resize_bilinear(const ImageU8& img, std::uint32_t w, std::uint32_t h);

/// Exact right-angle pixel permutations (clockwise).
ImageU8 rotate90(const ImageU8& img);
ImageU8 rotate180(const ImageU8& img);
ImageU8 rotate270(const ImageU8& img);

/// Hue angle in degrees [0, 360); 0 for achromatic pixels.
float rgb_to_hue(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// RGB image -> [3,H,W] tensor with every value divided by 255.
Tensor normalize(const ImageU8& img);
/// [3,H,W] tensor in [0,1] -> RGB image (values clamped and rounded).
ImageU8 denormalize(const Tensor& chw);

}  // namespace cidis
