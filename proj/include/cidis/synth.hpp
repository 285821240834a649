#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cidis/data.hpp"
#include "cidis/image.hpp"

namespace cidis {

/// One of the eight ripeness sublevels A1..D2. The base color fixes the hue
/// ramp; hue decreases strictly from green (A1) toward brown (D2). Spots
/// appear only at levels C and D.
struct RipenessSublevel {
    char level;   // 'A'..'D'
    int sub;      // 1 or 2
    std::array<std::uint8_t, 3> base;  // RGB ramp base
    float spot_density;                // target fraction of banana pixels
};

const std::array<RipenessSublevel, 8>& sublevels();
int sublevel_index(char level, int sub);  // 0..7 in ripeness order

enum class Background {
    orange,
    purple,
    brown,
    lightblue,
    platform,
    wall,
    tiles,
    marble,
};
constexpr int kBackgroundCount = 8;

const char* background_name(Background b);
Background background_from_string(const std::string& name);

struct SceneConfig {
    int sublevel = 0;  // index into sublevels()
    Background background = Background::orange;
    int banana_count = 1;  // 1..4
    int rail = 1;          // 1..3 -> scale
    int position = 1;      // 1..30 -> rotation
    std::uint64_t seed = 0;
};

void validate(const SceneConfig& cfg);  // throws ConfigError
std::string describe(const SceneConfig& cfg);

struct RenderResult {
    ImageU8 image;                    // RGB, size x size
    std::vector<std::uint8_t> mask;   // 1 where a banana covers the pixel
    int label;                        // 0..3
};

/// Deterministic function of (config, size): same inputs give byte-identical
/// images. Background first, then the crescent group under the pose
/// transform, then spots for C/D sublevels.
RenderResult render_scene(const SceneConfig& cfg, std::uint32_t size = 224);

/// The config for image `index_in_level` of `level`, cycling uniformly over
/// sublevel, background, banana count, rail, and position; the per-image rng
/// stream is forked from (seed, global_index).
SceneConfig scene_for_index(char level, int index_in_level, std::uint64_t seed,
                            std::uint64_t global_index);

/// Writes per_level images per level to out_dir/level_{A..D}/NNNNNN.<ext>
/// plus a manifest listing every file with its flattened config. Returns the
/// manifest text. format is "png" or "ppm". real_like additionally runs every
/// render through perturb_real_like (seeded like real_like_dataset), giving a
/// desk-scale stand-in for a real photo set.
std::string generate_dataset(int per_level, const std::filesystem::path& out_dir,
                             std::uint64_t seed, std::uint32_t size = 224,
                             const std::string& format = "png", bool real_like = false);

/// In-memory equivalents used by the scaled experiments. The real-like set
/// applies noise, lighting shift, contrast and channel-gain jitter on top of
/// clean renders, emulating a domain gap.
Dataset synth_dataset(int per_level, std::uint64_t seed, std::uint32_t size);
Dataset real_like_dataset(int per_level, std::uint64_t seed, std::uint32_t size);

ImageU8 perturb_real_like(const ImageU8& img, Rng& rng);

}  // namespace cidis
