#include "cidis/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cidis/error.hpp"

namespace cidis {

namespace {

constexpr float kPi = 3.14159265358979323846f;

float deg2rad(float d) { return d * kPi / 180.0f; }

std::uint8_t clamp_u8(float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Stateless per-pixel noise in [0,1): order-independent, so painting order
// never changes the result.
float hash01(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = Rng::fork(seed, k);
    return static_cast<float>(z >> 40) * 0x1.0p-24f;
}

void put(ImageU8& img, std::uint32_t x, std::uint32_t y, std::uint8_t r, std::uint8_t g,
         std::uint8_t b) {
    img.set(x, y, 0, r);
    img.set(x, y, 1, g);
    img.set(x, y, 2, b);
}

}  // namespace

const std::array<RipenessSublevel, 8>& sublevels() {
    // Base colors walk the hue circle monotonically from green toward brown:
    // 108.0, 96.8, 77.4, 62.1, 48.4, 37.5, 29.0, 26.1 degrees.
    static const std::array<RipenessSublevel, 8> table = {{
        {'A', 1, {80, 200, 50}, 0.00f},
        {'A', 2, {110, 205, 50}, 0.00f},
        {'B', 1, {165, 210, 55}, 0.00f},
        {'B', 2, {200, 205, 60}, 0.00f},
        {'C', 1, {215, 185, 60}, 0.03f},
        {'C', 2, {220, 160, 60}, 0.06f},
        {'D', 1, {200, 125, 55}, 0.10f},
        {'D', 2, {160, 95, 45}, 0.16f},
    }};
    return table;
}

int sublevel_index(char level, int sub) {
    if (level < 'A' || level > 'D' || sub < 1 || sub > 2)
        throw ConfigError("no such ripeness sublevel: " + std::string(1, level) +
                          std::to_string(sub));
    return (level - 'A') * 2 + (sub - 1);
}

const char* background_name(Background b) {
    switch (b) {
        case Background::orange: return "orange";
        case Background::purple: return "purple";
        case Background::brown: return "brown";
        case Background::lightblue: return "lightblue";
        case Background::platform: return "platform";
        case Background::wall: return "wall";
        case Background::tiles: return "tiles";
        case Background::marble: return "marble";
    }
    throw ConfigError("unknown background id");
}

Background background_from_string(const std::string& name) {
    for (int i = 0; i < kBackgroundCount; ++i)
        if (name == background_name(static_cast<Background>(i)))
            return static_cast<Background>(i);
    throw ConfigError("unknown background '" + name + "'");
}

void validate(const SceneConfig& cfg) {
    if (cfg.sublevel < 0 || cfg.sublevel > 7)
        throw ConfigError("sublevel index out of range: " + std::to_string(cfg.sublevel));
    int b = static_cast<int>(cfg.background);
    if (b < 0 || b >= kBackgroundCount)
        throw ConfigError("background id out of range: " + std::to_string(b));
    if (cfg.banana_count < 1 || cfg.banana_count > 4)
        throw ConfigError("banana count must be 1..4, got " + std::to_string(cfg.banana_count));
    if (cfg.rail < 1 || cfg.rail > 3)
        throw ConfigError("rail must be 1..3, got " + std::to_string(cfg.rail));
    if (cfg.position < 1 || cfg.position > 30)
        throw ConfigError("position must be 1..30, got " + std::to_string(cfg.position));
}

std::string describe(const SceneConfig& cfg) {
    const auto& sl = sublevels()[static_cast<std::size_t>(cfg.sublevel)];
    std::string s;
    s += "level=";
    s += sl.level;
    s += " sub=" + std::to_string(sl.sub);
    s += " background=";
    s += background_name(cfg.background);
    s += " count=" + std::to_string(cfg.banana_count);
    s += " rail=" + std::to_string(cfg.rail);
    s += " position=" + std::to_string(cfg.position);
    s += " seed=" + std::to_string(cfg.seed);
    return s;
}

namespace {

// Backgrounds are pure functions of pixel position plus a couple of phase
// values drawn up front, so they stay order-independent. D2 gets lightened
// tile/marble variants to keep the darkest fruit distinguishable.
void draw_background(ImageU8& img, Background b, bool lighten, Rng& rng) {
    const int w = static_cast<int>(img.width);
    const int h = static_cast<int>(img.height);
    const float phase_a = rng.next_float(0.0f, 2.0f * kPi);
    const float phase_b = rng.next_float(0.0f, 2.0f * kPi);
    auto flat = [&](std::uint8_t r, std::uint8_t g, std::uint8_t bl) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) put(img, x, y, r, g, bl);
    };
    int lift = lighten ? 45 : 0;
    switch (b) {
        case Background::orange: flat(232, 152, 72); return;
        case Background::purple: flat(118, 82, 158); return;
        case Background::brown: flat(118, 86, 58); return;
        case Background::lightblue: flat(168, 205, 228); return;
        case Background::platform: {
            // dark back wall over a lighter table surface
            int edge = h * 2 / 5;
            for (int y = 0; y < h; ++y) {
                float fade = static_cast<float>(y) / h;
                for (int x = 0; x < w; ++x) {
                    if (y < edge)
                        put(img, x, y, clamp_u8(70 + 20 * fade), clamp_u8(62 + 20 * fade),
                            clamp_u8(58 + 20 * fade));
                    else
                        put(img, x, y, clamp_u8(170 + 40 * fade), clamp_u8(150 + 40 * fade),
                            clamp_u8(120 + 40 * fade));
                }
            }
            return;
        }
        case Background::wall: {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    float stripe = 12.0f * std::sin(x * 24.0f * kPi / w + phase_a);
                    float grad = 30.0f * y / h;
                    put(img, x, y, clamp_u8(178 + stripe - grad), clamp_u8(172 + stripe - grad),
                        clamp_u8(160 + stripe - grad));
                }
            return;
        }
        case Background::tiles: {
            int cell = std::max(1, w / 8);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    bool dark = ((x / cell) + (y / cell)) % 2 == 0;
                    bool groove = (x % cell == 0) || (y % cell == 0);
                    int base = dark ? 96 : 150;
                    if (groove) base -= 35;
                    base += lift;
                    put(img, x, y, clamp_u8(base + 4), clamp_u8(base), clamp_u8(base - 4));
                }
            return;
        }
        case Background::marble: {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    float u = static_cast<float>(x) / w, v = static_cast<float>(y) / h;
                    float vein = std::sin(6.0f * (u + v) * kPi + phase_a) +
                                 0.5f * std::sin(17.0f * (u - 0.6f * v) * kPi + phase_b);
                    int base = 190 + static_cast<int>(18.0f * vein) + lift;
                    put(img, x, y, clamp_u8(base), clamp_u8(base - 3), clamp_u8(base - 6));
                }
            return;
        }
    }
}

struct Crescent {
    float cx, cy;        // arc center in group space
    float radius;        // arc radius
    float half_thick;    // max half thickness, tapers toward the tips
    float rot;           // local rotation
    float th0, th1;      // angular span, th0 < th1, below the center
};

}  // namespace

RenderResult render_scene(const SceneConfig& cfg, std::uint32_t size) {
    validate(cfg);
    if (size < 8) throw ConfigError("render size must be at least 8");

    const auto& sl = sublevels()[static_cast<std::size_t>(cfg.sublevel)];
    const bool lighten = sl.level == 'D' && sl.sub == 2 &&
                         (cfg.background == Background::tiles ||
                          cfg.background == Background::marble);

    RenderResult out;
    out.label = cfg.sublevel / 2;
    out.image = ImageU8::make(size, size, 3);
    out.mask.assign(static_cast<std::size_t>(size) * size, 0);

    Rng rng(cfg.seed);
    draw_background(out.image, cfg.background, lighten, rng);

    // Pose: rail picks the scale, position the in-plane rotation, plus a
    // small translation jitter. All geometry lives in [-1,1]^2 with y up, so
    // renders at different sizes are scaled versions of the same scene.
    static constexpr float kRailScale[3] = {1.1f, 0.85f, 0.6f};
    const float scale = kRailScale[cfg.rail - 1];
    const float phi = deg2rad(-40.0f + 80.0f * (cfg.position - 1) / 29.0f);
    const float tx = rng.next_float(-0.12f, 0.12f);
    const float ty = rng.next_float(-0.12f, 0.12f);
    const int n = cfg.banana_count;
    const float group = 1.0f / (0.75f + 0.25f * n);  // shrink bunches to fit

    std::vector<Crescent> fruit;
    fruit.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        Crescent c;
        c.cx = (k - (n - 1) * 0.5f) * 0.48f;
        c.cy = rng.next_float(-0.06f, 0.06f);
        c.radius = 0.55f + rng.next_float(-0.05f, 0.05f);
        c.half_thick = 0.5f * (0.30f * c.radius + rng.next_float(-0.02f, 0.02f));
        c.rot = deg2rad(rng.next_float(-12.0f, 12.0f));
        c.th0 = deg2rad(-155.0f + rng.next_float(-8.0f, 8.0f));
        c.th1 = deg2rad(-25.0f + rng.next_float(-8.0f, 8.0f));
        fruit.push_back(c);
    }

    const float inv = 2.0f / size;
    const float cphi = std::cos(phi), sphi = std::sin(phi);
    for (std::uint32_t py = 0; py < size; ++py) {
        for (std::uint32_t px = 0; px < size; ++px) {
            const float qx = (px + 0.5f) * inv - 1.0f;
            const float qy = 1.0f - (py + 0.5f) * inv;
            // invert the pose into group space
            const float ux = qx - tx, uy = qy - ty;
            const float gx = (cphi * ux + sphi * uy) / (scale * group);
            const float gy = (-sphi * ux + cphi * uy) / (scale * group);

            for (const Crescent& c : fruit) {
                const float dx = gx - c.cx, dy = gy - c.cy;
                const float cr = std::cos(c.rot), sr = std::sin(c.rot);
                const float lx = cr * dx + sr * dy;
                const float ly = -sr * dx + cr * dy;
                const float th = std::atan2(ly, lx);
                if (th < c.th0 || th > c.th1) continue;
                const float u = (th - c.th0) / (c.th1 - c.th0);
                const float half = c.half_thick * std::pow(std::sin(u * kPi), 0.65f);
                const float r = std::hypot(lx, ly);
                if (std::fabs(r - c.radius) > half) continue;

                // One multiplicative factor for all three channels keeps the
                // hue exactly on the sublevel ramp.
                const float d = half > 0 ? (r - c.radius) / half : 0.0f;
                const float tone = 0.82f + 0.25f * std::sin(u * kPi);
                const float shade = 1.0f - 0.35f * d * d;
                const float noise =
                    0.92f + 0.16f * hash01(cfg.seed, static_cast<std::uint64_t>(py) * size + px);
                const float f = tone * shade * noise;
                put(out.image, px, py, clamp_u8(sl.base[0] * f), clamp_u8(sl.base[1] * f),
                    clamp_u8(sl.base[2] * f));
                out.mask[static_cast<std::size_t>(py) * size + px] = 1;
                break;
            }
        }
    }

    // Spots: dark ellipses confined to the fruit mask, grown until the
    // covered fraction reaches the sublevel's density target.
    if (sl.spot_density > 0.0f) {
        std::vector<std::uint32_t> mask_px;
        for (std::uint32_t i = 0; i < out.mask.size(); ++i)
            if (out.mask[i]) mask_px.push_back(i);
        if (!mask_px.empty()) {
            Rng spot_rng(Rng::fork(cfg.seed, 7));
            const auto target = static_cast<std::size_t>(
                std::llround(static_cast<double>(sl.spot_density) * mask_px.size()));
            std::vector<std::uint8_t> spotted(out.mask.size(), 0);
            std::size_t covered = 0;
            // Radii follow the fruit area, not the frame, so coverage grows in
            // steps well below the density gaps between sublevels.
            const float unit = std::sqrt(static_cast<float>(mask_px.size()));
            for (int attempt = 0; covered < target && attempt < 20000; ++attempt) {
                const std::uint32_t at =
                    mask_px[spot_rng.next_range(0, mask_px.size() - 1)];
                const int scx = static_cast<int>(at % size);
                const int scy = static_cast<int>(at / size);
                const float rx = std::max(0.8f, spot_rng.next_float(0.05f, 0.11f) * unit);
                const float ry = std::max(0.8f, spot_rng.next_float(0.05f, 0.11f) * unit);
                const float ang = spot_rng.next_float(0.0f, kPi);
                const float dark = 0.40f + spot_rng.next_float(0.0f, 0.10f);
                const float ca = std::cos(ang), sa = std::sin(ang);
                const int bx = static_cast<int>(std::ceil(std::max(rx, ry)));
                for (int oy = -bx; oy <= bx; ++oy) {
                    const int y = scy + oy;
                    if (y < 0 || y >= static_cast<int>(size)) continue;
                    for (int ox = -bx; ox <= bx; ++ox) {
                        const int x = scx + ox;
                        if (x < 0 || x >= static_cast<int>(size)) continue;
                        const float ex = (ca * ox + sa * oy) / rx;
                        const float ey = (-sa * ox + ca * oy) / ry;
                        if (ex * ex + ey * ey > 1.0f) continue;
                        const std::size_t idx =
                            static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x);
                        if (!out.mask[idx] || spotted[idx]) continue;
                        const auto xu = static_cast<std::uint32_t>(x);
                        const auto yu = static_cast<std::uint32_t>(y);
                        put(out.image, xu, yu, clamp_u8(out.image.at(xu, yu, 0) * dark),
                            clamp_u8(out.image.at(xu, yu, 1) * dark),
                            clamp_u8(out.image.at(xu, yu, 2) * dark));
                        spotted[idx] = 1;
                        ++covered;
                    }
                }
            }
        }
    }
    return out;
}

SceneConfig scene_for_index(char level, int index_in_level, std::uint64_t seed,
                            std::uint64_t global_index) {
    if (level < 'A' || level > 'D') throw ConfigError("level must be A..D");
    if (index_in_level < 0) throw ConfigError("image index must be non-negative");
    const int i = index_in_level;
    SceneConfig cfg;
    cfg.sublevel = (level - 'A') * 2 + (i % 2);
    cfg.background = static_cast<Background>((i / 2) % kBackgroundCount);
    cfg.banana_count = (i / 16) % 4 + 1;
    cfg.rail = (i / 64) % 3 + 1;
    cfg.position = (i / 192) % 30 + 1;
    cfg.seed = Rng::fork(seed, global_index);
    return cfg;
}

std::string generate_dataset(int per_level, const std::filesystem::path& out_dir,
                             std::uint64_t seed, std::uint32_t size,
                             const std::string& format, bool real_like) {
    if (per_level < 1 || per_level % 2 != 0)
        throw ConfigError("per-level count must be positive and even, got " +
                          std::to_string(per_level));
    if (format != "png" && format != "ppm")
        throw ConfigError("output format must be png or ppm, got '" + format + "'");

    std::string manifest;
    std::error_code ec;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const char level = static_cast<char>('A' + lvl);
        const std::filesystem::path dir = out_dir / (std::string("level_") + level);
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        for (int i = 0; i < per_level; ++i) {
            const auto gidx = static_cast<std::uint64_t>(lvl) * per_level +
                              static_cast<std::uint64_t>(i);
            const SceneConfig cfg = scene_for_index(level, i, seed, gidx);
            RenderResult r = render_scene(cfg, size);
            if (real_like) {
                Rng prng(Rng::fork(seed ^ 0xA5A5A5A5DEADBEEFull, gidx));
                r.image = perturb_real_like(r.image, prng);
            }
            char name[32];
            std::snprintf(name, sizeof(name), "%06d.%s", i, format.c_str());
            const std::filesystem::path file = dir / name;
            write_image(file, r.image);
            manifest += std::string("level_") + level + "/" + name + " " + describe(cfg) +
                        (real_like ? " real-like" : "") + "\n";
        }
    }
    const std::filesystem::path mpath = out_dir / "manifest.txt";
    std::ofstream mf(mpath, std::ios::binary);
    if (!mf || !(mf << manifest) || (mf.close(), false) || mf.fail())
        throw IoError("cannot write " + mpath.string());
    return manifest;
}

Dataset synth_dataset(int per_level, std::uint64_t seed, std::uint32_t size) {
    if (per_level < 1 || per_level % 2 != 0)
        throw ConfigError("per-level count must be positive and even, got " +
                          std::to_string(per_level));
    Dataset ds;
    ds.samples.reserve(static_cast<std::size_t>(per_level) * 4);
    for (int lvl = 0; lvl < 4; ++lvl) {
        const char level = static_cast<char>('A' + lvl);
        for (int i = 0; i < per_level; ++i) {
            const auto gidx = static_cast<std::uint64_t>(lvl) * per_level +
                              static_cast<std::uint64_t>(i);
            const SceneConfig cfg = scene_for_index(level, i, seed, gidx);
            RenderResult r = render_scene(cfg, size);
            Sample s;
            s.image = std::move(r.image);
            s.label = r.label;
            s.origin = "synth:" + describe(cfg);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

Dataset real_like_dataset(int per_level, std::uint64_t seed, std::uint32_t size) {
    Dataset ds = synth_dataset(per_level, seed, size);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        Rng rng(Rng::fork(seed ^ 0xA5A5A5A5DEADBEEFull, i));
        ds.samples[i].image = perturb_real_like(ds.samples[i].image, rng);
        ds.samples[i].origin = "real-like:" + ds.samples[i].origin;
    }
    return ds;
}

ImageU8 perturb_real_like(const ImageU8& img, Rng& rng) {
    if (img.channels != 3) throw ShapeError("real-like perturbation expects RGB input");
    const auto w = img.width, h = img.height;

    // Luminance-domain camera/scene jitter. Color ratios carry the ripeness
    // signal, so every factor here hits all three channels equally.
    const float contrast = rng.next_float(0.78f, 1.25f);
    const float bright = rng.next_float(-30.0f, 30.0f);
    // lighting shift: a linear shading plane across the frame
    const float gdir = rng.next_float(0.0f, 6.2831853f);
    const float gamp = rng.next_float(10.0f, 30.0f);
    const float gx = std::cos(gdir), gy = std::sin(gdir);
    // mild white-balance wobble; small enough to keep hue ordering intact
    const float gain[3] = {rng.next_float(0.97f, 1.03f), rng.next_float(0.97f, 1.03f),
                           rng.next_float(0.97f, 1.03f)};
    const float amp = rng.next_float(14.0f, 34.0f);
    const bool soften = rng.next_float() < 0.5f;

    // texture jitter: soft elliptical blotches that dim or brighten locally
    struct Blotch {
        float cx, cy, rx, ry, delta;
    };
    const int nblotch = static_cast<int>(rng.next_range(3, 8));
    std::vector<Blotch> blotches(nblotch);
    for (auto& b : blotches) {
        b.cx = rng.next_float(0.0f, static_cast<float>(w));
        b.cy = rng.next_float(0.0f, static_cast<float>(h));
        b.rx = rng.next_float(0.10f, 0.30f) * static_cast<float>(w);
        b.ry = rng.next_float(0.10f, 0.30f) * static_cast<float>(h);
        b.delta = rng.next_float(12.0f, 26.0f) * (rng.next_float() < 0.5f ? -1.0f : 1.0f);
    }

    ImageU8 base = img;
    if (soften) {  // 3x3 box blur, clamped borders: renders are crisper than photos
        base = ImageU8::make(w, h, 3);
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x)
                for (std::uint32_t c = 0; c < 3; ++c) {
                    int acc = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const auto sx = std::clamp<int>(static_cast<int>(x) + dx, 0,
                                                            static_cast<int>(w) - 1);
                            const auto sy = std::clamp<int>(static_cast<int>(y) + dy, 0,
                                                            static_cast<int>(h) - 1);
                            acc += img.pixels[img.idx(sx, sy, c)];
                        }
                    base.pixels[base.idx(x, y, c)] = static_cast<std::uint8_t>(acc / 9);
                }
    }

    ImageU8 out = ImageU8::make(w, h, 3);
    const float inv_w = 1.0f / static_cast<float>(w), inv_h = 1.0f / static_cast<float>(h);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const float u = (static_cast<float>(x) + 0.5f) * inv_w - 0.5f;
            const float v2 = (static_cast<float>(y) + 0.5f) * inv_h - 0.5f;
            float shade = bright + 2.0f * gamp * (gx * u + gy * v2);
            for (const auto& b : blotches) {
                const float dx = (static_cast<float>(x) - b.cx) / b.rx;
                const float dy = (static_cast<float>(y) - b.cy) / b.ry;
                const float d2 = dx * dx + dy * dy;
                if (d2 < 1.0f) shade += b.delta * (1.0f - d2);
            }
            const float speckle = 1.0f + rng.next_float(-0.12f, 0.12f);
            for (std::uint32_t c = 0; c < 3; ++c) {
                float v = static_cast<float>(base.pixels[base.idx(x, y, c)]);
                v = ((v - 128.0f) * contrast + 128.0f + shade) * speckle * gain[c];
                v += rng.next_float(-amp, amp);
                out.pixels[out.idx(x, y, c)] = clamp_u8(v);
            }
        }
    return out;
}

}  // namespace cidis
