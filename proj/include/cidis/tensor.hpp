#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "cidis/error.hpp"

namespace cidis {

/// Deterministic 64-bit generator (SplitMix64). The algorithm is part of the
/// on-disk contract: datasets and weight initializations replay across
/// machines as long as the seed matches.
///
/// state' = state + 0x9E3779B97F4A7C15
/// out    = mix(state') with mix(z):
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform in [0,1) on the 2^-24 grid (exact in float).
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    float next_float(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::uint64_t next_range(std::uint64_t lo, std::uint64_t hi) {
        return lo + next_u64() % (hi - lo + 1);
    }

    /// Child seed for stream k. fork(k) == fork(k) and distinct k give
    /// independent-looking streams; used for per-image render rngs.
    static std::uint64_t fork(std::uint64_t seed, std::uint64_t k) {
        return mix(seed ^ mix(k * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL));
    }

    std::uint64_t state() const { return state_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

/// Dense row-major tensor of 32-bit floats. Layout convention project-wide is
/// [batch, channel, height, width] for image-like data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::span<const std::uint32_t> shape);
    static Tensor zeros(std::initializer_list<std::uint32_t> shape) {
        return zeros(std::span<const std::uint32_t>(shape.begin(), shape.size()));
    }
    static Tensor from(std::span<const std::uint32_t> shape, std::vector<float> data);
    static Tensor from(std::initializer_list<std::uint32_t> shape, std::vector<float> data) {
        return from(std::span<const std::uint32_t>(shape.begin(), shape.size()),
                    std::move(data));
    }

    const std::vector<std::uint32_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::uint32_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Index helpers for the two layouts the layer set uses.
    std::size_t idx4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
        return ((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    std::size_t idx2(std::size_t r, std::size_t c) const { return r * shape_[1] + c; }
    float at4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[idx4(b, c, h, w)];
    }
    float at2(std::size_t r, std::size_t c) const { return data_[idx2(r, c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    void fill(float v);

private:
    std::vector<std::uint32_t> shape_;
    std::vector<float> data_;
};

/// i.i.d. uniform in [lo, hi); consumes exactly product(shape) draws.
Tensor uniform_init(std::span<const std::uint32_t> shape, float lo, float hi, Rng& rng);
inline Tensor uniform_init(std::initializer_list<std::uint32_t> shape, float lo, float hi,
                           Rng& rng) {
    return uniform_init(std::span<const std::uint32_t>(shape.begin(), shape.size()), lo, hi,
                        rng);
}

// Element-wise helpers. Shapes must match exactly; no broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Binary encoding, little-endian throughout:
///   u32 extent count, extents as u32, then the float payload.
std::vector<std::uint8_t> serialize(const Tensor& t);
Tensor deserialize(std::span<const std::uint8_t> bytes);

}  // namespace cidis
