#include "cidis/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include <Eigen/Core>

namespace cidis {

namespace {

std::size_t checked_numel(std::span<const std::uint32_t> shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one extent");
    }
    std::size_t n = 1;
    for (std::uint32_t e : shape) {
        if (e == 0) {
            throw ShapeError("tensor extent must be >= 1");
        }
        if (n > (std::size_t{1} << 40) / e) {
            throw ShapeError("tensor too large");
        }
        n *= e;
    }
    return n;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

}  // namespace

Tensor Tensor::zeros(std::span<const std::uint32_t> shape) {
    Tensor t;
    std::size_t n = checked_numel(shape);
    t.shape_.assign(shape.begin(), shape.end());
    t.data_.assign(n, 0.0f);
    return t;
}

Tensor Tensor::from(std::span<const std::uint32_t> shape, std::vector<float> data) {
    std::size_t n = checked_numel(shape);
    if (n != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape product " + std::to_string(n));
    }
    Tensor t;
    t.shape_.assign(shape.begin(), shape.end());
    t.data_ = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(float v) {
    for (float& x : data_) x = v;
}

Tensor uniform_init(std::span<const std::uint32_t> shape, float lo, float hi, Rng& rng) {
    if (!(lo < hi)) {
        throw RangeError("uniform_init requires lo < hi");
    }
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.next_float(lo, hi);
    }
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mul: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: needs [m,k] x [k,n]");
    }
    Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
    using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> ma(a.data(), a.dim(0), a.dim(1));
    Eigen::Map<const Mat> mb(b.data(), b.dim(0), b.dim(1));
    Eigen::Map<Mat> mo(out.data(), out.dim(0), out.dim(1));
    mo.noalias() = ma * mb;
    return out;
}

std::vector<std::uint8_t> serialize(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * t.rank() + 4 * t.size());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::uint32_t e : t.shape()) put_u32(out, e);
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t bits;
        float v = t[i];
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    return out;
}

Tensor deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw CorruptDataError("tensor payload shorter than header");
    std::uint32_t rank = get_u32(bytes, 0);
    if (rank == 0 || rank > 8) throw CorruptDataError("tensor rank out of range");
    if (bytes.size() < 4 + 4 * static_cast<std::size_t>(rank)) {
        throw CorruptDataError("tensor payload truncated in shape header");
    }
    std::vector<std::uint32_t> shape(rank);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(bytes, 4 + 4 * i);
        if (shape[i] == 0) throw CorruptDataError("tensor extent 0 in payload");
        if (n > (std::size_t{1} << 40) / shape[i]) {
            throw CorruptDataError("tensor extents overflow");
        }
        n *= shape[i];
    }
    std::size_t expected = 4 + 4 * rank + 4 * n;
    if (bytes.size() != expected) {
        throw CorruptDataError("tensor payload length mismatch: have " +
                               std::to_string(bytes.size()) + ", want " +
                               std::to_string(expected));
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = get_u32(bytes, 4 + 4 * rank + 4 * i);
        std::memcpy(&data[i], &bits, 4);
    }
    return Tensor::from(shape, std::move(data));
}

}  // namespace cidis
