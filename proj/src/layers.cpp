#include "cidis/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include <Eigen/Core>

namespace cidis {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::uint32_t conv_out_extent(std::uint32_t in, std::uint32_t k, int stride, int padding) {
    std::int64_t span = static_cast<std::int64_t>(in) + 2 * padding - k;
    if (span < 0 || stride < 1) throw ShapeError("conv: kernel larger than padded input");
    return static_cast<std::uint32_t>(span / stride + 1);
}

std::uint32_t pool_out_extent(std::uint32_t in, int window, int stride) {
    std::int64_t span = static_cast<std::int64_t>(in) - window;
    if (span < 0 || stride < 1 || window < 1) {
        throw ShapeError("maxpool: window larger than input");
    }
    return static_cast<std::uint32_t>(span / stride + 1);
}

namespace {

// Patches of one image [ci,h,w] laid out as a [ci*kh*kw, oh*ow] matrix.
void im2col(const float* img, std::uint32_t ci, std::uint32_t h, std::uint32_t w,
            std::uint32_t kh, std::uint32_t kw, int stride, int pad, std::uint32_t oh,
            std::uint32_t ow, float* cols) {
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    for (std::uint32_t c = 0; c < ci; ++c) {
        const float* plane = img + static_cast<std::size_t>(c) * h * w;
        for (std::uint32_t ki = 0; ki < kh; ++ki) {
            for (std::uint32_t kj = 0; kj < kw; ++kj) {
                float* row = cols + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * ohw;
                for (std::uint32_t oy = 0; oy < oh; ++oy) {
                    std::int64_t iy = static_cast<std::int64_t>(oy) * stride - pad + ki;
                    float* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst, 0, ow * sizeof(float));
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * w;
                    for (std::uint32_t ox = 0; ox < ow; ++ox) {
                        std::int64_t ix = static_cast<std::int64_t>(ox) * stride - pad + kj;
                        dst[ox] = (ix < 0 || ix >= w) ? 0.0f : src[ix];
                    }
                }
            }
        }
    }
}

// Scatter-add of a [ci*kh*kw, oh*ow] gradient back onto one image.
void col2im_add(const float* cols, std::uint32_t ci, std::uint32_t h, std::uint32_t w,
                std::uint32_t kh, std::uint32_t kw, int stride, int pad, std::uint32_t oh,
                std::uint32_t ow, float* img) {
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    for (std::uint32_t c = 0; c < ci; ++c) {
        float* plane = img + static_cast<std::size_t>(c) * h * w;
        for (std::uint32_t ki = 0; ki < kh; ++ki) {
            for (std::uint32_t kj = 0; kj < kw; ++kj) {
                const float* row =
                    cols + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * ohw;
                for (std::uint32_t oy = 0; oy < oh; ++oy) {
                    std::int64_t iy = static_cast<std::int64_t>(oy) * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = plane + static_cast<std::size_t>(iy) * w;
                    const float* src = row + static_cast<std::size_t>(oy) * ow;
                    for (std::uint32_t ox = 0; ox < ow; ++ox) {
                        std::int64_t ix = static_cast<std::int64_t>(ox) * stride - pad + kj;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

Tensor glorot_uniform(std::span<const std::uint32_t> shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    return uniform_init(shape, -limit, limit, rng);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                      int padding, ConvCache* cache) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be [b,ci,h,w]");
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [co,ci,kh,kw]");
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
        throw ShapeError("conv2d: bias must be [out_channels]");
    }
    if (x.dim(1) != kernel.dim(1)) {
        throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels, kernel expects " + std::to_string(kernel.dim(1)));
    }
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");

    const std::uint32_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::uint32_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::uint32_t oh = conv_out_extent(h, kh, stride, padding);
    const std::uint32_t ow = conv_out_extent(w, kw, stride, padding);
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    const std::size_t krows = static_cast<std::size_t>(ci) * kh * kw;

    Tensor out = Tensor::zeros({b, co, oh, ow});
    std::vector<float> cols(krows * ohw);
    MapConstMat kmat(kernel.data(), co, static_cast<Eigen::Index>(krows));
    for (std::uint32_t i = 0; i < b; ++i) {
        im2col(x.data() + x.idx4(i, 0, 0, 0), ci, h, w, kh, kw, stride, padding, oh, ow,
               cols.data());
        MapConstMat cmat(cols.data(), static_cast<Eigen::Index>(krows),
                         static_cast<Eigen::Index>(ohw));
        MapMat omat(out.data() + out.idx4(i, 0, 0, 0), co, static_cast<Eigen::Index>(ohw));
        omat.noalias() = kmat * cmat;
        for (std::uint32_t o = 0; o < co; ++o) omat.row(o).array() += bias[o];
    }
    if (cache) {
        cache->input = x;
        cache->stride = stride;
        cache->padding = padding;
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache,
                          const Tensor& kernel) {
    if (cache.input.rank() != 4) {
        throw ContractError("conv2d_backward: cache missing or stale");
    }
    const Tensor& x = cache.input;
    const int stride = cache.stride, padding = cache.padding;
    const std::uint32_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::uint32_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::uint32_t oh = conv_out_extent(h, kh, stride, padding);
    const std::uint32_t ow = conv_out_extent(w, kw, stride, padding);
    if (grad_out.rank() != 4 || grad_out.dim(0) != b || grad_out.dim(1) != co ||
        grad_out.dim(2) != oh || grad_out.dim(3) != ow) {
        throw ShapeError("conv2d_backward: grad_out shape mismatch");
    }
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    const std::size_t krows = static_cast<std::size_t>(ci) * kh * kw;

    ConvGrads g;
    g.grad_x = Tensor::zeros({b, ci, h, w});
    g.grad_kernel = Tensor::zeros({co, ci, kh, kw});
    g.grad_bias = Tensor::zeros({co});

    std::vector<float> cols(krows * ohw);
    std::vector<float> gcols(krows * ohw);
    MapConstMat kmat(kernel.data(), co, static_cast<Eigen::Index>(krows));
    MapMat gkmat(g.grad_kernel.data(), co, static_cast<Eigen::Index>(krows));
    for (std::uint32_t i = 0; i < b; ++i) {
        MapConstMat gout(grad_out.data() + grad_out.idx4(i, 0, 0, 0), co,
                         static_cast<Eigen::Index>(ohw));
        im2col(x.data() + x.idx4(i, 0, 0, 0), ci, h, w, kh, kw, stride, padding, oh, ow,
               cols.data());
        MapConstMat cmat(cols.data(), static_cast<Eigen::Index>(krows),
                         static_cast<Eigen::Index>(ohw));
        gkmat.noalias() += gout * cmat.transpose();
        MapMat gcmat(gcols.data(), static_cast<Eigen::Index>(krows),
                     static_cast<Eigen::Index>(ohw));
        gcmat.noalias() = kmat.transpose() * gout;
        col2im_add(gcols.data(), ci, h, w, kh, kw, stride, padding, oh, ow,
                   g.grad_x.data() + g.grad_x.idx4(i, 0, 0, 0));
        for (std::uint32_t o = 0; o < co; ++o) g.grad_bias[o] += gout.row(o).sum();
    }
    return g;
}

Tensor relu_forward(const Tensor& x, Tensor* cache_input) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] < 0.0f) out[i] = 0.0f;
    }
    if (cache_input) *cache_input = x;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    if (input.size() == 0) throw ContractError("relu_backward: cache missing");
    if (!grad_out.same_shape(input)) throw ShapeError("relu_backward: shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (input[i] <= 0.0f) g[i] = 0.0f;
    }
    return g;
}

Tensor maxpool2d_forward(const Tensor& x, int window, int stride, PoolCache* cache) {
    if (x.rank() != 4) throw ShapeError("maxpool2d: input must be [b,c,h,w]");
    const std::uint32_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::uint32_t oh = pool_out_extent(h, window, stride);
    const std::uint32_t ow = pool_out_extent(w, window, stride);

    Tensor out = Tensor::zeros({b, c, oh, ow});
    if (cache) {
        cache->argmax.assign(out.size(), 0);
        cache->in_shape = x.shape();
    }
    std::size_t oidx = 0;
    for (std::uint32_t i = 0; i < b; ++i) {
        for (std::uint32_t ch = 0; ch < c; ++ch) {
            for (std::uint32_t oy = 0; oy < oh; ++oy) {
                for (std::uint32_t ox = 0; ox < ow; ++ox, ++oidx) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::size_t best_idx = 0;
                    for (int ky = 0; ky < window; ++ky) {
                        for (int kx = 0; kx < window; ++kx) {
                            std::size_t idx =
                                x.idx4(i, ch, oy * stride + ky, ox * stride + kx);
                            // first occurrence wins ties
                            if (x[idx] > best) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[oidx] = best;
                    if (cache) cache->argmax[oidx] = static_cast<std::uint32_t>(best_idx);
                }
            }
        }
    }
    return out;
}

Tensor maxpool2d_backward(const Tensor& grad_out, const PoolCache& cache) {
    if (cache.in_shape.empty()) throw ContractError("maxpool2d_backward: cache missing");
    if (grad_out.size() != cache.argmax.size()) {
        throw ShapeError("maxpool2d_backward: grad_out does not match cache");
    }
    Tensor g = Tensor::zeros(cache.in_shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        g[cache.argmax[i]] += grad_out[i];
    }
    return g;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     Tensor* cache_input) {
    if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) {
        throw ShapeError("dense: x [b,in], weight [out,in], bias [out]");
    }
    if (x.dim(1) != weight.dim(1) || weight.dim(0) != bias.dim(0)) {
        throw ShapeError("dense: dimension mismatch (in=" + std::to_string(x.dim(1)) +
                         ", weight in=" + std::to_string(weight.dim(1)) + ")");
    }
    const std::uint32_t b = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
    Tensor out = Tensor::zeros({b, out_dim});
    MapConstMat xm(x.data(), b, in);
    MapConstMat wm(weight.data(), out_dim, in);
    MapMat om(out.data(), b, out_dim);
    om.noalias() = xm * wm.transpose();
    for (std::uint32_t r = 0; r < b; ++r) {
        for (std::uint32_t c = 0; c < out_dim; ++c) om(r, c) += bias[c];
    }
    if (cache_input) *cache_input = x;
    return out;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight) {
    if (input.rank() != 2) throw ContractError("dense_backward: cache missing");
    const std::uint32_t b = input.dim(0), in = input.dim(1), out_dim = weight.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != b || grad_out.dim(1) != out_dim) {
        throw ShapeError("dense_backward: grad_out shape mismatch");
    }
    DenseGrads g;
    g.grad_x = Tensor::zeros({b, in});
    g.grad_weight = Tensor::zeros({out_dim, in});
    g.grad_bias = Tensor::zeros({out_dim});
    MapConstMat go(grad_out.data(), b, out_dim);
    MapConstMat xm(input.data(), b, in);
    MapConstMat wm(weight.data(), out_dim, in);
    MapMat gx(g.grad_x.data(), b, in);
    MapMat gw(g.grad_weight.data(), out_dim, in);
    gx.noalias() = go * wm;
    gw.noalias() = go.transpose() * xm;
    for (std::uint32_t c = 0; c < out_dim; ++c) g.grad_bias[c] = go.col(c).sum();
    return g;
}

Tensor dropout_forward(const Tensor& x, float p, Mode mode, Rng& rng, Tensor* cache_mask) {
    if (p < 0.0f || p >= 1.0f) throw RangeError("dropout rate must be in [0,1)");
    if (mode == Mode::eval) {
        if (cache_mask) {
            *cache_mask = Tensor::zeros(x.shape());
            cache_mask->fill(1.0f);
        }
        return x;
    }
    const float keep_scale = 1.0f / (1.0f - p);
    Tensor mask = Tensor::zeros(x.shape());
    Tensor out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        float m = rng.next_float() < p ? 0.0f : keep_scale;
        mask[i] = m;
        out[i] *= m;
    }
    if (cache_mask) *cache_mask = std::move(mask);
    return out;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
    if (mask.size() == 0) throw ContractError("dropout_backward: cache missing");
    if (!grad_out.same_shape(mask)) throw ShapeError("dropout_backward: shape mismatch");
    return mul(grad_out, mask);
}

SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_xent: logits must be [b,C]");
    const std::uint32_t b = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != b) throw ShapeError("softmax_xent: one label per row required");
    for (int lbl : labels) {
        if (lbl < 0 || static_cast<std::uint32_t>(lbl) >= classes) {
            throw LabelError("label " + std::to_string(lbl) + " outside [0," +
                             std::to_string(classes) + ")");
        }
    }
    SoftmaxXentResult r;
    r.probs = Tensor::zeros(logits.shape());
    r.grad_logits = Tensor::zeros(logits.shape());
    double loss_sum = 0.0;
    for (std::uint32_t i = 0; i < b; ++i) {
        float mx = logits.at2(i, 0);
        for (std::uint32_t c = 1; c < classes; ++c) mx = std::max(mx, logits.at2(i, c));
        double denom = 0.0;
        for (std::uint32_t c = 0; c < classes; ++c) {
            denom += std::exp(static_cast<double>(logits.at2(i, c)) - mx);
        }
        for (std::uint32_t c = 0; c < classes; ++c) {
            double p = std::exp(static_cast<double>(logits.at2(i, c)) - mx) / denom;
            r.probs[r.probs.idx2(i, c)] = static_cast<float>(p);
        }
        double p_true = r.probs.at2(i, static_cast<std::uint32_t>(labels[i]));
        loss_sum += -std::log(std::max(p_true, 1e-38));
        for (std::uint32_t c = 0; c < classes; ++c) {
            float one_hot = (static_cast<std::uint32_t>(labels[i]) == c) ? 1.0f : 0.0f;
            r.grad_logits[r.grad_logits.idx2(i, c)] =
                (r.probs.at2(i, c) - one_hot) / static_cast<float>(b);
        }
    }
    r.loss = loss_sum / b;
    return r;
}

// ---------------------------------------------------------------------------

ConvLayer::ConvLayer(std::uint32_t in_ch, std::uint32_t out_ch, std::uint32_t kh,
                     std::uint32_t kw, int stride, int padding, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), stride_(stride), padding_(padding) {
    reinit(rng);
}

void ConvLayer::reinit(Rng& rng) {
    std::size_t fan_in = static_cast<std::size_t>(in_ch_) * kh_ * kw_;
    std::size_t fan_out = static_cast<std::size_t>(out_ch_) * kh_ * kw_;
    kernel = glorot_uniform(std::vector<std::uint32_t>{out_ch_, in_ch_, kh_, kw_}, fan_in,
                            fan_out, rng);
    bias = Tensor::zeros({out_ch_});
    grad_kernel = Tensor{};
    grad_bias = Tensor{};
}

Tensor ConvLayer::forward(const Tensor& x, Mode mode, Rng*) {
    return conv2d_forward(x, kernel, bias, stride_, padding_,
                          mode == Mode::train ? &cache_ : nullptr);
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
    ConvGrads g = conv2d_backward(grad_out, cache_, kernel);
    grad_kernel = std::move(g.grad_kernel);
    grad_bias = std::move(g.grad_bias);
    return std::move(g.grad_x);
}

std::vector<Layer::ParamRef> ConvLayer::params() {
    return {{name_ + ".kernel", &kernel, &grad_kernel}, {name_ + ".bias", &bias, &grad_bias}};
}

std::vector<std::uint32_t> ConvLayer::out_shape(const std::vector<std::uint32_t>& in) const {
    if (in.size() != 3 || in[0] != in_ch_) {
        throw ShapeError("conv2d layer expects [" + std::to_string(in_ch_) + ",h,w] input");
    }
    return {out_ch_, conv_out_extent(in[1], kh_, stride_, padding_),
            conv_out_extent(in[2], kw_, stride_, padding_)};
}

std::string ConvLayer::manifest_line() const {
    return "conv2d in=" + std::to_string(in_ch_) + " out=" + std::to_string(out_ch_) +
           " kh=" + std::to_string(kh_) + " kw=" + std::to_string(kw_) +
           " stride=" + std::to_string(stride_) + " pad=" + std::to_string(padding_);
}

Tensor ReluLayer::forward(const Tensor& x, Mode mode, Rng*) {
    return relu_forward(x, mode == Mode::train ? &input_ : nullptr);
}

Tensor ReluLayer::backward(const Tensor& grad_out) { return relu_backward(grad_out, input_); }

Tensor MaxPoolLayer::forward(const Tensor& x, Mode mode, Rng*) {
    return maxpool2d_forward(x, window_, stride_, mode == Mode::train ? &cache_ : nullptr);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
    return maxpool2d_backward(grad_out, cache_);
}

std::vector<std::uint32_t> MaxPoolLayer::out_shape(
    const std::vector<std::uint32_t>& in) const {
    if (in.size() != 3) throw ShapeError("maxpool2d layer expects [c,h,w] input");
    return {in[0], pool_out_extent(in[1], window_, stride_),
            pool_out_extent(in[2], window_, stride_)};
}

std::string MaxPoolLayer::manifest_line() const {
    return "maxpool2d window=" + std::to_string(window_) +
           " stride=" + std::to_string(stride_);
}

Tensor FlattenLayer::forward(const Tensor& x, Mode mode, Rng*) {
    if (x.rank() != 4) throw ShapeError("flatten expects [b,c,h,w]");
    if (mode == Mode::train) in_shape_ = x.shape();
    std::uint32_t features = x.dim(1) * x.dim(2) * x.dim(3);
    std::vector<float> data(x.data(), x.data() + x.size());
    return Tensor::from({x.dim(0), features}, std::move(data));
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    if (in_shape_.empty()) throw ContractError("flatten backward: cache missing");
    std::vector<float> data(grad_out.data(), grad_out.data() + grad_out.size());
    return Tensor::from(in_shape_, std::move(data));
}

std::vector<std::uint32_t> FlattenLayer::out_shape(
    const std::vector<std::uint32_t>& in) const {
    if (in.size() != 3) throw ShapeError("flatten expects [c,h,w] input");
    return {in[0] * in[1] * in[2]};
}

DenseLayer::DenseLayer(std::uint32_t in, std::uint32_t out, Rng& rng) : in_(in), out_(out) {
    reinit(rng);
}

void DenseLayer::reinit(Rng& rng) {
    weight = glorot_uniform(std::vector<std::uint32_t>{out_, in_}, in_, out_, rng);
    bias = Tensor::zeros({out_});
    grad_weight = Tensor{};
    grad_bias = Tensor{};
}

Tensor DenseLayer::forward(const Tensor& x, Mode mode, Rng*) {
    return dense_forward(x, weight, bias, mode == Mode::train ? &input_ : nullptr);
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
    DenseGrads g = dense_backward(grad_out, input_, weight);
    grad_weight = std::move(g.grad_weight);
    grad_bias = std::move(g.grad_bias);
    return std::move(g.grad_x);
}

std::vector<Layer::ParamRef> DenseLayer::params() {
    return {{name_ + ".weight", &weight, &grad_weight}, {name_ + ".bias", &bias, &grad_bias}};
}

std::vector<std::uint32_t> DenseLayer::out_shape(const std::vector<std::uint32_t>& in) const {
    if (in.size() != 1 || in[0] != in_) {
        throw ShapeError("dense layer expects [" + std::to_string(in_) + "] input");
    }
    return {out_};
}

std::string DenseLayer::manifest_line() const {
    return "dense in=" + std::to_string(in_) + " out=" + std::to_string(out_);
}

DropoutLayer::DropoutLayer(float p) : p_(p) {
    if (p < 0.0f || p >= 1.0f) throw RangeError("dropout rate must be in [0,1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, Rng* rng) {
    if (mode == Mode::eval) return x;
    if (!rng) throw ContractError("dropout in train mode needs an rng");
    return dropout_forward(x, p_, mode, *rng, &mask_);
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
    return dropout_backward(grad_out, mask_);
}

std::string DropoutLayer::manifest_line() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "dropout p=%.4g", static_cast<double>(p_));
    return buf;
}

}  // namespace cidis
