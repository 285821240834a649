#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cidis/tensor.hpp"

namespace cidis {

enum class Mode { train, eval };

std::uint32_t conv_out_extent(std::uint32_t in, std::uint32_t k, int stride, int padding);
std::uint32_t pool_out_extent(std::uint32_t in, int window, int stride);

// ---------------------------------------------------------------------------
// Functional forward/backward pairs. Each forward optionally fills a cache
// that the matching backward consumes; backward with an unfilled cache is a
// contract error.
// ---------------------------------------------------------------------------

struct ConvCache {
    Tensor input;
    int stride = 0;
    int padding = 0;
};

struct ConvGrads {
    Tensor grad_x;
    Tensor grad_kernel;
    Tensor grad_bias;
};

/// x [b,ci,h,w], kernel [co,ci,kh,kw], bias [co]. Cross-correlation plus bias;
/// out extents follow floor((in + 2*pad - k)/stride) + 1.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                      int padding, ConvCache* cache = nullptr);
ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache,
                          const Tensor& kernel);

Tensor relu_forward(const Tensor& x, Tensor* cache_input = nullptr);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

struct PoolCache {
    std::vector<std::uint32_t> argmax;  // flat input index per output element
    std::vector<std::uint32_t> in_shape;
};

Tensor maxpool2d_forward(const Tensor& x, int window, int stride, PoolCache* cache = nullptr);
/// Routes each output gradient to its argmax position (first occurrence on ties).
Tensor maxpool2d_backward(const Tensor& grad_out, const PoolCache& cache);

struct DenseGrads {
    Tensor grad_x;
    Tensor grad_weight;
    Tensor grad_bias;
};

/// x [b,in], weight [out,in], bias [out] -> [b,out]; y = x W^T + bias.
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     Tensor* cache_input = nullptr);
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight);

/// Inverted dropout: train mode zeroes each element with probability p and
/// scales survivors by 1/(1-p); eval mode is the identity and consumes no rng.
/// The cache mask stores the per-element multiplier (0 or 1/(1-p)).
Tensor dropout_forward(const Tensor& x, float p, Mode mode, Rng& rng,
                       Tensor* cache_mask = nullptr);
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

struct SoftmaxXentResult {
    double loss = 0.0;
    Tensor probs;
    Tensor grad_logits;
};

/// logits [b,C], labels in [0,C). Mean cross-entropy with max-subtraction;
/// grad_logits = (probs - one_hot)/b.
SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Layer objects used to compose the network. A layer owns its parameters,
// their gradient slots and the forward cache for the next backward call.
// ---------------------------------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;

    virtual const char* kind() const = 0;
    virtual Tensor forward(const Tensor& x, Mode mode, Rng* rng) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    struct ParamRef {
        std::string name;  // qualified, e.g. "conv1.kernel"
        Tensor* value;
        Tensor* grad;
    };
    virtual std::vector<ParamRef> params() { return {}; }

    /// Per-sample shape transform, e.g. [3,224,224] -> [32,224,224].
    virtual std::vector<std::uint32_t> out_shape(
        const std::vector<std::uint32_t>& in) const = 0;

    /// One line of the architecture manifest (hyperparameters included).
    virtual std::string manifest_line() const = 0;

    virtual void clear_cache() {}

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

protected:
    std::string name_;
};

class ConvLayer final : public Layer {
public:
    ConvLayer(std::uint32_t in_ch, std::uint32_t out_ch, std::uint32_t kh, std::uint32_t kw,
              int stride, int padding, Rng& rng);

    const char* kind() const override { return "conv2d"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override;
    std::string manifest_line() const override;
    void clear_cache() override { cache_ = ConvCache{}; }

    void reinit(Rng& rng);

    Tensor kernel;  // [out,in,kh,kw]
    Tensor bias;    // [out]
    Tensor grad_kernel;
    Tensor grad_bias;

private:
    std::uint32_t in_ch_, out_ch_, kh_, kw_;
    int stride_, padding_;
    ConvCache cache_;
};

class ReluLayer final : public Layer {
public:
    const char* kind() const override { return "relu"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override {
        return in;
    }
    std::string manifest_line() const override { return "relu"; }
    void clear_cache() override { input_ = Tensor{}; }

private:
    Tensor input_;
};

class MaxPoolLayer final : public Layer {
public:
    MaxPoolLayer(int window, int stride) : window_(window), stride_(stride) {}

    const char* kind() const override { return "maxpool2d"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override;
    std::string manifest_line() const override;
    void clear_cache() override { cache_ = PoolCache{}; }

private:
    int window_, stride_;
    PoolCache cache_;
};

class FlattenLayer final : public Layer {
public:
    const char* kind() const override { return "flatten"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override;
    std::string manifest_line() const override { return "flatten"; }
    void clear_cache() override { in_shape_.clear(); }

private:
    std::vector<std::uint32_t> in_shape_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(std::uint32_t in, std::uint32_t out, Rng& rng);

    const char* kind() const override { return "dense"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamRef> params() override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override;
    std::string manifest_line() const override;
    void clear_cache() override { input_ = Tensor{}; }

    void reinit(Rng& rng);

    Tensor weight;  // [out,in]
    Tensor bias;    // [out]
    Tensor grad_weight;
    Tensor grad_bias;

private:
    std::uint32_t in_, out_;
    Tensor input_;
};

class DropoutLayer final : public Layer {
public:
    explicit DropoutLayer(float p);

    const char* kind() const override { return "dropout"; }
    Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::uint32_t> out_shape(const std::vector<std::uint32_t>& in) const override {
        return in;
    }
    std::string manifest_line() const override;
    void clear_cache() override { mask_ = Tensor{}; }

    float rate() const { return p_; }
    /// Mask from the most recent train-mode forward (diagnostics/tests).
    const Tensor& last_mask() const { return mask_; }

private:
    float p_;
    Tensor mask_;
};

}  // namespace cidis
