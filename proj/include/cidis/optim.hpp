#pragma once

#include <map>
#include <set>
#include <span>
#include <string>

#include "cidis/layers.hpp"
#include "cidis/tensor.hpp"

namespace cidis {

enum class OptimKind { sgd, adagrad, adam, nadam };

std::string to_string(OptimKind k);
OptimKind optim_kind_from_string(const std::string& s);

// Single-tensor update rules. Accumulators are lazily initialized to zeros on
// first use; `t` is the step counter already advanced to the current step
// (t >= 1) for the bias corrections.

void step_sgd(Tensor& param, const Tensor& grad, float lr);

/// G += grad^2; param -= lr * grad / (sqrt(G) + eps), element-wise.
void step_adagrad(Tensor& param, const Tensor& grad, Tensor& g_acc, float lr, float eps);

void step_adam(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
               float lr, float beta1, float beta2, float eps);

/// Adam moments plus a Nesterov-style lookahead numerator
/// beta1*m_hat + (1-beta1)*grad, which coincides with Adam's m_hat on the
/// first step from zero state.
void step_nadam(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
                float lr, float beta1, float beta2, float eps);

/// Per-parameter persistent state keyed by parameter name. One apply() call
/// advances the shared step counter exactly once and updates every non-frozen
/// parameter under its rule; frozen parameters are left bit-identical.
class Optimizer {
public:
    explicit Optimizer(OptimKind kind, float lr = -1.0f, float eps = 1e-8f,
                       float beta1 = 0.9f, float beta2 = 0.999f);

    static float default_lr(OptimKind kind);

    void apply(std::span<const Layer::ParamRef> params, const std::set<std::string>& frozen);

    OptimKind kind() const { return kind_; }
    float lr() const { return lr_; }
    long long step_count() const { return t_; }

private:
    struct Slot {
        Tensor g_acc;  // adagrad
        Tensor m, v;   // adam/nadam
    };

    OptimKind kind_;
    float lr_, eps_, beta1_, beta2_;
    long long t_ = 0;
    std::map<std::string, Slot> slots_;
};

}  // namespace cidis
