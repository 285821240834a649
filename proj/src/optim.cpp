#include "cidis/optim.hpp"

#include <cmath>

namespace cidis {

std::string to_string(OptimKind k) {
    switch (k) {
        case OptimKind::sgd: return "sgd";
        case OptimKind::adagrad: return "adagrad";
        case OptimKind::adam: return "adam";
        case OptimKind::nadam: return "nadam";
    }
    return "?";
}

OptimKind optim_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimKind::sgd;
    if (s == "adagrad") return OptimKind::adagrad;
    if (s == "adam") return OptimKind::adam;
    if (s == "nadam") return OptimKind::nadam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

namespace {

void check_shapes(const Tensor& param, const Tensor& grad) {
    if (!param.same_shape(grad)) throw ShapeError("optimizer: param/grad shape mismatch");
}

void ensure_slot(Tensor& slot, const Tensor& param) {
    if (slot.size() == 0) slot = Tensor::zeros(param.shape());
    if (!slot.same_shape(param)) throw ShapeError("optimizer: accumulator shape mismatch");
}

}  // namespace

void step_sgd(Tensor& param, const Tensor& grad, float lr) {
    check_shapes(param, grad);
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

void step_adagrad(Tensor& param, const Tensor& grad, Tensor& g_acc, float lr, float eps) {
    check_shapes(param, grad);
    ensure_slot(g_acc, param);
    for (std::size_t i = 0; i < param.size(); ++i) {
        g_acc[i] += grad[i] * grad[i];
        param[i] -= lr * grad[i] / (std::sqrt(g_acc[i]) + eps);
    }
}

void step_adam(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
               float lr, float beta1, float beta2, float eps) {
    check_shapes(param, grad);
    ensure_slot(m, param);
    ensure_slot(v, param);
    const float bc1 = 1.0f - static_cast<float>(std::pow(beta1, t));
    const float bc2 = 1.0f - static_cast<float>(std::pow(beta2, t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
        float m_hat = m[i] / bc1;
        float v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

void step_nadam(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
                float lr, float beta1, float beta2, float eps) {
    check_shapes(param, grad);
    ensure_slot(m, param);
    ensure_slot(v, param);
    const float bc1 = 1.0f - static_cast<float>(std::pow(beta1, t));
    const float bc2 = 1.0f - static_cast<float>(std::pow(beta2, t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
        float m_hat = m[i] / bc1;
        float v_hat = v[i] / bc2;
        float lookahead = beta1 * m_hat + (1.0f - beta1) * grad[i];
        param[i] -= lr * lookahead / (std::sqrt(v_hat) + eps);
    }
}

Optimizer::Optimizer(OptimKind kind, float lr, float eps, float beta1, float beta2)
    : kind_(kind), lr_(lr > 0.0f ? lr : default_lr(kind)), eps_(eps), beta1_(beta1),
      beta2_(beta2) {
    if (lr_ <= 0.0f) throw RangeError("learning rate must be positive");
    if (beta1_ < 0.0f || beta1_ >= 1.0f || beta2_ < 0.0f || beta2_ >= 1.0f) {
        throw RangeError("betas must be in [0,1)");
    }
}

float Optimizer::default_lr(OptimKind kind) {
    switch (kind) {
        case OptimKind::sgd: return 0.1f;
        case OptimKind::adagrad: return 0.1f;
        case OptimKind::adam: return 0.001f;
        case OptimKind::nadam: return 0.001f;
    }
    return 0.001f;
}

void Optimizer::apply(std::span<const Layer::ParamRef> params,
                      const std::set<std::string>& frozen) {
    ++t_;
    for (const Layer::ParamRef& p : params) {
        if (frozen.contains(p.name)) continue;
        if (!p.grad || p.grad->size() == 0) {
            throw ContractError("missing gradient for non-frozen parameter '" + p.name + "'");
        }
        Slot& slot = slots_[p.name];
        switch (kind_) {
            case OptimKind::sgd:
                step_sgd(*p.value, *p.grad, lr_);
                break;
            case OptimKind::adagrad:
                step_adagrad(*p.value, *p.grad, slot.g_acc, lr_, eps_);
                break;
            case OptimKind::adam:
                step_adam(*p.value, *p.grad, slot.m, slot.v, t_, lr_, beta1_, beta2_, eps_);
                break;
            case OptimKind::nadam:
                step_nadam(*p.value, *p.grad, slot.m, slot.v, t_, lr_, beta1_, beta2_, eps_);
                break;
        }
    }
}

}  // namespace cidis
