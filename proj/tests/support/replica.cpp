#include "replica.hpp"

#include <cstring>
#include <stdexcept>

namespace oracle {

std::vector<cidis::Tensor> capture_dropout_masks(const cidis::Network& net) {
    std::vector<cidis::Tensor> masks;
    for (const auto& l : net.layers()) {
        if (auto* d = dynamic_cast<const cidis::DropoutLayer*>(l.get())) {
            masks.push_back(d->last_mask());
        }
    }
    return masks;
}

double replica_loss(const cidis::Network& net, const cidis::Tensor& x,
                    std::span<const int> labels, const std::vector<cidis::Tensor>& masks) {
    Array cur = from_tensor(x);
    std::size_t mask_idx = 0;
    for (const auto& l : net.layers()) {
        const char* kind = l->kind();
        if (std::strcmp(kind, "conv2d") == 0) {
            auto* c = dynamic_cast<const cidis::ConvLayer*>(l.get());
            cur = conv2d(cur, from_tensor(c->kernel), from_tensor(c->bias), 1, 1);
        } else if (std::strcmp(kind, "relu") == 0) {
            cur = relu(cur);
        } else if (std::strcmp(kind, "maxpool2d") == 0) {
            cur = maxpool2d(cur, 2, 2);
        } else if (std::strcmp(kind, "flatten") == 0) {
            cur = flatten(cur);
        } else if (std::strcmp(kind, "dense") == 0) {
            auto* d = dynamic_cast<const cidis::DenseLayer*>(l.get());
            cur = dense(cur, from_tensor(d->weight), from_tensor(d->bias));
        } else if (std::strcmp(kind, "dropout") == 0) {
            if (mask_idx >= masks.size() || masks[mask_idx].size() == 0) {
                throw std::logic_error("replica: missing dropout mask");
            }
            cur = apply_mask(cur, from_tensor(masks[mask_idx++]));
        } else {
            throw std::logic_error(std::string("replica: unknown layer kind ") + kind);
        }
    }
    return softmax_xent(cur, labels).loss;
}

}  // namespace oracle
