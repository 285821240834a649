#pragma once

// 64-bit re-execution of a Network's forward pass for gradient checking.
// Dropout masks captured from a production train-mode forward are replayed
// verbatim, so the replica is a deterministic function of the weights.

#include <span>
#include <vector>

#include "cidis/model.hpp"
#include "oracle.hpp"

namespace oracle {

/// Masks of every dropout layer, in layer order, from the most recent
/// train-mode forward. Empty tensors for layers that have not run.
std::vector<cidis::Tensor> capture_dropout_masks(const cidis::Network& net);

/// Mean cross-entropy of the network on (x, labels), computed with the naive
/// 64-bit oracles, reading parameters live from the network.
double replica_loss(const cidis::Network& net, const cidis::Tensor& x,
                    std::span<const int> labels, const std::vector<cidis::Tensor>& masks);

}  // namespace oracle
