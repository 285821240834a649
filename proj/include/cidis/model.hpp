#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cidis/layers.hpp"
#include "cidis/optim.hpp"
#include "cidis/tensor.hpp"

namespace cidis {

/// Geometry knobs for the CIDIS family. The canonical model is the default;
/// scaled-down variants keep the three (conv, conv, pool) blocks and the
/// dense head but shrink widths and input size.
struct BuildOptions {
    std::uint32_t input_size = 224;
    std::array<std::uint32_t, 3> block_widths = {32, 64, 128};
    std::uint32_t hidden = 50;
    int dropout_layers = 1;  // 1 or 2, each at dropout_rate
    float dropout_rate = 0.2f;
    std::uint32_t num_classes = 4;
};

struct TrainMeta {
    std::uint32_t epochs_seen = 0;
    std::string optimizer = "none";
    std::uint64_t seed = 0;
};

std::uint64_t fnv1a64(std::string_view s);

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    /// The canonical 224x224 model: three (conv,conv,pool) blocks at widths
    /// 32/64/128, a 50-unit hidden dense layer, dropout 0.2 and a 4-way head.
    static Network build_cidis(Rng& rng) { return build(BuildOptions{}, rng); }
    static Network build(const BuildOptions& opts, Rng& rng);
    /// Rebuild the architecture (not the weights) from manifest text.
    static Network from_manifest(const std::string& manifest);

    /// batch [b,3,S,S] with S the configured input size -> logits [b,classes].
    Tensor forward(const Tensor& batch, Mode mode, Rng* rng);
    /// Layers [lo, hi) only; used by the frozen-prefix fast path in training.
    Tensor forward_range(std::size_t lo, std::size_t hi, const Tensor& x, Mode mode,
                         Rng* rng);
    /// Backward from the top down to layer `down_to` inclusive; fills each
    /// layer's gradient slots and returns the gradient w.r.t. that layer's
    /// input.
    Tensor backward(const Tensor& grad_logits, std::size_t down_to = 0);

    std::vector<Layer::ParamRef> params();
    std::size_t param_count() const;
    /// Serialized weight payload in bytes (shape headers included).
    std::size_t payload_bytes() const;

    const std::set<std::string>& frozen() const { return frozen_; }
    void set_frozen(std::set<std::string> f) { frozen_ = std::move(f); }

    /// Number of leading layers whose parameters are all frozen and whose
    /// forward pass is deterministic (no dropout); their per-sample outputs
    /// can be cached across epochs.
    std::size_t frozen_prefix() const;

    /// Freeze every convolutional parameter and rebuild the dense head from
    /// fresh random weights with the requested dropout configuration.
    void prepare_transfer(Rng& rng, int dropout_layers, float dropout_rate = 0.2f);

    std::string manifest() const;
    std::uint64_t fingerprint() const { return fnv1a64(manifest()); }

    const BuildOptions& options() const { return opts_; }
    const std::array<std::uint32_t, 3>& input_shape() const { return input_shape_; }
    std::uint32_t num_classes() const { return opts_.num_classes; }
    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

    TrainMeta& meta() { return meta_; }
    const TrainMeta& meta() const { return meta_; }

private:
    void append(std::unique_ptr<Layer> layer);
    void validate_composition() const;

    std::vector<std::unique_ptr<Layer>> layers_;
    std::set<std::string> frozen_;
    std::array<std::uint32_t, 3> input_shape_ = {3, 224, 224};
    BuildOptions opts_;
    TrainMeta meta_;
};

/// Checkpoint file: 8-byte magic, u32 format version, u64 fingerprint of the
/// layer manifest, training metadata, the manifest text, then named weight
/// payloads in tensor binary format. Little-endian throughout.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);
/// Load weights from `path` into an existing network; the architectures must
/// fingerprint-match.
void load_checkpoint_into(Network& net, const std::filesystem::path& path);

}  // namespace cidis
