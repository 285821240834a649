#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cidis/data.hpp"
#include "cidis/model.hpp"
#include "cidis/optim.hpp"

namespace cidis {

struct TrainConfig {
    OptimKind optimizer = OptimKind::adam;
    float lr = -1.0f;  // negative -> optimizer default
    int dropout_layers = 1;
    float dropout_rate = 0.2f;
    int batch_size = 50;
    int epochs = 10;
    std::uint64_t seed = 0;
    std::string stage = "cnn1";  // cnn1 | cnn2 | scratch-real
    std::string id;              // grid cell name; defaults to the stage
};

void validate(const TrainConfig& cfg);  // throws ConfigError

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0, train_acc = 0;
    double val_loss = 0, val_acc = 0;
    double seconds = 0;
};

struct RunLog {
    std::vector<EpochStats> epochs;
    std::string checkpoint_path;

    /// "epoch,train_loss,train_acc,val_loss,val_acc,seconds" rows.
    std::string to_csv() const;
};

/// Mean cross-entropy and exact-match accuracy of the net on one subset,
/// eval-mode, batched.
struct SubsetMetrics {
    double loss = 0, accuracy = 0;
};
SubsetMetrics eval_subset(Network& net, const Dataset& ds, Split subset, int batch_size);

/// config.epochs of seeded mini-batch optimization on the train split with
/// epoch-end metrics on both splits, honoring frozen parameters (layers in
/// front of the first trainable one run through a per-sample feature cache).
/// Saves the final checkpoint to checkpoint_path. Non-finite batch loss
/// aborts with a divergence error naming the epoch and batch.
RunLog train(Network& net, const Dataset& ds, const TrainConfig& cfg,
             const std::filesystem::path& checkpoint_path);

struct TwoStageResult {
    std::filesystem::path ckpt1, ckpt2;
    RunLog log1, log2;
};

/// Stage 1 trains a fresh net on the synthetic set; stage 2 freezes its conv
/// stack via prepare_transfer and fine-tunes the rebuilt head on the real
/// set. Conv payloads of the two checkpoints stay bit-identical.
TwoStageResult run_stage1_stage2(const Dataset& synth_ds, const Dataset& real_ds,
                                 const TrainConfig& cfg1, const TrainConfig& cfg2,
                                 const BuildOptions& opts,
                                 const std::filesystem::path& out_dir);

}  // namespace cidis
