#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cidis/model.hpp"
#include "cidis/train.hpp"

namespace cidis {

using KvBlock = std::map<std::string, std::string>;

/// One `key = value` per line, `#` comments, blank lines ignored.
KvBlock parse_kv(const std::string& text);
/// Blank-line-separated sequence of kv blocks (comments don't split blocks).
std::vector<KvBlock> parse_kv_blocks(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

/// Applies the block onto `base`. Recognized keys: id, stage, optimizer, lr,
/// dropout_layers, dropout_rate, batch_size, epochs, seed. Unknown keys that
/// belong to the build-options set are ignored here; anything else throws.
TrainConfig train_config_from(const KvBlock& block, TrainConfig base = {});

/// Build-options keys: input_size, block_widths (comma list), hidden,
/// dropout_layers, dropout_rate, num_classes.
BuildOptions build_options_from(const KvBlock& block, BuildOptions base = {});

struct GridSpec {
    TrainConfig stage1;      // block whose stage is cnn1
    bool has_stage1 = false;
    std::vector<TrainConfig> cells;  // stage-2 cells, distinct ids
};

/// Grid file = kv blocks; a `stage = cnn1` block configures the shared
/// stage-1 run, every other block is one fine-tuning cell.
GridSpec parse_grid(const std::string& text, const TrainConfig& defaults = {});

}  // namespace cidis
