#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cidis/config.hpp"
#include "cidis/data.hpp"
#include "cidis/model.hpp"
#include "cidis/train.hpp"

namespace cidis {

struct EvalReport {
    std::string subset;  // which split was scored
    double accuracy = 0;
    double loss = 0;  // mean cross-entropy
    std::array<std::array<std::uint64_t, 4>, 4> confusion{};  // [true][predicted]
    double mean_latency_ms = 0;
    double model_size_mb = 0;  // weight payload, decimal MB
    std::string config;        // flattened config echo

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::string to_text() const;
};

/// Eval-mode inference over one subset: accuracy = confusion trace / total,
/// argmax ties go to the lowest class index. Latency is the mean over
/// `timed` single-image forwards after `warmup` discarded ones; size is the
/// checkpoint weight payload in decimal MB.
EvalReport evaluate(const std::filesystem::path& ckpt, const Dataset& ds, Split subset,
                    int batch_size = 50, int warmup = 10, int timed = 100);

/// Same protocol on an already-loaded network (no checkpoint round-trip).
EvalReport evaluate_net(Network& net, const Dataset& ds, Split subset, int batch_size = 50,
                        int warmup = 10, int timed = 100);

struct GridCellResult {
    TrainConfig cfg;
    bool ok = false;
    std::string error;           // set when !ok
    EvalReport test_report;      // test split
    EvalReport val_report;       // validation split
    RunLog log;
};

struct GridOutcome {
    std::filesystem::path stage1_ckpt;
    std::vector<GridCellResult> cells;  // grid order
    std::vector<std::size_t> ranking;   // indices of ok cells, best test accuracy first
    std::string summary_csv;
    std::string summary_text;
};

/// Trains stage 1 once, then runs every cell's stage-2 fine-tune from that
/// shared checkpoint (scratch-real cells train a fresh net on the real set
/// instead). Each cell gets <id>.csv / <id>.txt / <id>.log.csv under
/// out_dir; failures are recorded and the remaining cells continue. The
/// summary ranks by test accuracy (ties by id) and lands in summary.csv and
/// summary.txt.
GridOutcome run_grid(const GridSpec& grid, const Dataset& synth_ds, const Dataset& real_ds,
                     const BuildOptions& opts, const std::filesystem::path& out_dir);

/// "config_id,accuracy,loss,latency_ms,size_mb,epochs,optimizer,lr,dropout_layers,batch_size,seed"
std::string report_csv_header();
std::string report_csv_row(const std::string& id, const EvalReport& r, const TrainConfig& cfg);

}  // namespace cidis
