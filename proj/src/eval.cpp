#include "cidis/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "cidis/error.hpp"
#include "cidis/layers.hpp"

namespace cidis {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

}  // namespace

std::uint64_t EvalReport::total() const {
    std::uint64_t n = 0;
    for (const auto& row : confusion)
        for (auto v : row) n += v;
    return n;
}

std::uint64_t EvalReport::trace() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < 4; ++i) n += confusion[i][i];
    return n;
}

std::string EvalReport::to_text() const {
    std::string out;
    out += "subset        " + subset + "\n";
    out += "samples       " + std::to_string(total()) + "\n";
    out += "accuracy      " + fmt("%.6f", accuracy) + "\n";
    out += "loss          " + fmt("%.6f", loss) + "\n";
    out += "latency_ms    " + fmt("%.3f", mean_latency_ms) + "\n";
    out += "size_mb       " + fmt("%.2f", model_size_mb) + "\n";
    out += "confusion (rows = true A..D, cols = predicted)\n";
    for (std::size_t r = 0; r < 4; ++r) {
        char line[96];
        std::snprintf(line, sizeof(line), "  %c %8llu %8llu %8llu %8llu\n",
                      static_cast<char>('A' + r),
                      static_cast<unsigned long long>(confusion[r][0]),
                      static_cast<unsigned long long>(confusion[r][1]),
                      static_cast<unsigned long long>(confusion[r][2]),
                      static_cast<unsigned long long>(confusion[r][3]));
        out += line;
    }
    if (!config.empty()) out += "config        " + config + "\n";
    return out;
}

EvalReport evaluate_net(Network& net, const Dataset& ds, Split subset, int batch_size,
                        int warmup, int timed) {
    if (!ds.has_split()) throw EvalError("dataset has no split assignment");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    auto idx = ds.subset_indices(subset);
    if (idx.empty()) throw EvalError(std::string("subset '") + to_string(subset) + "' is empty");

    const std::uint32_t size = net.input_shape()[1];
    EvalReport report;
    report.subset = to_string(subset);

    double loss_sum = 0;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
        std::span<const std::size_t> chunk(idx.data() + start, end - start);
        Batch b = make_batch(ds, chunk, size);
        Tensor logits = net.forward(b.images, Mode::eval, nullptr);
        auto sm = softmax_xent(logits, b.labels);
        loss_sum += sm.loss * static_cast<double>(chunk.size());
        std::size_t k = logits.dim(1);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (logits[r * k + c] > logits[r * k + best]) best = c;
            report.confusion[static_cast<std::size_t>(b.labels[r])][best]++;
        }
    }
    report.loss = loss_sum / static_cast<double>(idx.size());
    report.accuracy =
        static_cast<double>(report.trace()) / static_cast<double>(report.total());

    // latency protocol: single-image batches, warm-up discarded, mean over
    // the timed invocations
    if (timed > 0) {
        std::size_t probe = idx[0];
        Batch one = make_batch(ds, std::span<const std::size_t>(&probe, 1), size);
        for (int i = 0; i < warmup; ++i) net.forward(one.images, Mode::eval, nullptr);
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < timed; ++i) net.forward(one.images, Mode::eval, nullptr);
        auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
        report.mean_latency_ms = dt.count() / timed;
    }

    report.model_size_mb = static_cast<double>(net.payload_bytes()) / 1e6;
    report.config = "optimizer=" + net.meta().optimizer +
                    " epochs_seen=" + std::to_string(net.meta().epochs_seen) +
                    " seed=" + std::to_string(net.meta().seed);
    return report;
}

EvalReport evaluate(const std::filesystem::path& ckpt, const Dataset& ds, Split subset,
                    int batch_size, int warmup, int timed) {
    Network net = load_checkpoint(ckpt);
    return evaluate_net(net, ds, subset, batch_size, warmup, timed);
}

std::string report_csv_header() {
    return "config_id,accuracy,loss,latency_ms,size_mb,epochs,optimizer,lr,dropout_layers,"
           "batch_size,seed\n";
}

std::string report_csv_row(const std::string& id, const EvalReport& r, const TrainConfig& cfg) {
    Optimizer defaults(cfg.optimizer, cfg.lr);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.3f,%.2f,%d,%s,%g,%d,%d,%llu\n", id.c_str(),
                  r.accuracy, r.loss, r.mean_latency_ms, r.model_size_mb, cfg.epochs,
                  to_string(cfg.optimizer).c_str(), static_cast<double>(defaults.lr()),
                  cfg.dropout_layers, cfg.batch_size,
                  static_cast<unsigned long long>(cfg.seed));
    return buf;
}

GridOutcome run_grid(const GridSpec& grid, const Dataset& synth_ds, const Dataset& real_ds,
                     const BuildOptions& opts, const std::filesystem::path& out_dir) {
    if (grid.cells.empty()) throw ConfigError("grid has no cells");
    if (!synth_ds.has_split() || !real_ds.has_split())
        throw ContractError("both datasets need split assignments");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    GridOutcome outcome;

    // shared stage 1
    TrainConfig cfg1 = grid.stage1;
    cfg1.stage = "cnn1";
    BuildOptions opts1 = opts;
    opts1.dropout_layers = cfg1.dropout_layers;
    opts1.dropout_rate = cfg1.dropout_rate;
    Rng init_rng(Rng::fork(cfg1.seed, 1));
    Network stage1_net = Network::build(opts1, init_rng);
    outcome.stage1_ckpt = out_dir / "cnn1.ckpt";
    RunLog log1 = train(stage1_net, synth_ds, cfg1, outcome.stage1_ckpt);
    write_text(out_dir / "cnn1.log.csv", log1.to_csv());

    for (const TrainConfig& cell : grid.cells) {
        GridCellResult result;
        result.cfg = cell;
        try {
            Network net = [&] {
                if (cell.stage == "scratch-real") {
                    BuildOptions cell_opts = opts;
                    cell_opts.dropout_layers = cell.dropout_layers;
                    cell_opts.dropout_rate = cell.dropout_rate;
                    Rng rng(Rng::fork(cell.seed, 1));
                    return Network::build(cell_opts, rng);
                }
                Network warm = load_checkpoint(outcome.stage1_ckpt);
                Rng rng(Rng::fork(cell.seed, 1));
                warm.prepare_transfer(rng, cell.dropout_layers, cell.dropout_rate);
                return warm;
            }();

            std::filesystem::path ckpt = out_dir / (cell.id + ".ckpt");
            result.log = train(net, real_ds, cell, ckpt);
            result.test_report = evaluate_net(net, real_ds, Split::test, cell.batch_size);
            result.val_report = evaluate_net(net, real_ds, Split::validation, cell.batch_size);
            result.test_report.config = "id=" + cell.id + " stage=" + cell.stage;
            result.val_report.config = result.test_report.config;
            result.ok = true;

            write_text(out_dir / (cell.id + ".log.csv"), result.log.to_csv());
            write_text(out_dir / (cell.id + ".csv"),
                       report_csv_header() + report_csv_row(cell.id, result.test_report, cell));
            write_text(out_dir / (cell.id + ".txt"),
                       "== test ==\n" + result.test_report.to_text() + "\n== validation ==\n" +
                           result.val_report.to_text());
        } catch (const Error& e) {
            result.ok = false;
            result.error = e.what();
        }
        outcome.cells.push_back(std::move(result));
    }

    // rank the successful cells by test accuracy, ties by id
    for (std::size_t i = 0; i < outcome.cells.size(); ++i)
        if (outcome.cells[i].ok) outcome.ranking.push_back(i);
    std::sort(outcome.ranking.begin(), outcome.ranking.end(), [&](std::size_t a, std::size_t b) {
        double aa = outcome.cells[a].test_report.accuracy;
        double bb = outcome.cells[b].test_report.accuracy;
        if (aa != bb) return aa > bb;
        return outcome.cells[a].cfg.id < outcome.cells[b].cfg.id;
    });

    outcome.summary_csv = report_csv_header();
    for (std::size_t i : outcome.ranking)
        outcome.summary_csv +=
            report_csv_row(outcome.cells[i].cfg.id, outcome.cells[i].test_report,
                           outcome.cells[i].cfg);

    std::string text;
    char line[256];
    std::snprintf(line, sizeof(line), "%-14s %-10s %9s %9s %9s %7s %9s\n", "cell", "optimizer",
                  "test_acc", "val_acc", "loss", "epochs", "lr");
    text += line;
    for (std::size_t i : outcome.ranking) {
        const auto& c = outcome.cells[i];
        Optimizer defaults(c.cfg.optimizer, c.cfg.lr);
        std::snprintf(line, sizeof(line), "%-14s %-10s %9.4f %9.4f %9.4f %7d %9g\n",
                      c.cfg.id.c_str(), to_string(c.cfg.optimizer).c_str(), c.test_report.accuracy,
                      c.val_report.accuracy, c.test_report.loss, c.cfg.epochs,
                      static_cast<double>(defaults.lr()));
        text += line;
    }
    for (const auto& c : outcome.cells)
        if (!c.ok) text += "FAILED " + c.cfg.id + ": " + c.error + "\n";
    outcome.summary_text = text;

    write_text(out_dir / "summary.csv", outcome.summary_csv);
    write_text(out_dir / "summary.txt", outcome.summary_text);
    return outcome;
}

}  // namespace cidis
