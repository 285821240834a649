// Command-line front end for the full pipeline: synthetic generation,
// ingestion, splitting, two-stage training, evaluation and the grid runner.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "cidis/data.hpp"
#include "cidis/error.hpp"
#include "cidis/eval.hpp"
#include "cidis/image.hpp"
#include "cidis/model.hpp"
#include "cidis/synth.hpp"
#include "cidis/train.hpp"

namespace fs = std::filesystem;
using namespace cidis;

namespace {

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
}

Dataset load_with_split(const fs::path& data, const fs::path& split) {
    Dataset ds = load_dataset(data);
    load_split(ds, split);
    return ds;
}

std::string counts_line(const Dataset& ds) {
    auto c = ds.class_counts();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu samples (A=%zu B=%zu C=%zu D=%zu)", ds.samples.size(),
                  c[0], c[1], c[2], c[3]);
    return buf;
}

// One config file may carry both training and architecture keys.
std::pair<TrainConfig, BuildOptions> read_train_file(const fs::path& path) {
    KvBlock kv = parse_kv(read_text_file(path));
    TrainConfig cfg = train_config_from(kv);
    BuildOptions opts = build_options_from(kv);
    opts.dropout_layers = cfg.dropout_layers;
    opts.dropout_rate = cfg.dropout_rate;
    return {cfg, opts};
}

void print_epochs(const RunLog& log) {
    for (const auto& e : log.epochs)
        std::printf("epoch %d  train loss %.4f acc %.4f  val loss %.4f acc %.4f  (%.1fs)\n",
                    e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.seconds);
}

struct GenArgs {
    int per_level = 0;
    std::string out;
    std::uint64_t seed = 0;
    std::uint32_t size = 224;
    std::string format = "png";
    bool real_like = false;
};

struct IngestArgs {
    std::string in, out, exclude;
    std::uint32_t size = 224;
    std::uint64_t seed = 0;
};

struct SplitArgs {
    std::string data, out;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    std::string config, data, split, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

struct TransferArgs {
    std::string ckpt, config, data, split, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

struct EvalArgs {
    std::string ckpt, data, split, out;
    std::string subset = "test";
    int batch = 50;
    int warmup = 10;
    int runs = 100;
    std::uint64_t seed = 0;
};

struct GridArgs {
    std::string spec, synth, synth_split, real, real_split, out;
    std::uint64_t seed = 0;
};

struct BenchArgs {
    std::string ckpt;
    int warmup = 10;
    int runs = 100;
    std::uint64_t seed = 0;
};

int run_gen(const GenArgs& a) {
    std::string manifest =
        generate_dataset(a.per_level, a.out, a.seed, a.size, a.format, a.real_like);
    std::size_t lines = 0;
    for (char c : manifest)
        if (c == '\n') ++lines;
    std::printf("wrote %zu images under %s (manifest.txt alongside)\n", lines, a.out.c_str());
    return 0;
}

int run_ingest(const IngestArgs& a) {
    IngestResult res = ingest_real(a.in, a.exclude.empty() ? fs::path{} : fs::path(a.exclude),
                                   a.size);
    save_dataset(res.dataset, a.out);
    std::printf("ingested %s -> %s\n", counts_line(res.dataset).c_str(), a.out.c_str());
    if (!res.skipped.empty()) {
        std::fprintf(stderr, "skipped %zu file(s):\n", res.skipped.size());
        for (const auto& line : res.skipped) std::fprintf(stderr, "  %s\n", line.c_str());
    }
    return 0;
}

int run_split(const SplitArgs& a) {
    Dataset ds = load_dataset(a.data);
    std::string warning;
    split_dataset(ds, a.seed, &warning);
    if (!warning.empty()) std::fprintf(stderr, "%s\n", warning.c_str());
    save_split(ds, a.out);
    std::printf("split %zu samples: train=%zu validation=%zu test=%zu -> %s\n",
                ds.samples.size(), ds.subset_indices(Split::train).size(),
                ds.subset_indices(Split::validation).size(),
                ds.subset_indices(Split::test).size(), a.out.c_str());
    return 0;
}

int run_train(const TrainArgs& a) {
    auto [cfg, opts] = read_train_file(a.config);
    if (a.seed_set) cfg.seed = a.seed;
    if (cfg.stage == "cnn2")
        throw ConfigError("stage cnn2 fine-tunes an existing checkpoint; use the transfer "
                          "subcommand");
    Dataset ds = load_with_split(a.data, a.split);
    fs::create_directories(a.out);
    Rng init(Rng::fork(cfg.seed, 1));
    Network net = Network::build(opts, init);
    std::string name = cfg.id.empty() ? cfg.stage : cfg.id;
    RunLog log = train(net, ds, cfg, fs::path(a.out) / (name + ".ckpt"));
    write_text(fs::path(a.out) / (name + ".log.csv"), log.to_csv());
    print_epochs(log);
    std::printf("checkpoint: %s\n", log.checkpoint_path.c_str());
    return 0;
}

int run_transfer(const TransferArgs& a) {
    auto [cfg, opts] = read_train_file(a.config);
    (void)opts;  // architecture comes from the checkpoint
    if (a.seed_set) cfg.seed = a.seed;
    if (cfg.stage != "cnn2" && cfg.stage != "cnn1")
        throw ConfigError("transfer expects a cnn2 config, got stage " + cfg.stage);
    cfg.stage = "cnn2";
    Dataset ds = load_with_split(a.data, a.split);
    fs::create_directories(a.out);
    Network net = load_checkpoint(a.ckpt);
    Rng head(Rng::fork(cfg.seed, 1));
    net.prepare_transfer(head, cfg.dropout_layers, cfg.dropout_rate);
    std::string name = cfg.id.empty() ? cfg.stage : cfg.id;
    RunLog log = train(net, ds, cfg, fs::path(a.out) / (name + ".ckpt"));
    write_text(fs::path(a.out) / (name + ".log.csv"), log.to_csv());
    print_epochs(log);
    std::printf("checkpoint: %s\n", log.checkpoint_path.c_str());
    return 0;
}

int run_eval(const EvalArgs& a) {
    Network net = load_checkpoint(a.ckpt);
    Dataset ds = load_with_split(a.data, a.split);
    EvalReport r = evaluate_net(net, ds, split_from_string(a.subset), a.batch, a.warmup, a.runs);
    r.subset = a.subset;
    std::fputs(r.to_text().c_str(), stdout);
    if (!a.out.empty()) {
        // echo what the checkpoint knows about its own training
        TrainConfig echo;
        if (net.meta().optimizer != "none")
            echo.optimizer = optim_kind_from_string(net.meta().optimizer);
        echo.epochs = static_cast<int>(net.meta().epochs_seen);
        echo.seed = net.meta().seed;
        echo.dropout_layers = net.options().dropout_layers;
        echo.dropout_rate = net.options().dropout_rate;
        echo.batch_size = a.batch;
        std::string id = fs::path(a.ckpt).stem().string();
        write_text(a.out, report_csv_header() + report_csv_row(id, r, echo));
        std::printf("report: %s\n", a.out.c_str());
    }
    return 0;
}

int run_grid_cmd(const GridArgs& a) {
    std::string text = read_text_file(a.spec);
    GridSpec grid = parse_grid(text);
    if (!grid.has_stage1)
        throw ConfigError("grid file needs a `stage = cnn1` block for the shared first stage");
    // architecture keys live in the stage-1 block
    BuildOptions opts;
    for (const auto& block : parse_kv_blocks(text)) {
        auto it = block.find("stage");
        if (it != block.end() && it->second == "cnn1") {
            opts = build_options_from(block);
            break;
        }
    }
    Dataset synth = load_with_split(a.synth, a.synth_split);
    Dataset real = load_with_split(a.real, a.real_split);
    GridOutcome out = run_grid(grid, synth, real, opts, a.out);
    std::fputs(out.summary_text.c_str(), stdout);
    std::printf("reports under %s\n", a.out.c_str());
    for (const auto& cell : out.cells)
        if (!cell.ok) return 0;  // failures are recorded in the summary, not fatal
    return 0;
}

int run_bench(const BenchArgs& a) {
    Network net = load_checkpoint(a.ckpt);
    auto shape = net.input_shape();
    Dataset ds;
    Rng rng(Rng::fork(a.seed, 5));
    ImageU8 img = ImageU8::make(shape[2], shape[1], 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(rng.next_u64() & 0xFF);
    ds.samples.push_back({std::move(img), 0, "bench"});
    ds.split_assignment.assign(1, Split::test);
    EvalReport r = evaluate_net(net, ds, Split::test, 1, a.warmup, a.runs);
    std::printf("input %ux%u  params %zu\n", shape[2], shape[1], net.param_count());
    std::printf("mean latency %.3f ms over %d runs (%d warmup)\n", r.mean_latency_ms, a.runs,
                a.warmup);
    std::printf("model size %.2f MB\n", r.model_size_mb);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"banana ripeness pipeline: synthetic data, two-stage CNN training, evaluation"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cgen = app.add_subcommand("gen", "render a synthetic dataset to a directory");
    cgen->add_option("--per-level", gen.per_level, "images per ripeness level")->required();
    cgen->add_option("--out", gen.out, "output directory")->required();
    cgen->add_option("--seed", gen.seed, "dataset seed");
    cgen->add_option("--size", gen.size, "image side in pixels");
    cgen->add_option("--format", gen.format, "png or ppm");
    cgen->add_flag("--real-like", gen.real_like,
                   "perturb renders (noise, lighting, texture) into a stand-in real set");

    IngestArgs ing;
    auto* cing = app.add_subcommand("ingest", "scan a photo directory into a dataset cache");
    cing->add_option("--in", ing.in, "root with level_X/ or day_NN/ folders")->required();
    cing->add_option("--out", ing.out, "dataset cache file")->required();
    cing->add_option("--exclude", ing.exclude, "exclusion list file");
    cing->add_option("--size", ing.size, "resize target");
    cing->add_option("--seed", ing.seed, "accepted for interface symmetry");

    SplitArgs spl;
    auto* cspl = app.add_subcommand("split", "assign train/validation/test subsets");
    cspl->add_option("--data", spl.data, "dataset cache file")->required();
    cspl->add_option("--out", spl.out, "split file to write")->required();
    cspl->add_option("--seed", spl.seed, "shuffle seed");

    TrainArgs trn;
    auto* ctrn = app.add_subcommand("train", "train a network from scratch (stage cnn1 or "
                                             "scratch-real)");
    ctrn->add_option("--config", trn.config, "key = value training config")->required();
    ctrn->add_option("--data", trn.data, "dataset cache file")->required();
    ctrn->add_option("--split", trn.split, "split file")->required();
    ctrn->add_option("--out", trn.out, "output directory")->required();
    auto* trn_seed = ctrn->add_option("--seed", trn.seed, "override the config seed");

    TransferArgs tra;
    auto* ctra = app.add_subcommand("transfer", "freeze conv features of a checkpoint and "
                                                "fine-tune a fresh head");
    ctra->add_option("--ckpt", tra.ckpt, "stage-1 checkpoint")->required();
    ctra->add_option("--config", tra.config, "key = value training config")->required();
    ctra->add_option("--data", tra.data, "dataset cache file")->required();
    ctra->add_option("--split", tra.split, "split file")->required();
    ctra->add_option("--out", tra.out, "output directory")->required();
    auto* tra_seed = ctra->add_option("--seed", tra.seed, "override the config seed");

    EvalArgs evl;
    auto* cevl = app.add_subcommand("eval", "accuracy, confusion, latency and size of a "
                                            "checkpoint");
    cevl->add_option("--ckpt", evl.ckpt, "checkpoint file")->required();
    cevl->add_option("--data", evl.data, "dataset cache file")->required();
    cevl->add_option("--split", evl.split, "split file")->required();
    cevl->add_option("--subset", evl.subset, "train, validation or test");
    cevl->add_option("--batch", evl.batch, "evaluation batch size");
    cevl->add_option("--warmup", evl.warmup, "latency warmup runs");
    cevl->add_option("--runs", evl.runs, "timed latency runs (0 skips timing)");
    cevl->add_option("--out", evl.out, "also write a one-row CSV report");
    cevl->add_option("--seed", evl.seed, "accepted for interface symmetry");

    GridArgs grd;
    auto* cgrd = app.add_subcommand("grid", "run a hyperparameter grid from a shared stage-1 "
                                            "checkpoint");
    cgrd->add_option("--spec", grd.spec, "grid file: blank-line-separated config blocks")
        ->required();
    cgrd->add_option("--synth", grd.synth, "synthetic dataset cache")->required();
    cgrd->add_option("--synth-split", grd.synth_split, "synthetic split file")->required();
    cgrd->add_option("--real", grd.real, "real dataset cache")->required();
    cgrd->add_option("--real-split", grd.real_split, "real split file")->required();
    cgrd->add_option("--out", grd.out, "report directory")->required();
    cgrd->add_option("--seed", grd.seed, "accepted for interface symmetry");

    BenchArgs bch;
    auto* cbch = app.add_subcommand("bench", "latency and size of a checkpoint, no dataset");
    cbch->add_option("--ckpt", bch.ckpt, "checkpoint file")->required();
    cbch->add_option("--warmup", bch.warmup, "warmup runs");
    cbch->add_option("--runs", bch.runs, "timed runs");
    cbch->add_option("--seed", bch.seed, "probe image seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);  // help goes to stdout, errors to stderr
        return rc == 0 ? 0 : 1;
    }

    trn.seed_set = trn_seed->count() > 0;
    tra.seed_set = tra_seed->count() > 0;

    try {
        if (cgen->parsed()) return run_gen(gen);
        if (cing->parsed()) return run_ingest(ing);
        if (cspl->parsed()) return run_split(spl);
        if (ctrn->parsed()) return run_train(trn);
        if (ctra->parsed()) return run_transfer(tra);
        if (cevl->parsed()) return run_eval(evl);
        if (cgrd->parsed()) return run_grid_cmd(grd);
        if (cbch->parsed()) return run_bench(bch);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
