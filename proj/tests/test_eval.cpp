#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cidis/error.hpp"
#include "cidis/eval.hpp"
#include "cidis/synth.hpp"

using namespace cidis;
namespace fs = std::filesystem;

namespace {

ImageU8 solid(std::uint32_t s, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    ImageU8 img = ImageU8::make(s, s, 3);
    for (std::uint32_t y = 0; y < s; ++y)
        for (std::uint32_t x = 0; x < s; ++x) {
            img.set(x, y, 0, r);
            img.set(x, y, 1, g);
            img.set(x, y, 2, b);
        }
    return img;
}

BuildOptions tiny_opts() {
    BuildOptions opts;
    opts.input_size = 8;
    opts.block_widths = {4, 6, 8};
    opts.hidden = 10;
    opts.num_classes = 4;
    return opts;
}

// 4 balanced classes of distinct solid colors, everything in the test split.
Dataset balanced_dataset(std::size_t per_class) {
    Dataset ds;
    const std::uint8_t palette[4][3] = {{20, 160, 30}, {160, 160, 30}, {160, 90, 30}, {90, 50, 20}};
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < per_class; ++i)
            ds.samples.push_back({solid(8, palette[c][0], palette[c][1], palette[c][2]), c,
                                  "bal/" + std::to_string(c) + "/" + std::to_string(i)});
    ds.split_assignment.assign(ds.samples.size(), Split::test);
    return ds;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("kv parsing handles comments, blanks and bad lines") {
    KvBlock kv = parse_kv("a = 1\n# note\n\n b=two \nc = 3 # trailing\n");
    CHECK(kv.size() == 3);
    CHECK(kv["a"] == "1");
    CHECK(kv["b"] == "two");
    CHECK(kv["c"] == "3");

    CHECK_THROWS_AS(parse_kv("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_kv("key =\n"), ConfigError);

    auto blocks = parse_kv_blocks("a = 1\n\nb = 2\n# comment only\n\nc = 3\n");
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[1].count("b") == 1);
}

TEST_CASE("train config blocks apply and validate") {
    KvBlock kv = parse_kv(
        "optimizer = nadam\nlr = 0.005\ndropout_layers = 2\nbatch_size = 16\nepochs = 3\n"
        "seed = 99\nstage = cnn2\nid = cellx\n");
    TrainConfig cfg = train_config_from(kv);
    CHECK(cfg.optimizer == OptimKind::nadam);
    CHECK(cfg.lr == doctest::Approx(0.005f));
    CHECK(cfg.dropout_layers == 2);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.seed == 99);
    CHECK(cfg.stage == "cnn2");
    CHECK(cfg.id == "cellx");

    CHECK_THROWS_AS(train_config_from(parse_kv("momentum = 0.9\n")), ConfigError);
    CHECK_THROWS_AS(train_config_from(parse_kv("dropout_layers = 3\n")), ConfigError);
    CHECK_THROWS_AS(train_config_from(parse_kv("epochs = notanumber\n")), ConfigError);

    BuildOptions opts = build_options_from(parse_kv("input_size = 16\nblock_widths = 4, 6, 8\n"
                                                    "hidden = 12\nnum_classes = 4\n"));
    CHECK(opts.input_size == 16u);
    CHECK(opts.block_widths[1] == 6u);
    CHECK(opts.hidden == 12u);
    CHECK_THROWS_AS(build_options_from(parse_kv("block_widths = 4, 6\n")), ConfigError);
}

TEST_CASE("grid files split into a stage-1 block and cells") {
    std::string text =
        "stage = cnn1\nepochs = 2\nseed = 5\n"
        "\n"
        "id = adam2\noptimizer = adam\ndropout_layers = 2\nepochs = 3\n"
        "\n"
        "id = nadam1\noptimizer = nadam\nepochs = 4\n";
    GridSpec grid = parse_grid(text);
    CHECK(grid.has_stage1);
    CHECK(grid.stage1.epochs == 2);
    REQUIRE(grid.cells.size() == 2);
    CHECK(grid.cells[0].id == "adam2");
    CHECK(grid.cells[0].stage == "cnn2");
    CHECK(grid.cells[1].optimizer == OptimKind::nadam);

    CHECK_THROWS_AS(parse_grid(""), ConfigError);
    CHECK_THROWS_AS(parse_grid("stage = cnn1\nepochs = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_grid("id = a\nepochs = 1\n\nid = a\nepochs = 2\n"), ConfigError);

    GridSpec anon = parse_grid("epochs = 1\n\nepochs = 2\n");
    CHECK(anon.cells[0].id == "cell1");
    CHECK(anon.cells[1].id == "cell2");
}

TEST_CASE("a zeroed network predicts class A everywhere: accuracy 0.25") {
    Rng rng(3);
    Network net = Network::build(tiny_opts(), rng);
    for (auto& p : net.params()) p.value->fill(0.0f);

    fs::path dir = fresh_dir("cidis_eval_zero");
    save_checkpoint(net, dir / "zero.ckpt");

    Dataset ds = balanced_dataset(6);
    EvalReport r = evaluate(dir / "zero.ckpt", ds, Split::test, 8, 1, 3);
    CHECK(r.accuracy == 0.25);
    CHECK(r.total() == 24);
    CHECK(r.trace() == 6);
    // every prediction lands in the lowest-index column
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(r.confusion[t][0] == 6);
        for (std::size_t p = 1; p < 4; ++p) CHECK(r.confusion[t][p] == 0);
    }
    // uniform softmax over 4 classes
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
    CHECK(r.mean_latency_ms > 0.0);
    CHECK(r.model_size_mb ==
          doctest::Approx(static_cast<double>(net.payload_bytes()) / 1e6).epsilon(1e-6));
    // headers are a rounding error next to the weights themselves
    CHECK(r.model_size_mb > static_cast<double>(net.param_count()) * 4 / 1e6);
    CHECK(r.model_size_mb < static_cast<double>(net.param_count()) * 4 / 1e6 + 0.001);

    std::string text = r.to_text();
    CHECK(text.find("accuracy      0.25") != std::string::npos);
    CHECK(text.find("confusion") != std::string::npos);
}

TEST_CASE("evaluation is deterministic apart from latency") {
    Dataset ds = balanced_dataset(4);
    Rng rng(8);
    Network net = Network::build(tiny_opts(), rng);
    fs::path dir = fresh_dir("cidis_eval_det");
    save_checkpoint(net, dir / "net.ckpt");

    EvalReport a = evaluate(dir / "net.ckpt", ds, Split::test, 4, 0, 1);
    EvalReport b = evaluate(dir / "net.ckpt", ds, Split::test, 4, 0, 1);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    CHECK(a.confusion == b.confusion);
    CHECK(a.accuracy ==
          doctest::Approx(static_cast<double>(a.trace()) / static_cast<double>(a.total())));

    CHECK_THROWS_AS(evaluate(dir / "net.ckpt", ds, Split::train, 4, 0, 1), EvalError);
    CHECK_THROWS_AS(evaluate(dir / "missing.ckpt", ds, Split::test, 4, 0, 1), IoError);
}

TEST_CASE("the grid runner shares stage 1 and isolates failing cells") {
    BuildOptions opts = tiny_opts();
    opts.input_size = 16;

    Dataset synth = synth_dataset(6, 111, 16);
    split_dataset(synth, 111);
    Dataset real = real_like_dataset(6, 222, 16);
    split_dataset(real, 222);

    std::string text =
        "stage = cnn1\noptimizer = adam\nlr = 0.01\nepochs = 2\nbatch_size = 8\nseed = 9\n"
        "\n"
        "id = adam_cell\noptimizer = adam\nlr = 0.01\nepochs = 2\nbatch_size = 8\nseed = 10\n"
        "\n"
        "id = bad_cell\noptimizer = sgd\nlr = 1e18\nepochs = 4\nbatch_size = 2\nseed = 11\n"
        "\n"
        "id = nadam_cell\noptimizer = nadam\nlr = 0.01\nepochs = 2\nbatch_size = 8\nseed = 12\n";
    GridSpec grid = parse_grid(text);
    REQUIRE(grid.cells.size() == 3);

    fs::path dir = fresh_dir("cidis_grid_test");
    GridOutcome out = run_grid(grid, synth, real, opts, dir);

    REQUIRE(out.cells.size() == 3);
    CHECK(fs::exists(out.stage1_ckpt));
    CHECK(out.cells[0].ok);
    CHECK(out.cells[2].ok);

    // good cells leave reports on disk; both subsets are labeled
    for (const char* id : {"adam_cell", "nadam_cell"}) {
        CHECK(fs::exists(dir / (std::string(id) + ".csv")));
        CHECK(fs::exists(dir / (std::string(id) + ".log.csv")));
        std::ifstream txt(dir / (std::string(id) + ".txt"));
        std::string body((std::istreambuf_iterator<char>(txt)), std::istreambuf_iterator<char>());
        CHECK(body.find("== test ==") != std::string::npos);
        CHECK(body.find("== validation ==") != std::string::npos);
    }

    CHECK(fs::exists(dir / "summary.csv"));
    CHECK(fs::exists(dir / "summary.txt"));
    CHECK(out.summary_csv.rfind(report_csv_header(), 0) == 0);

    if (!out.cells[1].ok) {
        CHECK(out.ranking.size() == 2);
        CHECK(out.summary_text.find("FAILED bad_cell") != std::string::npos);
    }

    // ranking is by test accuracy
    for (std::size_t k = 1; k < out.ranking.size(); ++k)
        CHECK(out.cells[out.ranking[k - 1]].test_report.accuracy >=
              out.cells[out.ranking[k]].test_report.accuracy);

    // a rerun with the same seeds lands on the same best cell and accuracies
    fs::path dir2 = fresh_dir("cidis_grid_test2");
    GridOutcome again = run_grid(grid, synth, real, opts, dir2);
    REQUIRE(again.ranking.size() == out.ranking.size());
    for (std::size_t k = 0; k < out.ranking.size(); ++k) {
        CHECK(again.cells[again.ranking[k]].cfg.id == out.cells[out.ranking[k]].cfg.id);
        CHECK(again.cells[again.ranking[k]].test_report.accuracy ==
              out.cells[out.ranking[k]].test_report.accuracy);
    }
}

TEST_CASE("a single-cell grid's summary is that cell's report") {
    BuildOptions opts = tiny_opts();
    opts.input_size = 16;
    Dataset synth = synth_dataset(6, 333, 16);
    split_dataset(synth, 333);
    Dataset real = real_like_dataset(6, 444, 16);
    split_dataset(real, 444);

    GridSpec grid = parse_grid(
        "stage = cnn1\nepochs = 1\nbatch_size = 8\nseed = 1\n\n"
        "id = only\noptimizer = adam\nlr = 0.01\nepochs = 1\nbatch_size = 8\nseed = 2\n");
    fs::path dir = fresh_dir("cidis_grid_single");
    GridOutcome out = run_grid(grid, synth, real, opts, dir);
    REQUIRE(out.cells.size() == 1);
    REQUIRE(out.cells[0].ok);
    CHECK(out.ranking == std::vector<std::size_t>{0});
    CHECK(out.summary_csv ==
          report_csv_header() + report_csv_row("only", out.cells[0].test_report,
                                               out.cells[0].cfg));
}
