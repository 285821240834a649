// Acceptance suite: one [PASS]/[FAIL] line per criterion, exit 0 iff all pass.
//
// Each criterion is self-contained and ordered cheap-to-expensive except the
// scaled two-stage experiment (5), which dominates the runtime and therefore
// runs last. Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cidis/data.hpp"
#include "cidis/error.hpp"
#include "cidis/eval.hpp"
#include "cidis/image.hpp"
#include "cidis/layers.hpp"
#include "cidis/model.hpp"
#include "cidis/optim.hpp"
#include "cidis/synth.hpp"
#include "cidis/train.hpp"
#include "oracle.hpp"
#include "replica.hpp"

using namespace cidis;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

double secs_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

struct Failure {
    std::string why;
};

void require(bool ok, const std::string& why) {
    if (!ok) throw Failure{why};
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: per-layer and end-to-end finite differences.
// ---------------------------------------------------------------------------

// Max relative error between an analytic gradient tensor and central
// differences of a 64-bit loss, probing every coordinate of `target`.
double fd_max_rel_err(Tensor& target, const Tensor& analytic,
                      const std::function<double()>& loss64, double h = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        float saved = target[i];
        target[i] = static_cast<float>(saved + h);
        double hi_x = target[i];  // the realized f32 step, not the nominal one
        double hi = loss64();
        target[i] = static_cast<float>(saved - h);
        double lo_x = target[i];
        double lo = loss64();
        target[i] = saved;
        double numeric = (hi - lo) / (hi_x - lo_x);
        double denom = std::max({std::abs(numeric), std::abs(double(analytic[i])), 1e-4});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

Tensor random_upstream(std::span<const std::uint32_t> shape, Rng& rng) {
    Tensor c = uniform_init(shape, -1.0f, 1.0f, rng);
    return c;
}

double weighted_sum(const oracle::Array& y, const Tensor& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * c[i];
    return s;
}

void check_conv_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(1000 + inst);
        std::uint32_t b = 1 + inst % 2, ci = 1 + inst % 3, co = 1 + (inst / 2) % 3;
        std::uint32_t hw = 4 + inst % 3, k = 2 + inst % 2;
        int stride = 1 + inst % 2, pad = inst % 2;
        auto x = uniform_init({b, ci, hw, hw}, -1.0f, 1.0f, r);
        auto kr = uniform_init({co, ci, k, k}, -1.0f, 1.0f, r);
        auto bs = uniform_init({co}, -0.5f, 0.5f, r);

        ConvCache cache;
        auto y = conv2d_forward(x, kr, bs, stride, pad, &cache);
        auto c = random_upstream(y.shape(), r);
        auto grads = conv2d_backward(c, cache, kr);

        auto loss = [&] {
            auto out = oracle::conv2d(oracle::from_tensor(x), oracle::from_tensor(kr),
                                      oracle::from_tensor(bs), stride, pad);
            return weighted_sum(out, c);
        };
        require(fd_max_rel_err(x, grads.grad_x, loss) < 1e-3, "conv grad_x FD mismatch");
        require(fd_max_rel_err(kr, grads.grad_kernel, loss) < 1e-3, "conv grad_kernel FD mismatch");
        require(fd_max_rel_err(bs, grads.grad_bias, loss) < 1e-3, "conv grad_bias FD mismatch");
    }
}

void check_relu_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(2000 + inst);
        auto x = uniform_init({3, 17}, 0.05f, 1.0f, r);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (i % 2 == 0) x[i] = -x[i];  // both signs, away from the kink
        Tensor cache;
        auto y = relu_forward(x, &cache);
        auto c = random_upstream(y.shape(), r);
        auto g = relu_backward(c, cache);
        auto loss = [&] {
            auto out = oracle::relu(oracle::from_tensor(x));
            return weighted_sum(out, c);
        };
        require(fd_max_rel_err(x, g, loss, 1e-4) < 1e-3, "relu FD mismatch");
    }
}

void check_pool_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(3000 + inst);
        std::uint32_t b = 1 + inst % 2, ch = 1 + inst % 3, hw = 4 + (inst % 3) * 2;
        auto x = uniform_init({b, ch, hw, hw}, -1.0f, 1.0f, r);
        // FD must not flip any argmax: a shuffled ramp keeps every pair of
        // values at least 0.01 apart, far beyond the FD step
        std::vector<std::size_t> order(x.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[r.next_range(0, i - 1)]);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = -1.0f + 0.01f * static_cast<float>(order[i]);
        PoolCache cache;
        auto y = maxpool2d_forward(x, 2, 2, &cache);
        auto c = random_upstream(y.shape(), r);
        auto g = maxpool2d_backward(c, cache);
        auto loss = [&] {
            auto out = oracle::maxpool2d(oracle::from_tensor(x), 2, 2);
            return weighted_sum(out, c);
        };
        require(fd_max_rel_err(x, g, loss, 1e-4) < 1e-3, "maxpool FD mismatch");
    }
}

void check_dense_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(4000 + inst);
        std::uint32_t b = 1 + inst % 3, in = 3 + inst % 5, out = 2 + inst % 4;
        auto x = uniform_init({b, in}, -1.0f, 1.0f, r);
        auto w = uniform_init({out, in}, -1.0f, 1.0f, r);
        auto bs = uniform_init({out}, -0.5f, 0.5f, r);
        Tensor cache;
        auto y = dense_forward(x, w, bs, &cache);
        auto c = random_upstream(y.shape(), r);
        auto grads = dense_backward(c, cache, w);
        auto loss = [&] {
            auto out64 = oracle::dense(oracle::from_tensor(x), oracle::from_tensor(w),
                                       oracle::from_tensor(bs));
            return weighted_sum(out64, c);
        };
        require(fd_max_rel_err(x, grads.grad_x, loss) < 1e-3, "dense grad_x FD mismatch");
        require(fd_max_rel_err(w, grads.grad_weight, loss) < 1e-3, "dense grad_weight FD mismatch");
        require(fd_max_rel_err(bs, grads.grad_bias, loss) < 1e-3, "dense grad_bias FD mismatch");
    }
}

void check_dropout_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(5000 + inst);
        auto x = uniform_init({4, 11}, -1.0f, 1.0f, r);
        Rng dr(6000 + inst);
        Tensor mask;
        auto y = dropout_forward(x, 0.3f, Mode::train, dr, &mask);
        auto c = random_upstream(y.shape(), r);
        auto g = dropout_backward(c, mask);
        auto loss = [&] {
            auto out = oracle::apply_mask(oracle::from_tensor(x), oracle::from_tensor(mask));
            return weighted_sum(out, c);
        };
        require(fd_max_rel_err(x, g, loss, 1e-4) < 1e-3, "dropout FD mismatch");
    }
}

void check_xent_fd(int instances) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng r(7000 + inst);
        std::uint32_t b = 2 + inst % 3;
        auto logits = uniform_init({b, 4}, -2.0f, 2.0f, r);
        std::vector<int> labels(b);
        for (auto& l : labels) l = static_cast<int>(r.next_range(0, 3));
        auto res = softmax_xent(logits, labels);
        auto loss = [&] {
            return oracle::softmax_xent(oracle::from_tensor(logits), labels).loss;
        };
        require(fd_max_rel_err(logits, res.grad_logits, loss, 1e-4) < 1e-3, "xent FD mismatch");
    }
}

void check_e2e_fd(int instances) {
    BuildOptions opts;
    opts.input_size = 8;
    opts.block_widths = {4, 6, 8};
    opts.hidden = 10;
    for (int inst = 0; inst < instances; ++inst) {
        Rng rn(8000 + inst);
        Network net = Network::build(opts, rn);
        Rng rx(8100 + inst);
        auto x = uniform_init({2, 3, 8, 8}, 0.0f, 1.0f, rx);
        std::vector<int> labels = {static_cast<int>(rx.next_range(0, 3)),
                                   static_cast<int>(rx.next_range(0, 3))};
        Rng rd(8200 + inst);
        auto logits = net.forward(x, Mode::train, &rd);
        auto res = softmax_xent(logits, labels);
        net.backward(res.grad_logits);
        auto masks = oracle::capture_dropout_masks(net);

        auto refs = net.params();
        Rng pick(8300 + inst);
        for (int s = 0; s < 6; ++s) {
            auto& ref = refs[pick.next_range(0, refs.size() - 1)];
            std::size_t i = pick.next_range(0, ref.value->size() - 1);
            float saved = (*ref.value)[i];
            (*ref.value)[i] = saved + 1e-4f;
            double hi_x = (*ref.value)[i];
            double hi = oracle::replica_loss(net, x, labels, masks);
            (*ref.value)[i] = saved - 1e-4f;
            double lo_x = (*ref.value)[i];
            double lo = oracle::replica_loss(net, x, labels, masks);
            (*ref.value)[i] = saved;
            double numeric = (hi - lo) / (hi_x - lo_x);
            double analytic = (*ref.grad)[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
            require(std::abs(numeric - analytic) / denom < 1e-3,
                    "end-to-end FD mismatch at " + ref.name);
        }
    }
}

void criterion1() {
    auto t0 = clk::now();
    check_conv_fd(20);
    check_relu_fd(20);
    check_pool_fd(20);
    check_dense_fd(20);
    check_dropout_fd(20);
    check_xent_fd(20);
    check_e2e_fd(20);
    require(secs_since(t0) < 120.0, "gradient checks exceeded the 2-minute budget");
}

// ---------------------------------------------------------------------------
// 2. Optimizer oracles: hand-computed steps plus quadratic convergence.
// ---------------------------------------------------------------------------

float one_step(OptimKind kind, float theta0, float grad) {
    Tensor theta = Tensor::from({1}, {theta0});
    Tensor g = Tensor::from({1}, {grad});
    std::vector<Layer::ParamRef> refs{{"p.w", &theta, &g}};
    Optimizer opt(kind);
    opt.apply(refs, {});
    return theta[0];
}

void criterion2() {
    require(std::abs(one_step(OptimKind::sgd, 1.0f, 0.5f) - 0.95f) < 1e-6f,
            "sgd hand value mismatch");
    // adagrad: 1 - 0.1 * 1/(sqrt(1)+eps)
    require(std::abs(one_step(OptimKind::adagrad, 1.0f, 1.0f) - 0.9f) < 1e-6f,
            "adagrad hand value mismatch");
    // adam t=1: bias corrections cancel, theta -= lr * g/|g|
    require(std::abs(one_step(OptimKind::adam, 1.0f, 1.0f) - 0.999f) < 1e-6f,
            "adam hand value mismatch");
    // nadam equals adam at t=1 from zero state
    for (float g : {0.3f, -1.7f, 2.5f}) {
        float a = one_step(OptimKind::adam, 1.0f, g);
        float n = one_step(OptimKind::nadam, 1.0f, g);
        require(std::abs(a - n) < 1e-6f, "nadam != adam at t=1");
    }
    // quadratic convergence: f = |theta|^2, grad = 2 theta
    for (OptimKind kind :
         {OptimKind::sgd, OptimKind::adagrad, OptimKind::adam, OptimKind::nadam}) {
        Rng r(42);
        Tensor theta = uniform_init({8}, -0.5f, 0.5f, r);
        Tensor g = Tensor::zeros({8});
        std::vector<Layer::ParamRef> refs{{"p.w", &theta, &g}};
        Optimizer opt(kind);
        double norm = 1e9;
        for (int step = 0; step < 1000 && norm >= 1e-2; ++step) {
            for (std::size_t i = 0; i < 8; ++i) g[i] = 2.0f * theta[i];
            opt.apply(refs, {});
            norm = 0;
            for (std::size_t i = 0; i < 8; ++i) norm += theta[i] * (double)theta[i];
            norm = std::sqrt(norm);
        }
        require(norm < 1e-2, "quadratic convergence failed for " + to_string(kind));
    }
}

// ---------------------------------------------------------------------------
// 3. Architecture budget: exact parameter count and serialized size.
// ---------------------------------------------------------------------------

void criterion3() {
    Rng r(1);
    Network net = Network::build_cidis(r);
    require(net.param_count() == 5304862,
            "param count is " + std::to_string(net.param_count()) + ", want 5304862");
    double mb = static_cast<double>(net.payload_bytes()) / 1e6;
    require(std::abs(mb - 21.2) <= 0.5,
            "weight payload " + std::to_string(mb) + " MB not within 0.5 of 21.2");
}

// ---------------------------------------------------------------------------
// 4. Transfer-learning conservation.
// ---------------------------------------------------------------------------

std::map<std::string, std::vector<float>> snapshot_params(Network& net,
                                                          const std::string& prefix) {
    std::map<std::string, std::vector<float>> out;
    for (auto& p : net.params())
        if (p.name.rfind(prefix, 0) == 0)
            out[p.name] = std::vector<float>(p.value->data(), p.value->data() + p.value->size());
    return out;
}

void criterion4() {
    BuildOptions opts;
    opts.input_size = 16;
    opts.block_widths = {4, 6, 8};
    opts.hidden = 10;

    Dataset synth = synth_dataset(6, 505, 16);
    split_dataset(synth, 1);
    Dataset real = real_like_dataset(6, 909, 16);
    split_dataset(real, 2);

    TrainConfig cfg1;
    cfg1.optimizer = OptimKind::adam;
    cfg1.epochs = 2;
    cfg1.batch_size = 8;
    cfg1.seed = 13;
    cfg1.stage = "cnn1";
    TrainConfig cfg2 = cfg1;
    cfg2.epochs = 2;
    cfg2.seed = 14;
    cfg2.stage = "cnn2";
    cfg2.dropout_layers = 2;

    fs::path dir = fresh_dir("cidis_acc_c4");
    auto two = run_stage1_stage2(synth, real, cfg1, cfg2, opts, dir);

    Network n1 = load_checkpoint(two.ckpt1);
    Network n2 = load_checkpoint(two.ckpt2);
    auto conv1 = snapshot_params(n1, "conv");
    auto conv2 = snapshot_params(n2, "conv");
    require(conv1.size() == conv2.size() && !conv1.empty(), "conv param sets differ in shape");
    for (const auto& [name, vals] : conv1) {
        const auto& after = conv2.at(name);
        require(vals.size() == after.size() &&
                    std::memcmp(vals.data(), after.data(), vals.size() * sizeof(float)) == 0,
                "frozen " + name + " changed across stage 2");
    }

    // one nonzero-gradient step moves at least one head parameter
    Network net = load_checkpoint(two.ckpt1);
    Rng head(Rng::fork(21, 1));
    net.prepare_transfer(head, 1, 0.2f);
    auto head_before = snapshot_params(net, "fc");
    auto idx = real.subset_indices(Split::train);
    std::vector<std::size_t> chunk(idx.begin(), idx.begin() + 8);
    Batch b = make_batch(real, chunk, 16);
    Rng drop(Rng::fork(21, 2));
    auto logits = net.forward(b.images, Mode::train, &drop);
    auto res = softmax_xent(logits, b.labels);
    net.backward(res.grad_logits);
    Optimizer opt(OptimKind::adam);
    opt.apply(net.params(), net.frozen());
    auto head_after = snapshot_params(net, "fc");
    bool moved = false;
    for (const auto& [name, vals] : head_before)
        if (std::memcmp(vals.data(), head_after.at(name).data(),
                        vals.size() * sizeof(float)) != 0)
            moved = true;
    require(moved, "no head parameter moved after one optimizer step");
    auto conv_now = snapshot_params(net, "conv");
    auto conv_ckpt = snapshot_params(n1, "conv");
    for (const auto& [name, vals] : conv_ckpt)
        require(std::memcmp(vals.data(), conv_now.at(name).data(),
                            vals.size() * sizeof(float)) == 0,
                "frozen " + name + " moved during the head step");
}

// ---------------------------------------------------------------------------
// 5. Scaled two-stage analog: transfer beats scratch by >= 2 points.
// ---------------------------------------------------------------------------

void criterion5() {
    auto t0 = clk::now();

    Dataset synth = synth_dataset(800, 1001, 64);
    split_dataset(synth, 7);
    Dataset real = real_like_dataset(100, 2002, 64);  // 400 images, distinct seed
    split_dataset(real, 8);

    BuildOptions opts;  // proportionally shrunken: 64x64 input, kFullWidths/2
    opts.input_size = 64;
    opts.block_widths = {16, 32, 64};
    opts.hidden = 50;

    TrainConfig cfg1;
    cfg1.optimizer = OptimKind::adam;
    cfg1.epochs = 8;
    cfg1.batch_size = 16;
    cfg1.seed = 5;
    cfg1.stage = "cnn1";

    TrainConfig cfg2;
    cfg2.optimizer = OptimKind::adam;
    cfg2.epochs = 40;
    cfg2.batch_size = 16;
    cfg2.seed = 6;
    cfg2.stage = "cnn2";
    cfg2.dropout_layers = 2;

    fs::path dir = fresh_dir("cidis_acc_c5");
    auto two = run_stage1_stage2(synth, real, cfg1, cfg2, opts, dir);
    double s1_train = two.log1.epochs.back().train_acc;

    TrainConfig cfgS = cfg2;
    cfgS.stage = "scratch-real";
    cfgS.seed = 9;
    BuildOptions optsS = opts;
    optsS.dropout_layers = cfgS.dropout_layers;
    Rng rs(Rng::fork(cfgS.seed, 1));
    Network scratch = Network::build(optsS, rs);
    train(scratch, real, cfgS, dir / "scratch.ckpt");

    EvalReport r2 = evaluate(two.ckpt2, real, Split::test, 32, 0, 0);
    EvalReport rS = evaluate(dir / "scratch.ckpt", real, Split::test, 32, 0, 0);

    std::printf("  [5] stage-1 train acc %.4f; test: cnn2 %.4f scratch %.4f (%.0f s)\n",
                s1_train, r2.accuracy, rS.accuracy, secs_since(t0));
    require(s1_train >= 0.99, "stage-1 synthetic train accuracy " + std::to_string(s1_train) +
                                  " < 0.99");
    require(r2.accuracy >= rS.accuracy + 0.02,
            "transfer " + std::to_string(r2.accuracy) + " does not beat scratch " +
                std::to_string(rS.accuracy) + " by 2 points");
    require(secs_since(t0) <= 1800.0, "experiment exceeded the 30-minute budget");
}

// ---------------------------------------------------------------------------
// 6. Split arithmetic on the paper-sized corpus.
// ---------------------------------------------------------------------------

Dataset label_only_dataset(const std::array<std::size_t, 4>& counts) {
    Dataset ds;
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < counts[c]; ++i) {
            ImageU8 img = ImageU8::make(1, 1, 3);
            ds.samples.push_back({std::move(img), c, "x"});
        }
    return ds;
}

void criterion6() {
    Dataset ds = label_only_dataset({1430, 815, 560, 690});  // 3,495 samples
    split_dataset(ds, 31);
    auto n_train = ds.subset_indices(Split::train).size();
    auto n_val = ds.subset_indices(Split::validation).size();
    auto n_test = ds.subset_indices(Split::test).size();
    require(n_train == 2097 && n_test == 699 && n_val == 699,
            "split gave " + std::to_string(n_train) + "/" + std::to_string(n_test) + "/" +
                std::to_string(n_val) + ", want 2097/699/699");
    // stratified within +-1 of the per-class 60% floor
    std::array<std::size_t, 4> class_train{}, class_total{};
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        ++class_total[ds.samples[i].label];
        if (ds.split_assignment[i] == Split::train) ++class_train[ds.samples[i].label];
    }
    for (int c = 0; c < 4; ++c) {
        double want = 0.6 * static_cast<double>(class_total[c]);
        require(std::abs(static_cast<double>(class_train[c]) - want) <= 1.0,
                "class " + std::to_string(c) + " train share off by more than 1");
    }
    // a different seed moves members around but never the counts
    Dataset ds2 = label_only_dataset({1430, 815, 560, 690});
    split_dataset(ds2, 32);
    require(ds2.subset_indices(Split::train).size() == 2097, "counts changed with the seed");
}

// ---------------------------------------------------------------------------
// 7. Determinism of gen, split, train, evaluate.
// ---------------------------------------------------------------------------

void criterion7() {
    fs::path dir = fresh_dir("cidis_acc_c7");

    // gen: byte-identical images and manifest
    std::string m1 = generate_dataset(4, dir / "g1", 77, 32);
    std::string m2 = generate_dataset(4, dir / "g2", 77, 32);
    require(m1 == m2, "gen manifests differ");
    for (char level : {'A', 'B', 'C', 'D'})
        for (int i = 0; i < 4; ++i) {
            char rel[64];
            std::snprintf(rel, sizeof(rel), "level_%c/%06d.png", level, i);
            require(slurp(dir / "g1" / rel) == slurp(dir / "g2" / rel),
                    std::string("gen image bytes differ at ") + rel);
        }

    // split: identical assignment files
    Dataset ds = synth_dataset(6, 123, 16);
    split_dataset(ds, 9);
    save_split(ds, dir / "s1.split");
    Dataset ds2 = synth_dataset(6, 123, 16);
    split_dataset(ds2, 9);
    save_split(ds2, dir / "s2.split");
    require(slurp(dir / "s1.split") == slurp(dir / "s2.split"), "split files differ");

    // train: byte-identical checkpoints
    BuildOptions opts;
    opts.input_size = 16;
    opts.block_widths = {4, 6, 8};
    opts.hidden = 10;
    TrainConfig cfg;
    cfg.optimizer = OptimKind::nadam;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 77;
    cfg.stage = "cnn1";
    for (int run = 0; run < 2; ++run) {
        Rng init(Rng::fork(cfg.seed, 1));
        Network net = Network::build(opts, init);
        train(net, ds, cfg, dir / ("t" + std::to_string(run) + ".ckpt"));
    }
    require(slurp(dir / "t0.ckpt") == slurp(dir / "t1.ckpt"), "checkpoints differ across runs");

    // evaluate: identical reports once latency is excluded
    EvalReport a = evaluate(dir / "t0.ckpt", ds, Split::test, 8, 0, 3);
    EvalReport b = evaluate(dir / "t0.ckpt", ds, Split::test, 8, 0, 3);
    require(a.accuracy == b.accuracy && a.loss == b.loss && a.confusion == b.confusion &&
                a.model_size_mb == b.model_size_mb,
            "evaluation reports differ beyond latency");
}

// ---------------------------------------------------------------------------
// 8. Generator contract: layout, manifest, ripeness monotonicity.
// ---------------------------------------------------------------------------

void criterion8() {
    fs::path dir = fresh_dir("cidis_acc_c8");
    std::string manifest = generate_dataset(8, dir / "d", 7, 64);
    std::size_t lines = std::count(manifest.begin(), manifest.end(), '\n');
    require(lines == 32, "manifest has " + std::to_string(lines) + " lines, want 32");
    std::size_t files = 0;
    for (char level : {'A', 'B', 'C', 'D'}) {
        fs::path sub = dir / "d" / (std::string("level_") + level);
        require(fs::is_directory(sub), std::string("missing directory level_") + level);
        for (const auto& e : fs::directory_iterator(sub))
            if (e.path().extension() == ".png") ++files;
    }
    require(files == 32, std::to_string(files) + " png files, want 32");
    require(fs::exists(dir / "d" / "manifest.txt"), "manifest.txt not written");

    // hue drifts green -> brown monotonically across the 8 sublevels, and
    // dark spots appear only from C on
    auto sub = sublevels();
    double prev_hue = 1e9;
    for (int i = 0; i < 8; ++i) {
        SceneConfig cfg;
        cfg.sublevel = i;
        cfg.background = Background::lightblue;
        cfg.banana_count = 1;
        cfg.rail = 1;
        cfg.position = 15;
        cfg.seed = 99 + i;
        RenderResult r = render_scene(cfg, 96);

        double hue_sum = 0, dark = 0, n = 0;
        float dominant = std::max({(float)sub[i].base[0], (float)sub[i].base[1],
                                   (float)sub[i].base[2]});
        for (std::uint32_t y = 0; y < 96; ++y)
            for (std::uint32_t x = 0; x < 96; ++x) {
                if (!r.mask[y * 96 + x]) continue;
                ++n;
                hue_sum += rgb_to_hue(r.image.at(x, y, 0), r.image.at(x, y, 1), r.image.at(x, y, 2));
                float mx = std::max({(float)r.image.at(x, y, 0), (float)r.image.at(x, y, 1),
                                     (float)r.image.at(x, y, 2)});
                if (mx < 0.45f * dominant) ++dark;
            }
        require(n > 0, "empty fruit mask");
        double hue = hue_sum / n;
        require(hue < prev_hue, "hue not strictly decreasing at sublevel " + std::to_string(i));
        prev_hue = hue;
        double dark_frac = dark / n;
        if (i < 4)
            require(dark_frac == 0.0, "spots on an A/B sublevel");
        else
            require(dark_frac > 0.0, "no spots on sublevel " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// 9. Table-5 grid mechanics at desk scale.
// ---------------------------------------------------------------------------

void criterion9() {
    Dataset synth = synth_dataset(6, 111, 16);
    split_dataset(synth, 11);
    Dataset real = real_like_dataset(6, 222, 16);
    split_dataset(real, 12);

    BuildOptions opts;
    opts.input_size = 16;
    opts.block_widths = {4, 6, 8};
    opts.hidden = 10;

    // the six Table-5 rows (optimizer x dropout with the paper's lr), epochs
    // cut to desk scale
    std::string text =
        "stage = cnn1\noptimizer = adam\nlr = 0.01\nepochs = 2\nbatch_size = 8\nseed = 3\n\n"
        "id = nadam_d2\noptimizer = nadam\nlr = 0.001\ndropout_layers = 2\nepochs = 2\n"
        "batch_size = 8\nseed = 21\n\n"
        "id = nadam_d1\noptimizer = nadam\nlr = 0.001\ndropout_layers = 1\nepochs = 2\n"
        "batch_size = 8\nseed = 22\n\n"
        "id = adagrad_d2\noptimizer = adagrad\nlr = 0.01\ndropout_layers = 2\nepochs = 2\n"
        "batch_size = 8\nseed = 23\n\n"
        "id = adagrad_d1\noptimizer = adagrad\nlr = 0.001\ndropout_layers = 1\nepochs = 2\n"
        "batch_size = 8\nseed = 24\n\n"
        "id = adam_d2\noptimizer = adam\nlr = 0.001\ndropout_layers = 2\nepochs = 2\n"
        "batch_size = 8\nseed = 25\n\n"
        "id = adam_d1\noptimizer = adam\nlr = 0.001\ndropout_layers = 1\nepochs = 2\n"
        "batch_size = 8\nseed = 26\n";
    GridSpec grid = parse_grid(text);
    require(grid.cells.size() == 6, "grid does not have six cells");

    fs::path dir1 = fresh_dir("cidis_acc_c9a");
    GridOutcome out1 = run_grid(grid, synth, real, opts, dir1);
    require(out1.cells.size() == 6, "grid did not run six cells");
    for (const auto& cell : out1.cells) {
        require(cell.ok, "cell " + cell.cfg.id + " failed: " + cell.error);
        require(fs::exists(dir1 / (cell.cfg.id + ".csv")), "missing report for " + cell.cfg.id);
        require(cell.test_report.total() == cell.test_report.trace() ||
                    cell.test_report.accuracy ==
                        static_cast<double>(cell.test_report.trace()) /
                            static_cast<double>(cell.test_report.total()),
                "report accuracy does not match its confusion matrix");
    }
    require(out1.ranking.size() == 6, "ranking does not cover six cells");
    for (std::size_t k = 1; k < 6; ++k)
        require(out1.cells[out1.ranking[k - 1]].test_report.accuracy >=
                    out1.cells[out1.ranking[k]].test_report.accuracy,
                "summary not ranked by test accuracy");

    fs::path dir2 = fresh_dir("cidis_acc_c9b");
    GridOutcome out2 = run_grid(grid, synth, real, opts, dir2);
    require(out2.cells[out2.ranking[0]].cfg.id == out1.cells[out1.ranking[0]].cfg.id,
            "best cell changed across two seeded runs");
    for (std::size_t k = 0; k < 6; ++k)
        require(out2.cells[k].test_report.accuracy == out1.cells[k].test_report.accuracy,
                "cell accuracy changed across two seeded runs");
}

struct Criterion {
    int id;
    const char* name;
    void (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient correctness vs finite differences", criterion1},
    {2, "optimizer hand values and quadratic convergence", criterion2},
    {3, "parameter count and serialized size budget", criterion3},
    {4, "transfer freezes conv parameters bit-exactly", criterion4},
    {6, "paper-sized split arithmetic 2097/699/699", criterion6},
    {7, "gen/split/train/evaluate determinism", criterion7},
    {8, "generator layout and ripeness monotonicity", criterion8},
    {9, "six-row grid mechanics and ranking", criterion9},
    {5, "scaled two-stage analog beats scratch by 2 points", criterion5},
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : kCriteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        auto t0 = clk::now();
        try {
            c.run();
            std::printf("[PASS] criterion %d: %s (%.1fs)\n", c.id, c.name, secs_since(t0));
        } catch (const Failure& f) {
            std::printf("[FAIL] criterion %d: %s: %s\n", c.id, c.name, f.why.c_str());
            ++failures;
        } catch (const std::exception& e) {
            std::printf("[FAIL] criterion %d: %s: unexpected error: %s\n", c.id, c.name,
                        e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
