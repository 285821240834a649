#include "cidis/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "cidis/error.hpp"
#include "cidis/layers.hpp"

namespace cidis {

void validate(const TrainConfig& cfg) {
    // negative lr is the "use the optimizer default" sentinel
    if (std::isnan(cfg.lr) || cfg.lr == 0.0f)
        throw ConfigError("learning rate must be positive (or negative for the default)");
    if (cfg.dropout_layers != 1 && cfg.dropout_layers != 2)
        throw ConfigError("dropout_layers must be 1 or 2, got " +
                          std::to_string(cfg.dropout_layers));
    if (cfg.dropout_rate < 0.0f || cfg.dropout_rate >= 1.0f)
        throw ConfigError("dropout rate must lie in [0,1)");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (cfg.epochs < 0) throw ConfigError("epoch count must be non-negative");
    if (cfg.stage != "cnn1" && cfg.stage != "cnn2" && cfg.stage != "scratch-real")
        throw ConfigError("stage must be cnn1, cnn2 or scratch-real; got '" + cfg.stage + "'");
}

std::string RunLog::to_csv() const {
    std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
    char line[160];
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss,
                      e.train_acc, e.val_loss, e.val_acc, e.seconds);
        out += line;
    }
    return out;
}

namespace {

// Per-sample outputs of the frozen deterministic prefix, so fine-tuning only
// pays for the trainable tail. Rows are flattened feature vectors.
struct FeatureCache {
    std::size_t prefix = 0;  // layers [0, prefix) are cached
    std::size_t dim = 0;
    std::vector<float> rows;  // ds.samples.size() x dim

    bool active() const { return prefix > 0; }
};

std::uint32_t net_input_size(const Network& net) { return net.input_shape()[1]; }

FeatureCache build_cache(Network& net, const Dataset& ds, int batch_size) {
    FeatureCache cache;
    std::size_t prefix = net.frozen_prefix();
    if (prefix == 0 || ds.samples.empty()) return cache;
    cache.prefix = prefix;

    const std::uint32_t size = net_input_size(net);
    std::vector<std::size_t> idx(ds.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
        std::span<const std::size_t> chunk(idx.data() + start, end - start);
        Batch b = make_batch(ds, chunk, size);
        Tensor feats = net.forward_range(0, prefix, b.images, Mode::eval, nullptr);
        if (feats.rank() != 2)
            throw ContractError("frozen prefix must end on a flattened feature map");
        if (cache.dim == 0) {
            cache.dim = feats.dim(1);
            cache.rows.assign(ds.samples.size() * cache.dim, 0.0f);
        }
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            std::memcpy(cache.rows.data() + chunk[r] * cache.dim,
                        feats.data() + r * cache.dim, cache.dim * sizeof(float));
        }
    }
    return cache;
}

Tensor gather_rows(const FeatureCache& cache, std::span<const std::size_t> indices) {
    Tensor out = Tensor::zeros(
        {static_cast<std::uint32_t>(indices.size()), static_cast<std::uint32_t>(cache.dim)});
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::memcpy(out.data() + r * cache.dim, cache.rows.data() + indices[r] * cache.dim,
                    cache.dim * sizeof(float));
    return out;
}

struct PassResult {
    double loss_sum = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
};

void accumulate(PassResult& acc, const Tensor& logits, std::span<const int> labels,
                double mean_loss) {
    std::size_t b = logits.dim(0);
    std::size_t k = logits.dim(1);
    acc.loss_sum += mean_loss * static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (logits[r * k + c] > logits[r * k + best]) best = c;
        if (static_cast<int>(best) == labels[r]) ++acc.correct;
    }
    acc.total += b;
}

SubsetMetrics finish(const PassResult& acc) {
    SubsetMetrics m;
    if (acc.total) {
        m.loss = acc.loss_sum / static_cast<double>(acc.total);
        m.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.total);
    }
    return m;
}

SubsetMetrics eval_with_cache(Network& net, const Dataset& ds, Split subset, int batch_size,
                              const FeatureCache* cache) {
    auto idx = ds.subset_indices(subset);
    if (idx.empty()) return {};
    const std::uint32_t size = net_input_size(net);
    PassResult acc;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
        std::span<const std::size_t> chunk(idx.data() + start, end - start);
        Tensor logits;
        std::vector<int> labels;
        labels.reserve(chunk.size());
        for (std::size_t i : chunk) labels.push_back(ds.samples[i].label);
        if (cache && cache->active()) {
            Tensor feats = gather_rows(*cache, chunk);
            logits = net.forward_range(cache->prefix, net.layers().size(), feats, Mode::eval,
                                       nullptr);
        } else {
            Batch b = make_batch(ds, chunk, size);
            logits = net.forward(b.images, Mode::eval, nullptr);
        }
        auto sm = softmax_xent(logits, labels);
        accumulate(acc, logits, labels, sm.loss);
    }
    return finish(acc);
}

}  // namespace

SubsetMetrics eval_subset(Network& net, const Dataset& ds, Split subset, int batch_size) {
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!ds.has_split()) throw ContractError("dataset has no split assignment");
    return eval_with_cache(net, ds, subset, batch_size, nullptr);
}

RunLog train(Network& net, const Dataset& ds, const TrainConfig& cfg,
             const std::filesystem::path& checkpoint_path) {
    validate(cfg);
    if (!ds.has_split()) throw ContractError("dataset has no split assignment");

    Optimizer opt(cfg.optimizer, cfg.lr);
    Rng drop_rng(Rng::fork(cfg.seed, 2));
    FeatureCache cache = build_cache(net, ds, cfg.batch_size);
    const std::uint32_t size = net_input_size(net);
    const std::size_t n_layers = net.layers().size();

    RunLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto batches = epoch_batches(ds, Split::train, static_cast<std::size_t>(cfg.batch_size),
                                     cfg.seed, static_cast<std::uint64_t>(epoch));
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& idx = batches[bi];
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(ds.samples[i].label);

            Tensor logits;
            if (cache.active()) {
                Tensor feats = gather_rows(cache, idx);
                logits = net.forward_range(cache.prefix, n_layers, feats, Mode::train, &drop_rng);
            } else {
                Batch b = make_batch(ds, idx, size);
                logits = net.forward(b.images, Mode::train, &drop_rng);
            }
            auto sm = softmax_xent(logits, labels);
            if (!std::isfinite(sm.loss)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch + 1) + ", batch " +
                                      std::to_string(bi + 1));
            }
            net.backward(sm.grad_logits, cache.active() ? cache.prefix : 0);
            opt.apply(net.params(), net.frozen());
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        SubsetMetrics tr = eval_with_cache(net, ds, Split::train, cfg.batch_size, &cache);
        SubsetMetrics va = eval_with_cache(net, ds, Split::validation, cfg.batch_size, &cache);
        stats.train_loss = tr.loss;
        stats.train_acc = tr.accuracy;
        stats.val_loss = va.loss;
        stats.val_acc = va.accuracy;
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(stats);
    }

    net.meta().epochs_seen += static_cast<std::uint32_t>(cfg.epochs);
    net.meta().optimizer = to_string(cfg.optimizer);
    net.meta().seed = cfg.seed;
    save_checkpoint(net, checkpoint_path);
    log.checkpoint_path = checkpoint_path.string();
    return log;
}

TwoStageResult run_stage1_stage2(const Dataset& synth_ds, const Dataset& real_ds,
                                 const TrainConfig& cfg1, const TrainConfig& cfg2,
                                 const BuildOptions& opts,
                                 const std::filesystem::path& out_dir) {
    validate(cfg1);
    validate(cfg2);
    if (!synth_ds.has_split() || !real_ds.has_split())
        throw ContractError("both datasets need split assignments");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    TwoStageResult res;
    Rng init_rng(Rng::fork(cfg1.seed, 1));
    Network net = Network::build(opts, init_rng);

    res.ckpt1 = out_dir / "cnn1.ckpt";
    res.log1 = train(net, synth_ds, cfg1, res.ckpt1);

    Rng head_rng(Rng::fork(cfg2.seed, 1));
    net.prepare_transfer(head_rng, cfg2.dropout_layers, cfg2.dropout_rate);

    res.ckpt2 = out_dir / "cnn2.ckpt";
    res.log2 = train(net, real_ds, cfg2, res.ckpt2);
    return res;
}

}  // namespace cidis
