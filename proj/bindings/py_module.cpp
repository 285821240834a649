// Python bindings for the pipeline: tensors, layers, model, optimizers,
// synthetic generation, datasets, training and evaluation.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "cidis/config.hpp"
#include "cidis/data.hpp"
#include "cidis/error.hpp"
#include "cidis/eval.hpp"
#include "cidis/image.hpp"
#include "cidis/layers.hpp"
#include "cidis/model.hpp"
#include "cidis/optim.hpp"
#include "cidis/synth.hpp"
#include "cidis/tensor.hpp"
#include "cidis/train.hpp"

namespace py = pybind11;
using namespace cidis;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_numpy(const FloatArray& arr) {
    std::vector<std::uint32_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape[i] = static_cast<std::uint32_t>(arr.shape(i));
    std::vector<float> data(arr.data(), arr.data() + arr.size());
    return Tensor::from(shape, std::move(data));
}

py::array_t<float> tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(float));
    return out;
}

py::array_t<std::uint8_t> image_to_numpy(const ImageU8& img) {
    py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(img.height),
                                   static_cast<py::ssize_t>(img.width),
                                   static_cast<py::ssize_t>(img.channels)});
    std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
    return out;
}

ImageU8 image_from_numpy(const py::array_t<std::uint8_t, py::array::c_style>& arr) {
    if (arr.ndim() != 3) throw ShapeError("image array must be (height, width, channels)");
    ImageU8 img = ImageU8::make(static_cast<std::uint32_t>(arr.shape(1)),
                                static_cast<std::uint32_t>(arr.shape(0)),
                                static_cast<std::uint32_t>(arr.shape(2)));
    std::memcpy(img.pixels.data(), arr.data(), img.pixels.size());
    return img;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "banana ripeness pipeline: synthetic generation, CNN training, evaluation";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    // --- tensor & rng ---
    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("next_u64", &Rng::next_u64)
        .def("next_float", py::overload_cast<>(&Rng::next_float))
        .def("next_range", &Rng::next_range, py::arg("lo"), py::arg("hi"))
        .def_static("fork", &Rng::fork, py::arg("seed"), py::arg("k"));

    py::class_<Tensor>(m, "Tensor")
        .def(py::init(&tensor_from_numpy), py::arg("array"))
        .def_static("zeros",
                    [](const std::vector<std::uint32_t>& shape) { return Tensor::zeros(shape); },
                    py::arg("shape"))
        .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
        .def("numpy", &tensor_to_numpy)
        .def("__len__", &Tensor::size);

    m.def("serialize", [](const Tensor& t) { return py::bytes(
              reinterpret_cast<const char*>(serialize(t).data()), serialize(t).size()); });
    m.def("deserialize", [](const py::bytes& b) {
        std::string s = b;
        return deserialize(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    });

    // --- functional layer forwards ---
    py::enum_<Mode>(m, "Mode").value("train", Mode::train).value("eval", Mode::eval);

    m.def("conv2d", [](const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                       int pad) { return conv2d_forward(x, kernel, bias, stride, pad); },
          py::arg("x"), py::arg("kernel"), py::arg("bias"), py::arg("stride") = 1,
          py::arg("pad") = 1);
    m.def("relu", [](const Tensor& x) { return relu_forward(x); }, py::arg("x"));
    m.def("maxpool2d",
          [](const Tensor& x, int window, int stride) {
              return maxpool2d_forward(x, window, stride);
          },
          py::arg("x"), py::arg("window") = 2, py::arg("stride") = 2);
    m.def("dense", [](const Tensor& x, const Tensor& w, const Tensor& b) {
              return dense_forward(x, w, b);
          },
          py::arg("x"), py::arg("weight"), py::arg("bias"));

    py::class_<SoftmaxXentResult>(m, "SoftmaxXentResult")
        .def_readonly("loss", &SoftmaxXentResult::loss)
        .def_property_readonly("probs",
                               [](const SoftmaxXentResult& r) { return tensor_to_numpy(r.probs); })
        .def_property_readonly("grad_logits", [](const SoftmaxXentResult& r) {
            return tensor_to_numpy(r.grad_logits);
        });
    m.def("softmax_xent",
          [](const Tensor& logits, const std::vector<int>& labels) {
              return softmax_xent(logits, labels);
          },
          py::arg("logits"), py::arg("labels"));

    // --- optimizer step rules ---
    py::enum_<OptimKind>(m, "OptimKind")
        .value("sgd", OptimKind::sgd)
        .value("adagrad", OptimKind::adagrad)
        .value("adam", OptimKind::adam)
        .value("nadam", OptimKind::nadam);
    m.def("optim_default_lr", &Optimizer::default_lr, py::arg("kind"));
    m.def("step_sgd", &step_sgd, py::arg("param"), py::arg("grad"), py::arg("lr"));
    m.def("step_adagrad", &step_adagrad, py::arg("param"), py::arg("grad"), py::arg("g_acc"),
          py::arg("lr"), py::arg("eps") = 1e-8f);
    m.def("step_adam", &step_adam, py::arg("param"), py::arg("grad"), py::arg("m"),
          py::arg("v"), py::arg("t"), py::arg("lr"), py::arg("beta1") = 0.9f,
          py::arg("beta2") = 0.999f, py::arg("eps") = 1e-8f);
    m.def("step_nadam", &step_nadam, py::arg("param"), py::arg("grad"), py::arg("m"),
          py::arg("v"), py::arg("t"), py::arg("lr"), py::arg("beta1") = 0.9f,
          py::arg("beta2") = 0.999f, py::arg("eps") = 1e-8f);

    // --- model ---
    py::class_<BuildOptions>(m, "BuildOptions")
        .def(py::init<>())
        .def_readwrite("input_size", &BuildOptions::input_size)
        .def_readwrite("block_widths", &BuildOptions::block_widths)
        .def_readwrite("hidden", &BuildOptions::hidden)
        .def_readwrite("dropout_layers", &BuildOptions::dropout_layers)
        .def_readwrite("dropout_rate", &BuildOptions::dropout_rate)
        .def_readwrite("num_classes", &BuildOptions::num_classes);

    py::class_<Network>(m, "Network")
        .def_static("build",
                    [](const BuildOptions& opts, std::uint64_t seed) {
                        Rng rng(seed);
                        return Network::build(opts, rng);
                    },
                    py::arg("options"), py::arg("seed"))
        .def_static("build_cidis",
                    [](std::uint64_t seed) {
                        Rng rng(seed);
                        return Network::build_cidis(rng);
                    },
                    py::arg("seed"))
        .def("forward",
             [](Network& net, const Tensor& batch) {
                 return net.forward(batch, Mode::eval, nullptr);
             },
             py::arg("batch"))
        .def("param_count", &Network::param_count)
        .def("payload_bytes", &Network::payload_bytes)
        .def("manifest", &Network::manifest)
        .def("fingerprint", &Network::fingerprint)
        .def("frozen_prefix", &Network::frozen_prefix)
        .def_property_readonly("frozen",
                               [](const Network& n) {
                                   return std::vector<std::string>(n.frozen().begin(),
                                                                   n.frozen().end());
                               })
        .def("prepare_transfer",
             [](Network& net, std::uint64_t seed, int dropout_layers, float dropout_rate) {
                 Rng rng(seed);
                 net.prepare_transfer(rng, dropout_layers, dropout_rate);
             },
             py::arg("seed"), py::arg("dropout_layers"), py::arg("dropout_rate") = 0.2f)
        .def_property_readonly("input_shape", &Network::input_shape)
        .def_property_readonly("num_classes", &Network::num_classes)
        .def_property_readonly(
            "epochs_seen", [](const Network& n) { return n.meta().epochs_seen; })
        .def_property_readonly("optimizer_used",
                               [](const Network& n) { return n.meta().optimizer; });

    m.def("save_checkpoint", &save_checkpoint, py::arg("network"), py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    // --- synthetic generation ---
    py::enum_<Background>(m, "Background")
        .value("orange", Background::orange)
        .value("purple", Background::purple)
        .value("brown", Background::brown)
        .value("lightblue", Background::lightblue)
        .value("platform", Background::platform)
        .value("wall", Background::wall)
        .value("tiles", Background::tiles)
        .value("marble", Background::marble);

    py::class_<SceneConfig>(m, "SceneConfig")
        .def(py::init<>())
        .def_readwrite("sublevel", &SceneConfig::sublevel)
        .def_readwrite("background", &SceneConfig::background)
        .def_readwrite("banana_count", &SceneConfig::banana_count)
        .def_readwrite("rail", &SceneConfig::rail)
        .def_readwrite("position", &SceneConfig::position)
        .def_readwrite("seed", &SceneConfig::seed)
        .def("describe", [](const SceneConfig& c) { return describe(c); });

    m.def("render_scene",
          [](const SceneConfig& cfg, std::uint32_t size) {
              RenderResult r = render_scene(cfg, size);
              py::array_t<std::uint8_t> mask({static_cast<py::ssize_t>(size),
                                              static_cast<py::ssize_t>(size)});
              std::memcpy(mask.mutable_data(), r.mask.data(), r.mask.size());
              return py::make_tuple(image_to_numpy(r.image), mask, r.label);
          },
          py::arg("config"), py::arg("size") = 224,
          "Returns (image HxWx3 uint8, banana mask HxW, class label)");
    m.def("generate_dataset", &generate_dataset, py::arg("per_level"), py::arg("out_dir"),
          py::arg("seed"), py::arg("size") = 224, py::arg("format") = "png",
          py::arg("real_like") = false);
    m.def("synth_dataset", &synth_dataset, py::arg("per_level"), py::arg("seed"),
          py::arg("size"));
    m.def("real_like_dataset", &real_like_dataset, py::arg("per_level"), py::arg("seed"),
          py::arg("size"));
    m.def("rgb_to_hue", &rgb_to_hue, py::arg("r"), py::arg("g"), py::arg("b"));

    // --- datasets ---
    py::enum_<Split>(m, "Split")
        .value("train", Split::train)
        .value("test", Split::test)
        .value("validation", Split::validation);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def("__len__", [](const Dataset& d) { return d.samples.size(); })
        .def("label", [](const Dataset& d, std::size_t i) { return d.samples.at(i).label; },
             py::arg("i"))
        .def("origin", [](const Dataset& d, std::size_t i) { return d.samples.at(i).origin; },
             py::arg("i"))
        .def("image",
             [](const Dataset& d, std::size_t i) { return image_to_numpy(d.samples.at(i).image); },
             py::arg("i"))
        .def("add",
             [](Dataset& d, const py::array_t<std::uint8_t, py::array::c_style>& img, int label,
                const std::string& origin) {
                 d.samples.push_back(Sample{image_from_numpy(img), label, origin});
             },
             py::arg("image"), py::arg("label"), py::arg("origin") = "")
        .def("class_counts", &Dataset::class_counts)
        .def("has_split", &Dataset::has_split)
        .def("subset_indices", &Dataset::subset_indices, py::arg("split"))
        .def_property_readonly("split_assignment",
                               [](const Dataset& d) { return d.split_assignment; });

    m.def("ingest_real",
          [](const std::filesystem::path& root, const std::filesystem::path& exclusions,
             std::uint32_t target_size) {
              IngestResult r = ingest_real(root, exclusions, target_size);
              return py::make_tuple(std::move(r.dataset), r.skipped);
          },
          py::arg("root"), py::arg("exclusions") = std::filesystem::path{},
          py::arg("target_size") = 224, "Returns (dataset, skipped report lines)");
    m.def("split_dataset",
          [](Dataset& ds, std::uint64_t seed) {
              std::string warning;
              split_dataset(ds, seed, &warning);
              return warning;
          },
          py::arg("dataset"), py::arg("seed"), "Returns the stratification warning, if any");
    m.def("augment_rotations",
          [](const Dataset& ds, const std::vector<int>& turns) {
              return augment_rotations(ds, turns);
          },
          py::arg("dataset"), py::arg("turns"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("save_split", &save_split, py::arg("dataset"), py::arg("path"));
    m.def("load_split", &load_split, py::arg("dataset"), py::arg("path"));

    py::class_<Batch>(m, "Batch")
        .def_property_readonly("images", [](const Batch& b) { return tensor_to_numpy(b.images); })
        .def_readonly("labels", &Batch::labels);
    m.def("make_batch",
          [](const Dataset& ds, const std::vector<std::size_t>& idx, std::uint32_t size) {
              return make_batch(ds, idx, size);
          },
          py::arg("dataset"), py::arg("indices"), py::arg("size"));

    // --- training ---
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("optimizer", &TrainConfig::optimizer)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("dropout_layers", &TrainConfig::dropout_layers)
        .def_readwrite("dropout_rate", &TrainConfig::dropout_rate)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("stage", &TrainConfig::stage)
        .def_readwrite("id", &TrainConfig::id);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("train_loss", &EpochStats::train_loss)
        .def_readonly("train_acc", &EpochStats::train_acc)
        .def_readonly("val_loss", &EpochStats::val_loss)
        .def_readonly("val_acc", &EpochStats::val_acc)
        .def_readonly("seconds", &EpochStats::seconds);

    py::class_<RunLog>(m, "RunLog")
        .def_readonly("epochs", &RunLog::epochs)
        .def_readonly("checkpoint_path", &RunLog::checkpoint_path)
        .def("to_csv", &RunLog::to_csv);

    m.def("train", &train, py::arg("network"), py::arg("dataset"), py::arg("config"),
          py::arg("checkpoint_path"));

    py::class_<TwoStageResult>(m, "TwoStageResult")
        .def_readonly("ckpt1", &TwoStageResult::ckpt1)
        .def_readonly("ckpt2", &TwoStageResult::ckpt2)
        .def_readonly("log1", &TwoStageResult::log1)
        .def_readonly("log2", &TwoStageResult::log2);
    m.def("run_stage1_stage2", &run_stage1_stage2, py::arg("synth_dataset"),
          py::arg("real_dataset"), py::arg("config1"), py::arg("config2"), py::arg("options"),
          py::arg("out_dir"));

    // --- evaluation ---
    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("subset", &EvalReport::subset)
        .def_readonly("accuracy", &EvalReport::accuracy)
        .def_readonly("loss", &EvalReport::loss)
        .def_readonly("confusion", &EvalReport::confusion)
        .def_readonly("mean_latency_ms", &EvalReport::mean_latency_ms)
        .def_readonly("model_size_mb", &EvalReport::model_size_mb)
        .def_readonly("config", &EvalReport::config)
        .def("total", &EvalReport::total)
        .def("trace", &EvalReport::trace)
        .def("to_text", &EvalReport::to_text);

    m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("dataset"), py::arg("subset"),
          py::arg("batch_size") = 50, py::arg("warmup") = 10, py::arg("timed") = 100);
    m.def("evaluate_net", &evaluate_net, py::arg("network"), py::arg("dataset"),
          py::arg("subset"), py::arg("batch_size") = 50, py::arg("warmup") = 10,
          py::arg("timed") = 100);

    // --- grid ---
    py::class_<GridSpec>(m, "GridSpec")
        .def_readonly("stage1", &GridSpec::stage1)
        .def_readonly("has_stage1", &GridSpec::has_stage1)
        .def_readonly("cells", &GridSpec::cells);
    m.def("parse_grid", &parse_grid, py::arg("text"), py::arg("defaults") = TrainConfig{});

    py::class_<GridCellResult>(m, "GridCellResult")
        .def_readonly("cfg", &GridCellResult::cfg)
        .def_readonly("ok", &GridCellResult::ok)
        .def_readonly("error", &GridCellResult::error)
        .def_readonly("test_report", &GridCellResult::test_report)
        .def_readonly("val_report", &GridCellResult::val_report)
        .def_readonly("log", &GridCellResult::log);
    py::class_<GridOutcome>(m, "GridOutcome")
        .def_readonly("stage1_ckpt", &GridOutcome::stage1_ckpt)
        .def_readonly("cells", &GridOutcome::cells)
        .def_readonly("ranking", &GridOutcome::ranking)
        .def_readonly("summary_csv", &GridOutcome::summary_csv)
        .def_readonly("summary_text", &GridOutcome::summary_text);
    m.def("run_grid", &run_grid, py::arg("grid"), py::arg("synth_dataset"),
          py::arg("real_dataset"), py::arg("options"), py::arg("out_dir"));
    m.def("report_csv_header", &report_csv_header);
    m.def("report_csv_row", &report_csv_row, py::arg("id"), py::arg("report"), py::arg("config"));

    // --- misc ---
    m.def("day_to_level", &day_to_level, py::arg("day"));
    m.def("level_label", &level_label, py::arg("level"));
    m.def("label_level", &label_level, py::arg("label"));
}
