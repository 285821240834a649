import math

import numpy as np
import pytest

import cidis


def test_rng_determinism():
    a, b = cidis.Rng(42), cidis.Rng(42)
    assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]
    assert cidis.Rng.fork(7, 1) == cidis.Rng.fork(7, 1)
    assert cidis.Rng.fork(7, 1) != cidis.Rng.fork(7, 2)
    x = cidis.Rng(1).next_float()
    assert 0.0 <= x < 1.0


def test_tensor_numpy_roundtrip():
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    t = cidis.Tensor(arr)
    assert t.shape == [2, 3, 4]
    np.testing.assert_array_equal(t.numpy(), arr)
    z = cidis.Tensor.zeros([3, 5])
    assert z.numpy().sum() == 0.0


def test_layer_forwards():
    x = cidis.Tensor(np.array([[-1.0, 2.0], [3.0, -4.0]], dtype=np.float32))
    np.testing.assert_array_equal(
        cidis.relu(x).numpy(), [[0.0, 2.0], [3.0, 0.0]]
    )
    img = cidis.Tensor(np.random.RandomState(0).rand(1, 3, 8, 8).astype(np.float32))
    pooled = cidis.maxpool2d(img, window=2, stride=2)
    assert pooled.shape == [1, 3, 4, 4]
    res = cidis.softmax_xent(
        cidis.Tensor(np.zeros((2, 4), dtype=np.float32)), [0, 3]
    )
    assert res.loss == pytest.approx(math.log(4.0), rel=1e-6)
    assert res.probs.shape == (2, 4)


def test_optimizer_hand_values():
    p = cidis.Tensor(np.array([1.0], dtype=np.float32))
    g = cidis.Tensor(np.array([0.5], dtype=np.float32))
    cidis.step_sgd(p, g, 0.1)
    assert p.numpy()[0] == pytest.approx(0.95)
    assert cidis.optim_default_lr(cidis.OptimKind.adam) == pytest.approx(0.001)


def test_render_scene_deterministic():
    cfg = cidis.SceneConfig()
    cfg.sublevel = 5
    cfg.background = cidis.Background.tiles
    cfg.seed = 99
    img1, mask1, label1 = cidis.render_scene(cfg, 32)
    img2, mask2, label2 = cidis.render_scene(cfg, 32)
    assert img1.shape == (32, 32, 3) and img1.dtype == np.uint8
    np.testing.assert_array_equal(img1, img2)
    np.testing.assert_array_equal(mask1, mask2)
    assert label1 == label2 == 2  # sublevel C1 -> class 2
    assert mask1.sum() > 0


def test_ripeness_hue_ordering():
    def mean_hue(sublevel):
        cfg = cidis.SceneConfig()
        cfg.sublevel = sublevel
        cfg.seed = 7
        img, mask, _ = cidis.render_scene(cfg, 48)
        ys, xs = np.nonzero(mask)
        hues = [cidis.rgb_to_hue(*img[y, x]) for y, x in zip(ys, xs)]
        return float(np.mean(hues))

    assert mean_hue(0) > mean_hue(7)  # green A1 -> brown D2


def test_dataset_split_and_batch():
    ds = cidis.synth_dataset(10, 11, 16)
    assert len(ds) == 40
    assert ds.class_counts() == [10, 10, 10, 10]
    warning = cidis.split_dataset(ds, 3)
    assert warning == ""
    n_train = len(ds.subset_indices(cidis.Split.train))
    n_test = len(ds.subset_indices(cidis.Split.test))
    n_val = len(ds.subset_indices(cidis.Split.validation))
    assert (n_train, n_test, n_val) == (24, 8, 8)
    batch = cidis.make_batch(ds, [0, 1, 2], 16)
    assert batch.images.shape == (3, 3, 16, 16)
    assert batch.images.max() <= 1.0
    assert batch.labels == [ds.label(0), ds.label(1), ds.label(2)]


def test_train_transfer_evaluate(tmp_path):
    opts = cidis.BuildOptions()
    opts.input_size = 16
    opts.block_widths = [4, 6, 8]
    opts.hidden = 10

    synth = cidis.synth_dataset(4, 21, 16)
    cidis.split_dataset(synth, 1)
    real = cidis.real_like_dataset(4, 22, 16)
    cidis.split_dataset(real, 2)

    cfg1 = cidis.TrainConfig()
    cfg1.optimizer = cidis.OptimKind.nadam
    cfg1.epochs = 2
    cfg1.batch_size = 4
    cfg1.seed = 5
    cfg1.stage = "cnn1"
    cfg2 = cidis.TrainConfig()
    cfg2.optimizer = cidis.OptimKind.nadam
    cfg2.epochs = 2
    cfg2.batch_size = 4
    cfg2.seed = 6
    cfg2.stage = "cnn2"
    cfg2.dropout_layers = 2

    result = cidis.run_stage1_stage2(synth, real, cfg1, cfg2, opts, tmp_path)
    assert result.ckpt1.exists() and result.ckpt2.exists()
    assert len(result.log1.epochs) == 2
    assert all(math.isfinite(e.train_loss) for e in result.log1.epochs)

    net = cidis.load_checkpoint(result.ckpt2)
    assert net.frozen_prefix() > 0
    assert len(net.frozen) > 0
    assert net.epochs_seen == 4  # cumulative across both stages

    report = cidis.evaluate(result.ckpt2, real, cidis.Split.test, 8, 0, 0)
    assert 0.0 <= report.accuracy <= 1.0
    assert report.total() == len(real.subset_indices(cidis.Split.test))
    assert report.accuracy == pytest.approx(report.trace() / report.total())
    assert "accuracy" in report.to_text()
    row = cidis.report_csv_row("cell", report, cfg2)
    assert row.startswith("cell,")


def test_forward_shape_and_params():
    opts = cidis.BuildOptions()
    opts.input_size = 16
    opts.block_widths = [4, 6, 8]
    opts.hidden = 10
    net = cidis.Network.build(opts, seed=3)
    assert net.param_count() > 0
    x = cidis.Tensor(np.random.RandomState(1).rand(2, 3, 16, 16).astype(np.float32))
    logits = net.forward(x)
    assert logits.shape == [2, 4]
    full = cidis.Network.build_cidis(seed=3)
    assert full.param_count() == 5_304_862


def test_grid_parse():
    spec = cidis.parse_grid(
        "stage = cnn1\nepochs = 2\n\nid = a\noptimizer = adam\n\nid = b\noptimizer = nadam\n"
    )
    assert spec.has_stage1
    assert [c.id for c in spec.cells] == ["a", "b"]
    assert spec.cells[1].optimizer == cidis.OptimKind.nadam


def test_errors_surface_as_python_exceptions():
    with pytest.raises(cidis.Error):
        cidis.synth_dataset(3, 1, 16)  # odd per-level count
    with pytest.raises(cidis.Error):
        cidis.load_checkpoint("/nonexistent/path.ckpt")


def test_day_level_mapping():
    days = (1, 6, 7, 14, 15, 22, 23, 28)
    assert [cidis.day_to_level(d) for d in days] == list("AABBCCDD")
    assert cidis.level_label("C") == 2
    assert cidis.label_level(3) == "D"
