import numpy as np
import pytest

from layeract import (
    DivergenceError,
    FormatError,
    InvalidInput,
    Rng,
    TrainConfig,
    VersionError,
    build_mlp,
    load_checkpoint,
    make_activation,
    save_checkpoint,
    train,
)
from layeract.train import CHECKPOINT_VERSION, write_metrics_csv


def toy_problem(n=64, dim=6, classes=3, seed=0):
    # linearly separable blobs: class c centered at 3 * e_c
    gen = np.random.default_rng(seed)
    labels = gen.integers(0, classes, n)
    centers = np.zeros((classes, dim))
    for c in range(classes):
        centers[c, c] = 3.0
    images = centers[labels] + gen.normal(0, 0.5, (n, dim))
    return images, labels


def snapshot(net):
    return [(layer.W.copy(), layer.b.copy()) for layer in net.layers]


def assert_params_equal(net, saved):
    for layer, (W, b) in zip(net.layers, saved):
        np.testing.assert_array_equal(layer.W, W)
        np.testing.assert_array_equal(layer.b, b)


class TestTrain:
    def test_zero_epochs_noop(self):
        images, labels = toy_problem()
        net = build_mlp(Rng(1), [6, 8, 3], make_activation("la-silu"))
        before = snapshot(net)
        net, metrics = train(net, (images, labels), TrainConfig(epochs=0, seed=1))
        assert metrics == []
        assert_params_equal(net, before)

    def test_zero_lr_keeps_params(self):
        images, labels = toy_problem()
        net = build_mlp(Rng(2), [6, 8, 3], make_activation("silu"))
        before = snapshot(net)
        net, metrics = train(
            net, (images, labels), TrainConfig(epochs=3, lr=0.0, lr_drops=(), seed=2)
        )
        assert len(metrics) == 3
        assert_params_equal(net, before)

    def test_bit_reproducible(self):
        images, labels = toy_problem()
        config = TrainConfig(epochs=4, lr=0.05, batch_size=16, lr_drops=((3, 0.1),), seed=7)
        nets = []
        for _ in range(2):
            net = build_mlp(Rng(3), [6, 8, 3], make_activation("la-hardsilu"))
            net, _ = train(net, (images, labels), config)
            nets.append(snapshot(net))
        for (W1, b1), (W2, b2) in zip(*nets):
            np.testing.assert_array_equal(W1, W2)
            np.testing.assert_array_equal(b1, b2)

    def test_full_batch_loss_mostly_decreasing(self):
        images, labels = toy_problem(n=128)
        net = build_mlp(Rng(4), [6, 8, 3], make_activation("relu"))
        config = TrainConfig(
            epochs=5, lr=1e-3, momentum=0.0, weight_decay=0.0,
            lr_drops=(), batch_size=None, seed=4,
        )
        net, metrics = train(net, (images, labels), config)
        losses = [m.train_loss for m in metrics]
        increases = sum(b > a for a, b in zip(losses, losses[1:]))
        assert increases <= 1

    def test_lr_schedule_applied(self):
        images, labels = toy_problem()
        config = TrainConfig(epochs=4, lr=0.1, lr_drops=((2, 0.1), (4, 0.5)), seed=5)
        net = build_mlp(Rng(5), [6, 8, 3], make_activation("relu"))
        _, metrics = train(net, (images, labels), config)
        assert [m.lr for m in metrics] == pytest.approx([0.1, 0.01, 0.01, 0.005])

    def test_divergence_reported_with_location(self):
        images, labels = toy_problem()
        net = build_mlp(Rng(6), [6, 8, 3], make_activation("relu"))
        # 1e160 * 1e160 overflows the logits to inf, so the very first
        # batch loss is non-finite
        net.layers[0].W *= 1e160
        net.layers[1].W *= 1e160
        with pytest.raises(DivergenceError) as err, np.errstate(over="ignore"):
            train(net, (images, labels), TrainConfig(epochs=1, lr=1e5, seed=6))
        assert err.value.epoch == 1
        assert err.value.step == 0

    def test_learns_toy_problem(self):
        images, labels = toy_problem(n=256)
        net = build_mlp(Rng(8), [6, 16, 3], make_activation("la-silu"))
        config = TrainConfig(epochs=20, lr=0.05, batch_size=32, lr_drops=(), seed=8)
        net, metrics = train(net, (images, labels), config, test_set=(images, labels))
        assert metrics[-1].test_acc >= 0.95

    def test_prelu_slope_moves(self):
        images, labels = toy_problem(n=256)
        net = build_mlp(Rng(9), [6, 16, 3], make_activation("prelu"))
        start = net.layers[0].act.slope
        net, _ = train(net, (images, labels), TrainConfig(epochs=3, lr=0.05, lr_drops=(), seed=9))
        assert net.layers[0].act.slope != start

    def test_label_range_validated(self):
        net = build_mlp(Rng(1), [4, 6, 2], make_activation("relu"))
        with pytest.raises(InvalidInput):
            train(net, (np.ones((4, 4)), np.array([0, 1, 2, 0])), TrainConfig(epochs=1))

    def test_float32_option(self):
        images, labels = toy_problem()
        net = build_mlp(Rng(10), [6, 8, 3], make_activation("la-silu"))
        net, _ = train(net, (images, labels), TrainConfig(epochs=1, dtype="float32", seed=10))
        assert net.layers[0].W.dtype == np.float32


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": -1},
            {"lr": -0.1},
            {"momentum": 1.0},
            {"weight_decay": -1e-4},
            {"batch_size": 0},
            {"dtype": "float16"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvalidInput):
            TrainConfig(**kwargs)

    def test_full_protocol(self):
        config = TrainConfig.full_protocol(seed=33)
        assert config.epochs == 80
        assert config.lr_drops == ((40, 0.1), (60, 0.1))
        assert config.lr == 0.01 and config.momentum == 0.9 and config.weight_decay == 1e-4


class TestCheckpoint:
    def build_net(self):
        net = build_mlp(Rng(20), [5, 7, 3], make_activation("la-silu", alpha=3e-4))
        return net

    def test_round_trip_bytes_identical(self, tmp_path):
        net = self.build_net()
        first = tmp_path / "a.lact"
        second = tmp_path / "b.lact"
        config = TrainConfig(epochs=2, seed=20)
        save_checkpoint(first, net, config, epoch=2)
        ckpt = load_checkpoint(first)
        save_checkpoint(second, ckpt.network(), ckpt.config, epoch=ckpt.epoch)
        assert first.read_bytes() == second.read_bytes()

    def test_parameters_and_config_restored(self, tmp_path):
        net = self.build_net()
        path = tmp_path / "net.lact"
        save_checkpoint(path, net, {"note": 1}, epoch=5)
        ckpt = load_checkpoint(path)
        assert ckpt.epoch == 5
        assert ckpt.config == {"note": 1}
        restored = ckpt.network()
        for got, want in zip(restored.layers, net.layers):
            np.testing.assert_array_equal(got.W, want.W)
            np.testing.assert_array_equal(got.b, want.b)
        assert restored.layers[0].act.name == "la-silu"
        assert restored.layers[0].act.alpha == pytest.approx(3e-4)
        assert restored.layers[1].act is None

    def test_prelu_slope_round_trips(self, tmp_path):
        net = build_mlp(Rng(21), [4, 6, 2], make_activation("prelu"))
        net.layers[0].act.slope = 0.125
        path = tmp_path / "prelu.lact"
        save_checkpoint(path, net)
        assert load_checkpoint(path).network().layers[0].act.slope == 0.125

    def test_float32_net_saved_as_float64(self, tmp_path):
        net = self.build_net().astype(np.float32)
        path = tmp_path / "f32.lact"
        save_checkpoint(path, net)
        restored = load_checkpoint(path).network()
        assert restored.layers[0].W.dtype == np.float64
        np.testing.assert_array_equal(
            restored.layers[0].W, net.layers[0].W.astype(np.float64)
        )

    def test_truncation_rejected_with_offset(self, tmp_path):
        net = self.build_net()
        path = tmp_path / "whole.lact"
        save_checkpoint(path, net)
        blob = path.read_bytes()
        for cut in (2, 10, len(blob) // 2, len(blob) - 3):
            clipped = tmp_path / f"cut{cut}.lact"
            clipped.write_bytes(blob[:cut])
            with pytest.raises(FormatError) as err:
                load_checkpoint(clipped)
            assert not isinstance(err.value, VersionError)
            assert err.value.offset is not None

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lact"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError) as err:
            load_checkpoint(path)
        assert "LACT" in str(err.value) and "NOPE" in str(err.value)

    def test_version_mismatch(self, tmp_path):
        net = self.build_net()
        path = tmp_path / "v.lact"
        save_checkpoint(path, net)
        blob = bytearray(path.read_bytes())
        blob[4] = CHECKPOINT_VERSION + 1
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            load_checkpoint(path)


class TestMetricsCsv:
    def test_schema(self, tmp_path):
        images, labels = toy_problem()
        net = build_mlp(Rng(30), [6, 8, 3], make_activation("relu"))
        _, metrics = train(
            net, (images, labels), TrainConfig(epochs=2, seed=30), test_set=(images, labels)
        )
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, metrics)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,train_loss,test_acc"
        assert len(lines) == 3
        assert lines[1].startswith("1,")
