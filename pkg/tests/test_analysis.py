import numpy as np
import pytest

from layeract import (
    GaussianNoise,
    ImageSet,
    Rng,
    TrainConfig,
    build_mlp,
    make_activation,
    train,
)
from layeract.analysis import (
    bound_audit,
    bound_montecarlo,
    central_diff_grad,
    fluctuation_scan,
    gradcheck_suite,
    mean_activation,
    write_bound_audit_csv,
    write_fluctuation_csv,
    write_gradcheck_csv,
    write_mean_activation_csv,
)
from layeract.errors import InvalidInput, Unsupported


@pytest.fixture(scope="module")
def tiny_data():
    gen = np.random.default_rng(100)
    images = gen.uniform(0, 1, (200, 784))
    labels = gen.integers(0, 10, 200)
    return ImageSet(images=images, labels=labels)


def small_net(name, width=32, seed=50):
    return build_mlp(Rng(seed), [784, width, 10], make_activation(name))


class TestMeanActivation:
    def test_zero_net_all_zero_means(self, tiny_data):
        net = small_net("silu")
        net.layers[0].W[:] = 0.0
        net.layers[0].b[:] = 0.0
        report = mean_activation(net, tiny_data, stage="output")
        np.testing.assert_array_equal(report.per_element_means, np.zeros(32))
        assert report.fraction_negative == 0.0

    def test_report_length_is_hidden_width(self, tiny_data):
        report = mean_activation(small_net("la-silu", width=24), tiny_data)
        assert report.per_element_means.shape == (24,)
        assert report.kind == "la-silu"

    def test_input_stage_is_preactivation(self, tiny_data):
        net = small_net("relu")
        report = mean_activation(net, tiny_data, stage="input")
        y = tiny_data.images @ net.layers[0].W + net.layers[0].b
        np.testing.assert_allclose(report.per_element_means, y.mean(axis=0), rtol=1e-12)

    def test_hard_gate_output_envelope(self, tiny_data):
        # each unit's mean lies within [min(y_i * 0, ...), max(y_i * 1, ...)]
        net = small_net("la-hardsilu")
        report = mean_activation(net, tiny_data, stage="output")
        y = tiny_data.images @ net.layers[0].W + net.layers[0].b
        low = np.minimum(y, 0.0).min(axis=0)
        high = np.maximum(y, 0.0).max(axis=0)
        assert np.all(report.per_element_means >= low - 1e-12)
        assert np.all(report.per_element_means <= high + 1e-12)

    def test_bad_stage(self, tiny_data):
        with pytest.raises(InvalidInput):
            mean_activation(small_net("relu"), tiny_data, stage="middle")


class TestFluctuationScan:
    def test_zero_noise_zero_everywhere(self, tiny_data):
        report = fluctuation_scan(
            small_net("la-silu"), tiny_data, GaussianNoise(0.0, 0.0), Rng(1)
        )
        np.testing.assert_array_equal(report.per_sample_values, np.zeros(len(tiny_data)))
        assert report.mean == 0.0 and report.variance == 0.0

    def test_input_stage_oracle(self, tiny_data):
        # input-stage fluctuation is the L1 norm of the propagated pixel noise
        net = small_net("relu")
        spec = GaussianNoise(0.0, 0.1)
        report = fluctuation_scan(net, tiny_data, spec, Rng(2), stage="input")
        from layeract import apply_noise

        noisy = apply_noise(tiny_data, spec, Rng(2))
        delta = (noisy.images - tiny_data.images) @ net.layers[0].W
        np.testing.assert_allclose(
            report.per_sample_values, np.abs(delta).sum(axis=1), rtol=1e-10
        )

    def test_output_stage_oracle_per_sample(self, tiny_data):
        net = small_net("la-hardsilu")
        spec = GaussianNoise(0.05, 0.05)
        report = fluctuation_scan(net, tiny_data, spec, Rng(3), stage="output")
        from layeract import apply_noise, la_fluctuation

        noisy = apply_noise(tiny_data, spec, Rng(3))
        kind = net.layers[0].act
        W, b = net.layers[0].W, net.layers[0].b
        for m in (0, 7, 150):
            y = tiny_data.images[m] @ W + b
            y_hat = noisy.images[m] @ W + b
            expected = la_fluctuation(kind, y, y_hat - y)
            assert report.per_sample_values[m] == pytest.approx(expected, rel=1e-10)

    def test_kind_override(self, tiny_data):
        net = small_net("relu")
        report = fluctuation_scan(
            net, tiny_data, GaussianNoise(0.0, 0.1), Rng(4),
            stage="output", kind=make_activation("silu"),
        )
        assert report.kind == "silu"

    def test_deterministic_given_rng_seed(self, tiny_data):
        a = fluctuation_scan(small_net("silu"), tiny_data, GaussianNoise(0, 0.1), Rng(8))
        b = fluctuation_scan(small_net("silu"), tiny_data, GaussianNoise(0, 0.1), Rng(8))
        np.testing.assert_array_equal(a.per_sample_values, b.per_sample_values)


class TestBoundAudits:
    @pytest.mark.parametrize("name", ["la-silu", "la-hardsilu", "silu", "hardsilu"])
    def test_montecarlo_no_violations(self, name):
        audit = bound_montecarlo(make_activation(name), trials=2000, d=16, rng=Rng(123))
        assert audit.trials == 2000
        assert audit.gate_elem_violations == 0
        assert audit.gate_layer_violations_exact == 0
        assert audit.gate_layer_violations_analytic == 0
        assert audit.element_violations == 0
        assert audit.clean

    def test_montecarlo_element_hypothesis_split(self):
        audit = bound_montecarlo(make_activation("silu"), trials=500, d=16, rng=Rng(9))
        assert audit.element_checked + audit.element_skipped == 500

    def test_dataset_audit_no_violations(self, tiny_data):
        net = small_net("la-silu")
        audit = bound_audit(
            net, tiny_data, GaussianNoise(0.0, 0.01), Rng(77), max_samples=100
        )
        assert audit.trials == 100
        assert audit.gate_elem_violations == 0
        assert audit.gate_layer_violations_exact == 0
        assert audit.element_violations == 0

    def test_zero_noise_audit_trivial(self, tiny_data):
        net = small_net("la-silu")
        audit = bound_audit(net, tiny_data, GaussianNoise(0.0, 0.0), Rng(5), max_samples=50)
        assert all(row[1] == 0.0 for row in audit.rows)  # every lhs is zero
        assert audit.clean

    def test_non_lipschitz_kind_rejected(self, tiny_data):
        with pytest.raises(Unsupported):
            bound_audit(small_net("relu"), tiny_data, GaussianNoise(0, 0.1), Rng(6))


class TestGradcheckSuite:
    def test_all_kinds_pass(self):
        entries = gradcheck_suite(seed=2024, trials=10)
        assert {e.kind for e in entries} == {
            "relu", "lrelu", "prelu", "silu", "hardsilu", "mish", "la-silu", "la-hardsilu",
        }
        for entry in entries:
            assert entry.passed, f"{entry.kind}: {entry.max_rel_err}"
            assert entry.max_rel_err <= 1e-6

    def test_perturbed_backward_fails(self):
        entries = gradcheck_suite(seed=2024, kinds=["silu"], trials=5, perturb="silu")
        assert not entries[0].passed

    def test_relu_locally_linear_is_exact(self):
        kind = make_activation("relu")
        numeric = central_diff_grad(lambda v: float(kind.apply(v)[0]), np.array([5.0]))
        assert numeric[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(kind.backward(np.array([5.0]), np.array([1.0])), [1.0])

    def test_central_diff_on_quadratic(self):
        y = np.array([1.0, -2.0, 0.5])
        grad = central_diff_grad(lambda v: float(np.sum(v**2)), y, step=1e-5)
        np.testing.assert_allclose(grad, 2 * y, rtol=1e-9)


class TestCsvWriters:
    def test_schemas(self, tmp_path, tiny_data):
        net = small_net("la-silu")
        mean_report = mean_activation(net, tiny_data)
        fluct = fluctuation_scan(net, tiny_data, GaussianNoise(0, 0.1), Rng(1))
        audit = bound_montecarlo(make_activation("la-silu"), 50, 16, Rng(2))
        entries = gradcheck_suite(seed=1, kinds=["silu"], trials=2)

        p1 = tmp_path / "mean.csv"
        write_mean_activation_csv(p1, mean_report)
        assert p1.read_text().splitlines()[0] == "element_id,mean"
        assert len(p1.read_text().splitlines()) == 33

        p2 = tmp_path / "fluct.csv"
        write_fluctuation_csv(p2, fluct)
        assert p2.read_text().splitlines()[0] == "sample_id,value"

        p3 = tmp_path / "audit.csv"
        write_bound_audit_csv(p3, audit)
        lines = p3.read_text().splitlines()
        assert lines[0] == "trial,lhs,rhs,violated"
        assert len(lines) == 51

        p4 = tmp_path / "grad.csv"
        write_gradcheck_csv(p4, entries)
        assert p4.read_text().splitlines()[0] == "kind,max_rel_err,pass"


class TestTrainedComparison:
    """Desk-size end-to-end: the layer-level kinds' fluctuation advantage
    shows up already on a small synthetic problem."""

    @pytest.fixture(scope="class")
    def trained(self):
        gen = np.random.default_rng(7)
        images = np.clip(gen.normal(0.3, 0.25, (600, 784)), 0, 1)
        # labels from a planted linear rule so training has signal
        planted = gen.normal(0, 1, (784, 10))
        labels = np.argmax(images @ planted, axis=1)
        data = ImageSet(images=images, labels=labels)
        nets = {}
        for name in ("relu", "la-silu"):
            net = build_mlp(Rng(11), [784, 64, 10], make_activation(name))
            net, _ = train(
                net, data, TrainConfig(epochs=5, lr=0.05, lr_drops=(), seed=11)
            )
            nets[name] = net
        return data, nets

    def test_layer_kind_fluctuates_less(self, trained):
        data, nets = trained
        spec = GaussianNoise(0.0, 0.1)
        reports = {
            name: fluctuation_scan(net, data, spec, Rng(42), stage="output")
            for name, net in nets.items()
        }
        assert reports["la-silu"].mean < reports["relu"].mean
        assert reports["la-silu"].variance < reports["relu"].variance
