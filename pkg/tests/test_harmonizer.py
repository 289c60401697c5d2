"""Harmonizer forward/loss/gradient correctness."""

import math

import numpy as np
import pytest

from polar.dataset import Instance, LabelRow
from polar.harmonizer import (
    HarmonizerParams,
    LossVector,
    Simplex,
    backward,
    cross_entropy,
    forward,
    init_params,
    load_params,
    loss_vector,
    save_params,
    softmax,
)
from polar.pareto import AggregatorSpec, aggregate, aggregate_gradient


def linear_params(w, b):
    w = np.asarray(w, dtype=float)
    return HarmonizerParams("linear", w.shape[1], w.shape[0], None, {"w": w, "b": np.asarray(b, dtype=float)})


class TestForward:
    def test_zero_params_uniform(self):
        params = init_params("linear", 4, 3, seed=0)
        for key in params.weights:
            params.weights[key][:] = 0.0
        dist = forward(params, np.ones(4))
        np.testing.assert_allclose(dist.probs, [1 / 3] * 3, atol=1e-15)

    def test_log_two_logits(self):
        # logits (ln 2, 0) -> softmax (2/3, 1/3)
        params = linear_params([[math.log(2.0)], [0.0]], [0.0, 0.0])
        dist = forward(params, np.array([1.0]))
        np.testing.assert_allclose(dist.probs, [2 / 3, 1 / 3], atol=1e-12)

    def test_shift_invariance(self):
        params = linear_params([[0.3, -0.2], [1.1, 0.4]], [0.5, -0.9])
        shifted = linear_params([[0.3, -0.2], [1.1, 0.4]], [0.5 + 7.0, -0.9 + 7.0])
        x = np.array([0.2, -1.5])
        np.testing.assert_allclose(forward(params, x).probs, forward(shifted, x).probs, atol=1e-15)

    def test_rejects_non_finite(self):
        params = init_params("mlp", 3, 2, 4, seed=0)
        with pytest.raises(ValueError):
            forward(params, np.array([1.0, np.inf, 0.0]))

    def test_simplex_property_random_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            arch = rng.choice(["linear", "mlp"])
            d = int(rng.integers(1, 10))
            k = int(rng.integers(2, 6))
            params = init_params(arch, d, k, 8, seed=int(rng.integers(1 << 30)))
            for key in params.weights:
                params.weights[key] += rng.normal(size=params.weights[key].shape) * 10.0
            dist = forward(params, rng.normal(size=d) * 100.0)
            assert np.all(dist.probs >= 0.0) and np.all(dist.probs <= 1.0)
            assert abs(dist.probs.sum() - 1.0) <= 1e-9


class TestCrossEntropy:
    def test_uniform_binary(self):
        assert cross_entropy(Simplex(np.array([0.5, 0.5])), 0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_certainty(self):
        assert cross_entropy(Simplex(np.array([1.0, 0.0])), 0) == 0.0

    def test_point_eight(self):
        assert cross_entropy(Simplex(np.array([0.2, 0.8])), 1) == pytest.approx(0.2231435513, abs=1e-9)

    def test_clip_bounds_loss(self):
        assert cross_entropy(Simplex(np.array([0.0, 1.0])), 0) == pytest.approx(-math.log(1e-12))

    def test_nonneg_with_equality_iff_near_one(self):
        # saturated softmax reaches exactly 1.0 in float
        params = linear_params([[60.0], [0.0]], [0.0, 0.0])
        dist = forward(params, np.array([1.0]))
        assert cross_entropy(dist, 0) <= 1.001e-9
        assert dist[0] >= 1.0 - 1e-9
        mid = Simplex(np.array([1.0 - 1e-6, 1e-6]))
        assert cross_entropy(mid, 0) > 1e-9


class TestLossVector:
    def test_all_untriggered(self):
        params = init_params("linear", 2, 2, seed=0)
        lv = loss_vector(params, Instance("x", np.zeros(2)), LabelRow((None, None, None)))
        np.testing.assert_array_equal(lv.values, np.zeros(3))
        assert not lv.triggered.any()

    def test_uniform_model_k2(self):
        params = linear_params(np.zeros((2, 2)), np.zeros(2))
        row = LabelRow((0, 0, 1, None))
        lv = loss_vector(params, Instance("x", np.ones(2)), row)
        np.testing.assert_allclose(lv.values, [math.log(2)] * 3 + [0.0], atol=1e-12)
        assert lv.triggered.tolist() == [True, True, True, False]

    def test_confident_model(self):
        # dist (0.9, 0.1): llm=0 -> -ln 0.9, source1=1 -> -ln 0.1
        logit = math.log(9.0)
        params = linear_params([[logit], [0.0]], [0.0, 0.0])
        lv = loss_vector(params, Instance("x", np.ones(1)), LabelRow((0, 1)))
        np.testing.assert_allclose(lv.values, [0.1053605, 2.3025851], atol=1e-6)

    def test_untriggered_entries_zero_invariant(self):
        with pytest.raises(ValueError):
            LossVector(np.array([0.0, 0.5]), np.array([True, False]))


class TestBackward:
    def test_zero_upstream(self):
        params = init_params("mlp", 3, 2, 4, seed=1)
        grads = backward(params, Instance("x", np.ones(3)), LabelRow((0, 1)), np.zeros(2))
        for g in grads.values():
            assert not g.any()

    def test_single_source_linear_identity(self):
        params = linear_params([[0.4, -0.3], [0.1, 0.8]], [0.0, 0.2])
        inst = Instance("x", np.array([1.0, -2.0]))
        row = LabelRow((None, 1))
        dist = forward(params, inst.features)
        grads = backward(params, inst, row, np.array([0.0, 1.0]))
        dlogits = dist.probs - np.array([0.0, 1.0])
        assert abs(dlogits.sum()) < 1e-12
        np.testing.assert_allclose(grads["b"], dlogits, atol=1e-12)
        np.testing.assert_allclose(grads["w"], np.outer(dlogits, inst.features), atol=1e-12)

    def test_untriggered_upstream_ignored(self):
        params = init_params("linear", 2, 2, seed=2)
        inst = Instance("x", np.array([0.5, 1.5]))
        a = backward(params, inst, LabelRow((0, None)), np.array([1.0, 0.0]))
        b = backward(params, inst, LabelRow((0, None)), np.array([1.0, 123.0]))
        for key in a:
            np.testing.assert_array_equal(a[key], b[key])

    @pytest.mark.parametrize("arch", ["linear", "mlp"])
    def test_finite_difference_sweep(self, arch):
        # aggregate(loss_vector(params)) gradient vs central differences
        rng = np.random.default_rng(0)
        for seed in range(20):
            d, k, h, m = 4, 3, 5, 2
            params = init_params(arch, d, k, h, seed=seed)
            for key in params.weights:
                params.weights[key] = params.weights[key] + rng.normal(size=params.weights[key].shape) * 0.5
            inst = Instance("x", rng.normal(size=d))
            row = LabelRow((int(rng.integers(k)), int(rng.integers(k)), None))
            kind = ("linear", "quadratic", "euclidean", "chebyshev")[seed % 4]
            w = rng.uniform(0.5, 2.0, size=m + 1)
            spec = AggregatorSpec(kind, w / w.sum())
            upstream = aggregate_gradient(spec, loss_vector(params, inst, row))
            grads = backward(params, inst, row, upstream)
            eps = 1e-5
            for key in params.weights:
                flat = params.weights[key]
                it = np.nditer(flat, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = flat[idx]
                    flat[idx] = orig + eps
                    up = aggregate(spec, loss_vector(params, inst, row))
                    flat[idx] = orig - eps
                    down = aggregate(spec, loss_vector(params, inst, row))
                    flat[idx] = orig
                    fd = (up - down) / (2 * eps)
                    ana = grads[key][idx]
                    assert abs(ana - fd) <= 1e-4 * max(abs(ana), abs(fd), 1e-6)


class TestInit:
    def test_deterministic(self):
        a = init_params("mlp", 5, 3, 7, seed=11)
        b = init_params("mlp", 5, 3, 7, seed=11)
        for key in a.weights:
            np.testing.assert_array_equal(a.weights[key], b.weights[key])

    def test_biases_zero(self):
        params = init_params("mlp", 5, 3, 7, seed=0)
        assert not params.weights["b1"].any()
        assert not params.weights["b2"].any()

    def test_glorot_bound(self):
        params = init_params("linear", 8, 2, seed=0)
        bound = math.sqrt(6.0 / (8 + 2))
        assert np.all(np.abs(params.weights["w"]) <= bound)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            HarmonizerParams("linear", 3, 2, None, {"w": np.zeros((2, 4)), "b": np.zeros(2)})


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params("mlp", 6, 4, 5, seed=3)
        path = tmp_path / "model.json"
        save_params(params, path, class_labels=["a", "b", "c", "d"], train_config_digest="abc123")
        loaded, extras = load_params(path)
        assert loaded.architecture == "mlp" and loaded.hidden == 5
        for key in params.weights:
            np.testing.assert_array_equal(loaded.weights[key], params.weights[key])
        assert extras["class_labels"] == ["a", "b", "c", "d"]
        assert extras["train_config_digest"] == "abc123"
        assert loaded.digest() == params.digest()

    def test_softmax_batch_shape(self):
        out = softmax(np.array([[0.0, 0.0], [1.0, 1.0]]))
        np.testing.assert_allclose(out, 0.5 * np.ones((2, 2)))
