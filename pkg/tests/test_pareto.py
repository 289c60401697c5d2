"""Aggregators, their subgradients, and Pareto dominance."""

import numpy as np
import pytest

from polar.pareto import (
    AggregatorSpec,
    DominanceResult,
    aggregate,
    aggregate_gradient,
    check_dominance,
    equal_weights,
)

KINDS = ("linear", "quadratic", "euclidean", "chebyshev")
CONVEX_STRICT = ("linear", "quadratic", "euclidean")


def spec2(kind):
    return AggregatorSpec(kind, np.array([0.5, 0.5]))


class TestAggregate:
    def test_linear_weighted_mean(self):
        assert aggregate(spec2("linear"), np.array([0.4, 0.6])) == pytest.approx(0.5)

    def test_euclidean_three_four_five(self):
        assert aggregate(spec2("euclidean"), np.array([6.0, 8.0])) == pytest.approx(5.0)

    def test_chebyshev_max(self):
        assert aggregate(spec2("chebyshev"), np.array([0.2, 0.5])) == pytest.approx(0.25)

    def test_quadratic_square(self):
        assert aggregate(spec2("quadratic"), np.array([0.4, 0.6])) == pytest.approx(0.25)

    def test_rejects_negative_losses(self):
        with pytest.raises(ValueError):
            aggregate(spec2("linear"), np.array([-0.1, 0.2]))

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            AggregatorSpec("linear", np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            AggregatorSpec("linear", np.array([1.2, -0.2]))
        with pytest.raises(ValueError):
            AggregatorSpec("nope", np.array([0.5, 0.5]))

    def test_equal_weights(self):
        np.testing.assert_allclose(equal_weights(4), [0.25] * 4)


class TestGradient:
    def test_linear_constant(self):
        grad = aggregate_gradient(spec2("linear"), np.array([3.0, 9.0]))
        np.testing.assert_allclose(grad, [0.5, 0.5])

    def test_quadratic_example(self):
        grad = aggregate_gradient(spec2("quadratic"), np.array([0.4, 0.6]))
        np.testing.assert_allclose(grad, [0.5, 0.5], atol=1e-12)

    def test_chebyshev_tie_split(self):
        grad = aggregate_gradient(spec2("chebyshev"), np.array([0.5, 0.5]))
        np.testing.assert_allclose(grad, [0.25, 0.25])

    def test_chebyshev_single_argmax(self):
        grad = aggregate_gradient(spec2("chebyshev"), np.array([0.2, 0.5]))
        np.testing.assert_allclose(grad, [0.0, 0.5])

    def test_euclidean_origin_zero(self):
        grad = aggregate_gradient(spec2("euclidean"), np.zeros(2))
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_finite_differences_away_from_kinks(self):
        rng = np.random.default_rng(7)
        eps = 1e-7
        for _ in range(200):
            size = int(rng.integers(2, 6))
            w = rng.uniform(0.2, 1.0, size=size)
            spec = AggregatorSpec(rng.choice(KINDS), w / w.sum())
            losses = rng.uniform(0.05, 3.0, size=size)
            if spec.kind == "chebyshev":
                wl = losses * spec.weights
                top = np.sort(wl)[-2:]
                if top[1] - top[0] < 1e-3:  # skip near-ties
                    continue
            ana = aggregate_gradient(spec, losses)
            for j in range(size):
                up, down = losses.copy(), losses.copy()
                up[j] += eps
                down[j] -= eps
                fd = (aggregate(spec, up) - aggregate(spec, down)) / (2 * eps)
                assert abs(ana[j] - fd) <= 1e-6 * max(1.0, abs(fd))


class TestProperties:
    def test_strict_monotonicity_convex_kinds(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            size = int(rng.integers(2, 6))
            w = rng.uniform(0.2, 1.0, size=size)
            losses = rng.uniform(0.1, 2.0, size=size)
            j = int(rng.integers(size))
            smaller = losses.copy()
            smaller[j] *= 0.5
            for kind in CONVEX_STRICT:
                spec = AggregatorSpec(kind, w / w.sum())
                assert aggregate(spec, smaller) < aggregate(spec, losses)

    def test_chebyshev_flat_off_argmax(self):
        spec = spec2("chebyshev")
        losses = np.array([0.2, 0.8])
        smaller = np.array([0.1, 0.8])
        assert aggregate(spec, smaller) == aggregate(spec, losses)

    def test_convexity_spot_check(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            size = int(rng.integers(2, 6))
            w = rng.uniform(0.2, 1.0, size=size)
            w /= w.sum()
            la = rng.uniform(0.0, 4.0, size=size)
            lb = rng.uniform(0.0, 4.0, size=size)
            t = rng.uniform()
            for kind in KINDS:
                spec = AggregatorSpec(kind, w)
                mix = aggregate(spec, t * la + (1 - t) * lb)
                assert mix <= t * aggregate(spec, la) + (1 - t) * aggregate(spec, lb) + 1e-9

    def test_jensen_upper_bound(self):
        # aggregate of the mean loss vector is at most the mean aggregate
        rng = np.random.default_rng(3)
        for _ in range(100):
            size = int(rng.integers(2, 5))
            w = rng.uniform(0.2, 1.0, size=size)
            w /= w.sum()
            batch = rng.uniform(0.0, 3.0, size=(int(rng.integers(2, 30)), size))
            for kind in CONVEX_STRICT:
                spec = AggregatorSpec(kind, w)
                lhs = aggregate(spec, batch.mean(axis=0))
                rhs = np.mean([aggregate(spec, row) for row in batch])
                assert lhs <= rhs + 1e-9

    def test_linear_duplication_robustness(self):
        # duplicating a column and halving its weight changes nothing
        rng = np.random.default_rng(4)
        w = np.array([0.4, 0.6])
        losses = rng.uniform(0.1, 2.0, size=2)
        base = AggregatorSpec("linear", w)
        dup = AggregatorSpec("linear", np.array([0.4, 0.3, 0.3]))
        dup_losses = np.array([losses[0], losses[1], losses[1]])
        assert aggregate(dup, dup_losses) == pytest.approx(aggregate(base, losses), abs=1e-15)
        g_base = aggregate_gradient(base, losses)
        g_dup = aggregate_gradient(dup, dup_losses)
        # induced gradient on the duplicated objective: the two copies sum
        assert g_dup[0] == pytest.approx(g_base[0])
        assert g_dup[1] + g_dup[2] == pytest.approx(g_base[1])

    def test_quadratic_duplication_argmin_unchanged(self):
        # 1-D toy: h parametrizes losses l(h) = (f(h), g(h)); grid-searched
        # argmin is invariant to duplicating the second objective with halved
        # weights under the quadratic aggregator
        hs = np.linspace(0.01, 0.99, 199)
        f = -np.log(hs)
        g = -np.log(1.0 - hs)
        base = AggregatorSpec("quadratic", np.array([0.5, 0.5]))
        dup = AggregatorSpec("quadratic", np.array([0.5, 0.25, 0.25]))
        vals_base = [aggregate(base, np.array([fv, gv])) for fv, gv in zip(f, g)]
        vals_dup = [aggregate(dup, np.array([fv, gv, gv])) for fv, gv in zip(f, g)]
        assert int(np.argmin(vals_base)) == int(np.argmin(vals_dup))


class TestDominance:
    def test_equal(self):
        assert check_dominance(np.array([1.0, 2.0]), np.array([1.0, 2.0])) is DominanceResult.EQUAL

    def test_a_dominates(self):
        assert check_dominance(np.array([1.0, 2.0]), np.array([2.0, 2.0])) is DominanceResult.A_DOMINATES

    def test_incomparable(self):
        assert check_dominance(np.array([1.0, 3.0]), np.array([2.0, 2.0])) is DominanceResult.INCOMPARABLE

    def test_antisymmetry_sweep(self):
        rng = np.random.default_rng(5)
        flip = {
            DominanceResult.A_DOMINATES: DominanceResult.B_DOMINATES,
            DominanceResult.B_DOMINATES: DominanceResult.A_DOMINATES,
            DominanceResult.EQUAL: DominanceResult.EQUAL,
            DominanceResult.INCOMPARABLE: DominanceResult.INCOMPARABLE,
        }
        for _ in range(200):
            a = rng.integers(0, 3, size=3).astype(float)
            b = rng.integers(0, 3, size=3).astype(float)
            assert check_dominance(b, a) is flip[check_dominance(a, b)]
