"""Loss aggregators over the per-source loss vector, with subgradients.

Four scalarizations of a non-negative loss vector l with positive weights w
summing to one:

    linear     sum_j w_j l_j
    quadratic  (sum_j w_j l_j)^2
    euclidean  sqrt(sum_j (w_j l_j)^2)
    chebyshev  max_j w_j l_j

The first three are convex and strictly decreasing in every coordinate at
positive losses. Chebyshev is convex but flat in non-argmax coordinates and
is kept as the comparison arm.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .harmonizer import LossVector

AGGREGATOR_KINDS = ("linear", "quadratic", "euclidean", "chebyshev")
_WEIGHT_SUM_TOL = 1e-9


@dataclass
class AggregatorSpec:
    """Aggregator kind plus a strictly positive weight vector summing to one."""

    kind: str
    weights: np.ndarray

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(f"unknown aggregator {self.kind!r}; expected {AGGREGATOR_KINDS}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w <= 0.0):
            raise ValueError("weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
        self.weights = w

    @classmethod
    def equal(cls, kind: str, size: int) -> "AggregatorSpec":
        return cls(kind, np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def equal_weights(size: int) -> np.ndarray:
    return np.full(size, 1.0 / size)


def _as_loss_array(lv: LossVector | np.ndarray) -> np.ndarray:
    values = lv.values if isinstance(lv, LossVector) else np.asarray(lv, dtype=np.float64)
    if np.any(values < 0.0):
        raise ValueError("loss entries must be non-negative")
    return values


def aggregate(spec: AggregatorSpec, lv: LossVector | np.ndarray) -> float:
    values = _as_loss_array(lv)
    if values.shape != (spec.size,):
        raise ValueError(f"loss vector length {values.shape} != weights length {spec.size}")
    return float(aggregate_batch(spec, values[None, :])[0])


def aggregate_batch(spec: AggregatorSpec, losses: np.ndarray) -> np.ndarray:
    """(B, m+1) losses -> (B,) aggregated values."""
    wl = losses * spec.weights
    if spec.kind == "linear":
        return wl.sum(axis=1)
    if spec.kind == "quadratic":
        return wl.sum(axis=1) ** 2
    if spec.kind == "euclidean":
        return np.sqrt((wl * wl).sum(axis=1))
    return wl.max(axis=1)


def aggregate_gradient(spec: AggregatorSpec, lv: LossVector | np.ndarray) -> np.ndarray:
    values = _as_loss_array(lv)
    if values.shape != (spec.size,):
        raise ValueError(f"loss vector length {values.shape} != weights length {spec.size}")
    return aggregate_gradient_batch(spec, values[None, :])[0]


def aggregate_gradient_batch(spec: AggregatorSpec, losses: np.ndarray) -> np.ndarray:
    """(Sub)gradient of the aggregate with respect to each loss entry, rowwise.

    Chebyshev ties split the weight equally among the argmax coordinates;
    the euclidean gradient at the origin is defined as zero.
    """
    w = spec.weights
    b = losses.shape[0]
    if spec.kind == "linear":
        return np.broadcast_to(w, losses.shape).copy()
    if spec.kind == "quadratic":
        s = (losses * w).sum(axis=1)
        return 2.0 * s[:, None] * w
    if spec.kind == "euclidean":
        wl = losses * w
        norms = np.sqrt((wl * wl).sum(axis=1))
        grad = np.zeros_like(losses)
        nz = norms > 0.0
        grad[nz] = (w * w) * losses[nz] / norms[nz, None]
        return grad
    # chebyshev subgradient with equal tie splitting
    wl = losses * w
    vmax = wl.max(axis=1)
    ties = wl >= (vmax[:, None] - np.maximum(1e-15, 1e-12 * np.abs(vmax[:, None])))
    counts = ties.sum(axis=1)
    grad = np.where(ties, w / counts[:, None], 0.0)
    return grad


class DominanceResult(str, Enum):
    A_DOMINATES = "a_dominates"
    B_DOMINATES = "b_dominates"
    INCOMPARABLE = "incomparable"
    EQUAL = "equal"


def check_dominance(a: np.ndarray, b: np.ndarray) -> DominanceResult:
    """Pareto dominance between two expected-loss vectors.

    ``a`` dominates iff a <= b coordinatewise with at least one strict
    inequality. Swapping the inputs swaps the a/b outcomes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("loss vectors must share a shape")
    if np.array_equal(a, b):
        return DominanceResult.EQUAL
    if np.all(a <= b):
        return DominanceResult.A_DOMINATES
    if np.all(b <= a):
        return DominanceResult.B_DOMINATES
    return DominanceResult.INCOMPARABLE
