"""Probabilistic harmonizer models: feature vector -> distribution over classes.

Two architectures share one parameter container: a linear softmax head
("linear") and a one-hidden-layer ReLU network ("mlp"). Gradients are
analytic; the softmax/cross-entropy pair uses the standard
probs-minus-onehot identity chained through the layers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import Instance, LabelRow

ARCHITECTURES = ("linear", "mlp")
PROB_CLIP = 1e-12
MODEL_SCHEMA = "polar-model-v1"


@dataclass(frozen=True)
class Simplex:
    """A point on the K-simplex, produced by a max-subtracted softmax."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("simplex must be a flat vector")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("simplex entries must lie in [0, 1]")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"simplex entries sum to {probs.sum()}, not 1")
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, idx: int) -> float:
        return float(self.probs[idx])

    @property
    def k(self) -> int:
        return self.probs.shape[0]


@dataclass
class LossVector:
    """Per-source cross-entropy losses; untriggered entries are exactly zero."""

    values: np.ndarray
    triggered: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.triggered = np.asarray(self.triggered, dtype=bool)
        if self.values.shape != self.triggered.shape:
            raise ValueError("loss values and trigger flags must align")
        if np.any(self.values < 0.0):
            raise ValueError("losses must be non-negative")
        if np.any(self.values[~self.triggered] != 0.0):
            raise ValueError("untriggered entries must carry zero loss")


@dataclass
class HarmonizerParams:
    """Parameter container; ``weights`` keys depend on the architecture.

    linear: w (K, D), b (K,)
    mlp:    w1 (H, D), b1 (H,), w2 (K, H), b2 (K,)
    """

    architecture: str
    d: int
    k: int
    hidden: int | None
    weights: dict[str, np.ndarray]

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        for key, arr in self.weights.items():
            arr = np.asarray(arr, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {key!r}")
            self.weights[key] = arr
        expected = _expected_shapes(self.architecture, self.d, self.k, self.hidden)
        for key, shape in expected.items():
            if key not in self.weights or self.weights[key].shape != shape:
                got = self.weights.get(key)
                raise ValueError(
                    f"parameter {key!r} must have shape {shape}, got "
                    f"{None if got is None else got.shape}"
                )

    def copy(self) -> "HarmonizerParams":
        return HarmonizerParams(
            self.architecture,
            self.d,
            self.k,
            self.hidden,
            {k: v.copy() for k, v in self.weights.items()},
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.weights):
            h.update(key.encode())
            h.update(self.weights[key].tobytes())
        return h.hexdigest()[:16]


def _expected_shapes(arch: str, d: int, k: int, hidden: int | None) -> dict[str, tuple[int, ...]]:
    if arch == "linear":
        return {"w": (k, d), "b": (k,)}
    if hidden is None or hidden < 1:
        raise ValueError("mlp architecture needs a positive hidden size")
    return {"w1": (hidden, d), "b1": (hidden,), "w2": (k, hidden), "b2": (k,)}


def init_params(
    architecture: str, d: int, k: int, hidden: int = 64, seed: int = 0
) -> HarmonizerParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    if d < 1 or k < 2:
        raise ValueError("need d >= 1 and k >= 2")
    rng = np.random.default_rng(seed)

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    if architecture == "linear":
        weights = {"w": glorot(k, d), "b": np.zeros(k)}
        return HarmonizerParams("linear", d, k, None, weights)
    weights = {
        "w1": glorot(hidden, d),
        "b1": np.zeros(hidden),
        "w2": glorot(k, hidden),
        "b2": np.zeros(k),
    }
    return HarmonizerParams("mlp", d, k, hidden, weights)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def forward_batch(params: HarmonizerParams, feats: np.ndarray) -> tuple[np.ndarray, dict]:
    """(B, D) features -> (B, K) probabilities plus a cache for backward."""
    feats = np.asarray(feats, dtype=np.float64)
    if params.architecture == "linear":
        logits = feats @ params.weights["w"].T + params.weights["b"]
        cache = {}
    else:
        pre = feats @ params.weights["w1"].T + params.weights["b1"]
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ params.weights["w2"].T + params.weights["b2"]
        cache = {"hidden": hidden, "active": pre > 0.0}
    return softmax(logits), cache


def backward_batch(
    params: HarmonizerParams,
    feats: np.ndarray,
    cache: dict,
    dlogits: np.ndarray,
) -> dict[str, np.ndarray]:
    """Chain (B, K) logit gradients back to parameters, summing over the batch."""
    feats = np.asarray(feats, dtype=np.float64)
    if params.architecture == "linear":
        return {"w": dlogits.T @ feats, "b": dlogits.sum(axis=0)}
    hidden, active = cache["hidden"], cache["active"]
    dw2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ params.weights["w2"]) * active
    return {"w1": dhidden.T @ feats, "b1": dhidden.sum(axis=0), "w2": dw2, "b2": db2}


def forward(params: HarmonizerParams, features: np.ndarray) -> Simplex:
    """Evaluate the model on one feature vector."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape != (params.d,):
        raise ValueError(f"expected feature vector of length {params.d}, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise ValueError("non-finite feature value")
    probs, _ = forward_batch(params, feats[None, :])
    return Simplex(probs[0])


def cross_entropy(dist: Simplex, label: int) -> float:
    """-log p[label], with p clipped below at 1e-12."""
    if not 0 <= label < dist.k:
        raise ValueError(f"label {label} out of range for K={dist.k}")
    return float(-np.log(max(dist[label], PROB_CLIP)))


def loss_vector(params: HarmonizerParams, inst: Instance, row: LabelRow) -> LossVector:
    """Cross-entropy against each triggered source; zeros elsewhere."""
    dist = forward(params, inst.features)
    j_count = row.m + 1
    values = np.zeros(j_count)
    triggered = np.zeros(j_count, dtype=bool)
    for j, ans in enumerate(row.answers):
        if ans is not None:
            values[j] = cross_entropy(dist, ans)
            triggered[j] = True
    return LossVector(values, triggered)


def backward(
    params: HarmonizerParams,
    inst: Instance,
    row: LabelRow,
    upstream: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradient of sum_j upstream[j] * loss_j with respect to the parameters.

    Untriggered entries contribute nothing regardless of ``upstream``: their
    loss is identically zero in a neighbourhood of the current parameters.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (row.m + 1,):
        raise ValueError(f"upstream must have length {row.m + 1}")
    feats = inst.features[None, :]
    probs, cache = forward_batch(params, feats)
    active_weight = 0.0
    dlogits = np.zeros((1, params.k))
    for j, ans in enumerate(row.answers):
        if ans is not None:
            active_weight += upstream[j]
            dlogits[0, ans] -= upstream[j]
    dlogits += active_weight * probs
    return backward_batch(params, feats, cache, dlogits)


def zero_grads(params: HarmonizerParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.weights.items()}


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def save_params(
    params: HarmonizerParams,
    path: str | Path,
    class_labels: list[str] | None = None,
    train_config_digest: str | None = None,
) -> None:
    doc: dict[str, Any] = {
        "schema": MODEL_SCHEMA,
        "architecture": params.architecture,
        "d": params.d,
        "k": params.k,
        "h": params.hidden,
        "weights": {k: v.ravel().tolist() for k, v in params.weights.items()},
        "class_labels": class_labels,
        "train_config_digest": train_config_digest,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_params(path: str | Path) -> tuple[HarmonizerParams, dict[str, Any]]:
    """Returns the parameters plus the checkpoint sidecar fields."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"expected schema {MODEL_SCHEMA!r} in {path}")
    arch, d, k, h = doc["architecture"], doc["d"], doc["k"], doc["h"]
    shapes = _expected_shapes(arch, d, k, h)
    weights = {
        key: np.asarray(doc["weights"][key], dtype=np.float64).reshape(shape)
        for key, shape in shapes.items()
    }
    params = HarmonizerParams(arch, d, k, h, weights)
    extras = {
        "class_labels": doc.get("class_labels"),
        "train_config_digest": doc.get("train_config_digest"),
    }
    return params, extras
