"""Stochastic training of the harmonizer against all triggered sources.

Per example the loss vector is aggregated first and the batch mean is taken
afterwards (the expectation of the scalarized losses); for nonlinear
aggregators this differs from aggregating batch-mean losses. Optimization is
Adam with decoupled weight decay. Everything is deterministic under the
config seed: shuffling uses one seeded generator and batch reductions run in
a fixed order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dataset import Dataset
from .harmonizer import (
    HarmonizerParams,
    PROB_CLIP,
    backward_batch,
    forward_batch,
    init_params,
    zero_grads,
)
from .pareto import AggregatorSpec, aggregate_batch, aggregate_gradient_batch

DEFAULT_LR = {"linear": 1e-3, "mlp": 1e-4}


@dataclass
class TrainConfig:
    aggregator: AggregatorSpec
    architecture: str = "mlp"
    hidden_size: int = 64
    learning_rate: float | None = None  # None: 1e-3 linear, 1e-4 mlp
    weight_decay: float = 1e-5
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    single_pass: bool = False

    def __post_init__(self):
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("batch_size >= 1, max_epochs >= 1, patience >= 0 required")

    @property
    def lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LR[self.architecture]

    def to_dict(self) -> dict[str, Any]:
        return {
            "aggregator": self.aggregator.kind,
            "weights": self.aggregator.weights.tolist(),
            "architecture": self.architecture,
            "hidden_size": self.hidden_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "single_pass": self.single_pass,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any], n_sources: int | None = None) -> "TrainConfig":
        doc = dict(doc)
        kind = doc.pop("aggregator", "quadratic")
        weights = doc.pop("weights", None)
        if weights is not None:
            spec = AggregatorSpec(kind, np.asarray(weights, dtype=np.float64))
        elif n_sources is not None:
            spec = AggregatorSpec.equal(kind, n_sources + 1)
        else:
            raise ValueError("config has no weights and the source count is unknown")
        return cls(aggregator=spec, **doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainReport:
    epochs_run: int
    train_objectives: list[float]
    dev_objectives: list[float] | None
    best_epoch: int
    params_digest: str
    stopped_early: bool = False
    extra: dict[str, Any] = field(default_factory=dict)


def _loss_matrix(probs: np.ndarray, answers: np.ndarray, present: np.ndarray) -> np.ndarray:
    """(B, K) probs + (B, m+1) answers/mask -> (B, m+1) clipped CE losses."""
    b, j_count = answers.shape
    safe = np.where(present, answers, 0)
    picked = probs[np.arange(b)[:, None], safe]
    losses = -np.log(np.maximum(picked, PROB_CLIP))
    return np.where(present, losses, 0.0)


def evaluate_objective(params: HarmonizerParams, data: Dataset, spec: AggregatorSpec) -> float:
    """Mean over instances of the aggregated loss vector; no mutation."""
    if data.n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    probs, _ = forward_batch(params, data.feature_matrix())
    losses = _loss_matrix(probs, data.labels.answers, data.labels.present)
    return float(aggregate_batch(spec, losses).mean())


class _Adam:
    """Adam with decoupled weight decay, fixed parameter iteration order."""

    def __init__(self, params: HarmonizerParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = zero_grads(params)
        self.v = zero_grads(params)
        self.t = 0

    def step(self, params: HarmonizerParams, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        b1c = 1.0 - cfg.adam_beta1 ** self.t
        b2c = 1.0 - cfg.adam_beta2 ** self.t
        for key in sorted(params.weights):
            g = grads[key]
            self.m[key] = cfg.adam_beta1 * self.m[key] + (1.0 - cfg.adam_beta1) * g
            self.v[key] = cfg.adam_beta2 * self.v[key] + (1.0 - cfg.adam_beta2) * (g * g)
            m_hat = self.m[key] / b1c
            v_hat = self.v[key] / b2c
            update = m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            if cfg.weight_decay > 0.0:
                update = update + cfg.weight_decay * params.weights[key]
            params.weights[key] -= cfg.lr * update


def train(
    train_data: Dataset,
    dev_data: Dataset | None,
    cfg: TrainConfig,
) -> tuple[HarmonizerParams, TrainReport]:
    """Minimize the mean aggregated loss; returns best-dev (or final) params.

    Raises if the training split still carries gold labels, if no source ever
    triggers, or if the objective goes non-finite (divergence diagnostic
    names the epoch and batch).
    """
    if train_data.has_gold():
        raise ValueError("training split carries gold labels; strip them first")
    if not train_data.labels.present.any():
        raise ValueError("no triggered source entries anywhere in the training split")
    n = train_data.n
    if cfg.batch_size > n:
        raise ValueError(f"batch size {cfg.batch_size} exceeds n={n}")
    if cfg.aggregator.size != train_data.m + 1:
        raise ValueError(
            f"aggregator has {cfg.aggregator.size} weights for {train_data.m + 1} sources"
        )

    feats = train_data.feature_matrix()
    answers = train_data.labels.answers
    present = train_data.labels.present
    spec = cfg.aggregator

    params = init_params(cfg.architecture, train_data.d, train_data.k, cfg.hidden_size, cfg.seed)
    adam = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)

    batch_size = 1 if cfg.single_pass else cfg.batch_size
    max_epochs = 1 if cfg.single_pass else cfg.max_epochs

    train_objs: list[float] = []
    dev_objs: list[float] = []
    best_epoch = -1
    best_dev = np.inf
    best_params = params.copy()
    stopped_early = False

    for epoch in range(max_epochs):
        if cfg.single_pass:
            order = np.arange(n)
        else:
            order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, batch_size)):
            idx = order[start : start + batch_size]
            x = feats[idx]
            ans = answers[idx]
            mask = present[idx]
            probs, cache = forward_batch(params, x)
            losses = _loss_matrix(probs, ans, mask)
            values = aggregate_batch(spec, losses)
            if not np.all(np.isfinite(values)):
                raise RuntimeError(
                    f"non-finite training objective at epoch {epoch}, batch {batch_no}"
                )
            upstream = aggregate_gradient_batch(spec, losses)
            upstream = np.where(mask, upstream, 0.0) / idx.shape[0]
            # d(CE_j)/d(logits) = probs - onehot(label_j); accumulate over sources
            row_weight = upstream.sum(axis=1)
            dlogits = row_weight[:, None] * probs
            rows = np.repeat(np.arange(idx.shape[0]), ans.shape[1])
            cols = np.where(mask, ans, 0).ravel()
            np.subtract.at(dlogits, (rows, cols), upstream.ravel())
            grads = backward_batch(params, x, cache, dlogits)
            adam.step(params, grads)

        train_objs.append(evaluate_objective(params, train_data, spec))
        if not np.isfinite(train_objs[-1]):
            raise RuntimeError(f"non-finite epoch objective at epoch {epoch}")
        if dev_data is not None:
            dev_obj = evaluate_objective(params, dev_data, spec)
            dev_objs.append(dev_obj)
            if dev_obj < best_dev:
                best_dev = dev_obj
                best_epoch = epoch
                best_params = params.copy()
            elif cfg.patience > 0 and epoch - best_epoch >= cfg.patience:
                stopped_early = True
                break

    if dev_data is None:
        best_params = params
        best_epoch = len(train_objs) - 1

    report = TrainReport(
        epochs_run=len(train_objs),
        train_objectives=train_objs,
        dev_objectives=dev_objs if dev_data is not None else None,
        best_epoch=best_epoch,
        params_digest=best_params.digest(),
        stopped_early=stopped_early,
    )
    return best_params, report
