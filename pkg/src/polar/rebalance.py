"""Source weight rebalancing from a pilot model's prediction residuals.

The residual of source j on an instance is onehot(answer_j) minus the pilot's
predicted distribution. Covariances use pairwise-overlap expectations: the
means and cross moments for the (i, j) entry are taken over instances where
both i and j triggered. Correlations degrade gracefully: entries with empty
overlap or vanishing variance are zeroed.

Two data-driven schemes turn the correlation matrix into weights: the
dominant eigenvector (power iteration) and the minimum-variance solution
C^{-1} 1 / (1^T C^{-1} 1). Both are floored onto the simplex so every source
keeps at least an epsilon share of the equal weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .harmonizer import HarmonizerParams, forward_batch

VAR_FLOOR = 1e-12
SCHEMES = ("equal", "max_eigen", "min_variance")


@dataclass
class ResidualStats:
    covariance: np.ndarray
    correlation: np.ndarray
    pair_counts: np.ndarray

    @property
    def size(self) -> int:
        return self.correlation.shape[0]

    def defined(self) -> np.ndarray:
        """Coordinates with usable variance (diagonal not zeroed out)."""
        return np.diag(self.correlation) > 0.0


@dataclass
class RebalanceConfig:
    scheme: str = "min_variance"
    epsilon: float = 0.3
    ridge: float = 1e-8
    power_tol: float = 1e-10
    power_max_iter: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected {SCHEMES}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.ridge < 0.0:
            raise ValueError("ridge must be non-negative")


def compute_residual_stats(params: HarmonizerParams, data: Dataset) -> ResidualStats:
    """Pairwise residual covariance/correlation over co-triggered instances."""
    n, j_count, k = data.n, data.m + 1, data.k
    probs, _ = forward_batch(params, data.feature_matrix())
    answers = data.labels.answers
    present = data.labels.present

    onehot = np.zeros((n, j_count, k))
    safe = np.where(present, answers, 0)
    onehot[np.arange(n)[:, None], np.arange(j_count)[None, :], safe] = 1.0
    residuals = onehot - probs[:, None, :]  # meaningful only where present

    cov = np.zeros((j_count, j_count))
    counts = np.zeros((j_count, j_count), dtype=np.int64)
    for i in range(j_count):
        for j in range(i, j_count):
            both = present[:, i] & present[:, j]
            cnt = int(both.sum())
            counts[i, j] = counts[j, i] = cnt
            if cnt == 0:
                continue
            ri = residuals[both, i, :]
            rj = residuals[both, j, :]
            cross = float((ri * rj).sum(axis=1).mean())
            mean_dot = float(ri.mean(axis=0) @ rj.mean(axis=0))
            cov[i, j] = cov[j, i] = cross - mean_dot

    corr = np.zeros_like(cov)
    variances = np.diag(cov)
    ok = (variances > VAR_FLOOR) & (np.diag(counts) > 0)
    for i in range(j_count):
        for j in range(j_count):
            if ok[i] and ok[j] and counts[i, j] > 0:
                corr[i, j] = cov[i, j] / np.sqrt(variances[i] * variances[j])
    return ResidualStats(cov, corr, counts)


def project_to_simplex(v: np.ndarray, epsilon: float) -> np.ndarray:
    """Floored simplex projection: keep at least epsilon/(m+1) per coordinate.

    w_excess = (v - eps/(m+1))^+ ;  w = eps/(m+1) + w_excess/|w_excess|_1 * (1-eps).
    Falls back to equal weights when nothing exceeds the floor.
    """
    v = np.asarray(v, dtype=np.float64)
    size = v.shape[0]
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    floor = epsilon / size
    excess = np.maximum(v - floor, 0.0)
    total = float(excess.sum())
    if total <= 1e-15:
        return np.full(size, 1.0 / size)
    return floor + excess / total * (1.0 - epsilon)


def _power_iteration(matrix: np.ndarray, cfg: RebalanceConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    v = rng.normal(size=matrix.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(cfg.power_max_iter):
        nxt = matrix @ v
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            # v lies in the nullspace; restart from a fresh direction
            v = rng.normal(size=matrix.shape[0])
            v /= np.linalg.norm(v)
            continue
        nxt /= norm
        lam = float(nxt @ matrix @ nxt)
        if np.linalg.norm(matrix @ nxt - lam * nxt) <= cfg.power_tol:
            return nxt
        v = nxt
    raise RuntimeError(
        f"power iteration did not converge within {cfg.power_max_iter} iterations"
    )


def max_eigen_weights(stats: ResidualStats, cfg: RebalanceConfig) -> np.ndarray:
    """Dominant eigenvector of the (ridged) residual correlation, floored."""
    matrix = stats.correlation + cfg.ridge * np.eye(stats.size)
    v = _power_iteration(matrix, cfg)
    total = float(v.sum())
    if total < 0.0:
        v = -v
        total = -total
    if total == 0.0:
        # sign undecidable; orient by the largest-magnitude entry
        v = v * np.sign(v[np.argmax(np.abs(v))])
        total = float(v.sum())
    if total != 0.0:
        v = v / total
    return project_to_simplex(v, cfg.epsilon)


def min_variance_weights(stats: ResidualStats, cfg: RebalanceConfig) -> np.ndarray:
    """Closed-form minimizer of v^T C v on the sum-one hyperplane, floored.

    Degenerate coordinates (zeroed correlation rows) are excluded from the
    solve and re-enter only through the epsilon floor.
    """
    ok = stats.defined()
    if not ok.any():
        return np.full(stats.size, 1.0 / stats.size)
    sub = stats.correlation[np.ix_(ok, ok)] + cfg.ridge * np.eye(int(ok.sum()))
    try:
        x = np.linalg.solve(sub, np.ones(int(ok.sum())))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"residual correlation is singular even after ridge: {exc}") from exc
    v = np.zeros(stats.size)
    v[ok] = x / float(x.sum())
    return project_to_simplex(v, cfg.epsilon)


def rebalance_weights(stats: ResidualStats | None, cfg: RebalanceConfig, size: int | None = None) -> np.ndarray:
    """Dispatch on the configured scheme; ``equal`` needs only the size."""
    if cfg.scheme == "equal":
        if size is None:
            if stats is None:
                raise ValueError("equal scheme needs the number of sources")
            size = stats.size
        return np.full(size, 1.0 / size)
    if stats is None:
        raise ValueError(f"scheme {cfg.scheme!r} needs residual stats")
    if cfg.scheme == "max_eigen":
        return max_eigen_weights(stats, cfg)
    return min_variance_weights(stats, cfg)
