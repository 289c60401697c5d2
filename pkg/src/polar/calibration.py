"""Calibration evaluation of risk scores against ground-truth error indicators.

ECE bins the scores into equal-interval bins over [0, 1] (last bin closed on
the right) and weighs per-bin |mean score - error rate| by bin mass. The
binned R-squared sorts scores ascending, groups them into consecutive
fixed-size bins (the last may be smaller), and reports the squared Pearson
correlation between per-bin mean score and per-bin error rate. A majority
vote estimator over the triggered sources serves as the baseline.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dataset import Dataset, LabelRow
from .harmonizer import Simplex
from .scoring import PolarScore, ScoreBatchResult

DEFAULT_PERCENTILES = (1.0, 5.0, 10.0, 25.0, 50.0, 100.0)


@dataclass
class CalibrationReport:
    ece: float
    r2: float
    curve_bins: list[tuple[float, float, float | None, float | None, int]]
    sorted_bins: list[tuple[float, float, int]]
    top_percentile_table: list[tuple[float, float]]
    n_evaluated: int
    n_skipped: int
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "ece": self.ece,
            "r2": self.r2,
            "curve_bins": [list(b) for b in self.curve_bins],
            "sorted_bins": [list(b) for b in self.sorted_bins],
            "top_percentile_table": [list(r) for r in self.top_percentile_table],
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
            **self.extra,
        }


def _check_inputs(scores: Sequence[float], errors: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(scores, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty score sequence")
    if z.shape != e.shape:
        raise ValueError("scores and errors must have equal length")
    return z, e


def ece(scores: Sequence[float], errors: Sequence[int], n_bins: int = 10) -> float:
    """Expected calibration error over equal-interval score bins."""
    z, e = _check_inputs(scores, errors)
    if n_bins < 1:
        raise ValueError("need at least one bin")
    idx = np.minimum((z * n_bins).astype(np.int64), n_bins - 1)
    total = 0.0
    n = z.size
    for b in range(n_bins):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        total += (cnt / n) * abs(float(z[mask].mean()) - float(e[mask].mean()))
    return total


def ece_curve(
    scores: Sequence[float], errors: Sequence[int], n_bins: int = 10
) -> list[tuple[float, float, float | None, float | None, int]]:
    """(bin_low, bin_high, mean_score, error_rate, count) per bin; empty bins carry None."""
    z, e = _check_inputs(scores, errors)
    idx = np.minimum((z * n_bins).astype(np.int64), n_bins - 1)
    rows = []
    for b in range(n_bins):
        mask = idx == b
        cnt = int(mask.sum())
        lo, hi = b / n_bins, (b + 1) / n_bins
        if cnt:
            rows.append((lo, hi, float(z[mask].mean()), float(e[mask].mean()), cnt))
        else:
            rows.append((lo, hi, None, None, 0))
    return rows


def _sorted_bin_means(
    z: np.ndarray, e: np.ndarray, bin_size: int, ids: Sequence[str] | None
) -> list[tuple[float, float, int]]:
    n = z.size
    if ids is None:
        order = np.argsort(z, kind="stable")
    else:
        order = sorted(range(n), key=lambda i: (z[i], ids[i]))
        order = np.asarray(order)
    rows = []
    for start in range(0, n, bin_size):
        sel = order[start : start + bin_size]
        rows.append((float(z[sel].mean()), float(e[sel].mean()), int(sel.size)))
    return rows


def binned_r2(
    scores: Sequence[float],
    errors: Sequence[int],
    bin_size: int = 100,
    ids: Sequence[str] | None = None,
) -> float:
    """Squared Pearson correlation of sorted-bin means; 0 when degenerate."""
    z, e = _check_inputs(scores, errors)
    if bin_size < 1:
        raise ValueError("bin size must be positive")
    rows = _sorted_bin_means(z, e, bin_size, ids)
    if len(rows) < 2:
        return 0.0
    mz = np.array([r[0] for r in rows])
    me = np.array([r[1] for r in rows])
    vz = mz - mz.mean()
    ve = me - me.mean()
    denom = float(np.sqrt((vz * vz).sum() * (ve * ve).sum()))
    if denom == 0.0:
        return 0.0
    r = float((vz * ve).sum()) / denom
    return r * r


def top_percentile_errors(
    scores: Sequence[float],
    errors: Sequence[int],
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    ids: Sequence[str] | None = None,
) -> list[tuple[float, float]]:
    """Mean error over the ceil(p*n/100) highest-score examples, per percentile."""
    z, e = _check_inputs(scores, errors)
    n = z.size
    if ids is None:
        ids = [str(i) for i in range(n)]
    order = sorted(range(n), key=lambda i: (-z[i], ids[i]))
    table = []
    for p in percentiles:
        if not 0.0 < p <= 100.0:
            raise ValueError(f"percentile {p} outside (0, 100]")
        k = max(1, math.ceil(p * n / 100.0))
        top = order[:k]
        table.append((float(p), float(e[top].mean())))
    return table


def majority_vote_estimate(row: LabelRow, k: int) -> tuple[Simplex, bool]:
    """Vote-share distribution over classes; the LLM's vote counts too.

    Returns (distribution, degenerate) where degenerate flags the zero-vote
    fallback to uniform.
    """
    counts = np.zeros(k)
    for ans in row.answers:
        if ans is not None:
            counts[ans] += 1.0
    total = counts.sum()
    if total == 0.0:
        return Simplex(np.full(k, 1.0 / k)), True
    return Simplex(counts / total), False


def majority_vote_scores(data: Dataset) -> ScoreBatchResult:
    """Baseline risk scores: 1 - vote share of the LLM's answer.

    Skips unsure-LLM instances with the same semantics as model scoring so the
    two systems are compared on identical example sets.
    """
    scores: list[PolarScore] = []
    skipped = 0
    for i, inst in enumerate(data.instances):
        row = data.labels.row(i)
        if row.llm is None:
            skipped += 1
            continue
        dist, _ = majority_vote_estimate(row, data.k)
        zeta = 1.0 - dist[row.llm]
        scores.append(PolarScore(inst.id, row.llm, zeta, dist.probs))
    return ScoreBatchResult(scores, skipped)


def error_indicators(data: Dataset, scores: Sequence[PolarScore]) -> np.ndarray:
    """0/1 error indicator per score: did the stated answer miss the gold label."""
    gold_by_id = {
        inst.id: inst.gold_label for inst in data.instances if inst.gold_label is not None
    }
    out = np.empty(len(scores), dtype=np.float64)
    for i, s in enumerate(scores):
        gold = gold_by_id.get(s.instance_id)
        if gold is None:
            raise ValueError(f"instance {s.instance_id} has no gold label")
        out[i] = 1.0 if s.llm_answer != gold else 0.0
    return out


def build_report(
    scores: Sequence[PolarScore],
    data: Dataset,
    n_bins: int = 10,
    bin_size: int = 100,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
) -> CalibrationReport:
    """Assemble calibration statistics against the dataset's gold labels.

    Scores whose instance lacks a gold label cannot be evaluated; the report
    pre-condition is a gold-labeled split, so those raise. Instances without a
    score (unsure LLM) count as skipped.
    """
    if not data.has_gold():
        raise ValueError("calibration needs a gold-labeled split")
    scores = list(scores)
    errs = error_indicators(data, scores)
    zetas = np.array([s.zeta for s in scores])
    ids = [s.instance_id for s in scores]
    return CalibrationReport(
        ece=ece(zetas, errs, n_bins),
        r2=binned_r2(zetas, errs, bin_size, ids),
        curve_bins=ece_curve(zetas, errs, n_bins),
        sorted_bins=_sorted_bin_means(zetas, errs, bin_size, ids),
        top_percentile_table=top_percentile_errors(zetas, errs, percentiles, ids),
        n_evaluated=len(scores),
        n_skipped=data.n - len(scores),
    )


def save_report(report: CalibrationReport, path: str | Path, config_digest: str | None = None) -> None:
    doc = report.to_dict()
    if config_digest is not None:
        doc["config_digest"] = config_digest
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def write_csvs(report: CalibrationReport, out_dir: str | Path) -> None:
    """Plot-ready curve.csv and sorted_bins.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "mean_score", "error_rate", "count"])
        for lo, hi, mean_score, err_rate, cnt in report.curve_bins:
            writer.writerow([
                lo, hi,
                "" if mean_score is None else mean_score,
                "" if err_rate is None else err_rate,
                cnt,
            ])
    with (out / "sorted_bins.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mean_score", "error_rate", "count"])
        for mean_score, err_rate, cnt in report.sorted_bins:
            writer.writerow([mean_score, err_rate, cnt])
