"""End-to-end orchestration: sweeps over aggregators/architectures/seeds,
the no-external-sources ablation, the majority-vote baseline, and the
pilot-then-rebalanced weighting flow.

Every artifact a run writes is stamped with a digest of the config that
produced it, so re-running the same config overwrites files with identical
content.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .calibration import CalibrationReport, build_report, majority_vote_scores, save_report
from .dataset import Dataset, SynthConfig, generate_synthetic_splits, load_dataset
from .harmonizer import HarmonizerParams, save_params
from .pareto import AggregatorSpec
from .rebalance import RebalanceConfig, compute_residual_stats, rebalance_weights
from .scoring import save_scores, score_batch
from .trainer import TrainConfig, train


@dataclass
class ExperimentConfig:
    aggregators: list[str]
    architectures: list[str]
    seeds: list[int]
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    synth: SynthConfig | None = None
    n_train: int = 5000
    n_dev: int = 1000
    n_test: int = 2000
    out_dir: str | None = None
    n_bins: int = 10
    bin_size: int = 100
    hidden_size: int = 64
    learning_rate: float | None = None
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5

    def __post_init__(self):
        if not self.aggregators or not self.architectures:
            raise ValueError("sweep lists must be non-empty")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be non-empty and distinct")
        if self.synth is None and self.train_path is None:
            raise ValueError("provide dataset paths or a synthetic config")

    def to_dict(self) -> dict[str, Any]:
        doc = {
            "aggregators": self.aggregators,
            "architectures": self.architectures,
            "seeds": self.seeds,
            "train_path": self.train_path,
            "dev_path": self.dev_path,
            "test_path": self.test_path,
            "synth": self.synth.to_dict() if self.synth else None,
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "n_test": self.n_test,
            "n_bins": self.n_bins,
            "bin_size": self.bin_size,
            "hidden_size": self.hidden_size,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        doc = dict(doc)
        doc.pop("out_dir", None)
        synth = doc.pop("synth", None)
        cfg = cls(synth=SynthConfig.from_dict(synth) if synth else None, **doc)
        return cfg

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CellOutcome:
    seed: int
    ece: float | None
    r2: float | None
    error: str | None = None


@dataclass
class ExperimentResult:
    cells: dict[str, list[CellOutcome]]
    summary_rows: list[dict[str, Any]]
    config_digest: str

    def cell(self, aggregator: str, architecture: str) -> list[CellOutcome]:
        return self.cells[f"{aggregator}|{architecture}"]


def _load_splits(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset | None, Dataset]:
    if cfg.synth is not None:
        return generate_synthetic_splits(cfg.synth, seed, cfg.n_train, cfg.n_dev, cfg.n_test)
    train_ds = load_dataset(cfg.train_path, "train")
    dev_ds = load_dataset(cfg.dev_path, "dev").without_gold() if cfg.dev_path else None
    test_ds = load_dataset(cfg.test_path, "test")
    return train_ds, dev_ds, test_ds


def _train_config(cfg: ExperimentConfig, spec: AggregatorSpec, arch: str, seed: int) -> TrainConfig:
    return TrainConfig(
        aggregator=spec,
        architecture=arch,
        hidden_size=cfg.hidden_size,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        patience=cfg.patience,
        seed=seed,
    )


def _run_cell(
    cfg: ExperimentConfig,
    train_ds: Dataset,
    dev_ds: Dataset | None,
    test_ds: Dataset,
    spec: AggregatorSpec,
    arch: str,
    seed: int,
    cell_dir: Path | None,
    digest: str,
) -> CellOutcome:
    tc = _train_config(cfg, spec, arch, seed)
    params, _ = train(train_ds, dev_ds, tc)
    result = score_batch(params, test_ds)
    report = build_report(result.scores, test_ds, cfg.n_bins, cfg.bin_size)
    if cell_dir is not None:
        cell_dir.mkdir(parents=True, exist_ok=True)
        save_params(
            params,
            cell_dir / "model.json",
            class_labels=list(train_ds.class_space.labels),
            train_config_digest=digest,
        )
        save_scores(result, cell_dir / "scores.jsonl", params.digest(), digest)
        save_report(report, cell_dir / "report.json", digest)
    return CellOutcome(seed, report.ece, report.r2)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Full grid: every (aggregator, architecture, seed), the no-sources
    ablation on the first grid cell's configuration, and the majority-vote
    baseline. Cell failures are recorded and the run continues."""
    digest = cfg.digest()
    out_root = Path(cfg.out_dir) if cfg.out_dir else None
    cells: dict[str, list[CellOutcome]] = {}

    for seed in cfg.seeds:
        train_ds, dev_ds, test_ds = _load_splits(cfg, seed)
        size = train_ds.m + 1

        for agg in cfg.aggregators:
            for arch in cfg.architectures:
                key = f"{agg}|{arch}"
                cell_dir = (
                    out_root / "cells" / f"{agg}_{arch}" / f"seed_{seed}" if out_root else None
                )
                try:
                    outcome = _run_cell(
                        cfg, train_ds, dev_ds, test_ds,
                        AggregatorSpec.equal(agg, size), arch, seed, cell_dir, digest,
                    )
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    outcome = CellOutcome(seed, None, None, f"{type(exc).__name__}: {exc}")
                cells.setdefault(key, []).append(outcome)

        # ablation: drop the external sources, keep only the LLM column
        abl_agg, abl_arch = cfg.aggregators[0], cfg.architectures[0]
        abl_dir = out_root / "cells" / "no_sources" / f"seed_{seed}" if out_root else None
        try:
            outcome = _run_cell(
                cfg,
                train_ds.without_sources(),
                dev_ds.without_sources() if dev_ds else None,
                test_ds.without_sources(),
                AggregatorSpec.equal(abl_agg, 1), abl_arch, seed, abl_dir, digest,
            )
        except Exception as exc:  # noqa: BLE001
            outcome = CellOutcome(seed, None, None, f"{type(exc).__name__}: {exc}")
        cells.setdefault("no_sources", []).append(outcome)

        try:
            mv = majority_vote_scores(test_ds)
            mv_report = build_report(mv.scores, test_ds, cfg.n_bins, cfg.bin_size)
            outcome = CellOutcome(seed, mv_report.ece, mv_report.r2)
        except Exception as exc:  # noqa: BLE001
            outcome = CellOutcome(seed, None, None, f"{type(exc).__name__}: {exc}")
        cells.setdefault("majority_vote", []).append(outcome)

    summary_rows = []
    for key, outcomes in cells.items():
        agg, _, arch = key.partition("|")
        oks = [o for o in outcomes if o.error is None]
        summary_rows.append({
            "aggregator": agg,
            "architecture": arch,
            "ece_mean": float(np.mean([o.ece for o in oks])) if oks else None,
            "r2_mean": float(np.mean([o.r2 for o in oks])) if oks else None,
            "n_seeds": len(oks),
        })

    result = ExperimentResult(cells, summary_rows, digest)
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        _write_summary_csv(result, out_root / "summary.csv")
        doc = {
            "config_digest": digest,
            "config": cfg.to_dict(),
            "summary": summary_rows,
            "cells": {
                key: [
                    {"seed": o.seed, "ece": o.ece, "r2": o.r2, "error": o.error}
                    for o in outcomes
                ]
                for key, outcomes in cells.items()
            },
        }
        (out_root / "summary.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return result


def _write_summary_csv(result: ExperimentResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["aggregator", "architecture", "ece_mean", "r2_mean", "n_seeds"])
        for row in result.summary_rows:
            writer.writerow([
                row["aggregator"], row["architecture"],
                "" if row["ece_mean"] is None else row["ece_mean"],
                "" if row["r2_mean"] is None else row["r2_mean"],
                row["n_seeds"],
            ])


@dataclass
class PairedRun:
    pilot_params: HarmonizerParams
    pilot_report: CalibrationReport
    weights: np.ndarray
    rebalanced_params: HarmonizerParams
    rebalanced_report: CalibrationReport


def run_pilot_then_rebalanced(
    train_ds: Dataset,
    dev_ds: Dataset | None,
    test_ds: Dataset,
    base: TrainConfig,
    rebalance: RebalanceConfig,
    n_bins: int = 10,
    bin_size: int = 100,
) -> PairedRun:
    """Equal-weight pilot, residual-based reweighting, retrain, both reports."""
    size = train_ds.m + 1
    pilot_cfg = replace(base, aggregator=AggregatorSpec.equal(base.aggregator.kind, size))
    pilot_params, _ = train(train_ds, dev_ds, pilot_cfg)
    pilot_scores = score_batch(pilot_params, test_ds)
    pilot_report = build_report(pilot_scores.scores, test_ds, n_bins, bin_size)

    if rebalance.scheme == "equal":
        weights = rebalance_weights(None, rebalance, size=size)
    else:
        stats = compute_residual_stats(pilot_params, train_ds)
        weights = rebalance_weights(stats, rebalance)

    tuned_cfg = replace(base, aggregator=AggregatorSpec(base.aggregator.kind, weights))
    tuned_params, _ = train(train_ds, dev_ds, tuned_cfg)
    tuned_scores = score_batch(tuned_params, test_ds)
    tuned_report = build_report(tuned_scores.scores, test_ds, n_bins, bin_size)

    return PairedRun(pilot_params, pilot_report, weights, tuned_params, tuned_report)
