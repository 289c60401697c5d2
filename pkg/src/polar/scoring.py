"""POLAR risk scores: the model's estimated probability that the LLM erred.

For an instance with stated LLM answer c, the score is 1 - h(x)[c]. Instances
where the LLM declined to answer have no score and are reported as skipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import Dataset, Instance
from .harmonizer import HarmonizerParams, Simplex, forward, forward_batch

SCORES_SCHEMA = "polar-scores-v1"


@dataclass
class PolarScore:
    instance_id: str
    llm_answer: int
    zeta: float
    dist: np.ndarray

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=np.float64)
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"score {self.zeta} outside [0, 1]")
        if self.zeta + float(self.dist[self.llm_answer]) != 1.0:
            # zeta must satisfy zeta + dist[answer] == 1 exactly as stored
            raise ValueError("score and stored distribution are inconsistent")


@dataclass
class ScoreBatchResult:
    scores: list[PolarScore]
    n_skipped: int

    def zetas(self) -> np.ndarray:
        return np.array([s.zeta for s in self.scores], dtype=np.float64)

    def ids(self) -> list[str]:
        return [s.instance_id for s in self.scores]


def polar_score(params: HarmonizerParams, inst: Instance, llm_answer: int) -> PolarScore:
    """Score one instance; the LLM answer must be a valid class index."""
    if not 0 <= llm_answer < params.k:
        raise ValueError(f"llm answer {llm_answer} out of range for K={params.k}")
    dist = forward(params, inst.features)
    zeta = 1.0 - dist[llm_answer]
    return PolarScore(inst.id, llm_answer, zeta, dist.probs)


def score_batch(params: HarmonizerParams, data: Dataset) -> ScoreBatchResult:
    """Score every instance with a stated LLM answer, preserving order."""
    if data.n == 0:
        return ScoreBatchResult([], 0)
    probs, _ = forward_batch(params, data.feature_matrix())
    scores: list[PolarScore] = []
    skipped = 0
    for i, inst in enumerate(data.instances):
        answer = data.labels.llm_answer(i)
        if answer is None:
            skipped += 1
            continue
        zeta = 1.0 - float(probs[i, answer])
        scores.append(PolarScore(inst.id, answer, zeta, probs[i]))
    return ScoreBatchResult(scores, skipped)


def save_scores(
    result: ScoreBatchResult,
    path: str | Path,
    model_digest: str | None = None,
    config_digest: str | None = None,
) -> None:
    """One JSON record per score, preceded by a schema header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header: dict[str, Any] = {"schema": SCORES_SCHEMA, "n_skipped": result.n_skipped}
    if model_digest is not None:
        header["model_digest"] = model_digest
    if config_digest is not None:
        header["config_digest"] = config_digest
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in result.scores:
            rec = {
                "id": s.instance_id,
                "llm": s.llm_answer,
                "zeta": s.zeta,
                "dist": s.dist.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_scores(path: str | Path) -> ScoreBatchResult:
    """Read a score file; the header line is optional."""
    scores: list[PolarScore] = []
    skipped = 0
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            if "schema" in rec:
                if rec["schema"] != SCORES_SCHEMA:
                    raise ValueError(f"line {line_no}: unexpected schema {rec['schema']!r}")
                skipped = int(rec.get("n_skipped", 0))
                continue
            scores.append(
                PolarScore(str(rec["id"]), int(rec["llm"]), float(rec["zeta"]), rec["dist"])
            )
    return ScoreBatchResult(scores, skipped)
