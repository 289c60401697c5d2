"""Instance / label-matrix data model, loaders, and synthetic benchmarks.

The canonical on-disk format is JSONL. The first line is a header

    {"schema": "polar-v1", "k": K, "d": D, "m": M, "labels": [...]}

and every following line is one instance

    {"id": str, "features": [float x D], "text": str?, "gold": int?,
     "llm": int|null, "sources": [int|null x M]}

``null`` encodes abstention: an untriggered source, or an LLM that
declined to answer. Gold labels are carried only by dev/test splits;
the loader erases them for train splits unless told otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SPLITS = ("train", "dev", "test")
DATASET_SCHEMA = "polar-v1"


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


@dataclass(frozen=True)
class ClassSpace:
    """Ordered answer classes. A class index is an int in [0, K)."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise DatasetError("need at least two classes")
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError("class labels must be unique")
        if any(not lbl for lbl in self.labels):
            raise DatasetError("class labels must be non-empty")

    @property
    def k(self) -> int:
        return len(self.labels)

    def check_index(self, idx: int, context: str = "label") -> int:
        if not 0 <= idx < self.k:
            raise DatasetError(f"{context} {idx} out of range for K={self.k}")
        return idx

    @classmethod
    def default(cls, k: int) -> "ClassSpace":
        return cls(tuple(f"class_{i}" for i in range(k)))


@dataclass
class Instance:
    """One input example: a precomputed feature vector plus optional text/gold."""

    id: str
    features: np.ndarray
    text: str | None = None
    gold_label: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise DatasetError(f"instance {self.id}: features must be a flat vector")
        if not np.all(np.isfinite(feats)):
            raise DatasetError(f"instance {self.id}: non-finite feature value")
        self.features = feats

    @property
    def d(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LabelRow:
    """Per-instance answers, index 0 = LLM, indices 1..m = external sources.

    ``None`` means the LLM said it was unsure / the source did not trigger.
    """

    answers: tuple[int | None, ...]

    @property
    def llm(self) -> int | None:
        return self.answers[0]

    @property
    def m(self) -> int:
        return len(self.answers) - 1

    def triggered(self) -> tuple[bool, ...]:
        return tuple(a is not None for a in self.answers)


class SourceLabelMatrix:
    """Answers from the LLM (column 0) and m sources for n instances.

    Internally stored as an (n, m+1) int array plus a presence mask so the
    numeric code never sees a sentinel value for abstention.
    """

    def __init__(self, answers: np.ndarray, present: np.ndarray):
        answers = np.asarray(answers, dtype=np.int64)
        present = np.asarray(present, dtype=bool)
        if answers.shape != present.shape or answers.ndim != 2:
            raise DatasetError("answers and presence mask must share an (n, m+1) shape")
        if answers.shape[1] < 1:
            raise DatasetError("label matrix needs at least the LLM column")
        answers = answers.copy()
        answers[~present] = -1
        self._answers = answers
        self._present = present
        self._answers.setflags(write=False)
        self._present.setflags(write=False)

    @classmethod
    def from_columns(
        cls,
        llm_answers: Sequence[int | None],
        source_answers: Sequence[Sequence[int | None]],
    ) -> "SourceLabelMatrix":
        n = len(llm_answers)
        m = len(source_answers[0]) if n else 0
        answers = np.full((n, m + 1), -1, dtype=np.int64)
        present = np.zeros((n, m + 1), dtype=bool)
        for i, (llm, row) in enumerate(zip(llm_answers, source_answers)):
            if len(row) != m:
                raise DatasetError(f"row {i}: expected {m} source entries, got {len(row)}")
            for j, val in enumerate((llm, *row)):
                if val is not None:
                    answers[i, j] = int(val)
                    present[i, j] = True
        return cls(answers, present)

    @property
    def n(self) -> int:
        return self._answers.shape[0]

    @property
    def m(self) -> int:
        return self._answers.shape[1] - 1

    @property
    def answers(self) -> np.ndarray:
        """(n, m+1) int array; -1 where absent. Column 0 is the LLM."""
        return self._answers

    @property
    def present(self) -> np.ndarray:
        """(n, m+1) bool triggering mask."""
        return self._present

    def llm_answer(self, i: int) -> int | None:
        return int(self._answers[i, 0]) if self._present[i, 0] else None

    def source_answer(self, i: int, j: int) -> int | None:
        """Answer of source j in [1, m] for instance i, or None."""
        if not 1 <= j <= self.m:
            raise IndexError(f"source index {j} outside [1, {self.m}]")
        return int(self._answers[i, j]) if self._present[i, j] else None

    def row(self, i: int) -> LabelRow:
        vals = tuple(
            int(self._answers[i, j]) if self._present[i, j] else None
            for j in range(self.m + 1)
        )
        return LabelRow(vals)

    def validate(self, k: int) -> None:
        bad = self._present & ((self._answers < 0) | (self._answers >= k))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DatasetError(
                f"row {i}, column {j}: label {self._answers[i, j]} out of range for K={k}"
            )

    def llm_only(self) -> "SourceLabelMatrix":
        """Copy keeping only the LLM column (m = 0 ablation)."""
        return SourceLabelMatrix(self._answers[:, :1], self._present[:, :1])


@dataclass
class Dataset:
    """A split of instances with their label matrix."""

    class_space: ClassSpace
    instances: list[Instance]
    labels: SourceLabelMatrix
    split: str
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        self.validate()

    def validate(self) -> None:
        n = len(self.instances)
        if self.labels.n != n:
            raise DatasetError(f"label matrix has {self.labels.n} rows for {n} instances")
        if n:
            d = self.instances[0].d
            for inst in self.instances:
                if inst.d != d:
                    raise DatasetError(
                        f"instance {inst.id}: feature dimension {inst.d} != {d}"
                    )
        self.labels.validate(self.class_space.k)
        for inst in self.instances:
            if inst.gold_label is not None:
                self.class_space.check_index(inst.gold_label, f"gold label of {inst.id}")

    @property
    def n(self) -> int:
        return len(self.instances)

    @property
    def m(self) -> int:
        return self.labels.m

    @property
    def k(self) -> int:
        return self.class_space.k

    @property
    def d(self) -> int:
        return self.instances[0].d if self.instances else 0

    def feature_matrix(self) -> np.ndarray:
        if not self.instances:
            return np.zeros((0, 0))
        return np.stack([inst.features for inst in self.instances])

    def gold_array(self) -> np.ndarray:
        """(n,) int array with -1 where gold is absent."""
        return np.array(
            [-1 if inst.gold_label is None else inst.gold_label for inst in self.instances],
            dtype=np.int64,
        )

    def has_gold(self) -> bool:
        return any(inst.gold_label is not None for inst in self.instances)

    def without_gold(self) -> "Dataset":
        insts = [
            Instance(inst.id, inst.features.copy(), inst.text, None)
            for inst in self.instances
        ]
        return Dataset(self.class_space, insts, self.labels, self.split, dict(self.meta))

    def without_sources(self) -> "Dataset":
        """LLM-only copy for the no-external-sources ablation."""
        return Dataset(
            self.class_space, list(self.instances), self.labels.llm_only(), self.split, dict(self.meta)
        )

    def subset(self, indices: Sequence[int], split: str | None = None) -> "Dataset":
        """New dataset holding the given instance rows, in the given order.

        Per-instance meta lists (same length as the dataset) are sliced along.
        """
        indices = list(indices)
        insts = [self.instances[i] for i in indices]
        labels = SourceLabelMatrix(
            self.labels.answers[indices], self.labels.present[indices]
        )
        meta: dict[str, Any] = {}
        for key, value in self.meta.items():
            if isinstance(value, list) and len(value) == self.n:
                meta[key] = [value[i] for i in indices]
            else:
                meta[key] = value
        return Dataset(self.class_space, insts, labels, split or self.split, meta)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Semantic equality: same classes, instances (order included), and labels."""
    if a.class_space != b.class_space or a.split != b.split or a.n != b.n:
        return False
    if not np.array_equal(a.labels.present, b.labels.present):
        return False
    if not np.array_equal(a.labels.answers, b.labels.answers):
        return False
    for x, y in zip(a.instances, b.instances):
        if x.id != y.id or x.text != y.text or x.gold_label != y.gold_label:
            return False
        if not np.array_equal(x.features, y.features):
            return False
    return True


# ---------------------------------------------------------------------------
# Canonical JSONL load/save
# ---------------------------------------------------------------------------

def _parse_optional_label(value: Any, k: int, line_no: int, what: str) -> int | None:
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise DatasetError(f"line {line_no}: {what} must be an integer or null")
    if not 0 <= value < k:
        raise DatasetError(f"line {line_no}: {what} {value} out of range for K={k}")
    return value


def load_dataset(path: str | Path, split: str, erase_gold: bool | None = None) -> Dataset:
    """Load a canonical JSONL file.

    ``erase_gold=None`` applies the default policy: gold labels are dropped
    for train splits and kept otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if erase_gold is None:
        erase_gold = split == "train"

    with path.open("r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line 1: malformed header: {exc}") from exc
        if header.get("schema") != DATASET_SCHEMA:
            raise DatasetError(f"line 1: expected schema {DATASET_SCHEMA!r}")
        k, d, m = int(header["k"]), int(header["d"]), int(header["m"])
        class_space = ClassSpace(tuple(header["labels"]))
        if class_space.k != k:
            raise DatasetError("line 1: header k disagrees with its label list")

        instances: list[Instance] = []
        llm_col: list[int | None] = []
        src_cols: list[list[int | None]] = []
        for line_no, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON: {exc}") from exc
            try:
                feats = np.asarray(rec["features"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"line {line_no}: bad features field: {exc}") from exc
            if feats.shape != (d,):
                raise DatasetError(
                    f"line {line_no}: feature dimension {feats.shape} != ({d},)"
                )
            gold = _parse_optional_label(rec.get("gold"), k, line_no, "gold label")
            if erase_gold:
                gold = None
            llm = _parse_optional_label(rec.get("llm"), k, line_no, "llm answer")
            sources = rec.get("sources", [])
            if len(sources) != m:
                raise DatasetError(f"line {line_no}: expected {m} source entries")
            parsed = [
                _parse_optional_label(v, k, line_no, f"source {j + 1} label")
                for j, v in enumerate(sources)
            ]
            instances.append(Instance(str(rec["id"]), feats, rec.get("text"), gold))
            llm_col.append(llm)
            src_cols.append(parsed)

    if src_cols:
        labels = SourceLabelMatrix.from_columns(llm_col, src_cols)
    else:
        labels = SourceLabelMatrix(np.zeros((0, m + 1), dtype=np.int64), np.zeros((0, m + 1), dtype=bool))
    return Dataset(class_space, instances, labels, split)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "schema": DATASET_SCHEMA,
        "k": dataset.k,
        "d": dataset.d,
        "m": dataset.m,
        "labels": list(dataset.class_space.labels),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for i, inst in enumerate(dataset.instances):
            row = dataset.labels.row(i)
            rec: dict[str, Any] = {
                "id": inst.id,
                "features": [float(v) for v in inst.features],
            }
            if inst.text is not None:
                rec["text"] = inst.text
            if inst.gold_label is not None:
                rec["gold"] = inst.gold_label
            rec["llm"] = row.llm
            rec["sources"] = list(row.answers[1:])
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# WRENCH-style import
# ---------------------------------------------------------------------------

_WRENCH_FILES = {"train": "train.json", "dev": "valid.json", "test": "test.json"}


def import_wrench(path: str | Path, split: str = "train", erase_gold: bool | None = None) -> Dataset:
    """Import a weak-supervision benchmark directory.

    Expects ``train.json`` / ``valid.json`` / ``test.json`` keyed by example
    id with ``label`` and ``weak_labels`` fields, a ``features.jsonl`` sidecar
    with ``{id, features}`` records, and an ``llm_answers.jsonl`` sidecar with
    ``{id, llm}`` records. Weak label -1 maps to abstention. Examples missing
    an LLM sidecar record get an absent LLM answer and are counted in
    ``meta["import_summary"]["llm_missing"]``.
    """
    root = Path(path)
    split_file = root / _WRENCH_FILES[split]
    if not split_file.exists():
        raise DatasetError(f"missing split file: {split_file}")
    feature_file = root / "features.jsonl"
    if not feature_file.exists():
        raise DatasetError(f"missing features sidecar: {feature_file}")
    llm_file = root / "llm_answers.jsonl"
    if not llm_file.exists():
        raise DatasetError(f"missing LLM answers sidecar: {llm_file}")

    examples: dict[str, Any] = json.loads(split_file.read_text(encoding="utf-8"))

    features: dict[str, np.ndarray] = {}
    for raw in feature_file.read_text(encoding="utf-8").splitlines():
        if raw.strip():
            rec = json.loads(raw)
            features[str(rec["id"])] = np.asarray(rec["features"], dtype=np.float64)

    llm_answers: dict[str, int | None] = {}
    for raw in llm_file.read_text(encoding="utf-8").splitlines():
        if raw.strip():
            rec = json.loads(raw)
            llm_answers[str(rec["id"])] = rec["llm"]

    label_file = root / "label.json"
    if label_file.exists():
        mapping = json.loads(label_file.read_text(encoding="utf-8"))
        labels = tuple(mapping[str(i)] for i in range(len(mapping)))
        class_space = ClassSpace(labels)
    else:
        k = 0
        for ex in examples.values():
            if ex.get("label") is not None:
                k = max(k, int(ex["label"]) + 1)
            for wl in ex.get("weak_labels", []):
                if wl != -1:
                    k = max(k, int(wl) + 1)
        class_space = ClassSpace.default(max(k, 2))

    if erase_gold is None:
        erase_gold = split == "train"

    instances: list[Instance] = []
    llm_col: list[int | None] = []
    src_cols: list[list[int | None]] = []
    llm_missing = 0
    for ex_id in sorted(examples, key=lambda s: (len(s), s)):
        ex = examples[ex_id]
        if ex_id not in features:
            raise DatasetError(f"example {ex_id}: no features sidecar record")
        gold = None if erase_gold else ex.get("label")
        text = None
        data = ex.get("data")
        if isinstance(data, dict):
            text = data.get("text")
        row: list[int | None] = []
        for j, wl in enumerate(ex.get("weak_labels", [])):
            wl = int(wl)
            if wl == -1:
                row.append(None)
            elif 0 <= wl < class_space.k:
                row.append(wl)
            else:
                raise DatasetError(f"example {ex_id}: unknown weak label value {wl}")
        llm = llm_answers.get(ex_id)
        if ex_id not in llm_answers:
            llm_missing += 1
        elif llm is not None:
            llm = class_space.check_index(int(llm), f"llm answer of {ex_id}")
        instances.append(Instance(ex_id, features[ex_id], text, gold))
        llm_col.append(llm)
        src_cols.append(row)

    widths = {len(r) for r in src_cols}
    if len(widths) > 1:
        raise DatasetError(f"inconsistent weak label counts across examples: {sorted(widths)}")

    labels = SourceLabelMatrix.from_columns(llm_col, src_cols)
    ds = Dataset(class_space, instances, labels, split)
    ds.meta["import_summary"] = {
        "n": ds.n,
        "m": ds.m,
        "llm_missing": llm_missing,
        "llm_unsure": sum(1 for v in llm_col if v is None) - llm_missing,
    }
    return ds


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Configuration for the synthetic benchmark with known ground truth.

    Each instance draws a latent difficulty t ~ Uniform[0,1]. Features are the
    gold class mean plus Gaussian noise with std noise_base + noise_difficulty*t,
    which makes difficulty visible to a feature-based model. The target LLM
    accuracy is 1/K + (1-1/K) * sigmoid(llm_alpha - llm_beta*t): above chance,
    decaying with difficulty.

    Two LLM mechanisms are supported. "feature_reader" (default) draws the
    LLM answer from a distribution over classes that depends on the features
    only (through the class posterior given x and t), tuned so the expected
    accuracy matches the target curve wherever the features permit it; since
    the answer is conditionally independent of the gold label given the
    features, a feature-based risk score can in principle be calibrated.
    "gold_copier" flips a coin of the target accuracy and either copies the
    gold label or draws a uniform wrong class, like the external sources do.
    """

    n: int = 1000
    k: int = 2
    d: int = 16
    m: int = 3
    source_accuracy: tuple[float, ...] = (0.85, 0.75, 0.7)
    source_coverage: tuple[float, ...] = (0.9, 0.6, 0.5)
    llm_alpha: float = 1.5
    llm_beta: float = 5.0
    llm_coverage: float = 1.0
    llm_mode: str = "feature_reader"  # or "gold_copier"
    class_sep: float = 4.0
    noise_base: float = 1.0
    noise_difficulty: float = 2.0
    class_balance: tuple[float, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.k < 2 or self.m < 0:
            raise DatasetError("n >= 1, d >= 1, k >= 2, m >= 0 required")
        if len(self.source_accuracy) != self.m or len(self.source_coverage) != self.m:
            raise DatasetError("need one accuracy and one coverage per source")
        chance = 1.0 / self.k
        for j, a in enumerate(self.source_accuracy):
            if not chance < a <= 1.0:
                raise DatasetError(
                    f"source {j + 1} accuracy {a} must exceed chance {chance:.4f}"
                )
        for j, c in enumerate(self.source_coverage):
            if not 0.0 < c <= 1.0:
                raise DatasetError(f"source {j + 1} coverage {c} must lie in (0, 1]")
        if not 0.0 < self.llm_coverage <= 1.0:
            raise DatasetError("llm coverage must lie in (0, 1]")
        if self.llm_mode not in ("feature_reader", "gold_copier"):
            raise DatasetError(f"unknown llm mode {self.llm_mode!r}")
        if self.class_balance is not None:
            if len(self.class_balance) != self.k:
                raise DatasetError("class balance needs one probability per class")
            if any(p <= 0 for p in self.class_balance) or abs(sum(self.class_balance) - 1.0) > 1e-9:
                raise DatasetError("class balance must be positive and sum to 1")

    def to_dict(self) -> dict[str, Any]:
        out = {
            "n": self.n, "k": self.k, "d": self.d, "m": self.m,
            "source_accuracy": list(self.source_accuracy),
            "source_coverage": list(self.source_coverage),
            "llm_alpha": self.llm_alpha, "llm_beta": self.llm_beta,
            "llm_coverage": self.llm_coverage, "llm_mode": self.llm_mode,
            "class_sep": self.class_sep,
            "noise_base": self.noise_base, "noise_difficulty": self.noise_difficulty,
        }
        if self.class_balance is not None:
            out["class_balance"] = list(self.class_balance)
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SynthConfig":
        kwargs = dict(data)
        for key in ("source_accuracy", "source_coverage", "class_balance", "labels"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def generate_synthetic(config: SynthConfig, seed: int, split: str = "train") -> Dataset:
    """Generate a dataset with known gold labels and LLM error probabilities.

    Deterministic under (config, seed). The true per-instance probability that
    the LLM errs is stored in ``meta["true_llm_error_prob"]`` for oracle use;
    gold labels are attached to every instance (strip with ``without_gold()``
    before training).
    """
    rng = np.random.default_rng(seed)
    n, k, d, m = config.n, config.k, config.d, config.m

    means = rng.normal(size=(k, d))
    means *= config.class_sep / np.linalg.norm(means, axis=1, keepdims=True)

    t = rng.uniform(0.0, 1.0, size=n)
    balance = (
        np.full(k, 1.0 / k)
        if config.class_balance is None
        else np.asarray(config.class_balance, dtype=np.float64)
    )
    if config.class_balance is None:
        gold = rng.integers(0, k, size=n)
    else:
        gold = rng.choice(k, size=n, p=balance)
    noise = rng.normal(size=(n, d))
    scale = config.noise_base + config.noise_difficulty * t
    feats = means[gold] + noise * scale[:, None]

    target_acc = 1.0 / k + (1.0 - 1.0 / k) * _sigmoid(
        config.llm_alpha - config.llm_beta * t
    )

    def draw_answers(acc: np.ndarray | float, cov: float) -> tuple[np.ndarray, np.ndarray]:
        present = rng.uniform(size=n) < cov
        correct = rng.uniform(size=n) < acc
        wrong_shift = rng.integers(1, k, size=n)
        ans = np.where(correct, gold, (gold + wrong_shift) % k)
        return ans, present

    if config.llm_mode == "gold_copier":
        llm_ans, llm_present = draw_answers(target_acc, config.llm_coverage)
        llm_error_prob = 1.0 - target_acc
    else:
        # class posterior given the features and the instance's noise level
        sq_dist = ((feats[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        log_post = -sq_dist / (2.0 * scale[:, None] ** 2) + np.log(balance)
        log_post -= log_post.max(axis=1, keepdims=True)
        post = np.exp(log_post)
        post /= post.sum(axis=1, keepdims=True)
        answer_dist, achieved_acc = _reader_answer_dist(post, target_acc)
        llm_present = rng.uniform(size=n) < config.llm_coverage
        u = rng.uniform(size=n)
        cdf = np.cumsum(answer_dist, axis=1)
        llm_ans = (u[:, None] > cdf).sum(axis=1).clip(0, k - 1)
        llm_error_prob = 1.0 - achieved_acc

    answers = np.full((n, m + 1), -1, dtype=np.int64)
    present = np.zeros((n, m + 1), dtype=bool)
    answers[:, 0], present[:, 0] = llm_ans, llm_present
    for j in range(m):
        answers[:, j + 1], present[:, j + 1] = draw_answers(
            config.source_accuracy[j], config.source_coverage[j]
        )

    class_space = ClassSpace(config.labels) if config.labels else ClassSpace.default(k)
    instances = [
        Instance(f"synth-{i:06d}", feats[i], None, int(gold[i])) for i in range(n)
    ]
    ds = Dataset(class_space, instances, SourceLabelMatrix(answers, present), split)
    ds.meta["true_llm_error_prob"] = llm_error_prob.tolist()
    ds.meta["difficulty"] = t.tolist()
    return ds


def _reader_answer_dist(
    post: np.ndarray, target_acc: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance answer distributions whose expected accuracy against a
    gold label drawn from ``post`` equals the target, where reachable.

    Interpolates between uniform, the posterior itself, and the posterior's
    argmax; the reachable accuracy is capped by max_c post_c, so the target is
    clipped there. Returns (distributions, achieved accuracies).
    """
    n, k = post.shape
    uniform_acc = np.full(n, 1.0 / k)
    post_acc = (post * post).sum(axis=1)
    top = post.argmax(axis=1)
    top_acc = post[np.arange(n), top]
    acc = np.clip(target_acc, uniform_acc, top_acc)

    dist = np.empty_like(post)
    onehot = np.zeros_like(post)
    onehot[np.arange(n), top] = 1.0

    hi = acc >= post_acc
    # blend posterior -> argmax one-hot
    denom_hi = np.maximum(top_acc - post_acc, 1e-300)
    lam_hi = np.clip((acc - post_acc) / denom_hi, 0.0, 1.0)
    dist_hi = (1.0 - lam_hi)[:, None] * post + lam_hi[:, None] * onehot
    # blend uniform -> posterior
    denom_lo = np.maximum(post_acc - 1.0 / k, 1e-300)
    lam_lo = np.clip((acc - 1.0 / k) / denom_lo, 0.0, 1.0)
    dist_lo = (1.0 - lam_lo)[:, None] / k + lam_lo[:, None] * post
    dist[hi] = dist_hi[hi]
    dist[~hi] = dist_lo[~hi]

    achieved = (post * dist).sum(axis=1)
    return dist, achieved


def generate_synthetic_splits(
    config: SynthConfig,
    seed: int,
    n_train: int,
    n_dev: int,
    n_test: int,
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/dev/test slices of one generated world.

    A single generator call produces all instances so the class geometry is
    shared across splits; train and dev arrive gold-free.
    """
    from dataclasses import replace

    total = generate_synthetic(replace(config, n=n_train + n_dev + n_test), seed)
    train = total.subset(range(0, n_train), "train").without_gold()
    dev = total.subset(range(n_train, n_train + n_dev), "dev").without_gold()
    test = total.subset(range(n_train + n_dev, total.n), "test")
    return train, dev, test
