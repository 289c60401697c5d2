"""Threshold-gated answer correction: self-verification and source-grounded RAG.

An instance is re-queried only when its risk score strictly exceeds the policy
threshold. The follow-up prompt either asks the model to double-check itself
or additionally quotes the answer suggested by every triggered source using
per-source description templates. Responses are quantized back into the class
space by the answer mapper; anything unparseable keeps the original answer.

The client speaks an OpenAI-style chat-completions protocol in live mode and
answers from a fixture keyed by (instance id, strategy) in replay mode.
Replay never touches the network.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dataset import ClassSpace, Dataset, Instance, LabelRow
from .harmonizer import HarmonizerParams
from .scoring import PolarScore, score_batch

STRATEGIES = ("self_verify", "rag")
TOKEN_ENV_VAR = "POLAR_LLM_TOKEN"


@dataclass
class CorrectionPolicy:
    delta: float = 0.5
    strategy: str = "self_verify"
    source_descriptions: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected {STRATEGIES}")

    def validate_for(self, m: int) -> None:
        if self.strategy == "rag" and len(self.source_descriptions) != m:
            raise ValueError(
                f"rag strategy needs one description per source ({m}), "
                f"got {len(self.source_descriptions)}"
            )

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "CorrectionPolicy":
        return cls(
            delta=doc.get("delta", 0.5),
            strategy=doc.get("strategy", "self_verify"),
            source_descriptions=list(doc.get("source_descriptions", [])),
        )


@dataclass
class PromptBundle:
    """Prompt templates; the full initial prompt is the concatenation of the
    problem setting, the response regularization, and the task instance."""

    problem_setting: str
    response_regularization: str
    task_instance_template: str
    followup_self_verify: str
    followup_rag_preamble: str

    def initial_prompt(self, text: str) -> str:
        return (
            self.problem_setting
            + self.response_regularization
            + self.task_instance_template.format(TEXT=text)
        )

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "PromptBundle":
        return cls(
            problem_setting=doc["problem_setting"],
            response_regularization=doc["response_regularization"],
            task_instance_template=doc["task_instance_template"],
            followup_self_verify=doc["followup_self_verify"],
            followup_rag_preamble=doc["followup_rag_preamble"],
        )


def default_prompt_bundle(class_space: ClassSpace) -> PromptBundle:
    labels = ", ".join(class_space.labels)
    return PromptBundle(
        problem_setting=(
            "You are an assistant answering a classification question. "
            f"Your answer must be one of the following categories: [{labels}]. "
        ),
        response_regularization=(
            "State the most likely category at the very beginning of your "
            "response, before any explanation. If you are too uncertain to "
            "commit to any category, say 'unsure' at the very beginning instead. "
        ),
        task_instance_template=(
            "Please classify the following example into the most likely category: {TEXT} "
        ),
        followup_self_verify=(
            "Are you confident in your previous answer? If not, please give a "
            "corrected answer. Otherwise, please restate your previous answer. "
        ),
        followup_rag_preamble=(
            "The correct answer may differ from your previous one. Here is "
            "evidence retrieved from external sources to help you decide. "
        ),
    )


@dataclass
class MapResult:
    """Quantization outcome: a class index, an explicit 'unsure', or unmapped."""

    label: int | None
    status: str  # "mapped" | "unsure" | "unmapped"


@dataclass
class AnswerMapper:
    """Maps free-text responses onto the class space by pattern position."""

    label_patterns: list[list[str]]
    unsure_prefix_window: int = 20

    def __post_init__(self):
        if not self.label_patterns:
            raise ValueError("need patterns for at least one class")
        for idx, patterns in enumerate(self.label_patterns):
            if not patterns or any(not p for p in patterns):
                raise ValueError(f"class {idx} needs at least one non-empty pattern")

    @classmethod
    def from_class_space(cls, class_space: ClassSpace, unsure_prefix_window: int = 20) -> "AnswerMapper":
        return cls([[lbl] for lbl in class_space.labels], unsure_prefix_window)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "AnswerMapper":
        return cls(
            label_patterns=[list(p) for p in doc["label_patterns"]],
            unsure_prefix_window=doc.get("unsure_prefix_window", 20),
        )


def map_response(mapper: AnswerMapper, text: str) -> MapResult:
    """Earliest case-insensitive pattern match wins; ties go to the lower class.

    'unsure' anywhere within the first ``unsure_prefix_window`` characters
    short-circuits to an absent answer.
    """
    lowered = text.lower()
    # the unsure marker must *start* within the prefix window
    if lowered.find("unsure", 0, mapper.unsure_prefix_window + len("unsure") - 1) != -1:
        return MapResult(None, "unsure")
    best: tuple[int, int] | None = None  # (offset, class index)
    for cls_idx, patterns in enumerate(mapper.label_patterns):
        for pattern in patterns:
            pos = lowered.find(pattern.lower())
            if pos == -1:
                continue
            key = (pos, cls_idx)
            if best is None or key < best:
                best = key
    if best is None:
        return MapResult(None, "unmapped")
    return MapResult(best[1], "mapped")


def decide(policy: CorrectionPolicy, score: PolarScore) -> str:
    """'follow_up' iff the risk score strictly exceeds the threshold."""
    return "follow_up" if score.zeta > policy.delta else "keep"


def _parse_entities(text: str | None) -> tuple[str, str]:
    """Best-effort pull of 'Entity 1 ... Entity 2 ...' mentions out of the text."""
    if not text:
        return "", ""
    import re

    matches = re.findall(r"[Ee]ntity\s*([12])\s*[:\-]?\s*([^\n,;]+)", text)
    first = second = ""
    for which, value in matches:
        if which == "1" and not first:
            first = value.strip()
        elif which == "2" and not second:
            second = value.strip()
    return first, second


def build_followup(
    policy: CorrectionPolicy,
    bundle: PromptBundle,
    inst: Instance,
    row: LabelRow,
    class_space: ClassSpace,
) -> str:
    """Compose the follow-up prompt for one instance.

    self_verify: the fixed verification question. rag: the preamble, one
    evidence line per triggered source in ascending source order, then the
    verification question. RAG with nothing triggered falls back to
    self-verification.
    """
    if policy.strategy == "self_verify":
        return bundle.followup_self_verify
    triggered = [(j, ans) for j, ans in enumerate(row.answers[1:], start=1) if ans is not None]
    if not triggered:
        return bundle.followup_self_verify
    policy.validate_for(row.m)
    ent1, ent2 = _parse_entities(inst.text)
    parts = [bundle.followup_rag_preamble]
    for j, ans in triggered:
        template = policy.source_descriptions[j - 1]
        line = (
            template.replace("{ANSWER}", class_space.labels[ans])
            .replace("{ENTITY1}", ent1)
            .replace("{ENTITY2}", ent2)
        )
        parts.append(line)
    parts.append(bundle.followup_self_verify)
    return "\n".join(parts)


class TransportError(RuntimeError):
    """Raised when a live request keeps failing after all retries."""


class LlmClient:
    """Chat-completions client with live HTTP and offline replay modes.

    Every completion attempt is recorded in ``call_log`` as (instance id,
    strategy) so callers can audit exactly which instances were re-queried.
    """

    def __init__(
        self,
        mode: str = "replay",
        endpoint: str | None = None,
        model: str | None = None,
        fixture_path: str | Path | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        concurrency: int = 4,
        token_env_var: str = TOKEN_ENV_VAR,
    ):
        if mode not in ("live", "replay"):
            raise ValueError(f"unknown client mode {mode!r}")
        if mode == "live" and (not endpoint or not model):
            raise ValueError("live mode needs an endpoint and a model name")
        self.mode = mode
        self.endpoint = endpoint.rstrip("/") if endpoint else None
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.concurrency = concurrency
        self.token_env_var = token_env_var
        self.call_log: list[tuple[str, str]] = []
        self._fixture: dict[tuple[str, str], str] = {}
        if mode == "replay":
            if fixture_path is None:
                raise ValueError("replay mode needs a fixture path")
            self._fixture = load_replay_fixture(fixture_path)

    def complete(self, instance_id: str, strategy: str, system: str, user: str) -> str:
        self.call_log.append((instance_id, strategy))
        if self.mode == "replay":
            key = (instance_id, strategy)
            if key not in self._fixture:
                raise KeyError(f"replay fixture has no response for id={instance_id!r}, strategy={strategy!r}")
            return self._fixture[key]
        return self._complete_live(system, user)

    def _complete_live(self, system: str, user: str) -> str:
        import requests

        token = os.environ.get(self.token_env_var, "")
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": 0,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    f"{self.endpoint}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - transport layer catch-all
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(2.0 ** attempt)
        raise TransportError(f"request failed after {self.max_retries} attempts: {last_error}")


def load_replay_fixture(path: str | Path) -> dict[tuple[str, str], str]:
    fixture: dict[tuple[str, str], str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if raw.strip():
            rec = json.loads(raw)
            fixture[(str(rec["id"]), str(rec["strategy"]))] = str(rec["response_text"])
    return fixture


def save_replay_fixture(records: Sequence[dict[str, str]], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@dataclass
class CorrectionRecord:
    instance_id: str
    old_answer: int | None
    zeta: float | None
    action: str  # "keep" | "follow_up" | "skip"
    new_answer: int | None
    status: str  # "kept" | "updated" | "unchanged" | "unsure_kept" | "unmapped_kept" | "failed" | "no_answer"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.instance_id,
            "old": self.old_answer,
            "zeta": self.zeta,
            "action": self.action,
            "new": self.new_answer,
            "status": self.status,
        }


def correct_batch(
    client: LlmClient,
    policy: CorrectionPolicy,
    bundle: PromptBundle,
    mapper: AnswerMapper,
    params: HarmonizerParams,
    data: Dataset,
) -> list[CorrectionRecord]:
    """Score, gate, re-query, and re-map answers for a whole dataset.

    Live transport failures keep the original answer and mark the record
    failed; the run continues. Replay answers come from the fixture and a
    missing fixture key raises. Output preserves instance order.
    """
    if policy.strategy == "rag":
        policy.validate_for(data.m)
    batch = score_batch(params, data)
    by_id = {s.instance_id: s for s in batch.scores}

    jobs: list[tuple[int, Instance, PolarScore, str]] = []
    records: list[CorrectionRecord | None] = [None] * data.n
    for i, inst in enumerate(data.instances):
        score = by_id.get(inst.id)
        if score is None:
            records[i] = CorrectionRecord(inst.id, None, None, "skip", None, "no_answer")
            continue
        if decide(policy, score) == "keep":
            records[i] = CorrectionRecord(
                inst.id, score.llm_answer, score.zeta, "keep", score.llm_answer, "kept"
            )
            continue
        prompt = build_followup(policy, bundle, inst, data.labels.row(i), data.class_space)
        jobs.append((i, inst, score, prompt))

    def run_job(job: tuple[int, Instance, PolarScore, str]) -> CorrectionRecord:
        i, inst, score, followup = job
        system = bundle.problem_setting + bundle.response_regularization
        user = (
            bundle.task_instance_template.format(TEXT=inst.text or "")
            + f"\nYour previous answer: {data.class_space.labels[score.llm_answer]}.\n"
            + followup
        )
        try:
            response = client.complete(inst.id, policy.strategy, system, user)
        except TransportError:
            return CorrectionRecord(
                inst.id, score.llm_answer, score.zeta, "follow_up", score.llm_answer, "failed"
            )
        mapped = map_response(mapper, response)
        if mapped.status == "mapped":
            status = "updated" if mapped.label != score.llm_answer else "unchanged"
            return CorrectionRecord(
                inst.id, score.llm_answer, score.zeta, "follow_up", mapped.label, status
            )
        status = "unsure_kept" if mapped.status == "unsure" else "unmapped_kept"
        return CorrectionRecord(
            inst.id, score.llm_answer, score.zeta, "follow_up", score.llm_answer, status
        )

    if client.mode == "live" and client.concurrency > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=client.concurrency) as pool:
            for job, record in zip(jobs, pool.map(run_job, jobs)):
                records[job[0]] = record
    else:
        for job in jobs:
            records[job[0]] = run_job(job)

    return [rec for rec in records if rec is not None]


def save_corrections(records: Sequence[CorrectionRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
