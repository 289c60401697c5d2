"""Command-line entry points: polar synth|train|rebalance|score|eval|correct|experiment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import build_report, save_report, write_csvs
from .correction import (
    AnswerMapper,
    CorrectionPolicy,
    LlmClient,
    PromptBundle,
    correct_batch,
    default_prompt_bundle,
    save_corrections,
)
from .dataset import SynthConfig, generate_synthetic, load_dataset, save_dataset
from .harmonizer import load_params, save_params
from .pareto import AggregatorSpec
from .pipeline import ExperimentConfig, run_experiment
from .rebalance import RebalanceConfig, compute_residual_stats, rebalance_weights
from .scoring import load_scores, save_scores, score_batch
from .trainer import TrainConfig, train


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig.from_dict(_read_json(args.config)) if args.config else SynthConfig()
    ds = generate_synthetic(cfg, args.seed, args.split)
    if args.split == "train" and not args.keep_gold:
        ds = ds.without_gold()
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} instances (K={ds.k}, D={ds.d}, m={ds.m}) to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    train_ds = load_dataset(args.data, "train")
    dev_ds = load_dataset(args.dev, "dev").without_gold() if args.dev else None
    doc = _read_json(args.config) if args.config else {}
    if args.single_pass:
        doc["single_pass"] = True
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = TrainConfig.from_dict(doc, n_sources=train_ds.m)
    params, report = train(train_ds, dev_ds, cfg)
    save_params(
        params,
        args.out,
        class_labels=list(train_ds.class_space.labels),
        train_config_digest=cfg.digest(),
    )
    final = report.train_objectives[-1]
    print(
        f"trained {cfg.architecture}/{cfg.aggregator.kind}: {report.epochs_run} epochs, "
        f"final objective {final:.6f}, best epoch {report.best_epoch}, wrote {args.out}"
    )
    return 0


def _cmd_rebalance(args: argparse.Namespace) -> int:
    params, _ = load_params(args.model)
    data = load_dataset(args.data, "train")
    cfg = RebalanceConfig(scheme=args.scheme, epsilon=args.epsilon, ridge=args.ridge)
    if cfg.scheme == "equal":
        weights = rebalance_weights(None, cfg, size=data.m + 1)
    else:
        stats = compute_residual_stats(params, data)
        weights = rebalance_weights(stats, cfg)
    doc = {"weights": weights.tolist(), "scheme": cfg.scheme, "epsilon": cfg.epsilon}
    Path(args.out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(f"weights: {np.round(weights, 5).tolist()} -> {args.out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    params, _ = load_params(args.model)
    data = load_dataset(args.data, args.split)
    result = score_batch(params, data)
    save_scores(result, args.out, model_digest=params.digest())
    print(f"scored {len(result.scores)} instances ({result.n_skipped} skipped) -> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    result = load_scores(args.scores)
    data = load_dataset(args.data, "test")
    report = build_report(result.scores, data, args.bins, args.bin_size)
    save_report(report, args.out)
    if args.csv_dir:
        write_csvs(report, args.csv_dir)
    print(f"ECE {report.ece:.4f}  R2 {report.r2:.4f}  (n={report.n_evaluated}, skipped={report.n_skipped})")
    return 0


def _cmd_correct(args: argparse.Namespace) -> int:
    params, extras = load_params(args.model)
    data = load_dataset(args.data, args.split)
    policy = CorrectionPolicy.from_dict(_read_json(args.policy)) if args.policy else CorrectionPolicy()
    if args.prompts:
        bundle = PromptBundle.from_dict(_read_json(args.prompts))
    else:
        bundle = default_prompt_bundle(data.class_space)
    if args.mapper:
        mapper = AnswerMapper.from_dict(_read_json(args.mapper))
    else:
        mapper = AnswerMapper.from_class_space(data.class_space)
    if args.client == "replay":
        client = LlmClient(mode="replay", fixture_path=args.fixture)
    else:
        client = LlmClient(mode="live", endpoint=args.endpoint, model=args.llm_model)
    records = correct_batch(client, policy, bundle, mapper, params, data)
    save_corrections(records, args.out)
    followed = sum(1 for r in records if r.action == "follow_up")
    updated = sum(1 for r in records if r.status == "updated")
    print(f"{len(records)} instances, {followed} follow-ups, {updated} updated -> {args.out}")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    doc = _read_json(args.config)
    cfg = ExperimentConfig.from_dict(doc)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    result = run_experiment(cfg)
    for row in result.summary_rows:
        ece = "-" if row["ece_mean"] is None else f"{row['ece_mean']:.4f}"
        r2 = "-" if row["r2_mean"] is None else f"{row['r2_mean']:.4f}"
        print(f"{row['aggregator']:>14} {row['architecture']:>7}  ECE {ece}  R2 {r2}  seeds {row['n_seeds']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset file")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train", choices=("train", "dev", "test"))
    p.add_argument("--keep-gold", action="store_true", help="keep gold labels on a train split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a harmonizer")
    p.add_argument("--data", required=True)
    p.add_argument("--dev")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--single-pass", action="store_true",
                   help="one pass with one update per instance, in file order")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("rebalance", help="compute source weights from a pilot model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", default="min_variance", choices=("equal", "max_eigen", "min_variance"))
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rebalance)

    p = sub.add_parser("score", help="compute risk scores for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="calibration report for a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bin-size", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-dir")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("correct", help="threshold-gated answer correction")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--policy", help="CorrectionPolicy JSON file")
    p.add_argument("--prompts", help="PromptBundle JSON file")
    p.add_argument("--mapper", help="AnswerMapper JSON file")
    p.add_argument("--client", default="replay", choices=("replay", "live"))
    p.add_argument("--fixture", help="replay fixture JSONL")
    p.add_argument("--endpoint", help="live endpoint base URL")
    p.add_argument("--llm-model", help="live model name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_correct)

    p = sub.add_parser("experiment", help="run a sweep described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error surface
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
