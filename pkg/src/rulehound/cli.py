"""Command line front end.

Four subcommands cover the workflow: ``train`` fits a classifier on a CSV
and checkpoints it, ``extract`` distills a checkpointed model into rules,
``compare`` benchmarks both extractors across datasets and seeds, and
``simulate`` runs the smart-home service end to end.  Every command writes
a manifest next to its outputs recording inputs (with content hashes),
settings, and produced files.  Exit codes: 0 success, 2 usage problems
(including missing input files), 3 malformed data, 4 training failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .data import DataError, Dataset, load_csv, load_schema, split_seen_unseen
from .dqn import QAgent
from .metrics import MetricsReport, evaluate
from .mlp import ClassifierOracle, NeuralClassifier, TrainingError
from .pbre import ExtractionConfig, PBREExtractor
from .rxncm import RxNCMExtractor
from .smarthome import (
    CycleResult,
    EnvConfig,
    TrainingSettings,
    load_config_file,
    make_variant,
    render_rule,
    rollout,
    run_cycle,
    write_transitions,
)

METRICS_COLUMNS = ("dataset", "method", "split", "numRules", "accuracy", "similarity", "inference", "average")


class UsageError(Exception):
    """Bad invocation: missing files, contradictory flags."""


def _fmt(value) -> str:
    return repr(float(value))


def _require_file(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    return path


def _resolve_out(args) -> Path:
    out = args.out or os.environ.get("RULEHOUND_OUT")
    if not out:
        raise UsageError("no output directory: pass --out or set RULEHOUND_OUT")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    args,
    inputs: Sequence[Path],
    outputs: Sequence[str],
    settings: Mapping,
) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "settings": dict(settings),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_metrics_csv(path: Path, rows: Sequence[Mapping]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["dataset"],
                    row["method"],
                    row["split"],
                    _fmt(row["numRules"]),
                    _fmt(row["accuracy"]),
                    _fmt(row["similarity"]),
                    _fmt(row["inference"]),
                    _fmt(row["average"]),
                ]
            )


def _schema_sidecar(data_path: Path) -> Path:
    return data_path.with_name(data_path.stem + ".schema.json")


def _load_dataset(data_path: Path, schema_path: Path | None) -> Dataset:
    if schema_path is None:
        schema_path = _schema_sidecar(data_path)
    schema = load_schema(_require_file(schema_path))
    return load_csv(_require_file(data_path), schema)


def _load_oracle(path: Path):
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"model checkpoint {path} is not valid JSON: {exc}") from exc
    kind = payload.get("kind")
    if kind == "classifier":
        return ClassifierOracle.from_dict(payload)
    if kind == "qagent":
        return QAgent.from_dict(payload)
    raise DataError(f"model checkpoint {path} has unknown kind {kind!r}")


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated integers, got {text!r}") from None
    if not sizes:
        raise UsageError("--hidden needs at least one layer size")
    return sizes


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}") from None
    if not seeds:
        raise UsageError("--seeds needs at least one seed")
    return seeds


def _extraction_config(args, file_cfg: Mapping | None = None) -> ExtractionConfig:
    cfg = dict((file_cfg or {}).get("extraction", {}))
    known = {"tolerance_fraction", "tolerances", "epsilon"}
    unknown = set(cfg) - known
    if unknown:
        raise DataError(f"unknown extraction settings: {sorted(unknown)}")
    # Explicit flags beat config-file values; dataclass defaults fill the rest.
    if args.tolerance is not None:
        cfg["tolerance_fraction"] = args.tolerance
    if args.epsilon is not None:
        cfg["epsilon"] = args.epsilon
    return ExtractionConfig(**cfg)


def _make_extractor(method: str, cfg: ExtractionConfig):
    if method == "pbre":
        return PBREExtractor(
            tolerance_fraction=cfg.tolerance_fraction,
            tolerances=cfg.tolerances,
            epsilon=cfg.epsilon,
        )
    if method == "rxncm":
        return RxNCMExtractor()
    raise UsageError(f"unknown method {method!r}; expected pbre or rxncm")


def cmd_train(args) -> int:
    out_dir = _resolve_out(args)
    data_path = _require_file(args.data)
    dataset = _load_dataset(data_path, Path(args.schema) if args.schema else None)
    if len(dataset.schema.target_names) != 1:
        raise DataError("train expects a dataset with exactly one target state")
    target = dataset.schema.target_names[0]

    clf = NeuralClassifier(
        hidden_layer_sizes=_parse_hidden(args.hidden),
        activation=args.activation,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        seed=args.seed,
    )
    clf.fit(dataset.inputs(), dataset.column(target))
    accuracy = float((clf.predict(dataset.inputs()) == dataset.column(target)).mean())

    oracle = ClassifierOracle(clf, dataset.schema.input_names, target)
    model_path = out_dir / "model.json"
    model_path.write_text(json.dumps(oracle.to_dict()) + "\n")
    print(f"trained on {len(dataset)} samples; train accuracy {accuracy:.4f}")
    print(f"model written to {model_path}")
    _write_manifest(
        out_dir,
        "train",
        args,
        inputs=[data_path],
        outputs=["model.json"],
        settings={
            "hidden": args.hidden,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch_size": args.batch_size,
            "optimizer": args.optimizer,
            "final_train_accuracy": accuracy,
        },
    )
    return 0


def cmd_extract(args) -> int:
    out_dir = _resolve_out(args)
    data_path = _require_file(args.data)
    model_path = _require_file(args.model)
    dataset = _load_dataset(data_path, Path(args.schema) if args.schema else None)
    oracle = _load_oracle(model_path)

    file_cfg = load_config_file(_require_file(args.config)) if args.config else None
    cfg = _extraction_config(args, file_cfg)
    seen, unseen = split_seen_unseen(dataset, args.split_ratio, np.random.default_rng(args.seed))
    extractor = _make_extractor(args.method, cfg)
    extractor.fit(oracle, seen, unseen)

    rules_path = out_dir / "rules.json"
    if args.method == "pbre":
        extractor.ruleset_.save(rules_path)
    else:
        extractor.save(rules_path)

    rows = [
        evaluate(extractor, oracle, split).to_row(data_path.stem, args.method, split.provenance)
        for split in (seen, unseen)
    ]
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps({"rows": rows}, indent=2) + "\n")
    _write_metrics_csv(out_dir / "metrics.csv", rows)

    print(f"{args.method}: {extractor.num_rules_} rules from {len(seen)} seen samples")
    for row in rows:
        print(
            f"  {row['split']}: accuracy {row['accuracy']:.4f}, similarity {row['similarity']:.4f}, "
            f"coverage {row['inference']:.4f}"
        )
    _write_manifest(
        out_dir,
        "extract",
        args,
        inputs=[data_path, model_path],
        outputs=["rules.json", "report.json", "metrics.csv"],
        settings={
            "method": args.method,
            "split_ratio": args.split_ratio,
            "tolerance": cfg.tolerance_fraction,
            "epsilon": cfg.epsilon,
        },
    )
    return 0


def cmd_compare(args) -> int:
    out_dir = _resolve_out(args)
    seeds = _parse_seeds(args.seeds)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for method in methods:
        if method not in ("pbre", "rxncm"):
            raise UsageError(f"unknown method {method!r} in --methods")
    cfg = _extraction_config(args)
    rules_dir = out_dir / "rules"
    rules_dir.mkdir(exist_ok=True)

    inputs: list[Path] = []
    outputs: list[str] = ["metrics.csv", "details.json"]
    details: list[dict] = []
    accumulator: dict[tuple[str, str, str], list[MetricsReport]] = {}
    row_order: list[tuple[str, str, str]] = []

    for data_arg in args.data:
        data_path = _require_file(data_arg)
        inputs.append(data_path)
        dataset = _load_dataset(data_path, None)
        if len(dataset.schema.target_names) != 1:
            raise DataError(f"{data_path.stem}: compare expects a single target state")
        target = dataset.schema.target_names[0]
        for seed in seeds:
            streams = np.random.SeedSequence(seed).spawn(2)
            seen, unseen = split_seen_unseen(
                dataset, args.split_ratio, np.random.default_rng(streams[0])
            )
            clf = NeuralClassifier(
                hidden_layer_sizes=_parse_hidden(args.hidden),
                epochs=args.epochs,
                lr=args.lr,
                seed=int(streams[1].generate_state(1)[0]),
            )
            clf.fit(seen.inputs(), seen.column(target))
            oracle = ClassifierOracle(clf, dataset.schema.input_names, target)
            for method in methods:
                extractor = _make_extractor(method, cfg)
                extractor.fit(oracle, seen, unseen)
                rules_name = f"{data_path.stem}_{method}_s{seed}.json"
                if method == "pbre":
                    extractor.ruleset_.save(rules_dir / rules_name)
                else:
                    extractor.save(rules_dir / rules_name)
                outputs.append(f"rules/{rules_name}")
                for split in (seen, unseen):
                    report = evaluate(extractor, oracle, split)
                    key = (data_path.stem, method, split.provenance)
                    if key not in accumulator:
                        accumulator[key] = []
                        row_order.append(key)
                    accumulator[key].append(report)
                    details.append(
                        {
                            "seed": seed,
                            **report.to_row(data_path.stem, method, split.provenance),
                            "n_samples": report.n_samples,
                            "n_abstained": report.n_abstained,
                        }
                    )

    rows = []
    for key in row_order:
        dataset_name, method, split = key
        reports = accumulator[key]
        rows.append(
            {
                "dataset": dataset_name,
                "method": method,
                "split": split,
                "numRules": float(np.mean([r.num_rules for r in reports])),
                "accuracy": float(np.mean([r.accuracy for r in reports])),
                "similarity": float(np.mean([r.similarity for r in reports])),
                "inference": float(np.mean([r.inference_coverage for r in reports])),
                "average": float(np.mean([r.average for r in reports])),
            }
        )
    _write_metrics_csv(out_dir / "metrics.csv", rows)
    (out_dir / "details.json").write_text(json.dumps({"runs": details}, indent=2) + "\n")

    for row in rows:
        print(
            f"{row['dataset']:>12} {row['method']:>6} {row['split']:>6}: "
            f"rules {row['numRules']:.1f}, accuracy {row['accuracy']:.4f}, "
            f"similarity {row['similarity']:.4f}, coverage {row['inference']:.4f}"
        )
    _write_manifest(
        out_dir,
        "compare",
        args,
        inputs=inputs,
        outputs=outputs,
        settings={
            "seeds": list(seeds),
            "methods": methods,
            "split_ratio": args.split_ratio,
            "tolerance": cfg.tolerance_fraction,
            "epsilon": cfg.epsilon,
            "hidden": args.hidden,
            "epochs": args.epochs,
            "lr": args.lr,
        },
    )
    return 0


def cmd_simulate(args) -> int:
    out_dir = _resolve_out(args)
    file_cfg = load_config_file(_require_file(args.config)) if args.config else {}
    for section in set(file_cfg) - {"env", "training", "agent", "extraction"}:
        raise DataError(f"unknown config section {section!r}")

    variant = make_variant(args.variant)
    env_over = dict(file_cfg.get("env", {}))
    if env_over:
        merged = {**{k: getattr(variant.config, k) for k in EnvConfig.__dataclass_fields__}, **env_over}
        variant = replace(variant, config=EnvConfig.from_dict(merged))
    train_over = dict(file_cfg.get("training", {}))
    if args.episodes is not None:
        train_over["episodes"] = args.episodes
    if train_over:
        merged = {
            **{k: getattr(variant.settings, k) for k in TrainingSettings.__dataclass_fields__},
            **train_over,
        }
        variant = replace(variant, settings=TrainingSettings.from_dict(merged))
    agent_over = dict(file_cfg.get("agent", {}))
    if agent_over:
        known = {"hidden_layer_sizes", "gamma", "lr", "sync_every", "hysteresis", "dataset_days"}
        unknown = set(agent_over) - known
        if unknown:
            raise DataError(f"unknown agent settings: {sorted(unknown)}")
        if "hidden_layer_sizes" in agent_over:
            agent_over["hidden_layer_sizes"] = tuple(int(h) for h in agent_over["hidden_layer_sizes"])
        variant = replace(variant, **agent_over)

    cfg = _extraction_config(args, file_cfg)
    result: CycleResult = run_cycle(
        variant,
        seed=args.seed,
        method=args.method,
        split_ratio=args.split_ratio,
        extraction=cfg,
    )

    training = result.training
    status = "converged" if training.converged else "did not converge"
    print(
        f"{variant.name}: {status} after {training.episodes_run} episodes "
        f"(satisfaction {training.satisfaction:.4f})"
    )
    if not training.converged:
        raise TrainingError(
            f"{variant.name} failed to reach {variant.settings.satisfaction_target:.0%} "
            f"satisfaction within {variant.settings.episodes} episodes"
        )

    rules_path = out_dir / "rules.json"
    outputs = ["rules.json", "metrics.csv", "transitions.csv", "checkpoint.json"]
    if args.method == "pbre":
        result.extractor.ruleset_.save(rules_path)
        lines = [render_rule(rule) for rule in result.extractor.rules_]
        (out_dir / "rules.txt").write_text("\n".join(lines) + "\n")
        outputs.append("rules.txt")
        for line in lines:
            print("  " + line)
    else:
        result.extractor.save(rules_path)

    rows = [
        result.reports[split].to_row(variant.name, args.method, split)
        for split in ("seen", "unseen")
    ]
    _write_metrics_csv(out_dir / "metrics.csv", rows)

    log_rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    write_transitions(out_dir / "transitions.csv", rollout(result.env, result.agent, log_rng))
    (out_dir / "checkpoint.json").write_text(json.dumps(result.agent.to_dict()) + "\n")

    _write_manifest(
        out_dir,
        "simulate",
        args,
        inputs=[Path(args.config)] if args.config else [],
        outputs=outputs,
        settings={
            "variant": variant.name,
            "method": args.method,
            "split_ratio": args.split_ratio,
            "tolerance": cfg.tolerance_fraction,
            "epsilon": cfg.epsilon,
            "episodes_run": training.episodes_run,
            "satisfaction": training.satisfaction,
            "num_rules": result.extractor.num_rules_,
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulehound",
        description="Distill trained models into readable interval rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
        p.add_argument("--config", default=None, help="JSON (or TOML on 3.11+) config file")
        p.add_argument(
            "--out",
            default=None,
            help="output directory (falls back to the RULEHOUND_OUT environment variable)",
        )

    def extraction_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--method", choices=("pbre", "rxncm"), default="pbre", help="extraction method"
        )
        p.add_argument(
            "--split-ratio",
            type=float,
            default=0.7,
            help="fraction of samples in the seen split (default 0.7)",
        )
        p.add_argument(
            "--tolerance",
            type=float,
            default=None,
            help="generalization tolerance as a fraction of each state's range (default 0.05)",
        )
        p.add_argument(
            "--epsilon",
            type=float,
            default=None,
            help="correlation tie window for inference (default 1e-3)",
        )

    p_train = sub.add_parser("train", help="fit a classifier on a CSV and checkpoint it")
    common(p_train)
    p_train.add_argument("--data", required=True, help="CSV data file (expects <stem>.schema.json)")
    p_train.add_argument("--schema", default=None, help="schema sidecar path override")
    p_train.add_argument("--hidden", default="16", help="hidden layer sizes, comma separated")
    p_train.add_argument("--activation", default="tanh", choices=("tanh", "relu"))
    p_train.add_argument("--epochs", type=int, default=300)
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p_train.set_defaults(func=cmd_train)

    p_extract = sub.add_parser("extract", help="distill a checkpointed model into rules")
    common(p_extract)
    extraction_flags(p_extract)
    p_extract.add_argument("--data", required=True, help="CSV data file (expects <stem>.schema.json)")
    p_extract.add_argument("--schema", default=None, help="schema sidecar path override")
    p_extract.add_argument("--model", required=True, help="model checkpoint JSON")
    p_extract.set_defaults(func=cmd_extract)

    p_compare = sub.add_parser("compare", help="benchmark both extractors over datasets and seeds")
    common(p_compare)
    extraction_flags(p_compare)
    p_compare.add_argument(
        "--data", action="append", required=True, help="CSV data file; repeatable"
    )
    p_compare.add_argument("--seeds", default="0,1,2", help="comma-separated seeds (default 0,1,2)")
    p_compare.add_argument("--methods", default="pbre,rxncm", help="comma-separated methods")
    p_compare.add_argument("--hidden", default="16", help="classifier hidden sizes")
    p_compare.add_argument("--epochs", type=int, default=300, help="classifier epochs")
    p_compare.add_argument("--lr", type=float, default=0.01, help="classifier learning rate")
    p_compare.set_defaults(func=cmd_compare)

    p_sim = sub.add_parser("simulate", help="run the smart-home service end to end")
    common(p_sim)
    extraction_flags(p_sim)
    p_sim.add_argument("--variant", choices=("v1", "v2", "v3"), default="v1")
    p_sim.add_argument("--episodes", type=int, default=None, help="training episode budget override")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
