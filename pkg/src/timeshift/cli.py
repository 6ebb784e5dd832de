"""
Command-line pipeline: simulate -> extract -> train -> evaluate -> predict -> explain.

Configuration comes from an optional JSON file (--config) with per-flag
overrides; flags always win. Every artifact embeds or sits next to the seed
and the hash of the resolved configuration that produced it, and identical
configurations produce byte-identical artifacts.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
non-convergence (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    Direction,
    EngagementLevel,
    Provenance,
    load_trials,
    pair_consecutive,
    write_trials_csv,
)
from .errors import ConfigError, NonConvergenceWarning, TimeshiftError
from .evaluation import (
    Thresholds,
    classify_direction,
    classify_actual_magnitude,
    classify_predicted_magnitude,
    confusion_2x2,
    loocv,
    magnitude_confusion,
    metrics,
    undersample,
)
from .explain import (
    aggregate_shap,
    shap_values,
    waterfall_payload,
    write_scatter_csv,
)
from .features import (
    FEATURE_NAMES,
    build_features,
    feature_matrix,
    fit_scaler,
    load_feature_csv,
    transform,
    write_feature_csv,
)
from .logistic import (
    PINNED_COEFFICIENTS,
    PINNED_INTERCEPT,
    fit,
    load_model,
    predict_proba,
    save_model,
)
from .simulator import SimParams, arousal_baseline, attention_baseline, generate_trials


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration; see README for the JSON layout."""

    seed: int = 0
    target_interval_s: float = 30.0
    C: float = 12.06
    thresholds: Thresholds = Thresholds()
    sim: SimParams | None = None
    sim_n_participants: int = 1000
    sim_n_trials: int = 2
    sim_engagement_assignment: str | list[EngagementLevel] = "random_uniform_9"
    paths: dict = dataclasses.field(default_factory=dict)
    undersample: bool = True

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.describe(), sort_keys=True).encode()
        ).hexdigest()[:16]

    def describe(self) -> dict:
        payload = {
            "seed": self.seed,
            "target_interval_s": self.target_interval_s,
            "C": self.C,
            "thresholds": dataclasses.asdict(self.thresholds),
            "undersample": self.undersample,
            "sim": None,
        }
        if self.sim is not None:
            payload["sim"] = {
                **json.loads(self.sim.to_json()),
                "n_participants": self.sim_n_participants,
                "n_trials": self.sim_n_trials,
                "engagement_assignment": (
                    self.sim_engagement_assignment
                    if isinstance(self.sim_engagement_assignment, str)
                    else [level.name.lower() for level in self.sim_engagement_assignment]
                ),
            }
        return payload


def _load_config(args: argparse.Namespace) -> RunConfig:
    payload: dict = {}
    if args.config:
        try:
            payload = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None

    seed = args.seed if args.seed is not None else payload.get("seed", 0)
    target = (
        args.target
        if getattr(args, "target", None) is not None
        else payload.get("target_interval_s", 30.0)
    )
    c_value = args.C if getattr(args, "C", None) is not None else payload.get("C", 12.06)

    try:
        thresholds = Thresholds(**payload.get("thresholds", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid thresholds: {exc}") from None

    sim = None
    sim_section = dict(payload.get("sim", {}))
    n_participants = sim_section.pop("n_participants", 1000)
    n_trials = sim_section.pop("n_trials", 2)
    assignment = sim_section.pop("engagement_assignment", "random_uniform_9")
    if getattr(args, "participants", None) is not None:
        n_participants = args.participants
    if getattr(args, "trials", None) is not None:
        n_trials = args.trials
    if not isinstance(assignment, str):
        assignment = [EngagementLevel.parse(str(level)) for level in assignment]
    if args.command == "simulate":
        sim_section.setdefault("rng_seed", seed)
        sim_section.setdefault("target_s", target)
        if "gate_width_by_engagement" in sim_section:
            sim_section["gate_width_by_engagement"] = tuple(
                sim_section["gate_width_by_engagement"]
            )
        try:
            sim = SimParams(**sim_section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid sim parameters: {exc}") from None

    undersample_flag = payload.get("undersample", True)
    if getattr(args, "no_undersample", False):
        undersample_flag = False

    paths = dict(payload.get("paths", {}))
    for key in ("input", "output", "model", "features", "per_sample", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value

    return RunConfig(
        seed=seed,
        target_interval_s=target,
        C=c_value,
        thresholds=thresholds,
        sim=sim,
        sim_n_participants=n_participants,
        sim_n_trials=n_trials,
        sim_engagement_assignment=assignment,
        paths=paths,
        undersample=undersample_flag,
    )


def _require_path(config: RunConfig, key: str) -> Path:
    if key not in config.paths:
        raise ConfigError(f"missing required path: --{key.replace('_', '-')}")
    return Path(config.paths[key])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _manifest(config: RunConfig, **extra) -> dict:
    return {"seed": config.seed, "config_hash": config.config_hash(), **extra}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(config: RunConfig) -> int:
    output = _require_path(config, "output")
    trials = generate_trials(
        config.sim,
        n_participants=config.sim_n_participants,
        n_trials=config.sim_n_trials,
        engagement_assignment=config.sim_engagement_assignment,
    )
    write_trials_csv(trials, output)
    labels = [pair.label for pair in pair_consecutive(trials)]
    _write_json(
        output.with_suffix(".manifest.json"),
        _manifest(
            config,
            params=json.loads(config.sim.to_json()),
            n_participants=config.sim_n_participants,
            n_trials=config.sim_n_trials,
            class_balance={
                "increase": sum(1 for lab in labels if lab == Direction.INCREASE),
                "decrease": sum(1 for lab in labels if lab == Direction.DECREASE),
            },
        ),
    )
    return 0


def cmd_extract(config: RunConfig) -> int:
    input_path = _require_path(config, "input")
    output = _require_path(config, "output")
    pairs = pair_consecutive(load_trials(input_path))
    features = [build_features(p, config.target_interval_s) for p in pairs]
    write_feature_csv(features, [p.label for p in pairs], output)
    _write_json(
        output.with_suffix(".manifest.json"),
        _manifest(config, n_samples=len(features), source=input_path.name),
    )
    return 0


def _undersample_rows(labels: list[Direction], seed: int) -> list[int]:
    """Balanced row indices, mirroring evaluation.undersample on raw rows."""
    dec = [i for i, lab in enumerate(labels) if lab == Direction.DECREASE]
    inc = [i for i, lab in enumerate(labels) if lab == Direction.INCREASE]
    if not dec or not inc:
        raise ConfigError("training data must contain both classes")
    minority, majority = sorted([dec, inc], key=len)
    rng = np.random.default_rng(seed)
    kept = rng.choice(len(majority), size=len(minority), replace=False)
    return sorted(minority + [majority[i] for i in kept])


def cmd_train(config: RunConfig) -> int:
    input_path = _require_path(config, "input")
    output = _require_path(config, "output")
    features, labels = load_feature_csv(input_path)
    rows = (
        _undersample_rows(labels, config.seed)
        if config.undersample
        else list(range(len(labels)))
    )
    X = feature_matrix([features[i] for i in rows])
    y = [labels[i] for i in rows]
    scaler = fit_scaler(X)
    model = fit(
        transform(X, scaler),
        y,
        C=config.C,
        scaler=scaler,
        trained_on=f"{input_path.name}@{config.config_hash()}",
        seed=config.seed,
    )
    save_model(model, output)
    _write_json(
        output.with_suffix(".manifest.json"),
        _manifest(config, n_samples=len(rows), converged=model.converged),
    )
    return 0 if model.converged else 3


def cmd_evaluate(config: RunConfig) -> int:
    input_path = _require_path(config, "input")
    output = _require_path(config, "output")
    dataset = Dataset(
        samples=tuple(pair_consecutive(load_trials(input_path))),
        provenance=Provenance.HUMAN,
    )
    if config.undersample:
        dataset = undersample(dataset, seed=config.seed)

    nonconverged = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        result = loocv(
            dataset,
            C=config.C,
            seed=config.seed,
            target_s=config.target_interval_s,
            thresholds=config.thresholds,
        )
        nonconverged = sum(
            1 for w in caught if issubclass(w.category, NonConvergenceWarning)
        )

    actual = dataset.labels()
    attention_predictions = [
        attention_baseline(s.prev.engagement, s.next.engagement) for s in dataset.samples
    ]
    arousal_predictions = [
        arousal_baseline(s.prev.engagement, s.next.engagement) for s in dataset.samples
    ]
    confusion, five_cells = magnitude_confusion(
        result.outcomes, dataset.deltas(), config.thresholds
    )

    per_sample_path = Path(
        config.paths.get("per_sample", output.with_suffix(".per_sample.csv"))
    )
    with per_sample_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "id",
                "probability",
                "direction_pred",
                "direction_actual",
                "delta_t",
                "magnitude_pred",
                "magnitude_actual",
            ]
        )
        for sample, outcome in zip(dataset.samples, result.outcomes):
            writer.writerow(
                [
                    sample.sample_id,
                    repr(outcome.probability_of_decrease),
                    outcome.direction.value,
                    sample.label.value,
                    repr(sample.delta_t_s),
                    outcome.predicted_magnitude.value,
                    classify_actual_magnitude(sample.delta_t_s, config.thresholds).value,
                ]
            )

    report = {
        "model_name": "logistic_regression_loocv",
        "n": len(dataset),
        "precision": result.metrics.precision,
        "recall": result.metrics.recall,
        "accuracy": result.metrics.accuracy,
        "confusion": [
            list(row)
            for row in confusion_2x2([o.direction for o in result.outcomes], actual)
        ],
        "magnitude_confusion": [list(row) for row in confusion.counts],
        "seed": config.seed,
        "C": config.C,
        "config_hash": config.config_hash(),
        "thresholds": dataclasses.asdict(config.thresholds),
        "undersampled": config.undersample,
        "five_cells": {
            name: {"count": count, "share_of_predicted": share}
            for name, (count, share) in five_cells.cells.items()
        },
        "baselines": [
            {
                "model_name": name,
                "precision": m.precision,
                "recall": m.recall,
                "accuracy": m.accuracy,
            }
            for name, m in (
                ("attention", metrics(attention_predictions, actual)),
                ("arousal", metrics(arousal_predictions, actual)),
            )
        ],
        "nonconverged_folds": nonconverged,
        "per_sample_csv": per_sample_path.name,
    }
    _write_json(output, report)
    return 3 if nonconverged else 0


def cmd_predict(config: RunConfig) -> int:
    model = load_model(_require_path(config, "model"))
    features, labels = load_feature_csv(_require_path(config, "features"))
    output = _require_path(config, "output")
    Z = transform(feature_matrix(features), model.scaler)
    probabilities = np.atleast_1d(predict_proba(model, Z))
    with output.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["row", "probability", "direction_pred", "direction_actual", "magnitude_pred"]
        )
        for i, p in enumerate(probabilities):
            writer.writerow(
                [
                    i,
                    repr(float(p)),
                    classify_direction(float(p)).value,
                    labels[i].value,
                    classify_predicted_magnitude(float(p), config.thresholds).value,
                ]
            )
    _write_json(
        output.with_suffix(".manifest.json"),
        _manifest(config, n_samples=len(features)),
    )
    return 0


def cmd_explain(config: RunConfig, row: int = 0) -> int:
    model = load_model(_require_path(config, "model"))
    features, _ = load_feature_csv(_require_path(config, "features"))
    if not 0 <= row < len(features):
        raise ConfigError(f"--row {row} out of range for {len(features)} samples")
    output_dir = Path(config.paths.get("output_dir", "."))
    output_dir.mkdir(parents=True, exist_ok=True)
    X = feature_matrix(features)
    Z = transform(X, model.scaler)
    attributions = [shap_values(model, Z[i]) for i in range(len(features))]

    write_scatter_csv(attributions, X, Z, output_dir / "shap_scatter.csv")
    summaries = aggregate_shap(attributions, raw_features=None)
    _write_json(
        output_dir / "shap_aggregate.json",
        _manifest(
            config,
            background="training_mean (all-zero standardized background)",
            features=[
                {
                    "feature": s.feature,
                    "mean_phi": s.mean_phi,
                    "std_phi": s.std_phi,
                    "n": s.n,
                }
                for s in summaries
            ],
        ),
    )
    _write_json(
        output_dir / "shap_waterfall.json",
        {**waterfall_payload(attributions[row], X[row]), **_manifest(config, row=row)},
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _version_text() -> str:
    pinned = ", ".join(
        f"{name}={coef}" for name, coef in zip(FEATURE_NAMES, PINNED_COEFFICIENTS)
    )
    return (
        f"timeshift {__version__} "
        f"(pinned model: intercept={PINNED_INTERCEPT}, {pinned})"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timeshift",
        description="Predict the direction of change in produced time between trials.",
    )
    parser.add_argument("--version", action="version", version=_version_text())
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--target", type=float, default=None, help="target interval, s")
        p.add_argument("--C", type=float, default=None, help="inverse regularization")

    p = sub.add_parser("simulate", help="generate synthetic trials CSV")
    add_common(p)
    p.add_argument("--output", required=False)
    p.add_argument("--participants", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("extract", help="derive the feature matrix from trials")
    add_common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--output", required=False)

    p = sub.add_parser("train", help="fit the logistic model on a feature CSV")
    add_common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--output", required=False)
    p.add_argument("--no-undersample", action="store_true")

    p = sub.add_parser("evaluate", help="LOOCV report with baselines and magnitude")
    add_common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--output", required=False)
    p.add_argument("--per-sample", dest="per_sample", required=False)
    p.add_argument("--no-undersample", action="store_true")

    p = sub.add_parser("predict", help="per-sample outcomes for a feature CSV")
    add_common(p)
    p.add_argument("--model", required=False)
    p.add_argument("--features", required=False)
    p.add_argument("--output", required=False)

    p = sub.add_parser("explain", help="SHAP exports for a feature CSV")
    add_common(p)
    p.add_argument("--model", required=False)
    p.add_argument("--features", required=False)
    p.add_argument("--output-dir", dest="output_dir", required=False)
    p.add_argument("--row", type=int, default=0, help="sample to export as waterfall")

    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "explain":
            return cmd_explain(config, row=args.row)
        return _COMMANDS[args.command](config)
    except TimeshiftError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 2
    except OSError as exc:
        json.dump({"error": "OSError", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
