"""
Class balancing, cross-validation harnesses, direction/magnitude
classification and metric reports.

Direction is read off the predicted probability of decrease at 0.5; the
magnitude bands interpret an extreme probability (beyond 0.4/0.6) as a large
change and a probability near 0.5 as a small one, mirrored against the actual
change thresholded at +/-5 seconds. Every boundary value falls into the less
extreme class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Direction, MagnitudeLevel
from .errors import (
    FoldSingleClassError,
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
)
from .features import build_features, feature_matrix, fit_scaler, transform
from .logistic import LogisticModel, fit, predict_proba
from .simulator import arousal_baseline, attention_baseline

# Row/column order of the 3x3 magnitude confusion matrix.
MAGNITUDE_ORDER = (
    MagnitudeLevel.HIGH_INCREASE,
    MagnitudeLevel.SMALL_CHANGE,
    MagnitudeLevel.HIGH_DECREASE,
)


@dataclass(frozen=True)
class Thresholds:
    """Probability bands and the small-change half-width in seconds."""

    prob_low: float = 0.4
    prob_high: float = 0.6
    delta_small: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.prob_low < 0.5 < self.prob_high < 1.0:
            raise ValueError(
                "thresholds must satisfy 0 < prob_low < 0.5 < prob_high < 1"
            )
        if self.delta_small <= 0:
            raise ValueError("delta_small must be > 0")


DEFAULT_THRESHOLDS = Thresholds()


def classify_direction(p: float) -> Direction:
    """Decrease iff the probability of decrease exceeds 0.5 (0.5 -> increase)."""
    return Direction.DECREASE if p > 0.5 else Direction.INCREASE


def classify_predicted_magnitude(
    p: float, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> MagnitudeLevel:
    """Band the predicted probability; boundary values stay in the middle band."""
    if p > thresholds.prob_high:
        return MagnitudeLevel.HIGH_DECREASE
    if p < thresholds.prob_low:
        return MagnitudeLevel.HIGH_INCREASE
    return MagnitudeLevel.SMALL_CHANGE


def classify_actual_magnitude(
    delta_t: float, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> MagnitudeLevel:
    """Band the actual change; |delta_t| equal to the bound is a small change."""
    if delta_t > thresholds.delta_small:
        return MagnitudeLevel.HIGH_INCREASE
    if delta_t < -thresholds.delta_small:
        return MagnitudeLevel.HIGH_DECREASE
    return MagnitudeLevel.SMALL_CHANGE


@dataclass(frozen=True)
class PredictionOutcome:
    """Probability of decrease with its direction and magnitude readings."""

    probability_of_decrease: float
    direction: Direction
    predicted_magnitude: MagnitudeLevel

    @classmethod
    def from_probability(
        cls, p: float, thresholds: Thresholds = DEFAULT_THRESHOLDS
    ) -> "PredictionOutcome":
        if not 0.0 < p < 1.0:
            raise ValueError(f"probability must lie in (0, 1), got {p}")
        return cls(
            probability_of_decrease=p,
            direction=classify_direction(p),
            predicted_magnitude=classify_predicted_magnitude(p, thresholds),
        )


@dataclass(frozen=True)
class MetricsReport:
    """Precision/recall are for the decrease class; f1 is their harmonic mean."""

    precision: float
    recall: float
    accuracy: float
    f1: float
    n: int
    undefined_precision: bool = False


@dataclass(frozen=True)
class MagnitudeConfusion:
    """3x3 counts, rows = actual, columns = predicted, in MAGNITUDE_ORDER."""

    counts: tuple[tuple[int, int, int], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_totals(self) -> tuple[int, int, int]:
        return tuple(sum(row) for row in self.counts)

    def column_totals(self) -> tuple[int, int, int]:
        return tuple(sum(row[j] for row in self.counts) for j in range(3))


@dataclass(frozen=True)
class FiveCellSummary:
    """
    The five headline cells of the magnitude confusion: the three diagonal
    hits plus the two extreme misses (predicted one extreme, actual the
    other). Shares are relative to the predicted-class column total, i.e.
    "when the model says high increase, how often is that right".
    """

    cells: dict[str, tuple[int, float]]


def undersample(dataset: Dataset, seed: int) -> Dataset:
    """
    Randomly downsample the majority class to exact balance.

    Sampling is uniform without replacement and deterministic per seed; the
    surviving samples keep their original order.

    Raises:
        SingleClassError: dataset has only one direction class.
    """
    labels = dataset.labels()
    dec_idx = [i for i, lab in enumerate(labels) if lab == Direction.DECREASE]
    inc_idx = [i for i, lab in enumerate(labels) if lab == Direction.INCREASE]
    if not dec_idx or not inc_idx:
        raise SingleClassError("undersampling requires both classes")
    minority, majority = sorted([dec_idx, inc_idx], key=len)
    rng = np.random.default_rng(seed)
    kept_majority = rng.choice(len(majority), size=len(minority), replace=False)
    keep = sorted(minority + [majority[i] for i in kept_majority])
    return Dataset(
        samples=tuple(dataset.samples[i] for i in keep),
        provenance=dataset.provenance,
        seed=seed,
    )


def metrics(
    predictions: Sequence[Direction],
    actual: Sequence[Direction],
    positive: Direction = Direction.DECREASE,
) -> MetricsReport:
    """
    Precision, recall, accuracy and f1 with the decrease class as positive.

    A degenerate predictor that never predicts the positive class gets
    precision 0 with undefined_precision=True instead of an error.

    Raises:
        LengthMismatchError: sequences differ in length.
        ValueError: empty input.
    """
    if len(predictions) != len(actual):
        raise LengthMismatchError(
            f"{len(predictions)} predictions vs {len(actual)} actual labels"
        )
    if not predictions:
        raise ValueError("cannot compute metrics on empty input")
    tp = sum(1 for p, a in zip(predictions, actual) if p == positive and a == positive)
    fp = sum(1 for p, a in zip(predictions, actual) if p == positive and a != positive)
    fn = sum(1 for p, a in zip(predictions, actual) if p != positive and a == positive)
    correct = sum(1 for p, a in zip(predictions, actual) if p == a)

    undefined = (tp + fp) == 0
    precision = 0.0 if undefined else tp / (tp + fp)
    recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
    return MetricsReport(
        precision=precision,
        recall=recall,
        accuracy=correct / len(predictions),
        f1=f1,
        n=len(predictions),
        undefined_precision=undefined,
    )


def confusion_2x2(
    predictions: Sequence[Direction], actual: Sequence[Direction]
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Rows = actual (decrease, increase), columns = predicted (decrease, increase)."""
    order = (Direction.DECREASE, Direction.INCREASE)
    counts = [[0, 0], [0, 0]]
    for p, a in zip(predictions, actual):
        counts[order.index(a)][order.index(p)] += 1
    return tuple(tuple(row) for row in counts)


# ---------------------------------------------------------------------------
# Cross-validation harnesses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoocvResult:
    outcomes: tuple[PredictionOutcome, ...]
    metrics: MetricsReport
    sample_ids: tuple[str, ...]
    seed: int
    C: float


def loocv(
    dataset: Dataset,
    C: float = 12.06,
    seed: int = 0,
    target_s: float = 30.0,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
) -> LoocvResult:
    """
    Leave-one-out cross-validation.

    Each sample is predicted by a scaler and model fitted on the other n-1
    samples only, so the held-out sample never leaks into standardization or
    training. Outcomes are ordered by sample index, independent of any
    execution order.

    Raises:
        TooFewSamplesError: fewer than 10 samples.
        FoldSingleClassError: some training fold loses one class entirely.
    """
    n = len(dataset)
    if n < 10:
        raise TooFewSamplesError(f"LOOCV needs >= 10 samples, got {n}")
    features = [build_features(s, target_s) for s in dataset.samples]
    X = feature_matrix(features)
    y = np.array([1.0 if lab == Direction.DECREASE else 0.0 for lab in dataset.labels()])

    outcomes = []
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        y_train = y[mask]
        if y_train.min() == y_train.max():
            raise FoldSingleClassError(i)
        scaler = fit_scaler(X[mask])
        model = fit(transform(X[mask], scaler), y_train, C=C, seed=seed)
        p = predict_proba(model, transform(X[i], scaler))
        outcomes.append(PredictionOutcome.from_probability(float(p), thresholds))

    report = metrics([o.direction for o in outcomes], dataset.labels())
    return LoocvResult(
        outcomes=tuple(outcomes),
        metrics=report,
        sample_ids=tuple(s.sample_id for s in dataset.samples),
        seed=seed,
        C=C,
    )


def _stratified_folds(
    y: np.ndarray, k: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Shuffle within class, deal round-robin; returns k index arrays."""
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (0.0, 1.0):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for j, sample in enumerate(idx):
            folds[j % k].append(int(sample))
    return [np.array(sorted(f), dtype=int) for f in folds]


@dataclass(frozen=True)
class KfoldResult:
    best_c: float
    mean_scores: dict[float, float]
    k: int
    repeats: int
    seed: int


def kfold_cv(
    dataset: Dataset,
    k: int = 5,
    metric: str = "f1",
    grid: Sequence[float] = (12.06,),
    repeats: int = 3,
    seed: int = 0,
    target_s: float = 30.0,
) -> KfoldResult:
    """
    Repeated stratified k-fold selection of the inverse regularization C.

    Each repeat re-undersamples the dataset with its own derived seed, splits
    it into stratified folds, and scores every C in the grid by the mean
    decrease-class f1 (or accuracy) over the held-out folds. The best C is the
    argmax of the overall mean, ties going to the smaller C.

    Raises:
        TooFewSamplesError: fewer samples than folds.
    """
    if metric not in ("f1", "accuracy"):
        raise ValueError(f"unsupported metric: {metric!r}")
    if len(dataset) < k:
        raise TooFewSamplesError(f"need at least k={k} samples, got {len(dataset)}")
    if not grid:
        raise ValueError("C grid must not be empty")

    scores: dict[float, list[float]] = {float(c): [] for c in grid}
    for repeat in range(repeats):
        repeat_seed = int(np.random.default_rng([seed, repeat]).integers(2**31))
        balanced = undersample(dataset, seed=repeat_seed)
        features = [build_features(s, target_s) for s in balanced.samples]
        X = feature_matrix(features)
        y = np.array(
            [1.0 if lab == Direction.DECREASE else 0.0 for lab in balanced.labels()]
        )
        folds = _stratified_folds(y, k, np.random.default_rng([seed, repeat, 1]))
        for fold_index, test_idx in enumerate(folds):
            mask = np.ones(len(balanced), dtype=bool)
            mask[test_idx] = False
            if y[mask].min() == y[mask].max():
                raise FoldSingleClassError(fold_index)
            scaler = fit_scaler(X[mask])
            Z_train = transform(X[mask], scaler)
            Z_test = transform(X[test_idx], scaler)
            actual = [
                Direction.DECREASE if v == 1.0 else Direction.INCREASE
                for v in y[test_idx]
            ]
            for c in scores:
                model = fit(Z_train, y[mask], C=c, seed=seed)
                predicted = [
                    classify_direction(float(p))
                    for p in np.atleast_1d(predict_proba(model, Z_test))
                ]
                report = metrics(predicted, actual)
                scores[c].append(report.f1 if metric == "f1" else report.accuracy)

    mean_scores = {c: float(np.mean(vals)) for c, vals in scores.items()}
    best_c = max(sorted(mean_scores), key=lambda c: (mean_scores[c], -c))
    return KfoldResult(
        best_c=best_c, mean_scores=mean_scores, k=k, repeats=repeats, seed=seed
    )


# ---------------------------------------------------------------------------
# Magnitude analysis and baseline comparison
# ---------------------------------------------------------------------------

def magnitude_confusion(
    outcomes: Sequence[PredictionOutcome],
    deltas: Sequence[float],
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
) -> tuple[MagnitudeConfusion, FiveCellSummary]:
    """
    Cross-tabulate actual versus predicted magnitude bands.

    Returns the full 3x3 matrix and the five headline cells: the three
    diagonal hits and the two extreme misses, each with its count and its
    share of the predicted-class column total.

    Raises:
        LengthMismatchError: outcomes and deltas differ in length.
    """
    if len(outcomes) != len(deltas):
        raise LengthMismatchError(f"{len(outcomes)} outcomes vs {len(deltas)} deltas")
    counts = [[0, 0, 0] for _ in range(3)]
    for outcome, delta in zip(outcomes, deltas):
        row = MAGNITUDE_ORDER.index(classify_actual_magnitude(delta, thresholds))
        col = MAGNITUDE_ORDER.index(outcome.predicted_magnitude)
        counts[row][col] += 1
    confusion = MagnitudeConfusion(counts=tuple(tuple(row) for row in counts))

    col_totals = confusion.column_totals()

    def cell(row: int, col: int) -> tuple[int, float]:
        count = confusion.counts[row][col]
        share = count / col_totals[col] if col_totals[col] else 0.0
        return count, share

    summary = FiveCellSummary(
        cells={
            "high_increase_hit": cell(0, 0),
            "small_change_hit": cell(1, 1),
            "high_decrease_hit": cell(2, 2),
            "high_increase_extreme_miss": cell(2, 0),  # said increase, fell hard
            "high_decrease_extreme_miss": cell(0, 2),  # said decrease, rose hard
        }
    )
    return confusion, summary


@dataclass(frozen=True)
class BaselineComparison:
    """Metric rows for the trained model and the two rule-based baselines."""

    rows: tuple[tuple[str, MetricsReport], ...]

    def as_dicts(self) -> list[dict]:
        return [
            {
                "model_name": name,
                "precision": report.precision,
                "recall": report.recall,
                "accuracy": report.accuracy,
            }
            for name, report in self.rows
        ]


def compare_baselines(
    dataset: Dataset,
    model: LogisticModel,
    target_s: float = 30.0,
) -> BaselineComparison:
    """
    Score the fitted model and both rule-based baselines on identical samples.

    The model's features are standardized with its own scaler. Rows are always
    ordered (model, attention, arousal).
    """
    actual = dataset.labels()
    X = feature_matrix([build_features(s, target_s) for s in dataset.samples])
    probabilities = np.atleast_1d(predict_proba(model, transform(X, model.scaler)))
    model_predictions = [classify_direction(float(p)) for p in probabilities]
    attention_predictions = [
        attention_baseline(s.prev.engagement, s.next.engagement)
        for s in dataset.samples
    ]
    arousal_predictions = [
        arousal_baseline(s.prev.engagement, s.next.engagement)
        for s in dataset.samples
    ]
    return BaselineComparison(
        rows=(
            ("model", metrics(model_predictions, actual)),
            ("attention", metrics(attention_predictions, actual)),
            ("arousal", metrics(arousal_predictions, actual)),
        )
    )
