"""
Exact per-feature attributions for the linear-logit model, plus permutation
feature importance.

For a logistic model the logit is linear in the standardized features, so
with independent features the Shapley value of feature j has the closed form

    phi_j = w_j * (z_j - background_j)

measured in log-odds. The attributions are exact and deterministic: no
sampling, and the efficiency identity base + sum(phi) = output logit holds to
rounding error. Probabilities shown in reports are the sigmoid of the logit
endpoints, matching how prediction plots are usually displayed.

The background is the expectation point the attribution is measured against;
by default it is the training-set mean, which is the zero vector when the
scaler was fit on that same data. Reports label the background so the choice
stays visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import Direction
from .errors import EmptyGroupError, TooFewSamplesError
from .evaluation import classify_direction, metrics
from .features import FEATURE_NAMES, N_FEATURES
from .logistic import LogisticModel, _sigmoid, predict_proba


@dataclass(frozen=True)
class ShapAttribution:
    """Additive log-odds contributions of one sample's five features."""

    base_logit: float
    phi: tuple[float, ...]
    output_logit: float
    output_probability: float

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        if len(self.phi) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} contributions")
        if abs(self.base_logit + sum(self.phi) - self.output_logit) > 1e-9:
            raise ValueError("attribution violates efficiency")

    def ranked_features(self) -> list[int]:
        """Feature indices by |phi| descending, ties in canonical order."""
        return sorted(range(N_FEATURES), key=lambda j: (-abs(self.phi[j]), j))


def shap_values(
    model: LogisticModel,
    z: np.ndarray | Sequence[float],
    background_means: np.ndarray | Sequence[float] | None = None,
) -> ShapAttribution:
    """
    Exact attribution of one standardized sample against a background.

    background_means are the standardized-space feature means of the reference
    data; omit them for the all-zeros background of a scaler fit on that data.
    """
    z = np.asarray(z, dtype=float)
    bg = (
        np.zeros(N_FEATURES)
        if background_means is None
        else np.asarray(background_means, dtype=float)
    )
    w = np.asarray(model.coefficients)
    phi = w * (z - bg)
    base = model.intercept + float(w @ bg)
    logit = model.intercept + float(w @ z)
    return ShapAttribution(
        base_logit=base,
        phi=tuple(phi),
        output_logit=logit,
        output_probability=float(_sigmoid(logit)),
    )


def shap_matrix(
    model: LogisticModel,
    Z: np.ndarray,
    background_means: np.ndarray | Sequence[float] | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Vectorized attributions for an (n, 5) matrix.

    Returns (base_logit, phi matrix of shape (n, 5), output logits of shape (n,)).
    """
    Z = np.asarray(Z, dtype=float)
    bg = (
        np.zeros(N_FEATURES)
        if background_means is None
        else np.asarray(background_means, dtype=float)
    )
    w = np.asarray(model.coefficients)
    phi = (Z - bg) * w
    base = model.intercept + float(w @ bg)
    logits = model.intercept + Z @ w
    return base, phi, logits


@dataclass(frozen=True)
class FeatureShapSummary:
    feature: str
    mean_phi: float
    std_phi: float
    n: int
    pairs: tuple[tuple[float, float], ...] | None = None  # (raw value, phi)


def aggregate_shap(
    attributions: Sequence[ShapAttribution],
    group_by: Callable[[int, ShapAttribution], bool] | None = None,
    raw_features: np.ndarray | None = None,
) -> list[FeatureShapSummary]:
    """
    Per-feature mean and spread of contributions, population- or group-wide.

    group_by receives (sample index, attribution) and selects the sub-group.
    When raw_features (an (n, 5) matrix aligned with the attributions) is
    given, each summary carries the (raw value, phi) pairs needed for
    scatter-style exports.

    Raises:
        EmptyGroupError: the predicate matched nothing.
        ValueError: no attributions given.
    """
    if not attributions:
        raise ValueError("need at least one attribution")
    selected = [
        (i, a)
        for i, a in enumerate(attributions)
        if group_by is None or group_by(i, a)
    ]
    if not selected:
        raise EmptyGroupError("sub-group predicate matched no samples")
    phi = np.array([a.phi for _, a in selected])
    summaries = []
    for j, name in enumerate(FEATURE_NAMES):
        pairs = None
        if raw_features is not None:
            raw = np.asarray(raw_features, dtype=float)
            pairs = tuple((float(raw[i, j]), float(a.phi[j])) for i, a in selected)
        summaries.append(
            FeatureShapSummary(
                feature=name,
                mean_phi=float(phi[:, j].mean()),
                std_phi=float(phi[:, j].std()),
                n=len(selected),
                pairs=pairs,
            )
        )
    return summaries


# ---------------------------------------------------------------------------
# Permutation feature importance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PermutationImportance:
    feature: str
    mean_drop: float
    std_drop: float


def _score(model: LogisticModel, Z: np.ndarray, y: Sequence[Direction], metric: str) -> float:
    probabilities = np.atleast_1d(predict_proba(model, Z))
    predicted = [classify_direction(float(p)) for p in probabilities]
    report = metrics(predicted, list(y))
    return report.f1 if metric == "f1" else report.accuracy


def permutation_importance(
    model: LogisticModel,
    Z: np.ndarray,
    y: Sequence[Direction],
    metric: str = "accuracy",
    n_repeats: int = 10,
    seed: int = 0,
) -> list[PermutationImportance]:
    """
    Mean and spread of the metric drop when each feature column is shuffled.

    Each (feature, repeat) uses its own derived substream, so results do not
    depend on evaluation order.

    Raises:
        TooFewSamplesError: fewer than 20 samples.
    """
    if metric not in ("accuracy", "f1"):
        raise ValueError(f"unsupported metric: {metric!r}")
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if n < 20:
        raise TooFewSamplesError(f"permutation importance needs >= 20 samples, got {n}")
    baseline = _score(model, Z, y, metric)
    results = []
    for j, name in enumerate(FEATURE_NAMES):
        drops = []
        for repeat in range(n_repeats):
            rng = np.random.default_rng([seed, j, repeat])
            drops.append(
                _column_permutation_drop(
                    model, Z, y, j, rng.permutation(n), baseline, metric
                )
            )
        results.append(
            PermutationImportance(
                feature=name,
                mean_drop=float(np.mean(drops)),
                std_drop=float(np.std(drops)),
            )
        )
    return results


def _column_permutation_drop(
    model: LogisticModel,
    Z: np.ndarray,
    y: Sequence[Direction],
    column: int,
    permutation: np.ndarray,
    baseline: float,
    metric: str,
) -> float:
    permuted = Z.copy()
    permuted[:, column] = Z[permutation, column]
    return baseline - _score(model, permuted, y, metric)


# ---------------------------------------------------------------------------
# Plot-ready exports
# ---------------------------------------------------------------------------

def write_scatter_csv(
    attributions: Sequence[ShapAttribution],
    raw_features: np.ndarray,
    standardized: np.ndarray,
    path: str | Path,
) -> None:
    """One row per sample per feature: feature, raw and z values, contribution."""
    raw = np.asarray(raw_features, dtype=float)
    std = np.asarray(standardized, dtype=float)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "raw_value", "standardized_value", "phi"])
        for i, attribution in enumerate(attributions):
            for j, name in enumerate(FEATURE_NAMES):
                writer.writerow(
                    [name, repr(raw[i, j]), repr(std[i, j]), repr(attribution.phi[j])]
                )


def waterfall_payload(
    attribution: ShapAttribution, raw_values: np.ndarray | Sequence[float]
) -> dict:
    """
    JSON-ready single-sample breakdown, entries ordered by |phi| descending.
    """
    raw = np.asarray(raw_values, dtype=float)
    return {
        "base": attribution.base_logit,
        "entries": [
            {
                "feature": FEATURE_NAMES[j],
                "value": float(raw[j]),
                "phi": attribution.phi[j],
            }
            for j in attribution.ranked_features()
        ],
        "output_logit": attribution.output_logit,
        "output_probability": attribution.output_probability,
    }
