"""
L2-regularized binary logistic regression, built directly on numpy.

The model predicts the probability that produced time *decreases* in the next
trial. With standardized features z and weights w the logit is b + w.z and

    P(decrease | z) = 1 / (1 + exp(-(b + w.z)))

Training minimizes the summed negative log-likelihood plus ||w||^2 / (2C)
(intercept unpenalized); C is the inverse regularization strength, so the
reference C=12.06 plugs in directly. The optimizer is deterministic damped
Newton with Armijo backtracking (the Hessian is a 6x6, so exact second-order
steps are cheap and reach the tight gradient tolerance that quasi-Newton
updates stall above), falling back to steepest descent whenever the Hessian
solve is unusable. Same inputs give a bit-identical model.

The module also carries the pinned reference model: intercept 0.016 and weights
(0.662, -0.191, -0.241, -0.187, 0.177) over the five standardized features.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonConvergenceWarning, SingleClassError, TooFewSamplesError
from .features import N_FEATURES, ScalerStats, identity_scaler

# Pinned reference coefficients, in canonical feature order.
PINNED_INTERCEPT = 0.016
PINNED_COEFFICIENTS = (0.662, -0.191, -0.241, -0.187, 0.177)
PINNED_C = 12.06

# Standardization statistics for replaying the pinned model on raw inputs.
# Only the t1_rel_error pair (mean 15, sd 44) is exact; the rest are
# approximations documented next to each value. Supply exact stats to
# pinned_model() when they are known.
PINNED_SCALER_APPROX = ScalerStats(
    means=(
        15.0,  # exact
        0.4,   # approx: productions skew above target, ~40% report "lower"
        0.06,  # 6% of participants flagged sensitive
        1.0,   # balanced design: engagement levels uniform over {0,1,2}
        1.0,   # balanced design: transitions uniform over lower/same/higher
    ),
    std_devs=(
        44.0,                   # exact
        math.sqrt(0.4 * 0.6),   # Bernoulli(0.4)
        math.sqrt(0.06 * 0.94),  # Bernoulli(0.06)
        math.sqrt(2.0 / 3.0),   # uniform over {0,1,2}
        math.sqrt(2.0 / 3.0),
    ),
)

_ARMIJO_C1 = 1e-4
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class LogisticModel:
    """Fitted (or pinned) logistic model with its scaler and regularization."""

    intercept: float
    coefficients: tuple[float, ...]
    scaler: ScalerStats
    inverse_reg_c: float
    converged: bool = True
    n_iter: int = 0
    trained_on: str = ""
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", tuple(float(c) for c in self.coefficients)
        )
        if len(self.coefficients) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} coefficients")
        if not all(math.isfinite(c) for c in self.coefficients) or not math.isfinite(
            self.intercept
        ):
            raise ValueError("model parameters must be finite")
        if self.inverse_reg_c <= 0:
            raise ValueError("inverse_reg_c must be > 0")


def pinned_model(scaler: ScalerStats | None = None) -> LogisticModel:
    """
    The pinned reference model. Pass exact scaler statistics when available;
    otherwise the documented approximate statistics are attached.
    """
    return LogisticModel(
        intercept=PINNED_INTERCEPT,
        coefficients=PINNED_COEFFICIENTS,
        scaler=scaler if scaler is not None else PINNED_SCALER_APPROX,
        inverse_reg_c=PINNED_C,
        trained_on="pinned",
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, exact for |x| up to ~700."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def predict_proba(model: LogisticModel, z: np.ndarray) -> float | np.ndarray:
    """
    Probability of decrease for standardized features.

    Accepts a single 5-vector (returns a float) or an (n, 5) matrix
    (returns an array of n probabilities).
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(model.coefficients)
    logit = model.intercept + z @ w
    p = _sigmoid(logit)
    return float(p) if np.ndim(p) == 0 else p


def _labels_to_array(y) -> np.ndarray:
    """Accept 0/1 ints, booleans, or Direction values (DECREASE -> 1)."""
    from .data import Direction  # local import to avoid cycle at module load

    arr = np.array(
        [1.0 if v == Direction.DECREASE or v == 1 or v is True else 0.0 for v in y]
    )
    return arr


def nll_loss(model: LogisticModel, Z: np.ndarray, y) -> float:
    """
    Summed negative log-likelihood plus ||w||^2/(2C), intercept unpenalized.

    Evaluated in softplus form, sum(softplus(logit) - y * logit), which equals
    clamping the probabilities away from 0/1 inside the logs over the whole
    trustworthy range but stays exact (and smooth, which the line search
    needs) at extreme logits where a clamped log would saturate.
    """
    theta = np.concatenate(([model.intercept], model.coefficients))
    loss, _ = _loss_and_grad(
        theta, np.asarray(Z, dtype=float), _labels_to_array(y), model.inverse_reg_c
    )
    return loss


def gradient(model: LogisticModel, Z: np.ndarray, y) -> np.ndarray:
    """
    Gradient of nll_loss: [d/db, d/dw_0 ... d/dw_4] with
    d/db = sum(p - y) and d/dw_j = sum((p - y) z_j) + w_j / C.
    """
    theta = np.concatenate(([model.intercept], model.coefficients))
    _, grad = _loss_and_grad(
        theta, np.asarray(Z, dtype=float), _labels_to_array(y), model.inverse_reg_c
    )
    return grad


def _loss_and_grad(
    theta: np.ndarray, Z: np.ndarray, y: np.ndarray, C: float
) -> tuple[float, np.ndarray]:
    b, w = theta[0], theta[1:]
    logits = b + Z @ w
    # softplus(m) - y*m == -[y log p + (1-y) log(1-p)], exact and stable
    loss = float(np.sum(np.logaddexp(0.0, logits) - y * logits))
    loss += float(w @ w) / (2.0 * C)
    residual = _sigmoid(logits) - y
    grad = np.empty_like(theta)
    grad[0] = residual.sum()
    grad[1:] = Z.T @ residual + w / C
    return loss, grad


def _hessian(theta: np.ndarray, A: np.ndarray, C: float) -> np.ndarray:
    """Exact Hessian over the augmented design A = [1 | Z]; intercept unpenalized."""
    p = _sigmoid(A @ theta)
    weights = p * (1.0 - p)
    H = (A * weights[:, None]).T @ A
    H[1:, 1:] += np.eye(A.shape[1] - 1) / C
    return H


def fit(
    Z: np.ndarray,
    y,
    C: float = PINNED_C,
    tol: float = 1e-8,
    max_iter: int = 5000,
    scaler: ScalerStats | None = None,
    trained_on: str = "",
    seed: int | None = None,
    trace: list | None = None,
) -> LogisticModel:
    """
    Fit by deterministic damped Newton from (b, w) = 0.

    Stops when the gradient infinity-norm drops below tol. Hitting max_iter
    first emits NonConvergenceWarning and returns the last iterate with
    converged=False rather than raising; the objective is convex, so the
    returned parameters are still the best ones seen.

    Args:
        Z: (n, 5) standardized feature matrix.
        y: labels; 1/True/Direction.DECREASE count as the positive class.
        C: inverse regularization strength.
        scaler: statistics to attach to the model (identity if omitted).
        trace: diagnostic; receives the objective value of every accepted
            iterate (Armijo backtracking keeps the sequence non-increasing,
            up to float resolution in the final machine-precision steps).

    Raises:
        SingleClassError: only one class present in y.
        TooFewSamplesError: fewer than 6 samples.
    """
    Z = np.asarray(Z, dtype=float)
    y_arr = _labels_to_array(y)
    if Z.ndim != 2 or Z.shape[1] != N_FEATURES:
        raise ValueError(f"expected an (n, {N_FEATURES}) matrix, got shape {Z.shape}")
    if Z.shape[0] != y_arr.shape[0]:
        raise ValueError("Z and y differ in length")
    if Z.shape[0] < 6:
        raise TooFewSamplesError(f"need >= 6 samples to fit, got {Z.shape[0]}")
    if y_arr.min() == y_arr.max():
        raise SingleClassError("both classes are required to fit")

    theta = np.zeros(N_FEATURES + 1)
    A = np.hstack([np.ones((Z.shape[0], 1)), Z])
    loss, grad = _loss_and_grad(theta, Z, y_arr, C)
    if trace is not None:
        trace.append(loss)

    n_steps = 0
    converged = bool(np.max(np.abs(grad)) < tol)
    while not converged and n_steps < max_iter:
        try:
            direction = np.linalg.solve(_hessian(theta, A, C), -grad)
        except np.linalg.LinAlgError:
            direction = -grad
        descent = float(grad @ direction)
        if descent >= 0 or not np.all(np.isfinite(direction)):
            direction = -grad  # fallback: steepest descent
            descent = float(grad @ direction)

        step = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            theta_new = theta + step * direction
            loss_new, grad_new = _loss_and_grad(theta_new, Z, y_arr, C)
            predicted = _ARMIJO_C1 * step * descent
            if loss_new <= loss + predicted:
                accepted = True
                break
            # endgame: the predicted decrease is below the float resolution of
            # the loss, so Armijo is blind; accept on gradient-norm progress
            if abs(predicted) < 8 * np.finfo(float).eps * (1.0 + abs(loss)) and (
                np.max(np.abs(grad_new)) < np.max(np.abs(grad))
            ):
                accepted = True
                break
            step *= 0.5
        if not accepted or np.array_equal(theta_new, theta):
            break  # no representable progress left

        theta, loss, grad = theta_new, loss_new, grad_new
        if trace is not None:
            trace.append(loss)
        n_steps += 1
        converged = bool(np.max(np.abs(grad)) < tol)

    if not converged:
        warnings.warn(
            f"optimizer stopped after {n_steps} iterations with "
            f"gradient norm {np.max(np.abs(grad)):.3e} > tol {tol:.1e}",
            NonConvergenceWarning,
        )

    return LogisticModel(
        intercept=float(theta[0]),
        coefficients=tuple(theta[1:]),
        scaler=scaler if scaler is not None else identity_scaler(),
        inverse_reg_c=C,
        converged=converged,
        n_iter=n_steps,
        trained_on=trained_on,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# JSON serialization (lossless: floats are written with shortest round-trip repr)
# ---------------------------------------------------------------------------

def model_to_json(model: LogisticModel) -> str:
    payload = {
        "intercept": model.intercept,
        "coefficients": list(model.coefficients),
        "scaler": {
            "means": list(model.scaler.means),
            "stds": list(model.scaler.std_devs),
        },
        "C": model.inverse_reg_c,
        "trained_on": model.trained_on,
        "seed": model.seed,
    }
    return json.dumps(payload, sort_keys=True)


def model_from_json(text: str) -> LogisticModel:
    payload = json.loads(text)
    return LogisticModel(
        intercept=payload["intercept"],
        coefficients=tuple(payload["coefficients"]),
        scaler=ScalerStats(
            means=tuple(payload["scaler"]["means"]),
            std_devs=tuple(payload["scaler"]["stds"]),
        ),
        inverse_reg_c=payload["C"],
        trained_on=payload.get("trained_on", ""),
        seed=payload.get("seed"),
    )


def save_model(model: LogisticModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model) + "\n")


def load_model(path: str | Path) -> LogisticModel:
    return model_from_json(Path(path).read_text())
