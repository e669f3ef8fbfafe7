"""Linear host power model: training, prediction, error and attribution.

Host power is modeled as::

    P = alpha + beta_cpu*cpu + beta_mem*mem + beta_disk*disk + beta_net*net

where ``alpha`` is the baseline (idle) draw and each beta is the extra draw
at full utilization of that resource.  :func:`fit` estimates the weights by
ordinary least squares over features paired with metered watts.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from softmeter._kv import format_decimal, parse_kv
from softmeter.errors import (
    AttributionOverflow,
    DegenerateDesign,
    InsufficientData,
    ModelFormatError,
    ModelInvariantError,
)
from softmeter.telemetry import AlignedSeries, FeatureVector

COLUMNS = ("intercept", "cpu", "mem", "disk", "net")
MODEL_KEYS = ("alpha", "beta_cpu", "beta_mem", "beta_disk", "beta_net")
N_PARAMS = len(COLUMNS)

# Pivots below this fraction of the largest pivot mark a dependent column.
PIVOT_RTOL = 1e-10
ATTRIBUTION_TOL = 1e-9
# Round-off around a true zero coefficient is not worth a warning.
NEGATIVE_RTOL = 1e-9


class NegativeCoefficientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearPowerModel:
    alpha: float
    beta_cpu: float = 0.0
    beta_mem: float = 0.0
    beta_disk: float = 0.0
    beta_net: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ModelInvariantError(f"non-finite coefficient in {self.coefficients}")

    @property
    def betas(self) -> tuple[float, float, float, float]:
        return (self.beta_cpu, self.beta_mem, self.beta_disk, self.beta_net)

    @property
    def coefficients(self) -> tuple[float, ...]:
        return (self.alpha,) + self.betas

    def predict(self, f: FeatureVector) -> float:
        return predict(self, f)

    def dynamic(self, f: FeatureVector) -> float:
        """Watts above baseline for features ``f``."""
        return sum(b * x for b, x in zip(self.betas, f.as_tuple()))

    def min_over_hypercube(self) -> float:
        return min(
            self.alpha + sum(b * x for b, x in zip(self.betas, corner))
            for corner in product((0.0, 1.0), repeat=4)
        )


@dataclass(frozen=True)
class ErrorReport:
    n: int
    mape_pct: float
    rse_pct: float
    max_abs_err_w: float

    def lines(self) -> list[str]:
        return [
            f"n={self.n}",
            f"mape_pct={self.mape_pct:.4f}",
            f"rse_pct={self.rse_pct:.4f}",
            f"max_abs_err_w={self.max_abs_err_w:.4f}",
        ]


@dataclass(frozen=True)
class DomainAttribution:
    baseline_w: float
    per_domain_w: tuple[tuple[str, float], ...]
    unattributed_w: float

    @property
    def total_w(self) -> float:
        return self.baseline_w + sum(w for _, w in self.per_domain_w) + self.unattributed_w

    def as_dict(self) -> dict[str, float]:
        return dict(self.per_domain_w)


def predict(model: LinearPowerModel, f: FeatureVector) -> float:
    return model.alpha + model.dynamic(f)


def design_matrix(features: Sequence[FeatureVector]) -> np.ndarray:
    X = np.ones((len(features), N_PARAMS))
    if features:
        X[:, 1:] = np.array([f.as_tuple() for f in features], dtype=float)
    return X


def _cholesky_with_rank_check(A: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Cholesky factor ``L`` of symmetric ``A`` in natural column order.

    Columns whose pivot is negligible relative to the largest pivot seen are
    left out of the factor and returned as dependent.
    """
    p = A.shape[0]
    L = np.zeros_like(A)
    dependent = []
    largest = 0.0
    for j in range(p):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        largest = max(largest, A[j, j])
        if pivot <= PIVOT_RTOL * largest:
            dependent.append(j)
            continue
        largest = max(largest, pivot)
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, p):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L, dependent


def _cholesky_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = L.shape[0]
    z = np.zeros(p)
    for i in range(p):
        z[i] = (b[i] - L[i, :i] @ z[:i]) / L[i, i]
    x = np.zeros(p)
    for i in reversed(range(p)):
        x[i] = (z[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    return x


def solve_least_squares(X: np.ndarray, y: np.ndarray, names: Sequence[str] = COLUMNS) -> np.ndarray:
    """OLS coefficients through the normal equations.

    Columns are scaled to unit norm before forming ``X^T X``, and one round
    of iterative refinement against the unscaled residual follows the solve.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    # All-zero columns keep a zero pivot and are reported as dependent.
    norms[norms == 0.0] = 1.0
    Xs = X / norms
    L, dependent = _cholesky_with_rank_check(Xs.T @ Xs)
    if dependent:
        raise DegenerateDesign([names[j] for j in dependent])
    scaled = _cholesky_solve(L, Xs.T @ y)
    residual = y - Xs @ scaled
    scaled = scaled + _cholesky_solve(L, Xs.T @ residual)
    return scaled / norms


def fit(data: AlignedSeries) -> LinearPowerModel:
    """Least-squares power model over aligned (features, watts) rows.

    Raises :class:`InsufficientData` below five rows, :class:`DegenerateDesign`
    when a feature is constant (collinear with the intercept) or otherwise
    dependent, and :class:`ModelInvariantError` when the fitted model would
    predict non-positive power somewhere in the unit hypercube.
    """
    if len(data) < N_PARAMS:
        raise InsufficientData(f"need at least {N_PARAMS} aligned rows, got {len(data)}")
    X = design_matrix(data.features)
    y = np.array(data.watts, dtype=float)
    coef = solve_least_squares(X, y)
    model = LinearPowerModel(*(float(c) for c in coef))
    scale = max(abs(c) for c in model.coefficients)
    negative = [
        k for k, c in zip(MODEL_KEYS[1:], model.betas) if c < -NEGATIVE_RTOL * scale
    ]
    if negative:
        warnings.warn(
            f"negative fitted coefficient(s): {', '.join(negative)}",
            NegativeCoefficientWarning,
            stacklevel=2,
        )
    floor = model.min_over_hypercube()
    if floor <= 0:
        raise ModelInvariantError(
            f"fitted model predicts {floor:.3f} W inside the feature hypercube"
        )
    return model


def sum_squared_residuals(model: LinearPowerModel, data: AlignedSeries) -> float:
    return float(sum((w - predict(model, f)) ** 2 for f, w in data))


def error_report(predicted: Sequence[float], actual: Sequence[float]) -> ErrorReport:
    if len(actual) == 0:
        raise InsufficientData("cannot evaluate on empty data")
    if len(predicted) != len(actual):
        raise ValueError("predicted and actual lengths differ")
    pred = np.asarray(predicted, dtype=float)
    act = np.asarray(actual, dtype=float)
    if (act <= 0).any():
        raise ValueError("actual watts must be positive")
    err = pred - act
    return ErrorReport(
        n=int(act.size),
        mape_pct=float(100.0 * np.mean(np.abs(err) / act)),
        rse_pct=float(100.0 * math.sqrt(np.mean(err**2)) / np.mean(act)),
        max_abs_err_w=float(np.max(np.abs(err))),
    )


def evaluate(model: LinearPowerModel, data: AlignedSeries) -> ErrorReport:
    return error_report([predict(model, f) for f in data.features], data.watts)


def attribute(
    model: LinearPowerModel,
    host_f: FeatureVector,
    domains: Sequence[tuple[str, FeatureVector]],
) -> DomainAttribution:
    """Split the host prediction into baseline, per-domain dynamic power
    and an unattributed remainder.

    Each domain is charged ``sum(beta_r * f_r)`` for its own features; the
    host's dynamic power not covered by any domain is reported separately so
    the parts always add back up to ``predict(model, host_f)``.
    """
    host = host_f.as_tuple()
    totals = [0.0] * 4
    for _, f in domains:
        for r, x in enumerate(f.as_tuple()):
            totals[r] += x
    over = [COLUMNS[r + 1] for r in range(4) if totals[r] > host[r] + ATTRIBUTION_TOL]
    if over:
        raise AttributionOverflow(
            f"domain usage exceeds host usage for: {', '.join(over)}"
        )
    per_domain = tuple((domain_id, model.dynamic(f)) for domain_id, f in domains)
    host_w = predict(model, host_f)
    unattributed = host_w - model.alpha - sum(w for _, w in per_domain)
    return DomainAttribution(model.alpha, per_domain, unattributed)


def save_model(model: LinearPowerModel, path) -> None:
    lines = [f"{k}={format_decimal(v)}" for k, v in zip(MODEL_KEYS, model.coefficients)]
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def parse_model(text: str) -> LinearPowerModel:
    values = parse_kv(text, ModelFormatError, MODEL_KEYS)
    missing = [k for k in MODEL_KEYS if k not in values]
    if missing:
        raise ModelFormatError(f"missing key(s): {', '.join(missing)}")
    try:
        return LinearPowerModel(*(values[k] for k in MODEL_KEYS))
    except ModelInvariantError as exc:
        raise ModelFormatError(str(exc)) from None


def load_model(path) -> LinearPowerModel:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: not UTF-8 text ({exc})") from None
    return parse_model(text)
