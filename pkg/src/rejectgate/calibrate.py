"""Temperature scaling of binary logits fitted by golden-section search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .cost_core import Dataset
from .errors import DegenerateLabelsError, EmptyDatasetError, LogitsRequiredError

PROB_CLAMP = 1e-12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TemperatureModel:
    temperature: float
    fit_nll: float
    iterations: int


def _binary_nll(p: np.ndarray, correct: np.ndarray) -> float:
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    losses = np.where(correct, -np.log(p), -np.log1p(-p))
    return math.fsum(losses.tolist()) / p.size


def nll(d: Dataset) -> float:
    """Mean binary negative log-likelihood of the recorded confidences."""
    if d.n == 0:
        raise EmptyDatasetError()
    return _binary_nll(d.confidence, d.correct)


def golden_section_minimize(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200
) -> tuple[float, float, int]:
    """Minimize a unimodal scalar function on [lo, hi].

    Returns ``(x, f(x), iterations)``; stops once the bracket is narrower
    than ``tol`` or after ``max_iter`` shrink steps.
    """
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        it += 1
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    return (x1, f1, it) if f1 <= f2 else (x2, f2, it)


def _require_logits(d: Dataset) -> None:
    if d.n == 0:
        raise EmptyDatasetError()
    if not d.has_logits:
        raise LogitsRequiredError()


def fit_temperature(
    d: Dataset,
    bounds: tuple[float, float] = (0.05, 20.0),
    tol: float = 1e-4,
    max_iter: int = 200,
) -> TemperatureModel:
    """Fit the temperature minimizing NLL of ``sigmoid(logit / T)``.

    The search runs over ``ln T`` within ``bounds``.  The identity temperature
    is kept when it scores better than the search result, so the fitted NLL is
    never worse than the uncalibrated one.
    """
    _require_logits(d)
    n_correct = int(np.count_nonzero(d.correct))
    if n_correct in (0, d.n):
        raise DegenerateLabelsError()
    logits, correct = d.logit, d.correct

    def objective(log_t: float) -> float:
        return _binary_nll(expit(logits / math.exp(log_t)), correct)

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    log_t, best, iterations = golden_section_minimize(objective, lo, hi, tol, max_iter)
    if lo <= 0.0 <= hi:
        at_identity = objective(0.0)
        if at_identity < best:
            log_t, best = 0.0, at_identity
    return TemperatureModel(temperature=math.exp(log_t), fit_nll=best, iterations=iterations)


def apply_temperature(d: Dataset, m: TemperatureModel) -> Dataset:
    """Copy of ``d`` with confidences replaced by ``sigmoid(logit / T)``."""
    _require_logits(d)
    return d.with_confidence(expit(d.logit / m.temperature))
