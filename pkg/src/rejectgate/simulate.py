"""Synthetic prediction logs and Monte Carlo runs of the gated workflow.

All randomness comes from :mod:`rejectgate.rng`, keyed by the seed and the
item index, so a dataset is a pure function of its configuration.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, logit

from . import rng
from .cost_core import CostModel, Dataset, Threshold, accept_mask, tally
from .errors import EmptyDatasetError, RejectGateError

P_CLAMP = 1e-9
TRUE_PROBABILITY = "p_true"


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    alpha: float = 2.0
    beta: float = 2.0
    hc: float | None = None
    high_conf: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise RejectGateError(f"n must be a positive integer, got {self.n}")
        if not (self.alpha > 0 and self.beta > 0):
            raise RejectGateError(f"Beta shape parameters must be > 0, got ({self.alpha}, {self.beta})")
        if self.hc is not None and not 0.0 <= self.hc <= 1.0:
            raise RejectGateError(f"hc must lie in [0, 1], got {self.hc}")
        if not 0.0 <= self.high_conf <= 1.0:
            raise RejectGateError(f"high_conf must lie in [0, 1], got {self.high_conf}")
        if not 0 <= self.seed < 1 << 64:
            raise RejectGateError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DistortionParams:
    """Logit-space distortion ``gamma * logit(p) + delta``; gamma > 1 is overconfident."""

    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise RejectGateError(f"gamma must be > 0, got {self.gamma}")
        if not math.isfinite(self.delta):
            raise RejectGateError(f"delta must be finite, got {self.delta}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationResult:
    n: int
    replications: int
    mean_total_value: float
    std_total_value: float
    baseline_value: float
    mean_advantage: float
    per_replication: tuple[float, ...]

    @property
    def mean_item_value(self) -> float:
        return self.mean_total_value / self.n

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_replication"] = list(self.per_replication)
        out["mean_item_value"] = self.mean_item_value
        return out


def _ids(n: int, prefix: str = "syn") -> list[str]:
    return [f"{prefix}-{i}" for i in range(n)]


def generate_calibrated(cfg: SyntheticConfig) -> Dataset:
    """Confidence ~ Beta(alpha, beta), correct ~ Bernoulli(confidence)."""
    idx = np.arange(cfg.n)
    c = rng.beta(cfg.seed, rng.STREAM_CONFIDENCE, idx, cfg.alpha, cfg.beta)
    correct = rng.uniform(cfg.seed, rng.STREAM_OUTCOME, idx) < c
    return Dataset(ids=_ids(cfg.n), confidence=c, correct=correct)


def generate_distorted(cfg: SyntheticConfig, dist: DistortionParams) -> Dataset:
    """True p ~ Beta(alpha, beta) and correct ~ Bernoulli(p), reported through a logit distortion.

    Uses the same draws as :func:`generate_calibrated` for the same seed, so
    the two share true probabilities and outcomes item by item.  The stored
    logit is the distorted score and ``extras['p_true']`` keeps p.
    """
    idx = np.arange(cfg.n)
    p = rng.beta(cfg.seed, rng.STREAM_CONFIDENCE, idx, cfg.alpha, cfg.beta)
    correct = rng.uniform(cfg.seed, rng.STREAM_OUTCOME, idx) < p
    z = dist.gamma * logit(np.clip(p, P_CLAMP, 1.0 - P_CLAMP)) + dist.delta
    return Dataset(
        ids=_ids(cfg.n),
        confidence=expit(z),
        correct=correct,
        logit=z,
        extras={TRUE_PROBABILITY: p},
    )


def generate_rare_high_confidence(cfg: SyntheticConfig) -> Dataset:
    """A model that is only confident (and right) on a rare slice of size ``hc``.

    Slice items get confidence ``high_conf``; all others get a Beta draw
    rescaled into [0, 0.5].  Outcomes are Bernoulli(confidence) on both slices.
    """
    if cfg.hc is None:
        raise RejectGateError("hc is required for the rare high-confidence generator")
    idx = np.arange(cfg.n)
    in_slice = rng.uniform(cfg.seed, rng.STREAM_SLICE, idx) < cfg.hc
    low = 0.5 * rng.beta(cfg.seed, rng.STREAM_CONFIDENCE, idx, cfg.alpha, cfg.beta)
    c = np.where(in_slice, cfg.high_conf, low)
    correct = rng.uniform(cfg.seed, rng.STREAM_OUTCOME, idx) < c
    return Dataset(ids=_ids(cfg.n), confidence=c, correct=correct)


def generate_gaussian_logits(n: int, std: float = 2.0, overconfidence: float = 1.0, seed: int = 0) -> Dataset:
    """Latent score z ~ Normal(0, std), correct ~ Bernoulli(sigmoid(z)), logit stored as ``overconfidence * z``.

    The temperature that recalibrates the stored logits is ``overconfidence``.
    """
    if n < 1:
        raise RejectGateError(f"n must be >= 1, got {n}")
    if not (std > 0 and overconfidence > 0):
        raise RejectGateError("std and overconfidence must be > 0")
    idx = np.arange(n)
    z = rng.normal(seed, rng.STREAM_GAUSSIAN, idx, std)
    p = expit(z)
    correct = rng.uniform(seed, rng.STREAM_OUTCOME, idx) < p
    stored = overconfidence * z
    return Dataset(ids=_ids(n), confidence=expit(stored), correct=correct, logit=stored, extras={TRUE_PROBABILITY: p})


def distort_band(d: Dataset, lower: float, upper: float, transform: Callable[[np.ndarray], np.ndarray]) -> Dataset:
    """Rewrite confidences inside ``[lower, upper]`` and leave every other record alone."""
    band = (d.confidence >= lower) & (d.confidence <= upper)
    conf = np.array(d.confidence)
    conf[band] = np.clip(transform(conf[band]), 0.0, 1.0)
    return d.with_confidence(conf)


def top_line_accuracy(d: Dataset) -> float:
    if d.n == 0:
        raise EmptyDatasetError()
    return float(np.count_nonzero(d.correct)) / d.n


def run_workflow(
    d: Dataset,
    cost: CostModel,
    t: Threshold,
    replications: int = 1,
    seed: int = 0,
    resample: bool = True,
) -> SimulationResult:
    """Replay the gated workflow ``replications`` times.

    Each replication redraws the outcome of every accepted item from its true
    probability of being correct: ``extras['p_true']`` when the dataset carries
    it, the reported confidence otherwise.  Rejected items always score
    ``c_d``.  With ``resample=False`` the recorded outcomes are used as-is.
    """
    if d.n == 0:
        raise EmptyDatasetError()
    if replications < 1:
        raise RejectGateError(f"replications must be >= 1, got {replications}")
    accept = accept_mask(d.confidence, t)
    if TRUE_PROBABILITY in d.extras:
        prob = np.asarray(d.extras[TRUE_PROBABILITY], dtype=np.float64)
    else:
        prob = d.confidence
    idx = np.arange(d.n)
    totals = []
    for r in range(replications):
        if resample:
            outcome = rng.uniform(seed, rng.STREAM_REPLICATION_BASE + r, idx) < prob
        else:
            outcome = d.correct
        totals.append(tally(outcome, accept, cost).total_value)
    arr = np.array(totals)
    baseline = d.n * cost.c_d
    mean_total = math.fsum(totals) / replications
    std = float(arr.std(ddof=1)) if replications > 1 else 0.0
    return SimulationResult(
        n=d.n,
        replications=replications,
        mean_total_value=mean_total,
        std_total_value=std,
        baseline_value=baseline,
        mean_advantage=mean_total - baseline,
        per_replication=tuple(float(x) for x in totals),
    )
