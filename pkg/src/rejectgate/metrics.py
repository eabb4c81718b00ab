"""Calibration baselines (ECE) and value-aligned metrics for a rejection gate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cost_core import (
    REJECT_ALL,
    CostModel,
    Dataset,
    Threshold,
    accept_mask,
    deployed_value,
    expected_value,
    format_threshold,
    optimal_threshold,
    threshold_position,
)
from .errors import EmptyDatasetError, RejectGateError

EQUAL_WIDTH = "equal_width"
EQUAL_MASS = "equal_mass"


@dataclass(frozen=True)
class BinningScheme:
    kind: str = EQUAL_WIDTH
    bins: int = 15

    def __post_init__(self):
        if self.kind not in (EQUAL_WIDTH, EQUAL_MASS):
            raise RejectGateError(f"unknown binning scheme {self.kind!r}")
        if int(self.bins) != self.bins or self.bins < 1:
            raise RejectGateError(f"bins must be a positive integer, got {self.bins}")


@dataclass(frozen=True)
class ReliabilityRow:
    bin_lower: float
    bin_upper: float
    count: int
    # None for empty bins
    mean_confidence: float | None
    accuracy: float | None


@dataclass(frozen=True)
class ReliabilityTable:
    scheme: BinningScheme
    rows: tuple[ReliabilityRow, ...]

    @property
    def n(self) -> int:
        return sum(r.count for r in self.rows)


def _require_nonempty(d: Dataset) -> None:
    if d.n == 0:
        raise EmptyDatasetError()


def _row(lower, upper, conf, corr) -> ReliabilityRow:
    if conf.size == 0:
        return ReliabilityRow(float(lower), float(upper), 0, None, None)
    return ReliabilityRow(float(lower), float(upper), int(conf.size), float(conf.mean()), float(corr.mean()))


def reliability_table(d: Dataset, scheme: BinningScheme = BinningScheme()) -> ReliabilityTable:
    """Bin records by confidence.

    Equal-width bins are ``[i/B, (i+1)/B)`` with the last bin closed at 1.
    Equal-mass bins split the confidence-sorted sample into ``min(B, n)``
    consecutive chunks whose sizes differ by at most one; their bounds are the
    smallest and largest confidence inside the chunk.
    """
    _require_nonempty(d)
    conf, corr = d.confidence, d.correct
    if scheme.kind == EQUAL_WIDTH:
        b = scheme.bins
        idx = np.minimum((conf * b).astype(np.int64), b - 1)
        rows = tuple(_row(i / b, (i + 1) / b, conf[idx == i], corr[idx == i]) for i in range(b))
    else:
        order = np.argsort(conf, kind="stable")
        chunks = np.array_split(order, min(scheme.bins, d.n))
        rows = tuple(_row(conf[c].min(), conf[c].max(), conf[c], corr[c]) for c in chunks)
    return ReliabilityTable(scheme, rows)


def ece(d: Dataset, scheme: BinningScheme = BinningScheme()) -> float:
    """Expected calibration error: count-weighted mean of |accuracy - confidence| per bin."""
    table = reliability_table(d, scheme)
    total = math.fsum(r.count * abs(r.accuracy - r.mean_confidence) for r in table.rows if r.count)
    return total / d.n


def value_gap(d: Dataset, cost: CostModel, t: Threshold) -> float:
    """Per-item |expected value - realized value| of the gate at ``t``."""
    return abs(expected_value(d, cost, t).mean_expected - deployed_value(d, cost, t).mean_value)


def value_gap_standard_error(d: Dataset, cost: CostModel, t: Threshold) -> float:
    """Sampling standard error of the per-item realized value given the confidences.

    Under perfect calibration the value gap is a sum of independent zero-mean
    terms with variance ``(v - c_w)^2 c (1 - c)`` over accepted items.
    """
    _require_nonempty(d)
    c = d.confidence[accept_mask(d.confidence, t)]
    var = (cost.v - cost.c_w) ** 2 * math.fsum((c * (1.0 - c)).tolist())
    return math.sqrt(var) / d.n


@dataclass(frozen=True)
class ValueCurveRow:
    threshold: Threshold
    deployed_mean_value: float
    expected_mean_value: float
    acceptance_rate: float


@dataclass(frozen=True)
class ValueCurve:
    rows: tuple[ValueCurveRow, ...]

    def __len__(self):
        return len(self.rows)

    def best(self) -> ValueCurveRow:
        """Row with the highest deployed value; the smallest threshold wins ties."""
        best = self.rows[0]
        for row in self.rows[1:]:
            if row.deployed_mean_value > best.deployed_mean_value:
                best = row
        return best


def _sweep(d: Dataset, cost: CostModel):
    """Gate statistics at every candidate threshold, in ascending order.

    Candidates are 0, each distinct confidence, and REJECT_ALL.  Accepting
    ``conf >= t`` means a candidate accepts a suffix of the sorted sample, so
    suffix sums give every row in one pass.
    """
    _require_nonempty(d)
    n = d.n
    order = np.argsort(d.confidence, kind="stable")
    conf = d.confidence[order]
    corr = d.correct[order]
    distinct = np.unique(conf)
    cands = distinct if distinct[0] == 0.0 else np.concatenate(([0.0], distinct))
    first = np.searchsorted(conf, cands, side="left")
    first = np.append(first, n)

    correct_suffix = np.concatenate((np.cumsum(corr[::-1])[::-1], [0]))
    item_expected = conf * cost.v + (1.0 - conf) * cost.c_w
    expected_suffix = np.concatenate((np.cumsum(item_expected[::-1])[::-1], [0.0]))

    n_correct = correct_suffix[first]
    n_wrong = (n - first) - n_correct
    n_rejected = first
    totals = n_correct * cost.v + n_wrong * cost.c_w + n_rejected * cost.c_d
    expected_totals = expected_suffix[first] + n_rejected * cost.c_d
    thresholds: list[Threshold] = [float(x) for x in cands] + [REJECT_ALL]
    return thresholds, totals, expected_totals, (n - first) / n


def value_curve(d: Dataset, cost: CostModel) -> ValueCurve:
    """Deployed and expected value at every achievable gate partition."""
    thresholds, totals, expected_totals, rates = _sweep(d, cost)
    rows = tuple(
        ValueCurveRow(t, float(v) / d.n, float(e) / d.n, float(a))
        for t, v, e, a in zip(thresholds, totals, expected_totals, rates)
    )
    return ValueCurve(rows)


def empirical_threshold(d: Dataset, cost: CostModel) -> tuple[Threshold, float]:
    """Threshold maximizing the realized mean value on ``d``, and that value.

    Ties go to the smallest threshold.
    """
    thresholds, totals, _, _ = _sweep(d, cost)
    i = int(np.argmax(totals))
    return thresholds[i], float(totals[i]) / d.n


def threshold_divergence(d: Dataset, cost: CostModel) -> float:
    """|analytic threshold - empirical threshold|, with REJECT_ALL placed at 1.0."""
    t_emp, _ = empirical_threshold(d, cost)
    return abs(optimal_threshold(cost) - threshold_position(t_emp))


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    scheme: BinningScheme
    value_gap: float
    t_analytic: float
    t_empirical: Threshold
    threshold_divergence: float
    value_at_t_analytic: float
    value_at_t_empirical: float
    value_gap_at_t_empirical: float
    t_evaluated: Threshold

    def to_dict(self) -> dict:
        out = asdict(self)
        out["t_empirical"] = _threshold_json(self.t_empirical)
        out["t_evaluated"] = _threshold_json(self.t_evaluated)
        return out


def _threshold_json(t: Threshold):
    return format_threshold(t) if t is REJECT_ALL else float(t)


def full_report(
    d: Dataset,
    cost: CostModel,
    scheme: BinningScheme = BinningScheme(),
    t: Threshold | None = None,
) -> CalibrationReport:
    """ECE next to the value gap and threshold divergence.

    ``value_gap`` is measured at ``t`` (the analytic threshold by default).
    """
    _require_nonempty(d)
    t_analytic = optimal_threshold(cost)
    t_eval = t_analytic if t is None else t
    t_emp, value_emp = empirical_threshold(d, cost)
    return CalibrationReport(
        ece=ece(d, scheme),
        scheme=scheme,
        value_gap=value_gap(d, cost, t_eval),
        t_analytic=t_analytic,
        t_empirical=t_emp,
        threshold_divergence=abs(t_analytic - threshold_position(t_emp)),
        value_at_t_analytic=deployed_value(d, cost, t_analytic).mean_value,
        value_at_t_empirical=value_emp,
        value_gap_at_t_empirical=value_gap(d, cost, t_emp),
        t_evaluated=t_eval,
    )
