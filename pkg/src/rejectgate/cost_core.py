"""Cost model, prediction records and the value accounting of the rejection gate.

A prediction is accepted when ``confidence >= threshold``; an accepted
prediction earns ``v`` when correct and ``c_w`` when wrong, and a rejected item
takes the default path worth ``c_d``.  The normalized model sets ``v = 1``,
``c_d = -1`` and ``c_w = -k``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import EmptyDatasetError, InvalidCostModelError, RejectGateError


@dataclass(frozen=True)
class CostModel:
    """Utilities of the three gate outcomes.

    ``v`` must exceed ``c_d`` and ``c_w`` must be below ``v``; ``c_w`` may be
    above ``c_d`` (a wrong answer cheaper than the default path).
    """

    v: float
    c_d: float
    c_w: float

    def __post_init__(self):
        for name in ("v", "c_d", "c_w"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidCostModelError(f"{name} must be finite, got {value}")
        if not self.v > self.c_d:
            raise InvalidCostModelError(
                f"value of a correct prediction (v={self.v}) must exceed the default path (c_d={self.c_d})"
            )
        if not self.c_w < self.v:
            raise InvalidCostModelError(
                f"value of a wrong prediction (c_w={self.c_w}) must be below v={self.v}"
            )

    @classmethod
    def normalized(cls, k: float) -> "CostModel":
        if not (math.isfinite(k) and k > 0):
            raise InvalidCostModelError(f"k must be > 0, got {k}")
        return cls(v=1.0, c_d=-1.0, c_w=-float(k))

    @property
    def k(self) -> float:
        """Severity ratio ``c_w / c_d``; NaN when ``c_d`` is zero."""
        if self.c_d == 0:
            return math.nan
        return self.c_w / self.c_d


class RejectAll:
    """Threshold sentinel that rejects every confidence, including 1."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "REJECT_ALL"

    def __reduce__(self):
        return (RejectAll, ())


REJECT_ALL = RejectAll()
Threshold = Union[float, RejectAll]


def check_threshold(t: Any) -> Threshold:
    if t is REJECT_ALL:
        return t
    value = float(t)
    if not 0.0 <= value <= 1.0:
        raise RejectGateError(f"threshold must lie in [0, 1], got {t}")
    return value


def threshold_key(t: Threshold) -> float:
    """Sort key placing REJECT_ALL after every finite threshold."""
    return math.inf if t is REJECT_ALL else float(t)


def threshold_position(t: Threshold) -> float:
    """Location on [0, 1] used for distances; REJECT_ALL sits at 1.0."""
    return 1.0 if t is REJECT_ALL else float(t)


def format_threshold(t: Threshold) -> str:
    return "REJECT_ALL" if t is REJECT_ALL else repr(float(t))


def parse_threshold(text: Any) -> Threshold:
    if text is REJECT_ALL or text == "REJECT_ALL":
        return REJECT_ALL
    return check_threshold(float(text))


def accepts(confidence: float, t: Threshold) -> bool:
    return t is not REJECT_ALL and confidence >= t


def accept_mask(confidence: np.ndarray, t: Threshold) -> np.ndarray:
    if t is REJECT_ALL:
        return np.zeros(np.shape(confidence), dtype=bool)
    return np.asarray(confidence) >= t


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    confidence: float
    correct: bool
    group: str | None = None
    logit: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise RejectGateError(f"confidence must lie in [0, 1], got {self.confidence} (id={self.id!r})")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Dataset:
    """Column-oriented, immutable collection of prediction records.

    Missing logits are stored as NaN and missing group tags as ``None``.
    ``extras`` carries pass-through columns (unknown input columns, or the true
    probabilities of synthetic data under the key ``p_true``); they never enter
    metric computations.
    """

    def __init__(
        self,
        ids: Sequence[str],
        confidence,
        correct,
        group: Sequence[str | None] | None = None,
        logit=None,
        extras: Mapping[str, Sequence[Any]] | None = None,
    ):
        conf = np.array(confidence, dtype=np.float64).ravel()
        n = conf.size
        if not np.all((conf >= 0.0) & (conf <= 1.0)):
            bad = int(np.flatnonzero(~((conf >= 0.0) & (conf <= 1.0)))[0])
            raise RejectGateError(f"confidence must lie in [0, 1], got {conf[bad]} at position {bad}")
        ids_arr = np.empty(n, dtype=object)
        ids_arr[:] = [str(i) for i in ids]
        corr = np.array(correct, dtype=bool).ravel()
        grp = np.empty(n, dtype=object)
        if group is not None:
            grp[:] = [None if g is None else str(g) for g in group]
        if logit is None:
            lg = np.full(n, np.nan)
        else:
            lg = np.array([np.nan if x is None else x for x in logit], dtype=np.float64)
        if not (ids_arr.size == corr.size == grp.size == lg.size == n):
            raise RejectGateError("dataset columns must have equal length")
        self.ids = _frozen(ids_arr)
        self.confidence = _frozen(conf)
        self.correct = _frozen(corr)
        self.group = _frozen(grp)
        self.logit = _frozen(lg)
        self.extras: dict[str, np.ndarray] = {}
        for name, values in (extras or {}).items():
            arr = np.asarray(values) if isinstance(values, np.ndarray) else np.array(list(values), dtype=object)
            if arr.size != n:
                raise RejectGateError(f"extra column {name!r} has {arr.size} values, expected {n}")
            self.extras[name] = _frozen(arr.copy())

    @classmethod
    def from_records(cls, records: Iterable[PredictionRecord]) -> "Dataset":
        recs = list(records)
        return cls(
            ids=[r.id for r in recs],
            confidence=[r.confidence for r in recs],
            correct=[r.correct for r in recs],
            group=[r.group for r in recs],
            logit=[r.logit for r in recs],
        )

    @property
    def n(self) -> int:
        return int(self.confidence.size)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> PredictionRecord:
        logit = self.logit[i]
        return PredictionRecord(
            id=self.ids[i],
            confidence=float(self.confidence[i]),
            correct=bool(self.correct[i]),
            group=self.group[i],
            logit=None if math.isnan(logit) else float(logit),
        )

    def __iter__(self) -> Iterator[PredictionRecord]:
        return (self[i] for i in range(self.n))

    @property
    def records(self) -> list[PredictionRecord]:
        return list(self)

    def __repr__(self):
        return f"Dataset(n={self.n})"

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.confidence, other.confidence)
            and np.array_equal(self.correct, other.correct)
            and np.array_equal(self.group, other.group)
            and np.array_equal(self.logit, other.logit, equal_nan=True)
        )

    @property
    def has_logits(self) -> bool:
        return bool(self.n) and not np.isnan(self.logit).any()

    def group_tags(self) -> list[str]:
        """Distinct non-missing group tags in lexicographic order."""
        return sorted({g for g in self.group if g is not None})

    def _replace(self, **columns) -> "Dataset":
        base = dict(
            ids=self.ids,
            confidence=self.confidence,
            correct=self.correct,
            group=self.group,
            logit=self.logit,
            extras=self.extras,
        )
        base.update(columns)
        return Dataset(**base)

    def with_confidence(self, confidence) -> "Dataset":
        return self._replace(confidence=confidence)

    def with_group(self, tag: str | None) -> "Dataset":
        return self._replace(group=[tag] * self.n)

    def subset(self, mask) -> "Dataset":
        idx = np.asarray(mask)
        return Dataset(
            ids=self.ids[idx],
            confidence=self.confidence[idx],
            correct=self.correct[idx],
            group=self.group[idx],
            logit=self.logit[idx],
            extras={k: v[idx] for k, v in self.extras.items()},
        )

    @staticmethod
    def concat(datasets: Sequence["Dataset"]) -> "Dataset":
        shared = set.intersection(*(set(d.extras) for d in datasets)) if datasets else set()
        return Dataset(
            ids=np.concatenate([d.ids for d in datasets]),
            confidence=np.concatenate([d.confidence for d in datasets]),
            correct=np.concatenate([d.correct for d in datasets]),
            group=np.concatenate([d.group for d in datasets]),
            logit=np.concatenate([d.logit for d in datasets]),
            extras={k: np.concatenate([d.extras[k] for d in datasets]) for k in sorted(shared)},
        )


@dataclass(frozen=True)
class ValueReport:
    total_value: float
    mean_value: float
    acceptance_rate: float
    accepted_correct: int
    accepted_wrong: int
    rejected: int
    # records rejected only because a grouped rejector found no group tag
    missing_group: int = 0

    @property
    def n(self) -> int:
        return self.accepted_correct + self.accepted_wrong + self.rejected

    @property
    def accepted_accuracy(self) -> float:
        accepted = self.accepted_correct + self.accepted_wrong
        return self.accepted_correct / accepted if accepted else math.nan

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExpectedValueReport:
    total_expected: float
    mean_expected: float
    rho_t: float

    def to_dict(self) -> dict:
        return asdict(self)


def _require_nonempty(d: Dataset) -> None:
    if d.n == 0:
        raise EmptyDatasetError()


def optimal_threshold(cost: CostModel) -> float:
    """Confidence at which accepting and rejecting have equal expected value.

    ``(c_d - c_w) / (v - c_w)``, i.e. ``(k - 1) / (k + 1)`` when normalized,
    clamped to [0, 1].
    """
    raw = (cost.c_d - cost.c_w) / (cost.v - cost.c_w)
    return min(1.0, max(0.0, raw))


def item_value(record: PredictionRecord, cost: CostModel, t: Threshold) -> float:
    if not accepts(record.confidence, t):
        return cost.c_d
    return cost.v if record.correct else cost.c_w


def item_expected_value(confidence: float, cost: CostModel, t: Threshold) -> float:
    if not 0.0 <= confidence <= 1.0:
        raise RejectGateError(f"confidence must lie in [0, 1], got {confidence}")
    if not accepts(confidence, t):
        return cost.c_d
    return confidence * cost.v + (1.0 - confidence) * cost.c_w


def tally(correct: np.ndarray, accept: np.ndarray, cost: CostModel, missing_group: int = 0) -> ValueReport:
    """Aggregate gate outcomes from outcome and accept masks of equal length."""
    n = int(np.size(correct))
    if n == 0:
        raise EmptyDatasetError()
    accept = np.asarray(accept, dtype=bool)
    correct = np.asarray(correct, dtype=bool)
    n_correct = int(np.count_nonzero(accept & correct))
    n_wrong = int(np.count_nonzero(accept & ~correct))
    n_rejected = n - n_correct - n_wrong
    total = n_correct * cost.v + n_wrong * cost.c_w + n_rejected * cost.c_d
    return ValueReport(
        total_value=total,
        mean_value=total / n,
        acceptance_rate=(n_correct + n_wrong) / n,
        accepted_correct=n_correct,
        accepted_wrong=n_wrong,
        rejected=n_rejected,
        missing_group=missing_group,
    )


def account(d: Dataset, cost: CostModel, accept: np.ndarray, missing_group: int = 0) -> ValueReport:
    """Aggregate gate outcomes of ``d`` for an explicit accept mask."""
    return tally(d.correct, accept, cost, missing_group)


def deployed_value(d: Dataset, cost: CostModel, t: Threshold) -> ValueReport:
    """Realized value of running the gate at ``t`` over a labeled dataset."""
    return account(d, cost, accept_mask(d.confidence, t))


def expected_item_values(d: Dataset, cost: CostModel, t: Threshold) -> np.ndarray:
    c = d.confidence
    return np.where(accept_mask(c, t), c * cost.v + (1.0 - c) * cost.c_w, cost.c_d)


def expected_value(d: Dataset, cost: CostModel, t: Threshold) -> ExpectedValueReport:
    """Value the model's own confidences predict for the gate at ``t``."""
    _require_nonempty(d)
    values = expected_item_values(d, cost, t)
    # correctly rounded, hence exactly invariant under record permutation
    total = math.fsum(values.tolist())
    rejected = d.n - int(np.count_nonzero(accept_mask(d.confidence, t)))
    return ExpectedValueReport(total_expected=total, mean_expected=total / d.n, rho_t=rejected / d.n)
