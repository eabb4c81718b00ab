"""Accept/reject policies: global, per-group and trusted-subset rejectors."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .cost_core import (
    REJECT_ALL,
    CostModel,
    Dataset,
    PredictionRecord,
    Threshold,
    ValueReport,
    accept_mask,
    accepts,
    account,
    check_threshold,
    optimal_threshold,
)
from .errors import EmptyDatasetError, GroupingRequiredError, RejectGateError
from .metrics import empirical_threshold, value_gap

GLOBAL = "global"
PER_GROUP = "per_group"
TRUSTED_SUBSET = "trusted_subset"
KINDS = (GLOBAL, PER_GROUP, TRUSTED_SUBSET)

DEFAULT_EPSILON = 0.05
DEFAULT_MIN_GROUP_SIZE = 30


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class RejectorSpec:
    kind: str
    global_threshold: Threshold
    group_thresholds: Mapping[str, Threshold] = field(default_factory=dict)
    trusted_groups: frozenset[str] = frozenset()
    cost_k: float = 3.0
    fit_metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RejectGateError(f"unknown rejector kind {self.kind!r}")
        object.__setattr__(self, "global_threshold", check_threshold(self.global_threshold))
        object.__setattr__(
            self, "group_thresholds", {str(g): check_threshold(t) for g, t in self.group_thresholds.items()}
        )
        object.__setattr__(self, "trusted_groups", frozenset(str(g) for g in self.trusted_groups))
        missing = self.trusted_groups - set(self.group_thresholds)
        if missing:
            raise RejectGateError(f"trusted groups without a threshold: {sorted(missing)}")

    @property
    def degenerate(self) -> bool:
        """A trusted-subset spec that trusts nothing rejects every record."""
        return self.kind == TRUSTED_SUBSET and not self.trusted_groups

    def threshold_for(self, group: str | None) -> Threshold:
        """Threshold this rejector applies to a record of ``group``."""
        if self.kind == GLOBAL:
            return self.global_threshold
        if group is None:
            return REJECT_ALL
        if self.kind == PER_GROUP:
            return self.group_thresholds.get(group, self.global_threshold)
        if group in self.trusted_groups:
            return self.group_thresholds[group]
        return REJECT_ALL


@dataclass(frozen=True)
class GroupRow:
    group: str
    count: int
    value_gap: float
    best_threshold: Threshold
    best_mean_value: float
    trusted: bool


@dataclass(frozen=True)
class GroupReport:
    rows: tuple[GroupRow, ...]
    epsilon: float
    min_group_size: int
    # records without a group tag; they belong to no row
    untagged: int = 0

    @property
    def trusted_groups(self) -> list[str]:
        return [r.group for r in self.rows if r.trusted]


def _require_nonempty(d: Dataset) -> None:
    if d.n == 0:
        raise EmptyDatasetError()


def _require_groups(d: Dataset) -> list[str]:
    _require_nonempty(d)
    tags = d.group_tags()
    if not tags:
        raise GroupingRequiredError()
    return tags


def fit_global(d: Dataset, cost: CostModel) -> RejectorSpec:
    t, _ = empirical_threshold(d, cost)
    return RejectorSpec(kind=GLOBAL, global_threshold=t, cost_k=cost.k, fit_metadata={"n": d.n})


def fit_per_group(d: Dataset, cost: CostModel, min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> RejectorSpec:
    """Fit one empirical threshold per group large enough to trust its own optimum.

    Smaller groups, unseen groups and untagged records use a fallback threshold
    fitted on the whole dataset.
    """
    tags = _require_groups(d)
    fallback, _ = empirical_threshold(d, cost)
    thresholds: dict[str, Threshold] = {}
    small = []
    for g in tags:
        sub = d.subset(d.group == g)
        if sub.n >= min_group_size:
            thresholds[g], _ = empirical_threshold(sub, cost)
        else:
            small.append(g)
    return RejectorSpec(
        kind=PER_GROUP,
        global_threshold=fallback,
        group_thresholds=thresholds,
        cost_k=cost.k,
        fit_metadata={"n": d.n, "min_group_size": min_group_size, "fallback_groups": small},
    )


def identify_trusted_subsets(
    d: Dataset,
    cost: CostModel,
    epsilon: float = DEFAULT_EPSILON,
    min_group_size: int = DEFAULT_MIN_GROUP_SIZE,
) -> GroupReport:
    """Flag groups whose value gap at the analytic threshold is within ``epsilon``.

    A group is trusted only when it also has at least ``min_group_size`` records.
    """
    if epsilon < 0:
        raise RejectGateError(f"epsilon must be >= 0, got {epsilon}")
    tags = _require_groups(d)
    t_analytic = optimal_threshold(cost)
    rows = []
    for g in tags:
        sub = d.subset(d.group == g)
        gap = value_gap(sub, cost, t_analytic)
        best_t, best_value = empirical_threshold(sub, cost)
        trusted = sub.n >= min_group_size and gap <= epsilon
        rows.append(GroupRow(g, sub.n, gap, best_t, best_value, trusted))
    untagged = int(sum(g is None for g in d.group))
    return GroupReport(tuple(rows), epsilon, min_group_size, untagged)


def fit_trusted_subset(
    d: Dataset,
    cost: CostModel,
    epsilon: float = DEFAULT_EPSILON,
    min_group_size: int = DEFAULT_MIN_GROUP_SIZE,
) -> RejectorSpec:
    """Accept only trusted groups, each at its own empirical threshold."""
    report = identify_trusted_subsets(d, cost, epsilon, min_group_size)
    fallback, _ = empirical_threshold(d, cost)
    trusted = {r.group: r.best_threshold for r in report.rows if r.trusted}
    return RejectorSpec(
        kind=TRUSTED_SUBSET,
        global_threshold=fallback,
        group_thresholds=trusted,
        trusted_groups=frozenset(trusted),
        cost_k=cost.k,
        fit_metadata={
            "n": d.n,
            "epsilon": epsilon,
            "min_group_size": min_group_size,
            "degenerate": not trusted,
        },
    )


def apply(spec: RejectorSpec, r: PredictionRecord) -> Decision:
    return Decision.ACCEPT if accepts(r.confidence, spec.threshold_for(r.group)) else Decision.REJECT


def decide(spec: RejectorSpec, d: Dataset) -> np.ndarray:
    """Vectorized :func:`apply`: boolean accept mask over the dataset."""
    if spec.kind == GLOBAL:
        return accept_mask(d.confidence, spec.global_threshold)
    accept = np.zeros(d.n, dtype=bool)
    groups = d.group
    for g in {g for g in groups if g is not None}:
        sel = groups == g
        accept[sel] = accept_mask(d.confidence[sel], spec.threshold_for(g))
    return accept


def evaluate(spec: RejectorSpec, d: Dataset, cost: CostModel) -> ValueReport:
    """Realized value of deploying ``spec`` on ``d``.

    Under grouped specs, records without a group tag are rejected and counted
    in ``missing_group``.
    """
    _require_nonempty(d)
    missing = 0 if spec.kind == GLOBAL else int(sum(g is None for g in d.group))
    return account(d, cost, decide(spec, d), missing_group=missing)
