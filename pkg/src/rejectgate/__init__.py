"""Cost-aware evaluation and construction of confidence-threshold rejection gates."""

__version__ = "0.1.0"

from .cost_core import (  # noqa: E402
    REJECT_ALL,
    CostModel,
    Dataset,
    ExpectedValueReport,
    PredictionRecord,
    Threshold,
    ValueReport,
    deployed_value,
    expected_value,
    item_expected_value,
    item_value,
    optimal_threshold,
)
from .errors import RejectGateError  # noqa: E402
from .metrics import (  # noqa: E402
    BinningScheme,
    CalibrationReport,
    ece,
    empirical_threshold,
    full_report,
    reliability_table,
    threshold_divergence,
    value_curve,
    value_gap,
)

__all__ = [
    "REJECT_ALL",
    "BinningScheme",
    "CalibrationReport",
    "CostModel",
    "Dataset",
    "ExpectedValueReport",
    "PredictionRecord",
    "RejectGateError",
    "Threshold",
    "ValueReport",
    "deployed_value",
    "ece",
    "empirical_threshold",
    "expected_value",
    "full_report",
    "item_expected_value",
    "item_value",
    "optimal_threshold",
    "reliability_table",
    "threshold_divergence",
    "value_curve",
    "value_gap",
]
