"""Allowed-inference baselines for anonymized tabular data.

Computes baseline precision and coverage from dataset non-members,
compares attack predictions against it with coverage-matched Precision
Improvement, and converts membership-inference ROC points to
precision/recall under realistic base rates.
"""

__version__ = "0.1.0"

from .baseline import (  # noqa: E402
    BaselineResult,
    ConditionKey,
    LearnerConfig,
    SweepPoint,
    baseline_against,
    compute_baseline,
    replication_study,
    threshold_sweep,
)
from .comparison import AttackSubmission, ComparisonReport, batch_compare, compare, ingest_attack  # noqa: E402
from .data import ColumnSpec, Dataset, encode, load_csv, replicate, split_members  # noqa: E402
from .membership import RocCurve, bundled_fixture, load_roc, pr_tables  # noqa: E402
from .metrics import Counts, RocPoint, SkewScenario  # noqa: E402

__all__ = [
    "AttackSubmission",
    "BaselineResult",
    "ColumnSpec",
    "ComparisonReport",
    "ConditionKey",
    "Counts",
    "Dataset",
    "LearnerConfig",
    "RocCurve",
    "RocPoint",
    "SkewScenario",
    "SweepPoint",
    "baseline_against",
    "batch_compare",
    "bundled_fixture",
    "compare",
    "compute_baseline",
    "encode",
    "ingest_attack",
    "load_csv",
    "load_roc",
    "pr_tables",
    "replicate",
    "replication_study",
    "split_members",
    "threshold_sweep",
]
