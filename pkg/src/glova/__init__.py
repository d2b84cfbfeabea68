"""Variation-aware analog sizing framework.

Risk-sensitive actor-critic optimization over PVT corners and mismatch
Monte Carlo, with staged statistical verification (mean-sigma screening
and severity-ordered simulation).
"""

__version__ = "0.1.0"

from .core import (
    SUCCESS_REWARD,
    ConstraintSet,
    DesignSpace,
    MetricSpec,
    ParamSpec,
    PerformanceVector,
    normalize_metrics,
    reward,
)
from .orchestrator import RunConfig, RunReport, campaign, load_config, run, verify_design
from .variation import CornerGrid, PvtCorner, enumerate_corners, sample_mismatch_set

__all__ = [
    "SUCCESS_REWARD",
    "ConstraintSet",
    "CornerGrid",
    "DesignSpace",
    "MetricSpec",
    "ParamSpec",
    "PerformanceVector",
    "PvtCorner",
    "RunConfig",
    "RunReport",
    "campaign",
    "enumerate_corners",
    "load_config",
    "normalize_metrics",
    "reward",
    "run",
    "sample_mismatch_set",
    "verify_design",
    "__version__",
]
