"""Design space, constraint handling, metric normalization, and the reward.

All sizing solutions live in normalized coordinates ``x in [0, 1]^p``;
the :class:`DesignSpace` maps them onto physical parameter ranges.
Constraints are folded into upper-bound form once, at construction, so
every downstream consumer (reward, screening, scoring) sees a single
convention: smaller raw value = better, satisfied iff ``F_i <= c_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

SUCCESS_REWARD = 0.2
#: Guard for the normalization denominator when c + F crosses zero.
DENOM_GUARD = 1e-12

PARAM_KINDS = ("width", "length", "capacitance")
SCALES = ("linear", "log")
DIRECTIONS = ("upper_bound", "lower_bound")


@dataclass(frozen=True)
class ParamSpec:
    """One sizing parameter: physical range plus the mapping scale."""

    name: str
    kind: str
    min: float
    max: float
    scale: str = "linear"

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise ConfigError(f"unknown param kind {self.kind!r} for {self.name!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r} for {self.name!r}")
        if not (0 < self.min < self.max):
            raise ConfigError(
                f"param {self.name!r} needs 0 < min < max, got [{self.min}, {self.max}]"
            )


class DesignSpace:
    """Ordered list of parameters defining the p-dimensional search box."""

    def __init__(self, params: list[ParamSpec] | tuple[ParamSpec, ...]):
        if not params:
            raise ConfigError("design space needs at least one parameter")
        self.params = tuple(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names in design space")
        self.names = tuple(names)
        self._index = {n: i for i, n in enumerate(names)}
        self._mins = np.array([p.min for p in self.params], dtype=float)
        self._maxs = np.array([p.max for p in self.params], dtype=float)
        self._log = np.array([p.scale == "log" for p in self.params])

    @property
    def p(self) -> int:
        return len(self.params)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ConfigError(f"unknown parameter {name!r}") from None

    def clamp(self, x: np.ndarray) -> np.ndarray:
        """Clamp normalized coordinates into [0, 1] (never reject)."""
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        """Map normalized x onto physical values (linear or log per param)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionError(f"design vector has shape {x.shape}, space has p={self.p}")
        x = np.clip(x, 0.0, 1.0)
        lin = self._mins + x * (self._maxs - self._mins)
        log = self._mins * (self._maxs / self._mins) ** x
        return np.where(self._log, log, lin)

    def to_dict(self) -> dict:
        return {
            "params": [
                {"name": p.name, "kind": p.kind, "min": p.min, "max": p.max, "scale": p.scale}
                for p in self.params
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpace":
        return cls([ParamSpec(**entry) for entry in data["params"]])


@dataclass(frozen=True)
class MetricSpec:
    """A performance metric with its target, as written in the config."""

    name: str
    target: float
    direction: str = "upper_bound"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"metric {self.name!r}: unknown direction {self.direction!r}")


class ConstraintSet:
    """Targets folded into upper-bound form.

    Lower-bound metrics are stored with both the metric and the target
    negated, so ``folded value <= folded target`` means satisfied for
    every metric.
    """

    def __init__(self, metrics: list[MetricSpec] | tuple[MetricSpec, ...]):
        if not metrics:
            raise ConfigError("constraint set needs at least one metric")
        self.metrics = tuple(metrics)
        self.names = tuple(m.name for m in self.metrics)
        self._signs = np.array(
            [1.0 if m.direction == "upper_bound" else -1.0 for m in self.metrics]
        )
        self.targets = np.array([m.target for m in self.metrics]) * self._signs

    @property
    def m(self) -> int:
        return len(self.metrics)

    def fold(self, raw: np.ndarray) -> np.ndarray:
        """Sign-normalize raw metric values (lower bounds get negated)."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.m,):
            raise DimensionError(f"raw metrics have shape {raw.shape}, expected ({self.m},)")
        return raw * self._signs

    def to_dict(self) -> dict:
        return {
            "metrics": [
                {"name": m.name, "target": m.target, "direction": m.direction}
                for m in self.metrics
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintSet":
        return cls([MetricSpec(**entry) for entry in data["metrics"]])


@dataclass(frozen=True)
class PerformanceVector:
    """Raw (folded, upper-bound form) and normalized metric values."""

    raw: np.ndarray
    normalized: np.ndarray


def normalize_metrics(raw: np.ndarray, constraints: ConstraintSet) -> PerformanceVector:
    """Normalize folded raw metrics to f_i = (c_i - F_i) / |c_i + F_i|.

    The denominator is taken in magnitude so that "f_i >= 0 iff the
    constraint is met" holds for sign-folded (negative target) metrics
    as well, and guarded so the value stays finite when c + F ~ 0.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (constraints.m,):
        raise DimensionError(f"raw metrics have shape {raw.shape}, expected ({constraints.m},)")
    c = constraints.targets
    denom = np.maximum(np.abs(c + raw), DENOM_GUARD)
    return PerformanceVector(raw=raw, normalized=(c - raw) / denom)


def normalized_margin(value: np.ndarray, constraints: ConstraintSet) -> np.ndarray:
    """Degradation-oriented margin on the same scale as normalize_metrics.

    Zero at the constraint boundary, positive when `value` exceeds its
    folded target (higher = worse).  Used to make per-metric screening
    values commensurable before summing them into a corner score.
    """
    value = np.asarray(value, dtype=float)
    c = constraints.targets
    denom = np.maximum(np.abs(c + value), DENOM_GUARD)
    return (value - c) / denom


def reward(perf: PerformanceVector) -> float:
    """Collapse the normalized metrics into the scalar training reward.

    Sum of negative parts of f_i; the fixed success value when every
    metric is non-negative.
    """
    violation = float(np.minimum(perf.normalized, 0.0).sum())
    return SUCCESS_REWARD if violation >= 0.0 else violation
