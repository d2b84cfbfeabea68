"""Deterministic synthetic circuit testbenches.

Each bench is loaded from a JSON definition holding the device table,
mismatch coefficients, per-metric base formulas, corner factor tables,
and constraint targets.  A metric evaluates as

    F_i(x | t, h) = base_i(phys(x)) * corner_i(t) * exp(a_i . h)

where ``base_i`` is a product of powered weighted sums of physical
features (W/L, L/W, W*L, raw parameter values), ``corner_i`` multiplies
a process lookup with voltage/temperature factors interpolated linearly
between tabulated anchors, and ``a_i`` is a fixed sensitivity vector
over the mismatch dimensions.  The exponential coupling keeps every
metric strictly positive in natural units for any mismatch draw.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..core import (
    ConstraintSet,
    DesignSpace,
    MetricSpec,
    ParamSpec,
    PerformanceVector,
    normalize_metrics,
)
from ..errors import ConfigError, DimensionError
from ..variation import GLOBAL_MC, MismatchCondition, MismatchDim, VarianceModel

# feature codes used by the compiled formula terms
_RATIO, _INV_RATIO, _AREA, _VALUE = 0, 1, 2, 3


@dataclass(frozen=True)
class _Term:
    """One powered aggregate: (sum of weighted features) ** power."""

    power: float
    kinds: np.ndarray
    a_idx: np.ndarray  # width index (or param index for VALUE features)
    b_idx: np.ndarray  # length index (unused for VALUE features)
    weights: np.ndarray


class _CornerTable:
    """Multiplicative (process, voltage, temperature) factor for one metric."""

    def __init__(self, data: dict):
        self.process = {str(k): float(v) for k, v in data.get("process", {}).items()}
        self.process.setdefault(GLOBAL_MC, 1.0)
        self._volts, self._vfac = self._axis(data.get("voltage", {}))
        self._temps, self._tfac = self._axis(data.get("temperature", {}))

    @staticmethod
    def _axis(table: dict) -> tuple[np.ndarray, np.ndarray]:
        if not table:
            return np.array([0.0]), np.array([1.0])
        keys = sorted(table, key=float)
        return np.array([float(k) for k in keys]), np.array([float(table[k]) for k in keys])

    def factor(self, process: str, voltage: float, temperature: float) -> float:
        try:
            p = self.process[process]
        except KeyError:
            raise ConfigError(f"no corner factor for process {process!r}") from None
        v = float(np.interp(voltage, self._volts, self._vfac))
        t = float(np.interp(temperature, self._temps, self._tfac))
        return p * v * t


@dataclass(frozen=True)
class _Metric:
    name: str
    unit: str
    scale: float
    terms: tuple[_Term, ...]
    corner: _CornerTable
    sensitivity: np.ndarray


class SyntheticBench:
    """Closed-form evaluator standing in for circuit simulation."""

    def __init__(self, definition: dict):
        self.name = definition.get("name", "bench")
        self.description = definition.get("description", "")
        self.space = DesignSpace([ParamSpec(**p) for p in definition["params"]])
        self._devices = {d["name"]: d for d in definition["devices"]}

        dims: list[MismatchDim] = []
        sigmas: list[float] = []
        g = definition.get("global_sigma", {})
        for dev in definition["devices"]:
            wi = self.space.index(dev["w"])
            li = self.space.index(dev["l"])
            for kind, key in (("vt", "a_vt"), ("beta", "a_beta")):
                dims.append(
                    MismatchDim(
                        name=f"{dev['name']}.{kind}",
                        device=dev["name"],
                        kind=kind,
                        coeff=float(dev.get(key, 0.0)),
                        w_index=wi,
                        l_index=li,
                    )
                )
                sigmas.append(float(g.get(kind, 0.0)))
        self.variance_model = VarianceModel(dims, np.array(sigmas))
        self._dim_index = {d.name: i for i, d in enumerate(self.variance_model.dims)}

        specs, metrics = [], []
        for md in definition["metrics"]:
            specs.append(
                MetricSpec(md["name"], float(md["target"]), md.get("direction", "upper_bound"))
            )
            metrics.append(self._compile_metric(md))
        self.constraints = ConstraintSet(specs)
        self.metrics = tuple(metrics)

        ref = definition.get("reference_design")
        self.reference_design = None if ref is None else np.asarray(ref, dtype=float)

    # -- construction helpers -------------------------------------------------

    def _compile_metric(self, md: dict) -> _Metric:
        terms = []
        for term in md["base"]["terms"]:
            kinds, a_idx, b_idx, weights = [], [], [], []
            for comp in term["sum"]:
                feature = comp["feature"]
                weight = float(comp.get("weight", 1.0))
                if feature == "value":
                    kinds.append(_VALUE)
                    a_idx.append(self.space.index(comp["param"]))
                    b_idx.append(0)
                else:
                    dev = self._devices.get(comp["device"])
                    if dev is None:
                        raise ConfigError(
                            f"metric {md['name']!r} references unknown device "
                            f"{comp['device']!r}"
                        )
                    code = {"ratio": _RATIO, "inv_ratio": _INV_RATIO, "area": _AREA}.get(feature)
                    if code is None:
                        raise ConfigError(f"unknown feature {feature!r} in {md['name']!r}")
                    kinds.append(code)
                    a_idx.append(self.space.index(dev["w"]))
                    b_idx.append(self.space.index(dev["l"]))
                if weight <= 0:
                    raise ConfigError(f"feature weights must be > 0 in metric {md['name']!r}")
                weights.append(weight)
            terms.append(
                _Term(
                    power=float(term.get("power", 1.0)),
                    kinds=np.array(kinds, dtype=int),
                    a_idx=np.array(a_idx, dtype=int),
                    b_idx=np.array(b_idx, dtype=int),
                    weights=np.array(weights, dtype=float),
                )
            )
        sens = np.zeros(self.variance_model.r)
        for dim_name, coeff in md.get("sensitivity", {}).items():
            idx = self._dim_index.get(dim_name)
            if idx is None:
                raise ConfigError(
                    f"metric {md['name']!r} references unknown mismatch dim {dim_name!r}"
                )
            sens[idx] = float(coeff)
        return _Metric(
            name=md["name"],
            unit=md.get("unit", ""),
            scale=float(md["base"]["scale"]),
            terms=tuple(terms),
            corner=_CornerTable(md.get("corner", {})),
            sensitivity=sens,
        )

    # -- evaluator interface --------------------------------------------------

    @property
    def metric_names(self) -> tuple[str, ...]:
        return self.constraints.names

    @property
    def mismatch_dimension(self) -> int:
        return self.variance_model.r

    def base_values(self, phys: np.ndarray) -> np.ndarray:
        """Metric base values (natural units) at the physical design point."""
        out = np.empty(len(self.metrics))
        for i, metric in enumerate(self.metrics):
            value = metric.scale
            for term in metric.terms:
                a = phys[term.a_idx]
                b = phys[term.b_idx]
                feats = np.choose(term.kinds, [a / b, b / a, a * b, a])
                value *= float(np.dot(term.weights, feats)) ** term.power
            out[i] = value
        return out

    def raw_values(self, x, corner, condition) -> np.ndarray:
        """Natural-unit metric values before sign folding."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.space.p,):
            raise DimensionError(f"design vector has shape {x.shape}, bench p={self.space.p}")
        h = np.asarray(condition.h, dtype=float)
        if h.shape != (self.variance_model.r,):
            raise DimensionError(
                f"mismatch condition has shape {h.shape}, bench r={self.variance_model.r}"
            )
        phys = self.space.denormalize(self.space.clamp(x))
        base = self.base_values(phys)
        out = np.empty_like(base)
        for i, metric in enumerate(self.metrics):
            factor = metric.corner.factor(corner.process, corner.voltage, corner.temperature)
            out[i] = base[i] * factor * np.exp(float(metric.sensitivity @ h))
        return out

    def evaluate(self, x, corner, condition: MismatchCondition) -> PerformanceVector:
        raw = self.constraints.fold(self.raw_values(x, corner, condition))
        return normalize_metrics(raw, self.constraints)

    def with_constraints(self, constraints: ConstraintSet) -> "SyntheticBench":
        """Shallow copy bound to a different (same-named) constraint set."""
        if constraints.names != self.constraints.names:
            raise ConfigError("replacement constraints must keep the metric names and order")
        clone = object.__new__(SyntheticBench)
        clone.__dict__.update(self.__dict__)
        clone.constraints = constraints
        return clone

    @classmethod
    def from_file(cls, path) -> "SyntheticBench":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))
