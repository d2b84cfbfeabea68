"""PVT corners and the hierarchical global/local mismatch sampler.

Process corners carry the die-to-die shift in corner-simulation modes;
in global-local Monte Carlo mode the process axis is replaced by a
shared per-set global draw, around which device-local deviations are
sampled.  Local standard deviations follow an area scaling law
(coefficient / sqrt(W*L)), so upsizing a device shrinks its mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DesignSpace
from .errors import ConfigError, DimensionError

PROCESS_CORNERS = ("TT", "SS", "FF", "SF", "FS")
GLOBAL_MC = "GLOBAL_MC"

METHOD_C = "C"
METHOD_CMCL = "C-MC_L"
METHOD_CMCGL = "C-MC_G-L"
METHODS = (METHOD_C, METHOD_CMCL, METHOD_CMCGL)

_METHOD_ALIASES = {
    "C": METHOD_C,
    "CMCL": METHOD_CMCL,
    "C-MC_L": METHOD_CMCL,
    "C_MC_L": METHOD_CMCL,
    "CMCGL": METHOD_CMCGL,
    "C-MC_G-L": METHOD_CMCGL,
    "C_MC_G_L": METHOD_CMCGL,
}


def normalize_method(method: str) -> str:
    """Map user spellings (CMCL, c-mc_l, ...) onto the canonical names."""
    key = str(method).upper().replace("-", "-").strip()
    canonical = _METHOD_ALIASES.get(key) or _METHOD_ALIASES.get(key.replace("-", "_"))
    if canonical is None:
        raise ConfigError(f"unknown verification method {method!r}; expected one of {METHODS}")
    return canonical


@dataclass(frozen=True)
class PvtCorner:
    process: str
    voltage: float
    temperature: float

    @property
    def label(self) -> str:
        return f"{self.process}/{self.voltage:g}V/{self.temperature:g}C"


@dataclass(frozen=True)
class CornerGrid:
    """Process/voltage/temperature grids plus the nominal operating point."""

    process: tuple[str, ...] = PROCESS_CORNERS
    voltage: tuple[float, ...] = (0.8, 0.9)
    temperature: tuple[float, ...] = (-40.0, 27.0, 80.0)
    nominal_voltage: float = 0.9
    nominal_temperature: float = 27.0

    def typical_corner(self) -> PvtCorner:
        return PvtCorner("TT", self.nominal_voltage, self.nominal_temperature)

    @classmethod
    def from_dict(cls, data: dict) -> "CornerGrid":
        kwargs = {}
        if "process" in data:
            kwargs["process"] = tuple(data["process"])
        if "voltage" in data:
            kwargs["voltage"] = tuple(float(v) for v in data["voltage"])
        if "temperature" in data:
            kwargs["temperature"] = tuple(float(t) for t in data["temperature"])
        if "nominal_voltage" in data:
            kwargs["nominal_voltage"] = float(data["nominal_voltage"])
        if "nominal_temperature" in data:
            kwargs["nominal_temperature"] = float(data["nominal_temperature"])
        return cls(**kwargs)


def enumerate_corners(method: str, grid: CornerGrid) -> list[PvtCorner]:
    """Corner set for the verification method.

    Corner modes cross process x voltage x temperature; global-local MC
    drops the predefined process axis (the global draw replaces it) and
    crosses voltage x temperature only.
    """
    method = normalize_method(method)
    if not grid.voltage or not grid.temperature:
        raise ConfigError("corner grid has an empty voltage or temperature axis")
    if method == METHOD_CMCGL:
        return [PvtCorner(GLOBAL_MC, v, t) for v in grid.voltage for t in grid.temperature]
    if not grid.process:
        raise ConfigError("corner grid has an empty process axis")
    return [
        PvtCorner(p, v, t)
        for p in grid.process
        for v in grid.voltage
        for t in grid.temperature
    ]


@dataclass(frozen=True)
class MismatchDim:
    """One mismatch dimension: a device parameter with its area coefficient."""

    name: str
    device: str
    kind: str  # "vt" (mV*um) or "beta" (%*um)
    coeff: float
    w_index: int
    l_index: int


class VarianceModel:
    """Diagonal covariances for global and device-local variation."""

    def __init__(self, dims: list[MismatchDim] | tuple[MismatchDim, ...], global_sigmas):
        self.dims = tuple(dims)
        self.global_sigmas = np.asarray(global_sigmas, dtype=float)
        if self.global_sigmas.shape != (len(self.dims),):
            raise ConfigError(
                f"global sigma vector has shape {self.global_sigmas.shape}, "
                f"expected ({len(self.dims)},)"
            )
        if np.any(self.global_sigmas < 0):
            raise ConfigError("global sigmas must be >= 0")
        self._w_idx = np.array([d.w_index for d in self.dims], dtype=int)
        self._l_idx = np.array([d.l_index for d in self.dims], dtype=int)
        self._coeff = np.array([d.coeff for d in self.dims], dtype=float)

    @property
    def r(self) -> int:
        return len(self.dims)

    @property
    def dim_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def local_sigma(self, x: np.ndarray, space: DesignSpace) -> np.ndarray:
        """Per-dimension local sigma = coeff / sqrt(W*L) at the design x."""
        phys = space.denormalize(x)
        area = phys[self._w_idx] * phys[self._l_idx]
        if np.any(area <= 0):
            raise ConfigError("device with nonpositive area in variance model")
        return self._coeff / np.sqrt(area)


@dataclass(frozen=True)
class MismatchCondition:
    """A sampled mismatch vector and the shared die-level part it embeds."""

    h: np.ndarray
    global_part: np.ndarray


def zero_condition(r: int) -> MismatchCondition:
    z = np.zeros(r)
    return MismatchCondition(h=z, global_part=np.zeros(r))


def sample_mismatch_set(
    x: np.ndarray,
    space: DesignSpace,
    model: VarianceModel,
    n: int,
    method: str,
    rng: np.random.Generator,
) -> list[MismatchCondition]:
    """Draw one mismatch condition set of size n for the given method.

    Corner mode returns exact zero vectors.  Local MC draws n times
    around zero.  Global-local MC draws a single shared global vector
    for the whole set, then n local deviations around it.
    """
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    method = normalize_method(method)
    r = model.r
    if method == METHOD_C:
        return [zero_condition(r) for _ in range(n)]
    local = model.local_sigma(x, space)
    if method == METHOD_CMCL:
        h1 = np.zeros(r)
    else:
        h1 = rng.standard_normal(r) * model.global_sigmas
    draws = h1 + rng.standard_normal((n, r)) * local
    return [MismatchCondition(h=draws[i], global_part=h1) for i in range(n)]


def check_condition(condition: MismatchCondition, r: int) -> None:
    if condition.h.shape != (r,):
        raise DimensionError(
            f"mismatch condition has shape {condition.h.shape}, expected ({r},)"
        )
