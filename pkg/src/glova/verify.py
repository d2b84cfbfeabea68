"""Hierarchical verification: statistical screening plus reordered simulation.

Phase 1 walks the corners worst-first (per the last-worst buffer),
draws a small presample at each, and applies the mean-plus-beta2-sigma
screen to every metric.  A screening failure ends verification early;
a clean corner contributes a severity score and a correlation profile.
Phase 2 revisits corners in descending severity, draws the remaining
conditions, orders them by their correlation-weighted score, and
simulates until a condition misses the success reward.

Screening uses raw (upper-bound folded) metric values by default; the
normalized reading is available behind ``screening_space``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import LastWorstBuffer
from .bench import Evaluator, evaluate_batch
from .core import (
    SUCCESS_REWARD,
    ConstraintSet,
    PerformanceVector,
    normalized_margin,
    reward,
)
from .errors import DimensionError
from .rng import stream
from .variation import MismatchCondition, PvtCorner, sample_mismatch_set

PASSED = "passed"
FAILED_SCREENING = "failed_screening"
FAILED_SIMULATION = "failed_simulation"


@dataclass(frozen=True)
class MuSigmaReport:
    """Per-metric screening statistics for one corner."""

    metric_names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    screen_values: np.ndarray  # mean + beta2 * std, in screening space
    margins: np.ndarray  # normalized degradation margins (higher = worse)
    metric_passed: np.ndarray
    passed: bool
    space: str


def mu_sigma_screen(
    samples: list[PerformanceVector],
    constraints: ConstraintSet,
    beta2: float,
    space: str = "raw",
) -> MuSigmaReport:
    """Screen a presample: every metric's mean + beta2*sigma must meet target.

    With a single sample the spread degenerates to zero and the screen
    reduces to a direct constraint check.
    """
    if not samples:
        raise DimensionError("mu-sigma screening needs at least one sample")
    if beta2 < 0:
        raise ValueError("beta2 must be >= 0")
    if space == "raw":
        values = np.stack([s.raw for s in samples])
        threshold = constraints.targets
    elif space == "normalized":
        values = np.stack([-s.normalized for s in samples])  # degradation-oriented
        threshold = np.zeros(constraints.m)
    else:
        raise ValueError(f"unknown screening space {space!r}")
    means = values.mean(axis=0)
    stds = values.std(axis=0)  # population convention
    screen_values = means + beta2 * stds
    metric_passed = screen_values <= threshold
    if space == "raw":
        margins = normalized_margin(screen_values, constraints)
    else:
        margins = screen_values
    return MuSigmaReport(
        metric_names=constraints.names,
        means=means,
        stds=stds,
        screen_values=screen_values,
        margins=margins,
        metric_passed=metric_passed,
        passed=bool(metric_passed.all()),
        space=space,
    )


def t_score(report: MuSigmaReport) -> float:
    """Corner severity: sum of normalized screening margins (higher = worse)."""
    return float(report.margins.sum())


def pearson_profile(
    conditions: list[MismatchCondition], perfs: list[PerformanceVector]
) -> np.ndarray:
    """Pearson coefficient of each mismatch dimension against degradation.

    Degradation is the sum of negated normalized metrics, so positive
    coefficients mark directions that push the design toward failure.
    Fewer than two samples, or a zero-variance input, gives 0.
    """
    if len(conditions) != len(perfs):
        raise DimensionError("conditions and performances must pair up")
    r = len(conditions[0].h) if conditions else 0
    if len(conditions) < 2:
        return np.zeros(r)
    H = np.stack([c.h for c in conditions])  # (n, r)
    g = np.array([-p.normalized.sum() for p in perfs])  # (n,)
    Hc = H - H.mean(axis=0)
    gc = g - g.mean()
    denom = np.sqrt((Hc**2).sum(axis=0)) * np.sqrt((gc**2).sum())
    num = Hc.T @ gc
    out = np.zeros(r)
    nonzero = denom > 0
    out[nonzero] = num[nonzero] / denom[nonzero]
    return out


def h_score(condition: MismatchCondition, rho: np.ndarray) -> float:
    """Correlation-weighted sum of the mismatch vector (higher = riskier)."""
    rho = np.asarray(rho, dtype=float)
    if condition.h.shape != rho.shape:
        raise DimensionError(
            f"mismatch condition has shape {condition.h.shape}, profile {rho.shape}"
        )
    return float(condition.h @ rho)


@dataclass
class TraceRow:
    phase: str  # "screen" | "full"
    corner: str
    condition_index: int
    h_score: float
    reward: float
    cumulative: int


@dataclass
class VerificationOutcome:
    verdict: str
    failing_corner: str | None = None
    failing_condition: int | None = None
    simulations_used: int = 0  # fresh evaluator calls made here
    simulations_reused: int = 0  # presample evaluations carried over
    budget: int = 0  # k*N (or k) for a full pass
    t_scores: dict[str, float] = field(default_factory=dict)
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASSED

    @property
    def budget_consumed(self) -> int:
        return self.simulations_used + self.simulations_reused

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "failing_corner": self.failing_corner,
            "failing_condition": self.failing_condition,
            "simulations_used": self.simulations_used,
            "simulations_reused": self.simulations_reused,
            "budget": self.budget,
            "t_scores": dict(self.t_scores),
        }


@dataclass
class VerifyConfig:
    method: str
    n_full: int
    n_pre: int
    beta2: float = 4.0
    screening_space: str = "raw"
    mu_sigma: bool = True  # ablation: False falls back to direct sample checks
    reordering: bool = True  # ablation: False keeps enumeration/sample order
    chunk_size: int = 1  # >1 trades early exit for parallel throughput
    workers: int = 1
    master_seed: int = 0
    tag: int = 0  # distinguishes verification calls within one run


def run_verification(
    x: np.ndarray,
    corners: list[PvtCorner],
    evaluator: Evaluator,
    config: VerifyConfig,
    lwb: LastWorstBuffer | None = None,
    presample: tuple[PvtCorner, list[MismatchCondition], list[PerformanceVector]] | None = None,
) -> VerificationOutcome:
    """Run the full two-phase verification of a candidate design.

    ``presample`` carries the worst-corner conditions already simulated
    during optimization; they count toward the budget but not toward
    fresh simulations.  Sampling streams are keyed by corner identity,
    not visit order, so reordering changes only the order in which the
    same conditions get simulated.
    """
    outcome = VerificationOutcome(
        verdict=PASSED, budget=config.n_full * len(corners)
    )
    constraints = evaluator.constraints
    corner_index = {c: i for i, c in enumerate(corners)}

    # Phase 1: screen every corner, worst-first when history is available.
    order = lwb.sorted_corners() if lwb is not None else list(corners)
    profiles: dict[PvtCorner, np.ndarray] = {}
    scores: dict[PvtCorner, float] = {}
    for corner in order:
        ci = corner_index[corner]
        if presample is not None and presample[0] == corner:
            conditions, perfs = presample[1], presample[2]
            outcome.simulations_reused += len(conditions)
        else:
            conditions = sample_mismatch_set(
                x, evaluator.space, evaluator.variance_model, config.n_pre,
                config.method,
                stream(config.master_seed, "verify-pre", config.tag, ci),
            )
            perfs = evaluate_batch(
                evaluator, [(x, corner, c) for c in conditions], workers=config.workers
            )
            outcome.simulations_used += len(conditions)
        rewards = [reward(p) for p in perfs]
        if lwb is not None:
            lwb.update(corner, min(rewards))
        consumed_before = outcome.budget_consumed - len(conditions)
        for i, rw in enumerate(rewards):
            outcome.trace.append(
                TraceRow("screen", corner.label, i, 0.0, rw, consumed_before + i + 1)
            )
        report = mu_sigma_screen(perfs, constraints, config.beta2, config.screening_space)
        ok = report.passed if config.mu_sigma else all(
            rw == SUCCESS_REWARD for rw in rewards
        )
        if not ok:
            outcome.verdict = FAILED_SCREENING
            outcome.failing_corner = corner.label
            return outcome
        scores[corner] = t_score(report)
        profiles[corner] = pearson_profile(conditions, perfs)
        outcome.t_scores[corner.label] = scores[corner]

    # Phase 2: full simulation of the remaining conditions per corner.
    n_rest = config.n_full - config.n_pre
    if n_rest <= 0:
        return outcome
    if config.reordering:
        phase2 = sorted(corners, key=lambda c: (-scores[c], corner_index[c]))
    else:
        phase2 = list(corners)
    for corner in phase2:
        ci = corner_index[corner]
        conditions = sample_mismatch_set(
            x, evaluator.space, evaluator.variance_model, n_rest, config.method,
            stream(config.master_seed, "verify-full", config.tag, ci),
        )
        cond_scores = np.array([h_score(c, profiles[corner]) for c in conditions])
        if config.reordering:
            visit = np.argsort(-cond_scores, kind="stable")
        else:
            visit = np.arange(n_rest)
        for start in range(0, n_rest, config.chunk_size):
            chunk = visit[start : start + config.chunk_size]
            perfs = evaluate_batch(
                evaluator,
                [(x, corner, conditions[i]) for i in chunk],
                workers=config.workers,
            )
            outcome.simulations_used += len(chunk)
            failed_at = None
            for pos, (i, perf) in enumerate(zip(chunk, perfs)):
                rw = reward(perf)
                outcome.trace.append(
                    TraceRow(
                        "full", corner.label, int(i), float(cond_scores[i]), rw,
                        outcome.budget_consumed - len(chunk) + pos + 1,
                    )
                )
                if rw != SUCCESS_REWARD and failed_at is None:
                    failed_at = int(i)
            if failed_at is not None:
                outcome.verdict = FAILED_SIMULATION
                outcome.failing_corner = corner.label
                outcome.failing_condition = failed_at
                return outcome
    return outcome
