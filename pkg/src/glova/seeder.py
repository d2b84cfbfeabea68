"""Trust-region initial sampling at the typical condition.

A single adaptive box is moved over the normalized design space:
Latin-hypercube candidate batches inside the box are scored by direct
evaluation, the box re-centers on the incumbent, expands after a streak
of improvements and shrinks after a streak of misses, and restarts from
a fresh random center once it collapses.  The surrogate-model hook is
the `scorer` argument; by default it is the evaluator itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .agent import LastWorstBuffer, WorstCaseReplayBuffer
from .bench import Evaluator, evaluate_batch
from .core import SUCCESS_REWARD, reward
from .errors import SeedingError
from .rng import stream
from .variation import PvtCorner, sample_mismatch_set, zero_condition


@dataclass
class SeedingConfig:
    budget: int = 200
    batch_size: int = 10
    init_half_width: float = 0.4
    min_half_width: float = 0.005
    max_half_width: float = 0.5
    success_threshold: int = 3
    failure_threshold: int = 5
    top_k: int = 5  # designs carried into the buffers
    stop_after_feasible: int = 5


class TrustRegion:
    """Axis-aligned box that tracks the incumbent and adapts its size."""

    def __init__(self, center: np.ndarray, config: SeedingConfig):
        self.config = config
        self.center = np.clip(np.asarray(center, dtype=float), 0.0, 1.0)
        self.half_widths = np.full(self.center.shape, config.init_half_width)
        self.success_count = 0
        self.failure_count = 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.clip(self.center - self.half_widths, 0.0, 1.0)
        hi = np.clip(self.center + self.half_widths, 0.0, 1.0)
        return lo, hi

    def record(self, success: bool) -> bool:
        """Update streaks; returns True when the region collapsed (restart)."""
        cfg = self.config
        if success:
            self.success_count += 1
            self.failure_count = 0
            if self.success_count >= cfg.success_threshold:
                self.half_widths = np.minimum(self.half_widths * 2.0, cfg.max_half_width)
                self.success_count = 0
        else:
            self.failure_count += 1
            self.success_count = 0
            if self.failure_count >= cfg.failure_threshold:
                self.half_widths = self.half_widths * 0.5
                self.failure_count = 0
                if float(self.half_widths.max()) < cfg.min_half_width:
                    return True
        return False

    def restart(self, center: np.ndarray) -> None:
        self.center = np.clip(np.asarray(center, dtype=float), 0.0, 1.0)
        self.half_widths = np.full(self.center.shape, self.config.init_half_width)
        self.success_count = 0
        self.failure_count = 0


@dataclass
class SeedingResult:
    evaluated: list[tuple[np.ndarray, float]]
    feasible: list[tuple[np.ndarray, float]]
    best: tuple[np.ndarray, float]

    def top(self, k: int) -> list[tuple[np.ndarray, float]]:
        ranked = sorted(range(len(self.evaluated)),
                        key=lambda i: -self.evaluated[i][1])
        return [self.evaluated[i] for i in ranked[:k]]


def _lhs_batch(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray,
               n: int) -> np.ndarray:
    sampler = qmc.LatinHypercube(d=len(lo), seed=rng)
    return qmc.scale(sampler.random(n), lo, hi)


def seed_designs(
    evaluator: Evaluator,
    typical: PvtCorner,
    config: SeedingConfig,
    rng: np.random.Generator,
    workers: int = 1,
    scorer=None,
) -> SeedingResult:
    """Search for feasible-at-typical designs within the budget.

    Raises :class:`SeedingError` (carrying the best point found) when
    the budget runs out without any feasible design.
    """
    if config.budget < config.batch_size:
        raise SeedingError(
            f"seeding budget {config.budget} is below one batch of {config.batch_size}"
        )
    score = scorer or (lambda xs: _evaluate_rewards(evaluator, typical, xs, workers))
    evaluated: list[tuple[np.ndarray, float]] = []
    feasible: list[tuple[np.ndarray, float]] = []
    remaining = config.budget

    # opening batch over the full space locates the first incumbent
    n0 = min(config.batch_size, remaining)
    xs = _lhs_batch(rng, np.zeros(evaluator.space.p), np.ones(evaluator.space.p), n0)
    rewards = score(xs)
    remaining -= n0
    for x, r in zip(xs, rewards):
        evaluated.append((x, r))
        if r == SUCCESS_REWARD:
            feasible.append((x, r))
    best_i = int(np.argmax(rewards))
    best = (xs[best_i], float(rewards[best_i]))
    region = TrustRegion(best[0], config)

    while remaining > 0 and len(feasible) < config.stop_after_feasible:
        n = min(config.batch_size, remaining)
        lo, hi = region.bounds()
        xs = _lhs_batch(rng, lo, hi, n)
        rewards = score(xs)
        remaining -= n
        for x, r in zip(xs, rewards):
            evaluated.append((x, r))
            if r == SUCCESS_REWARD:
                feasible.append((x, r))
        batch_best = float(np.max(rewards))
        improved = batch_best > best[1]
        if improved:
            best = (xs[int(np.argmax(rewards))], batch_best)
            region.center = best[0]
        if region.record(improved):
            region.restart(rng.uniform(0.0, 1.0, size=evaluator.space.p))

    if not feasible:
        raise SeedingError(
            f"no feasible design within a budget of {config.budget} evaluations",
            best_found=best,
        )
    return SeedingResult(evaluated=evaluated, feasible=feasible, best=best)


def _evaluate_rewards(evaluator, typical, xs, workers) -> np.ndarray:
    zero = zero_condition(evaluator.mismatch_dimension)
    perfs = evaluate_batch(evaluator, [(x, typical, zero) for x in xs], workers=workers)
    return np.array([reward(p) for p in perfs])


def initialize_buffers(
    seeds: list[tuple[np.ndarray, float]],
    evaluator: Evaluator,
    corners: list[PvtCorner],
    method: str,
    n_pre: int,
    master_seed: int,
    buffer_capacity: int = 10_000,
    workers: int = 1,
) -> tuple[WorstCaseReplayBuffer, LastWorstBuffer]:
    """Evaluate every seed under sampled conditions at every corner.

    The replay buffer records each seed with its global worst reward;
    the last-worst buffer keeps the per-corner worst of the most recent
    seed processed.
    """
    if not seeds:
        raise SeedingError("cannot initialize buffers from an empty seed list")
    replay = WorstCaseReplayBuffer(buffer_capacity)
    lwb = LastWorstBuffer(corners)
    for si, (x, _) in enumerate(seeds):
        worst_overall = np.inf
        for ci, corner in enumerate(corners):
            conditions = sample_mismatch_set(
                x, evaluator.space, evaluator.variance_model, n_pre, method,
                stream(master_seed, "init-mc", si, ci),
            )
            perfs = evaluate_batch(
                evaluator, [(x, corner, c) for c in conditions], workers=workers
            )
            r_corner = min(reward(p) for p in perfs)
            lwb.update(corner, r_corner)
            worst_overall = min(worst_overall, r_corner)
        replay.push(x, float(worst_overall))
    return replay, lwb
