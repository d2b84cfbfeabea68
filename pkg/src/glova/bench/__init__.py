"""Evaluation interface, shipped synthetic benches, and batch execution."""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Protocol, runtime_checkable

from ..core import ConstraintSet, DesignSpace, PerformanceVector
from ..errors import ConfigError, EvaluationError
from ..variation import MismatchCondition, PvtCorner, VarianceModel
from .synthetic import SyntheticBench

SHIPPED_BENCHES = ("sal", "fia", "ocsa")


@runtime_checkable
class Evaluator(Protocol):
    """Anything that maps (design, corner, mismatch condition) to metrics.

    Implementations must be deterministic and total on the design space:
    identical inputs produce bit-identical outputs, and in-range inputs
    never fail.
    """

    space: DesignSpace
    constraints: ConstraintSet
    variance_model: VarianceModel

    @property
    def metric_names(self) -> tuple[str, ...]: ...

    @property
    def mismatch_dimension(self) -> int: ...

    def evaluate(
        self, x, corner: PvtCorner, condition: MismatchCondition
    ) -> PerformanceVector: ...


def load_bench(name_or_path: str) -> SyntheticBench:
    """Load a shipped bench by name or any definition file by path."""
    if name_or_path in SHIPPED_BENCHES:
        ref = resources.files(__package__).joinpath(f"definitions/{name_or_path}.json")
        with resources.as_file(ref) as path:
            return SyntheticBench.from_file(path)
    path = Path(name_or_path)
    if path.exists():
        return SyntheticBench.from_file(path)
    raise ConfigError(
        f"unknown bench {name_or_path!r}; shipped benches are {SHIPPED_BENCHES}"
    )


def evaluate_batch(evaluator: Evaluator, jobs, workers: int = 1) -> list[PerformanceVector]:
    """Evaluate (x, corner, condition) jobs, results in job order.

    Semantically identical to mapping ``evaluator.evaluate``; with
    workers > 1 the jobs run on a thread pool.  Per-job failures are
    re-raised annotated with the job index.
    """
    jobs = list(jobs)
    if not jobs:
        raise EvaluationError("empty job list")
    if workers <= 1 or len(jobs) == 1:
        results = []
        for i, (x, corner, condition) in enumerate(jobs):
            try:
                results.append(evaluator.evaluate(x, corner, condition))
            except Exception as exc:
                raise type(exc)(f"batch job {i}: {exc}") from exc
        return results
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(evaluator.evaluate, *job) for job in jobs]
        results = []
        for i, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as exc:
                raise type(exc)(f"batch job {i}: {exc}") from exc
        return results


class CountingEvaluator:
    """Wrapper counting evaluator invocations (the simulation audit)."""

    def __init__(self, inner: Evaluator):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def space(self):
        return self.inner.space

    @property
    def constraints(self):
        return self.inner.constraints

    @property
    def variance_model(self):
        return self.inner.variance_model

    @property
    def metric_names(self):
        return self.inner.metric_names

    @property
    def mismatch_dimension(self):
        return self.inner.mismatch_dimension

    def evaluate(self, x, corner, condition):
        with self._lock:
            self.calls += 1
        return self.inner.evaluate(x, corner, condition)


from .external import ExternalSimulatorEvaluator  # noqa: E402  (re-export)

__all__ = [
    "Evaluator",
    "SyntheticBench",
    "ExternalSimulatorEvaluator",
    "CountingEvaluator",
    "load_bench",
    "evaluate_batch",
    "SHIPPED_BENCHES",
]
