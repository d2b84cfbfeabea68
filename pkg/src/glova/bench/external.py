"""Adapter that delegates evaluation to an external simulator command.

Disabled by default: nothing constructs it unless a run config carries
an ``external`` section.  For every evaluation the adapter writes a
parameter deck, invokes the configured command, and parses a
measurement file back into a performance vector.

Parameter deck format (one directive per line)::

    * parameter deck
    .param <name> <physical value>          # one line per design parameter
    .corner process=<P> voltage=<V> temperature=<T>
    .mismatch <dim name> <value>            # one line per mismatch dimension

Measurement file format::

    <metric name> <value>                   # one line per metric
    # comment and blank lines are ignored

The command template receives ``{deck}`` and ``{out}`` placeholders.
"""

from __future__ import annotations

import subprocess
import tempfile
from pathlib import Path

import numpy as np

from ..core import ConstraintSet, DesignSpace, PerformanceVector, normalize_metrics
from ..errors import EvaluationError
from ..variation import MismatchCondition, PvtCorner, VarianceModel


def parse_measurements(text: str, metric_names) -> dict[str, float]:
    """Parse `name value` lines; raises with the offending line number."""
    values: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", "*")):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise EvaluationError(
                f"measurement line {lineno}: expected 'name value', got {line!r}"
            )
        name, token = parts
        try:
            values[name] = float(token)
        except ValueError:
            raise EvaluationError(
                f"measurement line {lineno}: malformed numeric token {token!r}"
            ) from None
    missing = [name for name in metric_names if name not in values]
    if missing:
        raise EvaluationError(f"measurement file missing metric(s): {', '.join(missing)}")
    return values


class ExternalSimulatorEvaluator:
    """Evaluator backed by a subprocess (netlist simulator, etc.)."""

    def __init__(
        self,
        space: DesignSpace,
        constraints: ConstraintSet,
        variance_model: VarianceModel,
        command: str,
        workdir: str | None = None,
        timeout_s: float = 60.0,
    ):
        self.space = space
        self.constraints = constraints
        self.variance_model = variance_model
        self.command = command
        self.workdir = workdir
        self.timeout_s = timeout_s

    @property
    def metric_names(self) -> tuple[str, ...]:
        return self.constraints.names

    @property
    def mismatch_dimension(self) -> int:
        return self.variance_model.r

    def write_deck(self, path: Path, x, corner: PvtCorner, condition: MismatchCondition):
        phys = self.space.denormalize(self.space.clamp(np.asarray(x, dtype=float)))
        lines = ["* parameter deck"]
        lines += [f".param {n} {v!r}" for n, v in zip(self.space.names, phys)]
        lines.append(
            f".corner process={corner.process} voltage={corner.voltage!r} "
            f"temperature={corner.temperature!r}"
        )
        lines += [
            f".mismatch {dim.name} {float(h)!r}"
            for dim, h in zip(self.variance_model.dims, condition.h)
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def evaluate(self, x, corner, condition) -> PerformanceVector:
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            deck = Path(tmp) / "params.deck"
            out = Path(tmp) / "measure.out"
            self.write_deck(deck, x, corner, condition)
            cmd = self.command.format(deck=str(deck), out=str(out))
            try:
                proc = subprocess.run(
                    cmd,
                    shell=True,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                raise EvaluationError(
                    f"simulator timed out after {self.timeout_s}s",
                    diagnostics={"command": cmd},
                ) from exc
            if proc.returncode != 0:
                raise EvaluationError(
                    f"simulator exited with status {proc.returncode}",
                    diagnostics={
                        "command": cmd,
                        "stdout": proc.stdout,
                        "stderr": proc.stderr,
                    },
                )
            if not out.exists():
                raise EvaluationError(
                    "simulator produced no measurement file",
                    diagnostics={"command": cmd, "stdout": proc.stdout},
                )
            values = parse_measurements(out.read_text(encoding="utf-8"), self.metric_names)
        raw = self.constraints.fold(np.array([values[n] for n in self.metric_names]))
        return normalize_metrics(raw, self.constraints)
