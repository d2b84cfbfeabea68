"""Top-level run workflow: seeding, optimization loop, verification, reports.

A run executes: trust-region seeding at the typical condition, buffer
initialization across all corners, then the iteration loop of agent
training steps gated into full verification by the screening check.
It terminates on the first fully verified design or at the iteration
cap.  Artifacts written per run: ``result.json``, ``iterations.csv``,
``verification_trace.csv``, ``checkpoint.bin``.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .agent import (
    AgentConfig,
    IterationRecord,
    LastWorstBuffer,
    NoiseSchedule,
    RiskSensitiveAgent,
)
from .bench import CountingEvaluator, ExternalSimulatorEvaluator, load_bench
from .core import SUCCESS_REWARD, ConstraintSet, MetricSpec
from .errors import ConfigError, SeedingError
from .rng import stream
from .seeder import SeedingConfig, initialize_buffers, seed_designs
from .variation import (
    METHOD_C,
    METHOD_CMCGL,
    METHOD_CMCL,
    CornerGrid,
    enumerate_corners,
    normalize_method,
)
from .verify import PASSED, VerificationOutcome, VerifyConfig, mu_sigma_screen, run_verification

_DEFAULT_N_FULL = {METHOD_C: 1, METHOD_CMCL: 100, METHOD_CMCGL: 1000}
_DEFAULT_N_PRE = {METHOD_C: 1, METHOD_CMCL: 3, METHOD_CMCGL: 3}


@dataclass
class AblationConfig:
    """Feature toggles mirroring the framework's ablatable components."""

    ensemble_critic: bool = True
    mu_sigma: bool = True
    reordering: bool = True


@dataclass
class RunConfig:
    bench: str = "sal"
    method: str = METHOD_C
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1
    corners: CornerGrid = field(default_factory=CornerGrid)
    n_full: int | None = None
    n_pre: int | None = None
    beta2: float = 4.0
    screening_space: str = "raw"
    chunk_size: int = 1
    max_iterations: int = 5000
    agent: AgentConfig = field(default_factory=AgentConfig)
    seeding: SeedingConfig = field(default_factory=SeedingConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    targets: dict = field(default_factory=dict)  # optional per-metric overrides
    external: dict | None = None  # external simulator adapter settings

    def __post_init__(self):
        self.method = normalize_method(self.method)
        if self.method == METHOD_C:
            # corner mode has no mismatch sampling: one exact condition
            self.n_full = 1
            self.n_pre = 1
        else:
            if self.n_full is None:
                self.n_full = _DEFAULT_N_FULL[self.method]
            if self.n_pre is None:
                self.n_pre = _DEFAULT_N_PRE[self.method]
        if self.n_pre > self.n_full:
            raise ConfigError(f"n_pre={self.n_pre} must be <= n_full={self.n_full}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if not self.ablation.ensemble_critic:
            self.agent.ensemble_size = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        kwargs = {}
        nested = {
            "corners": CornerGrid.from_dict,
            "agent": lambda d: _dataclass_from_dict(AgentConfig, d),
            "seeding": lambda d: _dataclass_from_dict(SeedingConfig, d),
            "ablation": lambda d: _dataclass_from_dict(AblationConfig, d),
        }
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = nested[key](value) if key in nested and isinstance(value, dict) else value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["corners"] = {
            "process": list(self.corners.process),
            "voltage": list(self.corners.voltage),
            "temperature": list(self.corners.temperature),
            "nominal_voltage": self.corners.nominal_voltage,
            "nominal_temperature": self.corners.nominal_temperature,
        }
        return out


def _dataclass_from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for {cls.__name__}")
        if key == "noise" and isinstance(value, dict):
            value = _dataclass_from_dict(NoiseSchedule, value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh))


@dataclass
class RunReport:
    verdict: str  # "passed" | "failed"
    bench: str
    method: str
    seed: int
    iterations_used: int
    final_design: list[float] | None
    final_physical: dict[str, float] | None
    sim_optimization: int
    sim_verification: int
    sim_total: int
    wallclock_seconds: float
    verification: dict | None = None
    out_dir: str | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "passed"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "bench": self.bench,
            "method": self.method,
            "seed": self.seed,
            "iterations_used": self.iterations_used,
            "final_design": self.final_design,
            "final_physical": self.final_physical,
            "sim_counts": {
                "optimization": self.sim_optimization,
                "verification": self.sim_verification,
                "total": self.sim_total,
            },
            "wallclock_seconds": self.wallclock_seconds,
            "verification": self.verification,
            "out_dir": self.out_dir,
        }


def build_evaluator(config: RunConfig):
    """Resolve the bench (and optional external adapter) behind a counter."""
    bench = load_bench(config.bench)
    if config.targets:
        specs = []
        for m in bench.constraints.metrics:
            target = float(config.targets.get(m.name, m.target))
            specs.append(MetricSpec(m.name, target, m.direction))
        unknown = set(config.targets) - set(bench.constraints.names)
        if unknown:
            raise ConfigError(f"target overrides for unknown metrics: {sorted(unknown)}")
        bench = bench.with_constraints(ConstraintSet(specs))
    if config.external is not None:
        inner = ExternalSimulatorEvaluator(
            space=bench.space,
            constraints=bench.constraints,
            variance_model=bench.variance_model,
            **config.external,
        )
    else:
        inner = bench
    return CountingEvaluator(inner)


def gate_for_verification(record: IterationRecord, constraints, config: RunConfig) -> bool:
    """Decide from the worst-corner presample whether to verify fully."""
    if not config.ablation.mu_sigma:
        return bool(np.all(record.rewards == SUCCESS_REWARD))
    report = mu_sigma_screen(
        record.perfs, constraints, config.beta2, config.screening_space
    )
    return report.passed


class _RunLogs:
    """Incrementally flushed CSV logs plus the final report files."""

    ITER_HEADER = (
        "iteration,corner,r_worst,critic_loss,actor_loss,noise_sigma,"
        "gated,verification,cum_opt_sims,cum_verify_sims,x\n"
    )
    TRACE_HEADER = "iteration,phase,corner,condition_index,h_score,reward,cumulative\n"

    def __init__(self, out_dir: str | None):
        self.dir = Path(out_dir) if out_dir else None
        self._iter_fh: io.TextIOBase | None = None
        self._trace_fh: io.TextIOBase | None = None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            self._iter_fh = open(self.dir / "iterations.csv", "w", encoding="utf-8")
            self._iter_fh.write(self.ITER_HEADER)
            self._trace_fh = open(self.dir / "verification_trace.csv", "w", encoding="utf-8")
            self._trace_fh.write(self.TRACE_HEADER)

    def iteration(self, record: IterationRecord, gated: bool,
                  verification: str, opt_sims: int, verify_sims: int) -> None:
        if self._iter_fh is None:
            return
        closs = "" if record.critic_losses is None else repr(float(np.mean(record.critic_losses)))
        aloss = "" if record.actor_loss is None else repr(record.actor_loss)
        x_text = ";".join(repr(float(v)) for v in record.x_new)
        self._iter_fh.write(
            f"{record.iteration},{record.corner.label},{record.r_worst!r},"
            f"{closs},{aloss},{record.noise_sigma!r},{int(gated)},{verification},"
            f"{opt_sims},{verify_sims},{x_text}\n"
        )
        self._iter_fh.flush()

    def trace(self, iteration: int, outcome: VerificationOutcome) -> None:
        if self._trace_fh is None:
            return
        for row in outcome.trace:
            self._trace_fh.write(
                f"{iteration},{row.phase},{row.corner},{row.condition_index},"
                f"{row.h_score!r},{row.reward!r},{row.cumulative}\n"
            )
        self._trace_fh.flush()

    def close(self) -> None:
        for fh in (self._iter_fh, self._trace_fh):
            if fh is not None:
                fh.close()

    def write_result(self, report: RunReport) -> None:
        if self.dir is None:
            return
        with open(self.dir / "result.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_checkpoint(self, payload: dict) -> None:
        if self.dir is None:
            return
        arrays = _flatten_state(payload)
        with open(self.dir / "checkpoint.bin", "wb") as fh:
            np.savez(fh, **arrays)


def _flatten_state(payload: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten_state(value, prefix=f"{name}/"))
        else:
            flat[name] = value
    return flat


def _unflatten_state(arrays: dict) -> dict:
    out: dict = {}
    for name, value in arrays.items():
        parts = name.split("/")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def save_checkpoint_payload(agent: RiskSensitiveAgent, lwb: LastWorstBuffer,
                            corners, iteration: int, x_last: np.ndarray,
                            opt_sims: int, verify_sims: int, config: RunConfig) -> dict:
    return {
        "version": np.int64(1),
        "config_json": np.bytes_(json.dumps(config.to_dict()).encode("utf-8")),
        "iteration": np.int64(iteration),
        "x_last": np.asarray(x_last, dtype=float),
        "opt_sims": np.int64(opt_sims),
        "verify_sims": np.int64(verify_sims),
        "lwb_values": np.array([lwb.value(c) for c in corners]),
        "agent": agent.get_state(),
    }


def load_checkpoint(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        state = _unflatten_state({k: data[k] for k in data.files})
    state["config"] = RunConfig.from_dict(
        json.loads(bytes(state.pop("config_json")).decode("utf-8"))
    )
    return state


def run(config: RunConfig, resume_from: str | None = None) -> RunReport:
    """Execute one full optimization + verification run."""
    t0 = time.perf_counter()
    evaluator = build_evaluator(config)
    corners = enumerate_corners(config.method, config.corners)
    logs = _RunLogs(config.out_dir)
    verdict = "failed"
    final_design = None
    final_outcome: VerificationOutcome | None = None
    iterations_used = 0
    verify_sims = 0

    try:
        if resume_from is None:
            agent = RiskSensitiveAgent(evaluator.space.p, config.agent, config.seed)
            x_last, lwb, start_iter = _bootstrap(config, evaluator, corners, agent)
            verify_sims = 0
        else:
            state = load_checkpoint(resume_from)
            agent = RiskSensitiveAgent(evaluator.space.p, config.agent, config.seed)
            agent.set_state(state["agent"])
            lwb = LastWorstBuffer(corners)
            for corner, value in zip(corners, state["lwb_values"]):
                lwb.update(corner, float(value))
            x_last = np.asarray(state["x_last"], dtype=float)
            start_iter = int(state["iteration"]) + 1
            evaluator.calls = int(state["opt_sims"]) + int(state["verify_sims"])
            verify_sims = int(state["verify_sims"])
        iterations_used = start_iter - 1

        for iteration in range(start_iter, config.max_iterations + 1):
            record = agent.train_step(
                evaluator, lwb, x_last, iteration, config.method, config.n_pre,
                workers=config.workers,
            )
            iterations_used = iteration
            gated = gate_for_verification(record, evaluator.constraints, config)
            verification_verdict = ""
            if gated:
                before = evaluator.calls
                outcome = run_verification(
                    record.x_new, corners, evaluator,
                    VerifyConfig(
                        method=config.method,
                        n_full=config.n_full,
                        n_pre=config.n_pre,
                        beta2=config.beta2,
                        screening_space=config.screening_space,
                        mu_sigma=config.ablation.mu_sigma,
                        reordering=config.ablation.reordering,
                        chunk_size=config.chunk_size,
                        workers=config.workers,
                        master_seed=config.seed,
                        tag=iteration,
                    ),
                    lwb=lwb,
                    presample=(record.corner, record.conditions, record.perfs),
                )
                verify_sims += evaluator.calls - before
                verification_verdict = outcome.verdict
                logs.trace(iteration, outcome)
                if outcome.passed:
                    verdict = "passed"
                    final_design = record.x_new
                    final_outcome = outcome
            logs.iteration(
                record, gated, verification_verdict,
                evaluator.calls - verify_sims, verify_sims,
            )
            x_last = record.x_new
            if verdict == "passed":
                break

        report = RunReport(
            verdict=verdict,
            bench=config.bench,
            method=config.method,
            seed=config.seed,
            iterations_used=iterations_used,
            final_design=None if final_design is None else [float(v) for v in final_design],
            final_physical=None
            if final_design is None
            else {
                name: float(v)
                for name, v in zip(
                    evaluator.space.names, evaluator.space.denormalize(final_design)
                )
            },
            sim_optimization=evaluator.calls - verify_sims,
            sim_verification=verify_sims,
            sim_total=evaluator.calls,
            wallclock_seconds=time.perf_counter() - t0,
            verification=None if final_outcome is None else final_outcome.to_dict(),
            out_dir=config.out_dir,
        )
        logs.write_result(report)
        logs.write_checkpoint(
            save_checkpoint_payload(
                agent, lwb, corners, iterations_used, x_last,
                report.sim_optimization, verify_sims, config,
            )
        )
        return report
    finally:
        logs.close()


def _bootstrap(config: RunConfig, evaluator, corners, agent: RiskSensitiveAgent):
    """Seeding and buffer initialization; returns (x_last, lwb, first iteration)."""
    typical = config.corners.typical_corner()
    try:
        seeding = seed_designs(
            evaluator, typical, config.seeding,
            stream(config.seed, "seeding"), workers=config.workers,
        )
        seeds = seeding.top(config.seeding.top_k)
        best = seeding.best
    except SeedingError as exc:
        if exc.best_found is None:
            raise
        # proceed with the best infeasible design; the agent may still recover
        seeds = [exc.best_found]
        best = exc.best_found
    replay, lwb = initialize_buffers(
        seeds, evaluator, corners, config.method, config.n_pre, config.seed,
        buffer_capacity=config.agent.buffer_capacity, workers=config.workers,
    )
    agent.replay = replay
    if config.agent.warm_start:
        agent.actor.warm_start(best[0])
    return np.asarray(best[0], dtype=float), lwb, 1


def verify_design(config: RunConfig, x) -> VerificationOutcome:
    """Verification-only entry point for an existing design."""
    evaluator = build_evaluator(config)
    corners = enumerate_corners(config.method, config.corners)
    outcome = run_verification(
        np.asarray(x, dtype=float), corners, evaluator,
        VerifyConfig(
            method=config.method,
            n_full=config.n_full,
            n_pre=config.n_pre,
            beta2=config.beta2,
            screening_space=config.screening_space,
            mu_sigma=config.ablation.mu_sigma,
            reordering=config.ablation.reordering,
            chunk_size=config.chunk_size,
            workers=config.workers,
            master_seed=config.seed,
            tag=0,
        ),
    )
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verification_trace.csv", "w", encoding="utf-8") as fh:
            fh.write(_RunLogs.TRACE_HEADER)
            for row in outcome.trace:
                fh.write(
                    f"0,{row.phase},{row.corner},{row.condition_index},"
                    f"{row.h_score!r},{row.reward!r},{row.cumulative}\n"
                )
        with open(out / "result.json", "w", encoding="utf-8") as fh:
            json.dump(outcome.to_dict(), fh, indent=2)
            fh.write("\n")
    return outcome


def campaign(config: RunConfig, seeds: list[int]) -> dict:
    """Fan out independent runs over seeds and aggregate the outcomes."""
    runs = []
    base_dir = Path(config.out_dir) if config.out_dir else None
    t0 = time.perf_counter()
    for seed in seeds:
        sub = RunConfig.from_dict(
            {**config.to_dict(), "seed": seed,
             "out_dir": str(base_dir / f"seed_{seed}") if base_dir else None}
        )
        runs.append(run(sub))
    successes = [r for r in runs if r.passed]
    summary = {
        "bench": config.bench,
        "method": config.method,
        "seeds": list(seeds),
        "success_rate": len(successes) / len(runs) if runs else 0.0,
        "runs": [r.to_dict() for r in runs],
        "mean_iterations_successful": (
            float(np.mean([r.iterations_used for r in successes])) if successes else None
        ),
        "mean_simulations_successful": (
            float(np.mean([r.sim_total for r in successes])) if successes else None
        ),
        "wallclock_seconds": time.perf_counter() - t0,
    }
    if base_dir is not None:
        base_dir.mkdir(parents=True, exist_ok=True)
        with open(base_dir / "campaign_summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return summary
