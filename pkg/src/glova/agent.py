"""Risk-sensitive actor-critic agent trained on worst-case rewards.

The actor maps the previous design to the next one; the critic is an
ensemble of independently trained value networks whose mean plus a
(negative) risk-avoidance multiple of their spread forms a conservative
reliability bound.  Networks are plain numpy MLPs with hand-written
backprop so the whole training loop is deterministic and float64.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .bench import Evaluator, evaluate_batch
from .core import SUCCESS_REWARD, reward
from .errors import DimensionError, StateError
from .rng import stream
from .variation import MismatchCondition, PvtCorner, sample_mismatch_set


class Mlp:
    """Four affine layers, tanh hidden activations, sigmoid or linear output."""

    N_LAYERS = 4

    def __init__(self, n_in: int, n_hidden: int, n_out: int, output: str,
                 rng: np.random.Generator):
        if output not in ("sigmoid", "linear"):
            raise ValueError(f"unknown output activation {output!r}")
        self.output = output
        dims = [n_in, n_hidden, n_hidden, n_hidden, n_out]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for a, b in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (a + b))
            self.weights.append(rng.uniform(-limit, limit, size=(b, a)))
            self.biases.append(np.zeros(b))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cache(x)
        return y

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping the activations needed for backprop."""
        acts = [np.asarray(x, dtype=float)]
        a = acts[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == self.N_LAYERS - 1 else np.tanh(z)
            acts.append(a)
        if self.output == "sigmoid":
            a = 1.0 / (1.0 + np.exp(-a))
            acts[-1] = a
        return a, acts

    def backward(self, acts: list[np.ndarray], d_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (param_grads ordered like ``params``, d(loss)/d(input)).
        """
        if self.output == "sigmoid":
            y = acts[-1]
            dz = d_out * y * (1.0 - y)
        else:
            dz = d_out
        grads: list[np.ndarray] = [None] * (2 * self.N_LAYERS)
        for i in range(self.N_LAYERS - 1, -1, -1):
            a_prev = acts[i]
            grads[2 * i] = dz.T @ a_prev
            grads[2 * i + 1] = dz.sum(axis=0)
            da = dz @ self.weights[i]
            if i > 0:
                dz = da * (1.0 - acts[i] ** 2)
        return grads, da

    def get_state(self) -> dict:
        state = {"output": self.output}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            state[f"w{i}"] = w.copy()
            state[f"b{i}"] = b.copy()
        return state

    def set_state(self, state: dict) -> None:
        self.output = str(state["output"])
        for i in range(self.N_LAYERS):
            self.weights[i] = np.array(state[f"w{i}"], dtype=float)
            self.biases[i] = np.array(state[f"b{i}"], dtype=float)


class Adam:
    """Per-parameter adaptive moment estimation."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def get_state(self) -> dict:
        state = {"t": self.t}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            state[f"m{i}"] = m.copy()
            state[f"v{i}"] = v.copy()
        return state

    def set_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for i in range(len(self.m)):
            self.m[i] = np.array(state[f"m{i}"], dtype=float)
            self.v[i] = np.array(state[f"v{i}"], dtype=float)


@dataclass(frozen=True)
class NoiseSchedule:
    """Gaussian exploration noise with geometric decay."""

    sigma0: float = 0.1
    decay: float = 0.995
    sigma_min: float = 0.01

    def sigma(self, iteration: int) -> float:
        return max(self.sigma_min, self.sigma0 * self.decay**iteration)


class Actor:
    """Policy network proposing the next normalized design."""

    def __init__(self, p: int, hidden: int, noise: NoiseSchedule, lr: float,
                 rng: np.random.Generator):
        self.net = Mlp(p, hidden, p, output="sigmoid", rng=rng)
        self.noise = noise
        self.optimizer = Adam(self.net.params, lr=lr)

    def warm_start(self, center: np.ndarray) -> None:
        """Bias the output layer so the initial policy emits ~center.

        The last weight matrix is damped so early proposals stay close
        to the best seeded design instead of the sigmoid midpoint.
        """
        c = np.clip(np.asarray(center, dtype=float), 0.01, 0.99)
        self.net.weights[-1] *= 0.1
        self.net.biases[-1] = np.log(c / (1.0 - c))

    def propose(self, x_last: np.ndarray, iteration: int,
                rng: np.random.Generator) -> np.ndarray:
        y = self.net.forward(np.asarray(x_last, dtype=float)[None, :])[0]
        sigma = self.noise.sigma(iteration)
        if sigma > 0.0:
            y = y + rng.normal(0.0, sigma, size=y.shape)
        return np.clip(y, 0.0, 1.0)


class CriticEnsemble:
    """Base value models aggregated into a conservative bound."""

    def __init__(self, p: int, hidden: int, size: int, beta1: float, lr: float,
                 rngs: list[np.random.Generator]):
        if size < 1:
            raise ValueError("ensemble size must be >= 1")
        if len(rngs) != size:
            raise ValueError("need one init stream per base model")
        self.beta1 = beta1
        self.models = [Mlp(p, hidden, 1, output="linear", rng=r) for r in rngs]
        self.optimizers = [Adam(m.params, lr=lr) for m in self.models]

    @property
    def size(self) -> int:
        return len(self.models)

    def member_outputs(self, x: np.ndarray) -> np.ndarray:
        """(ensemble, batch) matrix of base model outputs."""
        return np.stack([m.forward(x)[:, 0] for m in self.models])

    def aggregate_outputs(self, q: np.ndarray) -> np.ndarray:
        """mean + beta1 * population std over the ensemble axis."""
        mean = q.mean(axis=0)
        std = q.std(axis=0)  # population convention
        return mean + self.beta1 * std


def critic_aggregate(ensemble: CriticEnsemble, x: np.ndarray) -> float:
    """Conservative value of a single design under the ensemble."""
    q = ensemble.member_outputs(np.asarray(x, dtype=float)[None, :])
    return float(ensemble.aggregate_outputs(q)[0])


class WorstCaseReplayBuffer:
    """FIFO store of (design, worst observed reward) training records."""

    def __init__(self, capacity: int = 10_000):
        self.records: deque[tuple[np.ndarray, float]] = deque(maxlen=capacity)

    def push(self, x: np.ndarray, r_worst: float) -> None:
        self.records.append((np.array(x, dtype=float), float(r_worst)))

    def __len__(self) -> int:
        return len(self.records)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """A batch without replacement; callers check the size precondition."""
        if len(self.records) < batch_size:
            raise StateError(
                f"buffer holds {len(self.records)} records, batch needs {batch_size}"
            )
        idx = rng.choice(len(self.records), size=batch_size, replace=False)
        xs = np.stack([self.records[i][0] for i in idx])
        rs = np.array([self.records[i][1] for i in idx])
        return xs, rs


class LastWorstBuffer:
    """Last observed worst reward per PVT corner."""

    def __init__(self, corners: list[PvtCorner]):
        self.corners = list(corners)
        self._values: dict[PvtCorner, float] = {}

    def update(self, corner: PvtCorner, r_worst: float) -> None:
        self._values[corner] = float(r_worst)

    def value(self, corner: PvtCorner) -> float:
        return self._values[corner]

    @property
    def initialized(self) -> bool:
        return all(c in self._values for c in self.corners)

    def worst_corner(self) -> PvtCorner:
        """Corner with the lowest recorded reward; first-in-order wins ties."""
        if not self.initialized:
            missing = [c.label for c in self.corners if c not in self._values]
            raise StateError(f"last-worst buffer has no entry for: {', '.join(missing)}")
        best = self.corners[0]
        for corner in self.corners[1:]:
            if self._values[corner] < self._values[best]:
                best = corner
        return best

    def sorted_corners(self) -> list[PvtCorner]:
        """Corners ordered worst-first (stable for equal values)."""
        if not self.initialized:
            return list(self.corners)
        order = sorted(range(len(self.corners)), key=lambda i: self._values[self.corners[i]])
        return [self.corners[i] for i in order]


def update_critic(ensemble: CriticEnsemble, buffer: WorstCaseReplayBuffer,
                  batch_size: int, rng: np.random.Generator) -> list[float] | None:
    """One regression step per base model, each on its own batch.

    Returns per-model losses, or None when the buffer is too small.
    """
    if len(buffer) < batch_size:
        return None
    losses = []
    for model, opt in zip(ensemble.models, ensemble.optimizers):
        xs, rs = buffer.sample(batch_size, rng)
        pred, acts = model.forward_cache(xs)
        err = pred - rs[:, None]
        losses.append(float(np.mean(err**2)))
        grads, _ = model.backward(acts, 2.0 * err / len(xs))
        opt.step(model.params, grads)
    return losses


def update_actor(actor: Actor, ensemble: CriticEnsemble,
                 buffer: WorstCaseReplayBuffer, batch_size: int,
                 rng: np.random.Generator) -> float | None:
    """One step pulling the aggregated critic value toward the success reward.

    Gradients flow through the frozen critic into the actor.  Returns
    the loss, or None when the buffer is too small.
    """
    if len(buffer) < batch_size:
        return None
    xs, _ = buffer.sample(batch_size, rng)
    proposals, actor_acts = actor.net.forward_cache(xs)

    caches = []
    outs = []
    for model in ensemble.models:
        out, acts = model.forward_cache(proposals)
        outs.append(out[:, 0])
        caches.append(acts)
    q = np.stack(outs)  # (ensemble, batch)
    mean = q.mean(axis=0)
    std = q.std(axis=0)
    agg = mean + ensemble.beta1 * std
    loss = float(np.mean((SUCCESS_REWARD - agg) ** 2))

    batch = len(xs)
    size = ensemble.size
    d_agg = 2.0 * (agg - SUCCESS_REWARD) / batch  # (batch,)
    # d(agg)/d(q_i) = 1/E + beta1 * (q_i - mean) / (E * std); 0 spread contributes 0
    safe = np.where(std > 0.0, std, 1.0)
    dq = d_agg * (1.0 / size + ensemble.beta1 * np.where(std > 0.0, (q - mean) / (size * safe), 0.0))
    d_proposals = np.zeros_like(proposals)
    for model, acts, dqi in zip(ensemble.models, caches, dq):
        _, dx = model.backward(acts, dqi[:, None])
        d_proposals += dx

    grads, _ = actor.net.backward(actor_acts, d_proposals)
    actor.optimizer.step(actor.net.params, grads)
    return loss


@dataclass
class IterationRecord:
    """Everything one optimization iteration produced."""

    iteration: int
    x_new: np.ndarray
    corner: PvtCorner
    conditions: list[MismatchCondition]
    perfs: list
    rewards: np.ndarray
    r_worst: float
    critic_losses: list[float] | None
    actor_loss: float | None
    noise_sigma: float


@dataclass
class AgentConfig:
    hidden: int = 64
    ensemble_size: int = 5
    beta1: float = -3.0
    batch_size: int = 10
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_capacity: int = 10_000
    updates_per_iteration: int = 2
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)
    warm_start: bool = True


class RiskSensitiveAgent:
    """Bundles the actor, critic ensemble, and replay buffer for a run."""

    def __init__(self, p: int, config: AgentConfig, master_seed: int):
        self.config = config
        self.master_seed = master_seed
        self.actor = Actor(
            p, config.hidden, config.noise, config.actor_lr,
            stream(master_seed, "actor-init"),
        )
        self.critic = CriticEnsemble(
            p, config.hidden, config.ensemble_size, config.beta1, config.critic_lr,
            [stream(master_seed, "critic-init", i) for i in range(config.ensemble_size)],
        )
        self.replay = WorstCaseReplayBuffer(config.buffer_capacity)

    def train_step(
        self,
        evaluator: Evaluator,
        lwb: LastWorstBuffer,
        x_last: np.ndarray,
        iteration: int,
        method: str,
        n_pre: int,
        workers: int = 1,
    ) -> IterationRecord:
        """One full optimization iteration.

        Guarded critic/actor updates, a noisy proposal, mismatch
        sampling at the currently worst corner, batch evaluation, and
        the worst-reward bookkeeping.  Buffer writes happen only after
        evaluation succeeded.
        """
        cfg = self.config
        critic_losses = None
        actor_loss = None
        for u in range(cfg.updates_per_iteration):
            cl = update_critic(
                self.critic, self.replay, cfg.batch_size,
                stream(self.master_seed, "update-critic", iteration, u),
            )
            al = update_actor(
                self.actor, self.critic, self.replay, cfg.batch_size,
                stream(self.master_seed, "update-actor", iteration, u),
            )
            critic_losses = cl if cl is not None else critic_losses
            actor_loss = al if al is not None else actor_loss

        corner = lwb.worst_corner()
        x_new = self.actor.propose(
            x_last, iteration, stream(self.master_seed, "propose", iteration)
        )
        conditions = sample_mismatch_set(
            x_new, evaluator.space, evaluator.variance_model, n_pre, method,
            stream(self.master_seed, "optimize-mc", iteration),
        )
        perfs = evaluate_batch(
            evaluator, [(x_new, corner, c) for c in conditions], workers=workers
        )
        rewards = np.array([reward(p) for p in perfs])
        r_worst = float(rewards.min())
        self.replay.push(x_new, r_worst)
        lwb.update(corner, r_worst)
        return IterationRecord(
            iteration=iteration,
            x_new=x_new,
            corner=corner,
            conditions=conditions,
            perfs=perfs,
            rewards=rewards,
            r_worst=r_worst,
            critic_losses=critic_losses,
            actor_loss=actor_loss,
            noise_sigma=cfg.noise.sigma(iteration),
        )

    # -- checkpointing ---------------------------------------------------

    def get_state(self) -> dict:
        state = {
            "actor": self.actor.net.get_state(),
            "actor_opt": self.actor.optimizer.get_state(),
            "replay_x": np.stack([x for x, _ in self.replay.records])
            if self.replay.records
            else np.zeros((0, 0)),
            "replay_r": np.array([r for _, r in self.replay.records]),
        }
        for i, (model, opt) in enumerate(zip(self.critic.models, self.critic.optimizers)):
            state[f"critic{i}"] = model.get_state()
            state[f"critic{i}_opt"] = opt.get_state()
        return state

    def set_state(self, state: dict) -> None:
        self.actor.net.set_state(state["actor"])
        self.actor.optimizer.set_state(state["actor_opt"])
        for i, (model, opt) in enumerate(zip(self.critic.models, self.critic.optimizers)):
            model.set_state(state[f"critic{i}"])
            opt.set_state(state[f"critic{i}_opt"])
        self.replay.records.clear()
        xs = np.asarray(state["replay_x"], dtype=float)
        rs = np.asarray(state["replay_r"], dtype=float)
        for x, r in zip(xs, rs):
            self.replay.push(x, float(r))
