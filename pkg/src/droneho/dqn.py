"""Deep Q-network training for handover decisions along one route.

Training loop per episode: epsilon-greedy action on the online network,
store the transition, and once the replay memory holds a minibatch, fit the
online network to reward-only targets for the first T_h fraction of the
episode's steps and to bootstrapped targets from the target network after
that. The target network copies the online one every T_c steps and is the
model returned for prediction.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .mdp import DEFAULT_K, DroneState, HandoverEnv
from . import kernels
from .nn import MlpModel, OptState, backward, forward, init_mlp, rmsprop_step
from .trajectory import direction_angle

PRE = "pre"
POST = "post"
BACKENDS = ("compiled", "numpy")


@dataclass
class TrainConfig:
    episodes: int = 120
    steps: int = 1000
    sync_every: int = 20
    phase_threshold: float = 0.3
    discount: float = 0.3
    epsilon: float = 0.2
    batch_size: int = 64
    k: int = DEFAULT_K
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    replay_capacity: int = 50000
    seed: int = 0
    # extra sin/cos position features; 0 keeps the plain 4 + n_cells input
    position_frequencies: int = 0
    # "compiled" runs the minibatch update through numba kernels, "numpy" the reference code
    backend: str = "compiled"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.episodes < 0 or self.steps < 0:
            raise ValueError("episodes and steps must be nonnegative")
        if self.sync_every < 1 or self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("sync_every, batch_size >= 1 and replay_capacity >= batch_size required")
        if not 0.0 <= self.phase_threshold <= 1.0:
            raise ValueError("phase_threshold must lie in [0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.position_frequencies < 0 or self.k < 1 or not self.hidden or min(self.hidden) < 1:
            raise ValueError("position_frequencies >= 0, k >= 1 and positive hidden widths required")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def position_frequencies(n: int, highest: float = 64.0) -> np.ndarray:
    """n frequencies (cycles per extent), geometric from 1 to `highest`."""
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.ones(1)
    return np.geomspace(1.0, highest, n)


def input_dim(n_cells: int, n_frequencies: int = 0) -> int:
    return 4 + n_cells + 4 * n_frequencies


def encode_state(state: DroneState, extents=(5000.0, 6000.0), n_cells: int = 21,
                 n_frequencies: int = 0) -> np.ndarray:
    """[x/extent_x, y/extent_y, sin(heading), cos(heading), one-hot serving cell].

    With n_frequencies > 0, sin and cos of 2*pi*f*x/extent_x and of the same
    for y are appended for each frequency f, which lets a small network
    resolve where along the route it is.
    """
    theta = direction_angle(state.direction)
    v = np.zeros(input_dim(n_cells, n_frequencies))
    u = (state.x / extents[0], state.y / extents[1])
    v[0], v[1] = u
    v[2] = math.sin(theta)
    v[3] = math.cos(theta)
    v[4 + state.serving_cell] = 1.0
    if n_frequencies:
        f = position_frequencies(n_frequencies)
        off = 4 + n_cells
        for coord in u:
            phase = 2.0 * np.pi * f * coord
            v[off:off + n_frequencies] = np.sin(phase)
            v[off + n_frequencies:off + 2 * n_frequencies] = np.cos(phase)
            off += 2 * n_frequencies
    return v


class Transition(NamedTuple):
    s: DroneState
    a: int
    r: float
    s_next: DroneState
    terminal: bool


class Minibatch(NamedTuple):
    index: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with encoded copies for batching."""

    def __init__(self, capacity: int, input_dim: int):
        self.capacity = capacity
        self.size = 0
        self._next = 0
        self._items: list[Transition | None] = [None] * capacity
        self.states = np.zeros((capacity, input_dim))
        self.next_states = np.zeros((capacity, input_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition, s_enc: np.ndarray, s_next_enc: np.ndarray) -> None:
        i = self._next
        self._items[i] = t
        self.states[i] = s_enc
        self.next_states[i] = s_next_enc
        self.actions[i] = t.a
        self.rewards[i] = t.r
        self.terminal[i] = 1.0 if t.terminal else 0.0
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if self.size < self.capacity:
            return list(self._items[:self.size])
        return self._items[self._next:] + self._items[:self._next]


def sample_indices(size: int, m: int, rng: np.random.Generator) -> np.ndarray | None:
    """m distinct buffer positions, uniform over m-subsets; None while size < m."""
    if size < m:
        return None
    return kernels.floyd_sample(rng.random(m), size)


def sample_minibatch(buffer: ReplayBuffer, m: int, rng: np.random.Generator) -> Minibatch | None:
    """m distinct transitions drawn uniformly, or None while fewer than m are stored."""
    idx = sample_indices(buffer.size, m, rng)
    if idx is None:
        return None
    return Minibatch(idx, buffer.states[idx], buffer.actions[idx], buffer.rewards[idx],
                     buffer.next_states[idx], buffer.terminal[idx])


def compute_targets(batch: Minibatch, online: MlpModel, target: MlpModel, phase: str,
                    discount: float) -> np.ndarray:
    """Reward only in the pre phase; r + discount * max target-Q afterwards.

    Terminal transitions never bootstrap. `online` is accepted for interface
    symmetry; targets come from the target network only.
    """
    if phase == PRE:
        return batch.rewards.copy()
    if phase != POST:
        raise ValueError(f"unknown phase {phase!r}")
    best_next = forward(target, batch.next_states).max(axis=1)
    return batch.rewards + discount * best_next * (1.0 - batch.terminal)


def phase_for(step: int, steps_per_episode: int, threshold: float) -> str:
    return PRE if step / steps_per_episode < threshold else POST


def predict_action(model: MlpModel, state: DroneState, extents=(5000.0, 6000.0), n_cells: int = 21,
                   n_frequencies: int = 0) -> int:
    """Greedy action; ties go to the lowest index."""
    q = forward(model, encode_state(state, extents, n_cells, n_frequencies))
    return int(np.argmax(q))


class DQNTrainer:
    """Stateful training loop; :meth:`run` executes episodes x steps."""

    def __init__(self, env: HandoverEnv, config: TrainConfig,
                 on_step: Callable[["DQNTrainer"], None] | None = None):
        if env.k != config.k:
            raise ValueError(f"environment k={env.k} differs from config k={config.k}")
        self.env = env
        self.config = config
        self.on_step = on_step
        self.extents = (env.grid.extent_x, env.grid.extent_y)
        init_seq, loop_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.rng = np.random.default_rng(loop_seq)
        self.input_dim = input_dim(env.n_cells, config.position_frequencies)
        self.online = init_mlp(self.input_dim, config.hidden, config.k, np.random.default_rng(init_seq))
        self.target = self.online.copy()
        self.opt = OptState.for_model(self.online, config.learning_rate, config.rms_decay, config.rms_eps)
        self.buffer = ReplayBuffer(config.replay_capacity, self.input_dim)
        self._grad = np.zeros_like(self.online.params)
        # only the taken-action column of the target matrix is ever read
        self._targets = np.zeros((config.batch_size, config.k))
        self._rows = np.arange(config.batch_size)
        self._dims = np.array(self.online.dims, dtype=np.int64)
        self._compiled = config.backend == "compiled"
        self._encoded = self._encode_all()

        self.episode = 0
        self.step = 0
        self.total_steps = 0
        self.gradient_steps = 0
        self.syncs = 0
        self.steps_since_sync: int | None = None
        self.last_loss = math.nan
        self.state = env.initial_state()

    def _encode_all(self) -> np.ndarray:
        env = self.env
        enc = np.empty((env.length, env.n_cells, self.input_dim))
        for i in range(env.length):
            for c in range(env.n_cells):
                enc[i, c] = encode_state(env.state(i, c), self.extents, env.n_cells,
                                         self.config.position_frequencies)
        return enc

    def encode(self, state: DroneState) -> np.ndarray:
        return self._encoded[state.waypoint_index, state.serving_cell]

    def restart_state(self) -> DroneState:
        """Uniform non-final waypoint, serving cell uniform among its k strongest."""
        env = self.env
        i = int(self.rng.integers(env.length - 1))
        cell = int(env.ranking[i, self.rng.integers(env.k)])
        return env.state(i, cell)

    def choose_action(self, state: DroneState) -> int:
        if self.rng.random() < self.config.epsilon:
            return int(self.rng.integers(self.config.k))
        if self._compiled:
            return kernels.greedy_action(self.online.params, self._dims, self.encode(state))
        return int(np.argmax(forward(self.online, self.encode(state))))

    def sync_target(self) -> None:
        self.target.load_params(self.online)
        self.syncs += 1
        self.steps_since_sync = 0

    def train_step(self) -> None:
        cfg = self.config
        if self.env.is_terminal(self.state):
            self.state = self.restart_state()
        s = self.state
        a = self.choose_action(s)
        s_next, r, terminal = self.env.step(s, a)
        self.buffer.push(Transition(s, a, r, s_next, terminal), self.encode(s), self.encode(s_next))
        self.state = s_next

        if self._compiled:
            idx = sample_indices(self.buffer.size, cfg.batch_size, self.rng)
            updated = idx is not None
            if updated:
                self._compiled_update(idx)
        else:
            batch = sample_minibatch(self.buffer, cfg.batch_size, self.rng)
            updated = batch is not None
            if updated:
                self._numpy_update(batch)
        if updated:
            self.gradient_steps += 1
            if self.steps_since_sync is not None:
                self.steps_since_sync += 1
        self.step += 1
        self.total_steps += 1
        if self.on_step is not None:
            self.on_step(self)

    def _numpy_update(self, batch: Minibatch) -> None:
        """Targets, sync if due, then one RMSprop step on the taken actions."""
        cfg = self.config
        phase = phase_for(self.step, cfg.steps, cfg.phase_threshold)
        y = compute_targets(batch, self.online, self.target, phase, cfg.discount)
        if self.step % cfg.sync_every == 0:
            self.sync_target()
        targets = self._targets
        targets[self._rows, batch.actions] = y
        grad, self.last_loss = backward(self.online, batch.states, targets, batch.actions, out=self._grad)
        rmsprop_step(self.online, self.opt, grad)

    def _compiled_update(self, idx: np.ndarray) -> None:
        """_numpy_update through the numba kernels, reading the buffer rows in place."""
        cfg, buf, opt = self.config, self.buffer, self.opt
        bootstrap = phase_for(self.step, cfg.steps, cfg.phase_threshold) == POST
        y = kernels.replay_targets(self.target.params, self._dims, buf.next_states, buf.rewards, buf.terminal,
                                   idx, cfg.discount, bootstrap)
        if self.step % cfg.sync_every == 0:
            self.sync_target()
        self.last_loss = kernels.replay_fit(self.online.params, opt.avg_sq, self._grad, self._dims, buf.states,
                                            buf.actions, idx, y, opt.learning_rate, opt.decay, opt.eps)

    def run_episode(self) -> None:
        self.state = self.env.initial_state()
        self.step = 0
        while self.step < self.config.steps:
            self.train_step()
        self.episode += 1

    def run(self, checkpoint_dir: str | Path | None = None, checkpoint_every: int = 0) -> MlpModel:
        while self.episode < self.config.episodes:
            self.run_episode()
            if checkpoint_dir and checkpoint_every and self.episode % checkpoint_every == 0:
                self.checkpoint(checkpoint_dir)
        return self.target

    def checkpoint(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tag = f"ep{self.episode:04d}"
        self.online.save(directory / f"online_{tag}.json")
        self.target.save(directory / f"target_{tag}.json")
        state = {
            "episode": self.episode,
            "step": self.step,
            "total_steps": self.total_steps,
            "gradient_steps": self.gradient_steps,
            "rng_state": self.rng.bit_generator.state,
            "config": self.config.to_dict(),
        }
        (directory / f"train_state_{tag}.json").write_text(json.dumps(state, indent=2) + "\n")

    def policy(self, model: MlpModel | None = None) -> Callable[[DroneState], int]:
        model = self.target if model is None else model
        return lambda s: int(np.argmax(forward(model, self.encode(s))))


def train_dqn(env: HandoverEnv, config: TrainConfig, checkpoint_dir=None, checkpoint_every: int = 0) -> MlpModel:
    """Train on one route and return the target network."""
    return DQNTrainer(env, config).run(checkpoint_dir, checkpoint_every)


def dqn_policy(model: MlpModel, env: HandoverEnv, n_frequencies: int = 0) -> Callable[[DroneState], int]:
    extents = (env.grid.extent_x, env.grid.extent_y)
    return lambda s: predict_action(model, s, extents, env.n_cells, n_frequencies)
