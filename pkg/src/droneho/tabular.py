"""Tabular Q-learning over binned handover states."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Hashable

import numpy as np

from .mdp import DEFAULT_K, DroneState, HandoverEnv, RewardWeights
from .radio_env import RsrpGrid

StateKey = tuple[int, int, int, int, int]


def state_key(grid: RsrpGrid, state: DroneState) -> StateKey:
    """(bin_x, bin_y, heading, serving cell, waypoint index).

    The waypoint index separates consecutive waypoints that fall into the
    same bin with the same heading, which would otherwise share a row.
    """
    bx, by = grid.bin_index(state.x, state.y)
    return bx, by, state.direction, state.serving_cell, state.waypoint_index


class QTable:
    """Sparse table of k-vectors; unseen states read as zeros."""

    def __init__(self, k: int = DEFAULT_K):
        self.k = k
        self.values: dict[Hashable, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, key) -> bool:
        return key in self.values

    def get(self, key) -> np.ndarray:
        v = self.values.get(key)
        return np.zeros(self.k) if v is None else v

    def row(self, key) -> np.ndarray:
        v = self.values.get(key)
        if v is None:
            v = self.values[key] = np.zeros(self.k)
        return v

    def max_value(self, key) -> float:
        v = self.values.get(key)
        return 0.0 if v is None else float(v.max())

    def identical(self, other: "QTable") -> bool:
        return (self.k == other.k and self.values.keys() == other.values.keys()
                and all(np.array_equal(v, other.values[key]) for key, v in self.values.items()))

    def save(self, path: str | Path, weights: RewardWeights | None = None, discount: float | None = None) -> None:
        """CSV ``bin_x,bin_y,dir,cell,wp,q0..`` plus a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin_x", "bin_y", "dir", "cell", "wp"] + [f"q{j}" for j in range(self.k)])
            for key in sorted(self.values):
                w.writerow(list(key) + [repr(float(q)) for q in self.values[key]])
        meta = {"k": self.k, "discount": discount,
                "weights": None if weights is None else {"w_ho": weights.w_ho, "w_rsrp": weights.w_rsrp}}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        table = cls(meta["k"])
        with path.open(newline="") as f:
            reader = csv.reader(f)
            next(reader)
            for row in reader:
                key = tuple(int(c) for c in row[:5])
                table.values[key] = np.array([float(q) for q in row[5:]])
        return table


def q_update(table: QTable, s_key, a: int, r: float, s_next_key, alpha: float, discount: float) -> float:
    """Q <- (1-alpha) Q + alpha (r + discount * max Q(s')); s_next_key None means terminal."""
    row = table.row(s_key)
    future = 0.0 if s_next_key is None else table.max_value(s_next_key)
    row[a] = (1.0 - alpha) * row[a] + alpha * (r + discount * future)
    return float(row[a])


def policy_action(table: QTable, key) -> int:
    return int(np.argmax(table.get(key)))


@dataclass
class TabularConfig:
    episodes: int = 120
    steps: int = 1000
    alpha: float = 0.5
    discount: float = 0.3
    epsilon: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.episodes < 0 or self.steps < 0:
            raise ValueError("episodes and steps must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def train_tabular(env: HandoverEnv, config: TabularConfig) -> QTable:
    """Epsilon-greedy Q-learning along one route.

    Episodes start at the first waypoint on its strongest cell; reaching the
    last waypoint restarts at a random earlier waypoint on one of its k
    strongest cells.
    """
    rng = np.random.default_rng(config.seed)
    table = QTable(env.k)
    grid = env.grid
    keys: dict[tuple[int, int], StateKey] = {}

    def key(s: DroneState) -> StateKey:
        kk = keys.get((s.waypoint_index, s.serving_cell))
        if kk is None:
            kk = keys[(s.waypoint_index, s.serving_cell)] = state_key(grid, s)
        return kk

    for _ in range(config.episodes):
        state = env.initial_state()
        for _ in range(config.steps):
            if env.is_terminal(state):
                i = int(rng.integers(env.length - 1))
                state = env.state(i, int(env.ranking[i, rng.integers(env.k)]))
            s_key = key(state)
            if rng.random() < config.epsilon:
                a = int(rng.integers(env.k))
            else:
                a = policy_action(table, s_key)
            nxt, r, terminal = env.step(state, a)
            q_update(table, s_key, a, r, None if terminal else key(nxt), config.alpha, config.discount)
            state = nxt
    return table


def backward_sweep(table: QTable, env: HandoverEnv, alpha: float, discount: float) -> QTable:
    """One q_update per (state, action), last waypoint first.

    States covered: the strongest cell at the first waypoint and the k
    strongest cells at every later waypoint (everything reachable).
    """
    grid = env.grid
    for i in range(env.length - 2, -1, -1):
        cells = env.ranking[0, :1] if i == 0 else env.ranking[i, :env.k]
        for c in cells:
            s = env.state(i, int(c))
            for a in range(env.k):
                nxt, r, terminal = env.step(s, a)
                q_update(table, state_key(grid, s), a, r, None if terminal else state_key(grid, nxt),
                         alpha, discount)
    return table


def tabular_policy(table: QTable, grid: RsrpGrid) -> Callable[[DroneState], int]:
    return lambda s: policy_action(table, state_key(grid, s))
