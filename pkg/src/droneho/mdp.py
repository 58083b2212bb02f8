"""The handover MDP along a fixed trajectory.

State: position, heading, serving cell (plus the waypoint index it sits on).
Action: index into the k strongest cells at the NEXT waypoint, sorted by
descending RSRP. Reward: -w_ho * I(handover) + w_rsrp * normalized RSRP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TerminalStateError
from .radio_env import RsrpGrid
from .trajectory import Trajectory

DEFAULT_K = 6


@dataclass(frozen=True)
class DroneState:
    x: float
    y: float
    direction: int
    serving_cell: int
    waypoint_index: int


@dataclass(frozen=True)
class RewardWeights:
    w_ho: float
    w_rsrp: float

    def __post_init__(self):
        if self.w_ho < 0 or self.w_rsrp < 0:
            raise ConfigurationError("reward weights must be nonnegative")
        if self.w_ho + self.w_rsrp <= 0:
            raise ConfigurationError("reward weights cannot both be zero")

    @classmethod
    def parse(cls, text: str) -> "RewardWeights":
        """Parse ``"w_ho:w_rsrp"`` (or ``"w_ho/w_rsrp"``)."""
        sep = ":" if ":" in text else "/"
        try:
            a, b = text.split(sep)
            w_ho, w_rsrp = float(a), float(b)
        except ValueError:
            raise ConfigurationError(f"bad weight pair {text!r}, expected w_ho:w_rsrp") from None
        return cls(w_ho, w_rsrp)

    def label(self) -> str:
        return f"{self.w_ho:g}/{self.w_rsrp:g}"


def candidates(grid: RsrpGrid, trajectory: Trajectory, waypoint_index: int, k: int = DEFAULT_K) -> list[int]:
    """The k strongest cells at the waypoint after `waypoint_index`."""
    if not 0 <= waypoint_index < len(trajectory) - 1:
        raise TerminalStateError(f"waypoint {waypoint_index} has no successor")
    return grid.strongest_cells(trajectory.position(waypoint_index + 1), k)


def reward(current_cell: int, chosen_cell: int, rsrp_next: float, weights: RewardWeights) -> float:
    handover = 1.0 if chosen_cell != current_cell else 0.0
    return -weights.w_ho * handover + weights.w_rsrp * rsrp_next


def initial_state(grid: RsrpGrid, trajectory: Trajectory) -> DroneState:
    """First waypoint, attached to its strongest cell."""
    x, y = trajectory.position(0)
    return DroneState(x, y, trajectory.direction_at(0), grid.strongest_cells((x, y), 1)[0], 0)


def state_at(trajectory: Trajectory, waypoint_index: int, cell: int) -> DroneState:
    x, y = trajectory.position(waypoint_index)
    return DroneState(x, y, trajectory.direction_at(waypoint_index), cell, waypoint_index)


def step(state: DroneState, action: int, grid: RsrpGrid, trajectory: Trajectory,
         weights: RewardWeights, k: int = DEFAULT_K) -> tuple[DroneState, float, bool]:
    i = state.waypoint_index
    cands = candidates(grid, trajectory, i, k)
    if not 0 <= action < len(cands):
        raise ValueError(f"action {action} outside 0..{len(cands) - 1}")
    cell = cands[action]
    nxt = state_at(trajectory, i + 1, cell)
    r = reward(state.serving_cell, cell, grid.rsrp_at((nxt.x, nxt.y), cell), weights)
    return nxt, r, nxt.waypoint_index == len(trajectory) - 1


class HandoverEnv:
    """Precomputed view of one (grid, trajectory, weights, k) instance.

    Holds per-waypoint candidate lists and RSRP rows so stepping is cheap.
    Semantics are identical to the module-level :func:`step`.
    """

    def __init__(self, grid: RsrpGrid, trajectory: Trajectory, weights: RewardWeights, k: int = DEFAULT_K):
        if not 1 <= k <= grid.n_cells:
            raise ConfigurationError(f"k must be in 1..{grid.n_cells}, got {k}")
        self.grid = grid
        self.trajectory = trajectory
        self.weights = weights
        self.k = k
        n = len(trajectory)
        self.length = n
        self.rsrp = np.empty((n, grid.n_cells))
        self.rsrp_dbm = np.empty((n, grid.n_cells))
        ranking = np.empty((n, grid.n_cells), dtype=np.int64)
        for i in range(n):
            bx, by = grid.bin_index(*trajectory.position(i))
            self.rsrp[i] = grid.normalized[bx, by]
            self.rsrp_dbm[i] = grid.raw[bx, by]
            ranking[i] = np.argsort(-self.rsrp[i], kind="stable")
        self.ranking = ranking
        # candidates[i] = top-k at waypoint i+1; last row unused
        self.candidates = np.vstack([ranking[1:, :k], np.full((1, k), -1)])

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    def initial_state(self) -> DroneState:
        return self.state(0, int(self.ranking[0, 0]))

    def state(self, waypoint_index: int, cell: int) -> DroneState:
        return state_at(self.trajectory, waypoint_index, cell)

    def is_terminal(self, state: DroneState) -> bool:
        return state.waypoint_index == self.length - 1

    def reward(self, waypoint_index: int, cell: int, action: int) -> float:
        """Reward of taking `action` at (waypoint_index, cell)."""
        chosen = int(self.candidates[waypoint_index, action])
        return reward(cell, chosen, float(self.rsrp[waypoint_index + 1, chosen]), self.weights)

    def step(self, state: DroneState, action: int) -> tuple[DroneState, float, bool]:
        i = state.waypoint_index
        if i >= self.length - 1:
            raise TerminalStateError(f"waypoint {i} has no successor")
        if not 0 <= action < self.k:
            raise ValueError(f"action {action} outside 0..{self.k - 1}")
        chosen = int(self.candidates[i, action])
        r = reward(state.serving_cell, chosen, float(self.rsrp[i + 1, chosen]), self.weights)
        nxt = self.state(i + 1, chosen)
        return nxt, r, i + 1 == self.length - 1
