"""Flight simulation, baseline, exact DP oracle and metric aggregation."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO, Callable, NamedTuple, Sequence

import numpy as np

from .mdp import DEFAULT_K, DroneState, HandoverEnv, RewardWeights
from .radio_env import RsrpGrid
from .trajectory import Trajectory

Policy = Callable[[DroneState], int]

METRICS_HEADER = ("flight_id", "scheme", "w_ho", "w_rsrp", "ho_count", "ho_ratio", "mean_rsrp_dbm", "p05_rsrp_dbm")
CDF_HEADER = ("value", "cumulative_probability")
SUMMARY_PROBS = (0.05, 0.50, 0.90, 0.95)


@dataclass
class FlightMetrics:
    cell_sequence: list[int]
    rsrp_trace: np.ndarray
    rsrp_dbm_trace: np.ndarray
    ho_count: int = field(init=False)

    def __post_init__(self):
        self.rsrp_trace = np.asarray(self.rsrp_trace, dtype=float)
        self.rsrp_dbm_trace = np.asarray(self.rsrp_dbm_trace, dtype=float)
        self.ho_count = count_handovers(self.cell_sequence)

    def discounted_return(self, env: HandoverEnv, lam: float) -> float:
        return discounted_return(env, self.cell_sequence, lam)


def count_handovers(cells: Sequence[int]) -> int:
    return sum(1 for a, b in zip(cells[:-1], cells[1:]) if a != b)


def _flight_from_cells(env: HandoverEnv, cells: list[int]) -> FlightMetrics:
    idx = np.arange(len(cells))
    return FlightMetrics(cells, env.rsrp[idx, cells], env.rsrp_dbm[idx, cells])


def discounted_return(env: HandoverEnv, cells: Sequence[int], lam: float) -> float:
    """Sum_i lam^i * reward of the i-th transition of a cell sequence."""
    total, scale = 0.0, 1.0
    w = env.weights
    for i in range(len(cells) - 1):
        r = -w.w_ho * (1.0 if cells[i + 1] != cells[i] else 0.0) + w.w_rsrp * float(env.rsrp[i + 1, cells[i + 1]])
        total += scale * r
        scale *= lam
    return total


def baseline_flight(grid: RsrpGrid, trajectory: Trajectory) -> FlightMetrics:
    """Always attach to the strongest cell at every waypoint."""
    env = HandoverEnv(grid, trajectory, RewardWeights(0.0, 1.0), k=1)
    return _flight_from_cells(env, [int(c) for c in env.ranking[:, 0]])


def run_env_flight(policy: Policy, env: HandoverEnv) -> FlightMetrics:
    state = env.initial_state()
    cells = [state.serving_cell]
    while not env.is_terminal(state):
        state, _, _ = env.step(state, int(policy(state)))
        cells.append(state.serving_cell)
    return _flight_from_cells(env, cells)


def run_flight(policy: Policy, grid: RsrpGrid, trajectory: Trajectory, weights: RewardWeights,
               k: int = DEFAULT_K) -> FlightMetrics:
    """Fly `trajectory` from its strongest initial cell, letting `policy` pick actions."""
    return run_env_flight(policy, HandoverEnv(grid, trajectory, weights, k))


class DPResult(NamedTuple):
    values: np.ndarray  # (l, n_cells) optimal value of being at waypoint i on cell c
    policy: np.ndarray  # (l-1, n_cells) optimal action index
    flight: FlightMetrics
    q: np.ndarray  # (l-1, n_cells, k) optimal action values


def dp_oracle_env(env: HandoverEnv, lam: float) -> DPResult:
    n, n_cells, k = env.length, env.n_cells, env.k
    w = env.weights
    values = np.zeros((n, n_cells))
    q = np.empty((n - 1, n_cells, k))
    cells = np.arange(n_cells)[:, None]
    for i in range(n - 2, -1, -1):
        cand = env.candidates[i]
        handover = (cand[None, :] != cells).astype(float)
        rewards = -w.w_ho * handover + w.w_rsrp * env.rsrp[i + 1, cand][None, :]
        q[i] = rewards + lam * values[i + 1, cand][None, :]
        values[i] = q[i].max(axis=1)
    policy = np.argmax(q, axis=2)

    state_cell = int(env.ranking[0, 0])
    seq = [state_cell]
    for i in range(n - 1):
        state_cell = int(env.candidates[i, policy[i, state_cell]])
        seq.append(state_cell)
    return DPResult(values, policy, _flight_from_cells(env, seq), q)


def dp_oracle(grid: RsrpGrid, trajectory: Trajectory, weights: RewardWeights, lam: float,
              k: int = DEFAULT_K) -> DPResult:
    """Backward induction over (waypoint, serving cell) with V at the last waypoint = 0."""
    return dp_oracle_env(HandoverEnv(grid, trajectory, weights, k), lam)


def enumerate_best(env: HandoverEnv, lam: float) -> tuple[float, list[int]]:
    """Brute-force max discounted return over all k^(l-1) action sequences."""
    best, best_seq = -np.inf, None
    start = int(env.ranking[0, 0])
    for actions in np.ndindex(*([env.k] * (env.length - 1))):
        seq = [start]
        for i, a in enumerate(actions):
            seq.append(int(env.candidates[i, a]))
        g = discounted_return(env, seq, lam)
        if g > best:
            best, best_seq = g, seq
    return best, best_seq


# ---------------------------------------------------------------- aggregation

def ho_ratio(proposed: int, baseline: int) -> float | None:
    """proposed / baseline; 0/0 is 1 and x/0 (x > 0) is undefined (None)."""
    if baseline == 0:
        return 1.0 if proposed == 0 else None
    return proposed / baseline


class Ecdf:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, samples):
        self.x = np.sort(np.asarray(samples, dtype=float).ravel())

    def __len__(self) -> int:
        return len(self.x)

    def __call__(self, v):
        if len(self.x) == 0:
            return np.zeros_like(np.asarray(v, dtype=float))
        return np.searchsorted(self.x, v, side="right") / len(self.x)

    def quantile(self, p: float) -> float:
        """Smallest sample value whose CDF reaches p."""
        if len(self.x) == 0:
            return float("nan")
        return float(np.quantile(self.x, p, method="inverted_cdf"))

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values and the CDF at each."""
        values = np.unique(self.x)
        return values, self(values)

    def write_csv(self, dest: IO[str]) -> None:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(CDF_HEADER)
        for v, p in zip(*self.steps()):
            w.writerow((repr(float(v)), repr(float(p))))


@dataclass
class EvalSummary:
    proposed: list[FlightMetrics]
    baseline: list[FlightMetrics]
    ho_ratios: list[float | None]
    average_ho: float
    average_baseline_ho: float
    excluded_ratios: int
    ho_cdf: Ecdf
    ratio_cdf: Ecdf
    rsrp_cdf: Ecdf

    @property
    def valid_ratios(self) -> list[float]:
        return [r for r in self.ho_ratios if r is not None]

    def percentiles(self, probs=SUMMARY_PROBS) -> dict:
        return {
            "ho_count": {f"{p:.2f}": self.ho_cdf.quantile(p) for p in probs},
            "ho_ratio": {f"{p:.2f}": self.ratio_cdf.quantile(p) for p in probs},
            "rsrp_dbm": {f"{p:.2f}": self.rsrp_cdf.quantile(p) for p in probs},
        }

    def to_dict(self) -> dict:
        return {
            "flights": len(self.proposed),
            "average_ho": self.average_ho,
            "average_baseline_ho": self.average_baseline_ho,
            "average_ho_ratio_to_baseline": (self.average_ho / self.average_baseline_ho
                                             if self.average_baseline_ho else None),
            "excluded_ratios": self.excluded_ratios,
            "percentiles": self.percentiles(),
        }


def aggregate(proposed: Sequence[FlightMetrics], baseline: Sequence[FlightMetrics]) -> EvalSummary:
    if len(proposed) != len(baseline):
        raise ValueError("proposed and baseline flight lists differ in length")
    for p, b in zip(proposed, baseline):
        if len(p.cell_sequence) != len(b.cell_sequence):
            raise ValueError("proposed and baseline flights are not route-aligned")
    ratios = [ho_ratio(p.ho_count, b.ho_count) for p, b in zip(proposed, baseline)]
    valid = [r for r in ratios if r is not None]
    hos = [p.ho_count for p in proposed]
    rsrp = np.concatenate([p.rsrp_dbm_trace for p in proposed]) if proposed else np.empty(0)
    return EvalSummary(
        proposed=list(proposed),
        baseline=list(baseline),
        ho_ratios=ratios,
        average_ho=float(np.mean(hos)) if hos else 0.0,
        average_baseline_ho=float(np.mean([b.ho_count for b in baseline])) if baseline else 0.0,
        excluded_ratios=len(ratios) - len(valid),
        ho_cdf=Ecdf(hos),
        ratio_cdf=Ecdf(valid),
        rsrp_cdf=Ecdf(rsrp),
    )


def metrics_rows(scheme: str, weights: RewardWeights | None, proposed: Sequence[FlightMetrics],
                 baseline: Sequence[FlightMetrics], first_id: int = 0) -> list[tuple]:
    """Rows for the metrics CSV. Baseline rows pass ``weights=None``."""
    rows = []
    for j, (p, b) in enumerate(zip(proposed, baseline)):
        r = ho_ratio(p.ho_count, b.ho_count)
        rows.append((
            first_id + j,
            scheme,
            "" if weights is None else f"{weights.w_ho:g}",
            "" if weights is None else f"{weights.w_rsrp:g}",
            p.ho_count,
            "" if r is None else f"{r:.6f}",
            f"{float(np.mean(p.rsrp_dbm_trace)):.6f}",
            f"{float(np.quantile(p.rsrp_dbm_trace, 0.05, method='inverted_cdf')):.6f}",
        ))
    return rows


def write_metrics_csv(rows: Sequence[tuple], dest: IO[str]) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    w.writerows(rows)


def write_summary_json(summaries: dict[str, dict], dest: IO[str]) -> None:
    json.dump(summaries, dest, indent=2, sort_keys=True)
    dest.write("\n")
