"""Multi-flight experiments: build the map, sample routes, train per route, evaluate.

All randomness derives from one master seed through labeled substreams
(`substream_seed`), so flight j draws the same route and the same learner
seeds no matter how flights are spread over worker processes. Results are
merged in flight order.
"""
from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import RunConfig
from .dqn import dqn_policy, train_dqn
from .evaluation import (
    EvalSummary,
    FlightMetrics,
    aggregate,
    baseline_flight,
    dp_oracle_env,
    metrics_rows,
    run_env_flight,
    write_metrics_csv,
    write_summary_json,
)
from .mdp import HandoverEnv
from .nn import MlpModel
from .radio_env import RsrpGrid, build_grid, generate_synthetic_samples, import_samples
from .tabular import QTable, tabular_policy, train_tabular
from .trajectory import Trajectory, random_route

LEARNED = ("tabular", "dqn", "dp")


def substream_seed(master: int, label: str, *index: int) -> int:
    """Independent 63-bit seed for (label, index...) under a master seed."""
    ss = np.random.SeedSequence([master, zlib.crc32(label.encode()), *index])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def build_map(cfg: RunConfig) -> RsrpGrid:
    """The grid named by the config: grid file, samples file or synthetic layout."""
    if cfg.grid_file:
        grid = RsrpGrid.load(cfg.grid_file)
        if (grid.extent_x, grid.extent_y) != cfg.extents:
            raise ValueError(f"grid extents {(grid.extent_x, grid.extent_y)} differ from config {cfg.extents}")
        return grid
    if cfg.samples_file:
        layout_cells = cfg.synthetic_layout().n_cells
        with open(cfg.samples_file, newline="") as f:
            samples = import_samples(f, cfg.extent_x, cfg.extent_y, layout_cells)
        return build_grid(samples, cfg.extent_x, cfg.extent_y, cfg.bin_size, layout_cells)
    layout = cfg.synthetic_layout()
    samples = generate_synthetic_samples(layout, cfg.samples_per_cell, substream_seed(cfg.seed, "map"))
    return build_grid(samples, cfg.extent_x, cfg.extent_y, cfg.bin_size, layout.n_cells)


def flight_route(cfg: RunConfig, flight_id: int) -> Trajectory:
    return random_route(cfg.extents, cfg.min_separation, substream_seed(cfg.seed, "route", flight_id),
                        cfg.step_length)


@dataclass
class FlightResult:
    flight_id: int
    baseline: FlightMetrics
    # (scheme, weight index) -> metrics of the flight under that policy
    runs: dict[tuple[str, int], FlightMetrics] = field(default_factory=dict)


@dataclass
class FixedPolicies:
    """Pre-trained models evaluated on every route instead of per-route training."""

    dqn_model: MlpModel | None = None
    table: QTable | None = None


def n_frequencies_of(model: MlpModel, n_cells: int) -> int:
    extra = model.input_dim - 4 - n_cells
    if extra < 0 or extra % 4:
        raise ValueError(f"model input size {model.input_dim} does not fit {n_cells} cells")
    return extra // 4


def run_one_flight(grid: RsrpGrid, cfg: RunConfig, flight_id: int,
                   fixed: FixedPolicies | None = None) -> FlightResult:
    route = flight_route(cfg, flight_id)
    result = FlightResult(flight_id, baseline_flight(grid, route))
    schemes = cfg.scheme_list
    for wi, weights in enumerate(cfg.weight_list):
        env = HandoverEnv(grid, route, weights, cfg.k)
        if "tabular" in schemes:
            if fixed is not None and fixed.table is not None:
                table = fixed.table
            else:
                table = train_tabular(env, cfg.tabular_config(substream_seed(cfg.seed, "tabular", flight_id, wi)))
            result.runs["tabular", wi] = run_env_flight(tabular_policy(table, grid), env)
        if "dqn" in schemes:
            if fixed is not None and fixed.dqn_model is not None:
                model = fixed.dqn_model
            else:
                model = train_dqn(env, cfg.train_config(substream_seed(cfg.seed, "dqn", flight_id, wi)))
            policy = dqn_policy(model, env, n_frequencies_of(model, grid.n_cells))
            result.runs["dqn", wi] = run_env_flight(policy, env)
        if "dp" in schemes:
            result.runs["dp", wi] = dp_oracle_env(env, cfg.discount).flight
    return result


# state shared with pool workers, set once per process
_WORKER: dict = {}


def _init_worker(grid: RsrpGrid, cfg: RunConfig, fixed: FixedPolicies | None) -> None:
    _WORKER.update(grid=grid, cfg=cfg, fixed=fixed)


def _worker_flight(flight_id: int) -> FlightResult:
    return run_one_flight(_WORKER["grid"], _WORKER["cfg"], flight_id, _WORKER["fixed"])


def run_flights(grid: RsrpGrid, cfg: RunConfig, fixed: FixedPolicies | None = None,
                progress: Callable[[int, int], None] | None = None) -> list[FlightResult]:
    """Run flights 0..cfg.flights-1, in parallel when cfg.workers > 1; results in flight order."""
    ids = range(cfg.flights)
    results: list[FlightResult] = []
    if cfg.workers == 1 or cfg.flights <= 1:
        for j in ids:
            results.append(run_one_flight(grid, cfg, j, fixed))
            if progress:
                progress(len(results), cfg.flights)
        return results
    with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(grid, cfg, fixed)) as pool:
        # map() yields in submission order whatever the completion order
        for res in pool.map(_worker_flight, ids, chunksize=max(1, cfg.flights // (4 * cfg.workers))):
            results.append(res)
            if progress:
                progress(len(results), cfg.flights)
    return results


# ------------------------------------------------------------------ reports

@dataclass
class Report:
    rows: list[tuple]
    summaries: dict[str, EvalSummary]

    def summary_dict(self) -> dict:
        return {name: s.to_dict() for name, s in self.summaries.items()}


def build_report(cfg: RunConfig, results: list[FlightResult]) -> Report:
    """Metrics rows (flight-major) and one summary per (scheme, weights)."""
    rows: list[tuple] = []
    weights = cfg.weight_list
    keys = [(s, wi) for wi in range(len(weights)) for s in cfg.scheme_list if s in LEARNED]
    for res in results:
        if "baseline" in cfg.scheme_list:
            rows += metrics_rows("baseline", None, [res.baseline], [res.baseline], res.flight_id)
        for scheme, wi in keys:
            rows += metrics_rows(scheme, weights[wi], [res.runs[scheme, wi]], [res.baseline], res.flight_id)
    baseline = [r.baseline for r in results]
    summaries = {}
    if "baseline" in cfg.scheme_list:
        summaries["baseline"] = aggregate(baseline, baseline)
    for scheme, wi in keys:
        summaries[f"{scheme} {weights[wi].label()}"] = aggregate([r.runs[scheme, wi] for r in results], baseline)
    return Report(rows, summaries)


def _file_tag(name: str) -> str:
    return name.replace(" ", "_").replace("/", "-")


def write_report(report: Report, out_dir: str | Path) -> list[Path]:
    """metrics.csv, summary.json and cdf_<scheme>[_<w_ho>-<w_rsrp>]_<metric>.csv files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "metrics.csv", out / "summary.json"]
    with written[0].open("w", newline="") as f:
        write_metrics_csv(report.rows, f)
    with written[1].open("w") as f:
        write_summary_json(report.summary_dict(), f)
    for name, summary in report.summaries.items():
        for metric, cdf in (("ho_count", summary.ho_cdf), ("ho_ratio", summary.ratio_cdf),
                            ("rsrp_dbm", summary.rsrp_cdf)):
            path = out / f"cdf_{_file_tag(name)}_{metric}.csv"
            with path.open("w", newline="") as f:
                cdf.write_csv(f)
            written.append(path)
    return written


def write_manifest(out_dir: str | Path, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    from . import __version__

    manifest = {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict()}
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


__all__ = [
    "FixedPolicies", "FlightResult", "Report", "build_map", "build_report", "flight_route", "run_flights",
    "run_one_flight", "substream_seed", "write_manifest", "write_report",
]
