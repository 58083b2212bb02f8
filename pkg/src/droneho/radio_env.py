"""RSRP radio map: synthetic sample generation, CSV ingestion, binning and queries.

The radio map is a tensor of mean RSRP per (bin_x, bin_y, cell) over a
rectangular service area. Values are also kept linearly normalized to
[0, 1] with a single global min/max so that cross-cell ordering (and hence
the strongest-cell association map) is unchanged by normalization.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, OutOfExtentError, SampleParseError, ValidationError

SAMPLES_HEADER = ("x_m", "y_m", "cell_id", "rsrp_dbm")
GRID_HEADER = ("bin_x", "bin_y", "cell_id", "rsrp_dbm")
ASSOCIATION_HEADER = ("bin_x", "bin_y", "best_cell")

DEFAULT_EXTENT_X = 5000.0
DEFAULT_EXTENT_Y = 6000.0
DEFAULT_BIN_SIZE = 50.0


class RsrpSample(NamedTuple):
    x: float
    y: float
    cell: int
    rsrp_dbm: float


@dataclass(eq=False)
class RsrpSamples:
    """Column-oriented collection of RSRP samples.

    Behaves like a sequence of :class:`RsrpSample` but keeps the data in
    numpy arrays, which matters at 10^5+ samples.
    """

    x: np.ndarray
    y: np.ndarray
    cell: np.ndarray
    rsrp_dbm: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.cell = np.asarray(self.cell, dtype=np.int64)
        self.rsrp_dbm = np.asarray(self.rsrp_dbm, dtype=float)
        n = len(self.x)
        if not (len(self.y) == len(self.cell) == len(self.rsrp_dbm) == n):
            raise ValueError("sample columns must have equal length")

    @classmethod
    def from_records(cls, records: Iterable[RsrpSample | Sequence]) -> "RsrpSamples":
        rows = [tuple(r) for r in records]
        if not rows:
            return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.int64), np.empty(0))
        x, y, c, r = zip(*rows)
        return cls(np.array(x), np.array(y), np.array(c), np.array(r))

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> RsrpSample:
        return RsrpSample(float(self.x[i]), float(self.y[i]), int(self.cell[i]), float(self.rsrp_dbm[i]))

    def __iter__(self) -> Iterator[RsrpSample]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index: np.ndarray) -> "RsrpSamples":
        return RsrpSamples(self.x[index], self.y[index], self.cell[index], self.rsrp_dbm[index])

    def identical(self, other: "RsrpSamples") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.x, self.y, self.cell, self.rsrp_dbm),
                (other.x, other.y, other.cell, other.rsrp_dbm),
            )
        )


def hex_sites(center: tuple[float, float], isd: float, rings: int = 1) -> tuple[tuple[float, float], ...]:
    """Site positions of a hexagonal layout: the center plus `rings` rings."""
    cx, cy = center
    sites = [(cx, cy)]
    if rings >= 1:
        for j in range(6):
            a = math.radians(30.0 + 60.0 * j)
            sites.append((cx + isd * math.cos(a), cy + isd * math.sin(a)))
    if rings > 1:
        raise ConfigurationError("only one ring of sites is supported")
    return tuple(sites)


@dataclass(frozen=True)
class SyntheticLayout:
    """Macro-cell deployment used to synthesize RSRP samples.

    RSRP = tx_power - PL(d3D) + G_h + G_v + shadowing, with
    PL = pl_intercept_db + pl_slope_db * log10(d_km).
    """

    sites: tuple[tuple[float, float], ...] = field(
        default_factory=lambda: hex_sites((DEFAULT_EXTENT_X / 2, DEFAULT_EXTENT_Y / 2), 1500.0)
    )
    sector_azimuths_deg: tuple[float, ...] = (0.0, 120.0, 240.0)
    extent_x: float = DEFAULT_EXTENT_X
    extent_y: float = DEFAULT_EXTENT_Y
    tx_power_dbm: float = 60.0  # effective radiated power incl. boresight gain
    pl_intercept_db: float = 128.1
    pl_slope_db: float = 37.6
    h_beamwidth_deg: float = 65.0
    front_to_back_db: float = 25.0
    v_beamwidth_deg: float = 10.0
    v_sidelobe_db: float = 20.0
    downtilt_deg: float = 10.0
    shadow_sigma_db: float = 6.0
    bs_height_m: float = 25.0
    ue_altitude_m: float = 50.0

    @property
    def n_cells(self) -> int:
        return len(self.sites) * len(self.sector_azimuths_deg)

    def validate(self) -> None:
        if len(self.sites) == 0:
            raise ConfigurationError("layout has no sites")
        if len(self.sector_azimuths_deg) == 0:
            raise ConfigurationError("layout has no sectors")
        numbers = [
            self.extent_x, self.extent_y, self.tx_power_dbm, self.pl_intercept_db, self.pl_slope_db,
            self.h_beamwidth_deg, self.front_to_back_db, self.v_beamwidth_deg, self.v_sidelobe_db,
            self.downtilt_deg, self.shadow_sigma_db, self.bs_height_m, self.ue_altitude_m,
            *self.sector_azimuths_deg, *(c for s in self.sites for c in s),
        ]
        if not all(math.isfinite(v) for v in numbers):
            raise ConfigurationError("layout parameters must be finite")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ConfigurationError("extents must be positive")
        if self.h_beamwidth_deg <= 0 or self.v_beamwidth_deg <= 0:
            raise ConfigurationError("beamwidths must be positive")
        if self.shadow_sigma_db < 0:
            raise ConfigurationError("shadow sigma must be nonnegative")

    def cell_site(self, cell: int) -> tuple[int, int]:
        """(site index, sector index) of a cell id."""
        return divmod(cell, len(self.sector_azimuths_deg))

    def mean_rsrp_dbm(self, cell: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Deterministic part of the received power (no shadowing)."""
        site, sector = self.cell_site(cell)
        sx, sy = self.sites[site]
        dx = np.asarray(x, dtype=float) - sx
        dy = np.asarray(y, dtype=float) - sy
        d2d = np.hypot(dx, dy)
        dh = self.ue_altitude_m - self.bs_height_m
        d3d = np.maximum(np.hypot(d2d, dh), 1.0)
        pathloss = self.pl_intercept_db + self.pl_slope_db * np.log10(d3d / 1000.0)

        phi = np.degrees(np.arctan2(dy, dx)) - self.sector_azimuths_deg[sector]
        phi = (phi + 180.0) % 360.0 - 180.0
        g_h = -np.minimum(12.0 * (phi / self.h_beamwidth_deg) ** 2, self.front_to_back_db)

        elevation = np.degrees(np.arctan2(dh, d2d))
        g_v = -np.minimum(12.0 * ((elevation + self.downtilt_deg) / self.v_beamwidth_deg) ** 2,
                          self.v_sidelobe_db)
        return self.tx_power_dbm - pathloss + g_h + g_v


def generate_synthetic_samples(layout: SyntheticLayout, samples_per_cell: int, seed: int) -> RsrpSamples:
    """Draw `samples_per_cell` uniformly placed RSRP samples for every cell.

    Sample positions are drawn independently per cell. Output order is
    cell-major and fully determined by `seed`.
    """
    layout.validate()
    if samples_per_cell < 1:
        raise ConfigurationError("samples_per_cell must be >= 1")
    rng = np.random.default_rng(seed)
    n = samples_per_cell
    xs, ys, cells, values = [], [], [], []
    for cell in range(layout.n_cells):
        x = rng.uniform(0.0, layout.extent_x, n)
        y = rng.uniform(0.0, layout.extent_y, n)
        shadow = rng.normal(0.0, layout.shadow_sigma_db, n)
        xs.append(x)
        ys.append(y)
        cells.append(np.full(n, cell, dtype=np.int64))
        values.append(layout.mean_rsrp_dbm(cell, x, y) + shadow)
    # uniform() is half-open in theory but can round up to the bound
    x = np.minimum(np.concatenate(xs), np.nextafter(layout.extent_x, 0))
    y = np.minimum(np.concatenate(ys), np.nextafter(layout.extent_y, 0))
    return RsrpSamples(x, y, np.concatenate(cells), np.concatenate(values))


def import_samples(
    source: IO[str],
    extent_x: float = DEFAULT_EXTENT_X,
    extent_y: float = DEFAULT_EXTENT_Y,
    n_cells: int = 21,
) -> RsrpSamples:
    """Parse a samples CSV (``x_m,y_m,cell_id,rsrp_dbm``).

    Raises SampleParseError for malformed rows and ValidationError for
    values outside the area or the cell range. Row order is preserved.
    """
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise SampleParseError(1, "missing header")
    if tuple(h.strip() for h in header) != SAMPLES_HEADER:
        raise SampleParseError(1, f"expected header {','.join(SAMPLES_HEADER)}")
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise SampleParseError(line, f"expected 4 fields, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
            cell = int(row[2])
            rsrp = float(row[3])
        except ValueError as exc:
            raise SampleParseError(line, str(exc)) from None
        if not all(math.isfinite(v) for v in (x, y, rsrp)):
            raise SampleParseError(line, "non-finite value")
        if not (0.0 <= x < extent_x and 0.0 <= y < extent_y):
            raise ValidationError(f"line {line}: position ({x}, {y}) outside area")
        if not 0 <= cell < n_cells:
            raise ValidationError(f"line {line}: cell id {cell} outside 0..{n_cells - 1}")
        rows.append((x, y, cell, rsrp))
    return RsrpSamples.from_records(rows)


def write_samples(samples: RsrpSamples, dest: IO[str]) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(SAMPLES_HEADER)
    for s in samples:
        w.writerow((repr(s.x), repr(s.y), s.cell, repr(s.rsrp_dbm)))


def _normalize(raw: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo = float(raw.min())
    hi = float(raw.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return (raw - lo) / (hi - lo), lo, hi


@dataclass(frozen=True, eq=False)
class RsrpGrid:
    """Binned per-cell RSRP over a rectangular area, immutable once built."""

    extent_x: float
    extent_y: float
    bin_size: float
    n_cells: int
    raw: np.ndarray
    normalized: np.ndarray
    norm_min_dbm: float
    norm_max_dbm: float

    @classmethod
    def from_raw(cls, raw, extent_x: float, extent_y: float, bin_size: float,
                 bounds: tuple[float, float] | None = None) -> "RsrpGrid":
        """Wrap a (bins_x, bins_y, n_cells) dBm tensor.

        `bounds` overrides the global min/max used for normalization.
        """
        raw = np.array(raw, dtype=float)
        if raw.ndim != 3:
            raise ConfigurationError("raw grid must be 3-dimensional")
        if bin_size <= 0:
            raise ConfigurationError("bin_size must be positive")
        bins_x, bins_y = math.ceil(extent_x / bin_size), math.ceil(extent_y / bin_size)
        if raw.shape[:2] != (bins_x, bins_y):
            raise ConfigurationError(f"raw grid shape {raw.shape[:2]} != ({bins_x}, {bins_y})")
        if bounds is None:
            norm, lo, hi = _normalize(raw)
        else:
            lo, hi = bounds
            norm = (raw - lo) / (hi - lo)
        raw.setflags(write=False)
        norm.setflags(write=False)
        return cls(float(extent_x), float(extent_y), float(bin_size), raw.shape[2], raw, norm, lo, hi)

    @property
    def bins_x(self) -> int:
        return self.raw.shape[0]

    @property
    def bins_y(self) -> int:
        return self.raw.shape[1]

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.extent_x and 0.0 <= y < self.extent_y

    def bin_index(self, x: float, y: float) -> tuple[int, int]:
        if not self.contains(x, y):
            raise OutOfExtentError(f"position ({x}, {y}) outside [0,{self.extent_x})x[0,{self.extent_y})")
        return int(math.floor(x / self.bin_size)), int(math.floor(y / self.bin_size))

    def rsrp_at(self, position: tuple[float, float], cell: int) -> float:
        bx, by = self.bin_index(*position)
        return float(self.normalized[bx, by, cell])

    def rsrp_dbm_at(self, position: tuple[float, float], cell: int) -> float:
        bx, by = self.bin_index(*position)
        return float(self.raw[bx, by, cell])

    def bin_ranking(self, position: tuple[float, float]) -> np.ndarray:
        """All cells at a position, strongest first, ties to lower id."""
        bx, by = self.bin_index(*position)
        return np.argsort(-self.normalized[bx, by], kind="stable")

    def strongest_cells(self, position: tuple[float, float], k: int) -> list[int]:
        if not 1 <= k <= self.n_cells:
            raise ConfigurationError(f"k must be in 1..{self.n_cells}, got {k}")
        return [int(c) for c in self.bin_ranking(position)[:k]]

    def association_map(self, use_raw: bool = False) -> np.ndarray:
        """Strongest cell per bin, shape (bins_x, bins_y)."""
        return np.argmax(self.raw if use_raw else self.normalized, axis=2)

    def denormalize(self, value):
        return self.norm_min_dbm + np.asarray(value) * (self.norm_max_dbm - self.norm_min_dbm)

    def identical(self, other: "RsrpGrid") -> bool:
        return (
            (self.extent_x, self.extent_y, self.bin_size, self.n_cells, self.norm_min_dbm, self.norm_max_dbm)
            == (other.extent_x, other.extent_y, other.bin_size, other.n_cells, other.norm_min_dbm, other.norm_max_dbm)
            and np.array_equal(self.raw, other.raw)
            and np.array_equal(self.normalized, other.normalized)
        )

    def save(self, path: str | Path) -> None:
        """Write ``<path>`` (grid CSV) and ``<path minus suffix>.json`` (sidecar)."""
        path = Path(path)
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(GRID_HEADER)
            for bx in range(self.bins_x):
                for by in range(self.bins_y):
                    for c in range(self.n_cells):
                        w.writerow((bx, by, c, repr(float(self.raw[bx, by, c]))))
        sidecar = {
            "extent_x": self.extent_x,
            "extent_y": self.extent_y,
            "bin_size": self.bin_size,
            "n_cells": self.n_cells,
            "norm_min_dbm": self.norm_min_dbm,
            "norm_max_dbm": self.norm_max_dbm,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RsrpGrid":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        bins_x = math.ceil(meta["extent_x"] / meta["bin_size"])
        bins_y = math.ceil(meta["extent_y"] / meta["bin_size"])
        raw = np.full((bins_x, bins_y, meta["n_cells"]), np.nan)
        with path.open(newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != GRID_HEADER:
                raise SampleParseError(1, f"expected header {','.join(GRID_HEADER)}")
            for row in reader:
                try:
                    raw[int(row[0]), int(row[1]), int(row[2])] = float(row[3])
                except (ValueError, IndexError) as exc:
                    raise SampleParseError(reader.line_num, str(exc)) from None
        if np.isnan(raw).any():
            raise ValidationError("grid file does not cover every (bin, cell)")
        return cls.from_raw(raw, meta["extent_x"], meta["extent_y"], meta["bin_size"],
                            bounds=(meta["norm_min_dbm"], meta["norm_max_dbm"]))

    def save_association_map(self, dest: IO[str]) -> None:
        best = self.association_map()
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(ASSOCIATION_HEADER)
        for bx in range(self.bins_x):
            for by in range(self.bins_y):
                w.writerow((bx, by, int(best[bx, by])))


def build_grid(
    samples: RsrpSamples | Iterable[RsrpSample],
    extent_x: float = DEFAULT_EXTENT_X,
    extent_y: float = DEFAULT_EXTENT_Y,
    bin_size: float = DEFAULT_BIN_SIZE,
    n_cells: int = 21,
) -> RsrpGrid:
    """Average samples per (bin, cell) and normalize globally.

    Empty (bin, cell) pairs take the smallest mean observed anywhere, so an
    unmeasured cell never wins a bin. The result does not depend on the
    order of `samples`.
    """
    if not isinstance(samples, RsrpSamples):
        samples = RsrpSamples.from_records(samples)
    if bin_size <= 0:
        raise ConfigurationError("bin_size must be positive")
    if n_cells < 1:
        raise ConfigurationError("n_cells must be positive")
    if len(samples) == 0:
        raise ValidationError("cannot build a grid from zero samples")
    inside = (samples.x >= 0) & (samples.x < extent_x) & (samples.y >= 0) & (samples.y < extent_y)
    if not inside.all():
        raise ValidationError(f"{int((~inside).sum())} samples lie outside the area")
    if samples.cell.min() < 0 or samples.cell.max() >= n_cells:
        raise ValidationError("sample cell id out of range")

    bins_x, bins_y = math.ceil(extent_x / bin_size), math.ceil(extent_y / bin_size)
    bx = np.floor(samples.x / bin_size).astype(np.int64)
    by = np.floor(samples.y / bin_size).astype(np.int64)
    flat = (bx * bins_y + by) * n_cells + samples.cell

    # sorting by (slot, value) fixes the summation order
    order = np.lexsort((samples.rsrp_dbm, flat))
    flat_sorted = flat[order]
    values = samples.rsrp_dbm[order]
    starts = np.flatnonzero(np.r_[True, flat_sorted[1:] != flat_sorted[:-1]])
    sums = np.add.reduceat(values, starts)
    counts = np.diff(np.r_[starts, len(values)])

    raw = np.full(bins_x * bins_y * n_cells, np.nan)
    raw[flat_sorted[starts]] = sums / counts
    means = sums / counts
    raw[np.isnan(raw)] = means.min()
    return RsrpGrid.from_raw(raw.reshape(bins_x, bins_y, n_cells), extent_x, extent_y, bin_size)


def rsrp_at(grid: RsrpGrid, position: tuple[float, float], cell: int) -> float:
    return grid.rsrp_at(position, cell)


def strongest_cells(grid: RsrpGrid, position: tuple[float, float], k: int) -> list[int]:
    return grid.strongest_cells(position, k)


def synthetic_grid(
    layout: SyntheticLayout | None = None,
    samples_per_cell: int = 10000,
    seed: int = 0,
    bin_size: float = DEFAULT_BIN_SIZE,
) -> RsrpGrid:
    """Convenience: generate samples for `layout` and bin them."""
    layout = layout or SyntheticLayout()
    samples = generate_synthetic_samples(layout, samples_per_cell, seed)
    return build_grid(samples, layout.extent_x, layout.extent_y, bin_size, layout.n_cells)
