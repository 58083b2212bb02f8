"""Fixed 2D drone routes built from eight compass directions."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import DegenerateRouteError, OutOfExtentError, SampleParseError

N_DIRECTIONS = 8
ROUTE_HEADER = ("idx", "x_m", "y_m", "direction_idx")
_TIE_TOL = 1e-9


def direction_angle(index: int) -> float:
    return index * math.pi / 4.0


def direction_vector(index: int, step_length: float = 1.0) -> tuple[float, float]:
    a = direction_angle(index)
    return step_length * math.cos(a), step_length * math.sin(a)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Waypoints (l, 2) and the direction index of each of the l-1 segments."""

    waypoints: np.ndarray
    directions: np.ndarray
    step_length: float = 50.0

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        d = np.asarray(self.directions, dtype=np.int64).reshape(-1)
        if len(wp) < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        if len(d) != len(wp) - 1:
            raise ValueError("need one direction per segment")
        wp.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "directions", d)

    def __len__(self) -> int:
        return len(self.waypoints)

    def position(self, i: int) -> tuple[float, float]:
        return float(self.waypoints[i, 0]), float(self.waypoints[i, 1])

    def direction_at(self, i: int) -> int:
        """Heading at waypoint i; the last waypoint keeps the final heading."""
        return int(self.directions[min(i, len(self.directions) - 1)])

    def identical(self, other: "Trajectory") -> bool:
        return (
            self.step_length == other.step_length
            and np.array_equal(self.waypoints, other.waypoints)
            and np.array_equal(self.directions, other.directions)
        )

    def write_csv(self, dest: IO[str]) -> None:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(ROUTE_HEADER)
        for i in range(len(self)):
            x, y = self.position(i)
            w.writerow((i, repr(x), repr(y), self.direction_at(i)))

    @classmethod
    def read_csv(cls, source: IO[str], step_length: float = 50.0) -> "Trajectory":
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ROUTE_HEADER:
            raise SampleParseError(1, f"expected header {','.join(ROUTE_HEADER)}")
        pts, dirs = [], []
        for row in reader:
            if not row:
                continue
            try:
                pts.append((float(row[1]), float(row[2])))
                dirs.append(int(row[3]))
            except (ValueError, IndexError) as exc:
                raise SampleParseError(reader.line_num, str(exc)) from None
        return cls(np.array(pts), np.array(dirs[:-1]), step_length)


def _inside(p, extents) -> bool:
    return 0.0 <= p[0] < extents[0] and 0.0 <= p[1] < extents[1]


def pick_direction(current, destination, step_length: float = 50.0, allowed=None) -> int:
    """Direction whose next waypoint lands closest to `destination`.

    `allowed` optionally restricts the candidate indices. Distances equal
    to within 1e-9 m count as ties and resolve to the lowest index.
    """
    cx, cy = current
    candidates = range(N_DIRECTIONS) if allowed is None else list(allowed)
    best, best_d = None, math.inf
    for z in candidates:
        dx, dy = direction_vector(z, step_length)
        d = math.hypot(cx + dx - destination[0], cy + dy - destination[1])
        if d < best_d - _TIE_TOL:
            best, best_d = z, d
    return best


def generate_route(start, end, step_length: float = 50.0, extents=(5000.0, 6000.0)) -> Trajectory:
    """Greedy 8-direction route from `start` toward `end`.

    Stops when no in-area step strictly reduces the distance to `end`.
    """
    start = (float(start[0]), float(start[1]))
    end = (float(end[0]), float(end[1]))
    if start == end:
        raise DegenerateRouteError("start and end coincide")
    for p in (start, end):
        if not _inside(p, extents):
            raise OutOfExtentError(f"route endpoint {p} outside area")

    points = [start]
    dirs: list[int] = []
    cur = start
    dist = math.dist(cur, end)
    while True:
        allowed = [
            z for z in range(N_DIRECTIONS)
            if _inside((cur[0] + direction_vector(z, step_length)[0],
                        cur[1] + direction_vector(z, step_length)[1]), extents)
        ]
        if not allowed:
            break
        z = pick_direction(cur, end, step_length, allowed)
        dx, dy = direction_vector(z, step_length)
        nxt = (cur[0] + dx, cur[1] + dy)
        nd = math.dist(nxt, end)
        if not nd < dist:
            break
        points.append(nxt)
        dirs.append(z)
        cur, dist = nxt, nd
    if len(points) < 2:
        raise DegenerateRouteError(f"no progress possible from {start} toward {end}")
    return Trajectory(np.array(points), np.array(dirs), step_length)


def random_route(extents=(5000.0, 6000.0), min_separation: float = 1000.0, seed=0,
                 step_length: float = 50.0) -> Trajectory:
    """Route between uniform random endpoints at least `min_separation` apart.

    `seed` may be an int or a numpy Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ex, ey = extents
    if math.hypot(ex, ey) <= min_separation:
        raise ValueError("area too small for the requested separation")
    while True:
        start = (rng.uniform(0, ex), rng.uniform(0, ey))
        end = (rng.uniform(0, ex), rng.uniform(0, ey))
        if math.dist(start, end) >= min_separation:
            try:
                return generate_route(start, end, step_length, extents)
            except (DegenerateRouteError, OutOfExtentError):
                continue
