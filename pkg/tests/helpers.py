"""Small hand-built grids and routes shared by the tests."""
import numpy as np

from droneho.nn import init_mlp
from droneho.radio_env import RsrpGrid
from droneho.trajectory import Trajectory


def line_grid(values, bin_size=50.0):
    """Grid of one row of bins whose normalized values are exactly `values` (n_bins, n_cells)."""
    values = np.asarray(values, dtype=float)
    raw = values[:, None, :]
    return RsrpGrid.from_raw(raw, bin_size * len(values), bin_size, bin_size, bounds=(0.0, 1.0))


def line_route(n, bin_size=50.0):
    """n waypoints at the centers of bins 0..n-1 heading east."""
    pts = np.array([[bin_size * (i + 0.5), bin_size / 2] for i in range(n)])
    return Trajectory(pts, np.zeros(n - 1, dtype=int), bin_size)


def min_kink_distance(model, x):
    """Smallest |pre-activation| over the hidden units; relu is not smooth at 0."""
    a, closest = np.atleast_2d(x), np.inf
    for w, b in model.layers[:-1]:
        z = a @ w.T + b
        closest = min(closest, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return closest


def random_case(rng, max_width=12):
    """A small random model, batch, target and action mask.

    Draws again while a hidden pre-activation lies within 1e-3 of the relu
    kink, where central differences with h=1e-5 straddle the corner and
    stop approximating the derivative.
    """
    while True:
        case = _draw_case(rng, max_width)
        if min_kink_distance(case[0], case[1]) > 1e-3:
            return case


def _draw_case(rng, max_width):
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, max_width)) for _ in range(depth)] + [int(rng.integers(1, 7))]
    model = init_mlp(dims[0], dims[1:-1], dims[-1], rng)
    model.params[:] += rng.normal(0, 0.1, model.params.shape)  # nonzero biases too
    batch = int(rng.integers(1, 5))
    x = rng.normal(size=(batch, dims[0]))
    target = rng.normal(size=(batch, dims[-1]))
    actions = rng.integers(0, dims[-1], batch)
    return model, x, target, actions
