import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from droneho.errors import DegenerateRouteError
from droneho.trajectory import (
    N_DIRECTIONS,
    Trajectory,
    direction_angle,
    generate_route,
    pick_direction,
    random_route,
)

D = 50.0 / math.sqrt(2.0)


def test_eight_directions():
    assert N_DIRECTIONS == 8
    assert direction_angle(5) == pytest.approx(5 * math.pi / 4)


def test_pick_collinear():
    assert pick_direction((0, 0), (1000, 0)) == 0
    assert pick_direction((0, 0), (-300, -300)) == 5


def test_pick_tie_goes_to_lower_index():
    a = math.radians(22.5)
    dest = (1000 * math.cos(a), 1000 * math.sin(a))
    assert pick_direction((0, 0), dest) == 0


def test_route_stops_before_overshoot():
    r = generate_route((0, 0), (120, 0))
    np.testing.assert_allclose(r.waypoints, [[0, 0], [50, 0], [100, 0]], atol=1e-12)
    assert list(r.directions) == [0, 0]


def test_route_diagonal_hand_simulated():
    r = generate_route((0, 0), (100, 100))
    expected = [[i * D, i * D] for i in range(4)]
    np.testing.assert_allclose(r.waypoints, expected, atol=1e-9)
    assert list(r.directions) == [1, 1, 1]


def test_degenerate_route():
    with pytest.raises(DegenerateRouteError):
        generate_route((10, 10), (10, 10))


def test_route_skips_steps_leaving_the_area():
    # the diagonal toward the end would cross y = 6000, so the route runs along the edge
    r = generate_route((2500, 5980), (2600, 5999))
    np.testing.assert_allclose(r.waypoints, [[2500, 5980], [2550, 5980], [2600, 5980]], atol=1e-12)


def _check_route(r: Trajectory, end, extents=(5000.0, 6000.0), check_length=True):
    wp = r.waypoints
    assert len(wp) >= 2
    assert ((wp[:, 0] >= 0) & (wp[:, 0] < extents[0]) & (wp[:, 1] >= 0) & (wp[:, 1] < extents[1])).all()
    seg = np.diff(wp, axis=0)
    np.testing.assert_allclose(np.hypot(seg[:, 0], seg[:, 1]), 50.0, atol=1e-9)
    ang = np.arctan2(seg[:, 1], seg[:, 0])
    expected = r.directions * math.pi / 4
    diff = (ang - expected + math.pi) % (2 * math.pi) - math.pi
    assert np.abs(diff).max() < 1e-9
    dist = np.hypot(wp[:, 0] - end[0], wp[:, 1] - end[1])
    assert (np.diff(dist) < 0).all()
    if check_length:
        assert len(wp) <= math.ceil(dist[0] / (50.0 * math.cos(math.pi / 8))) + 1


@given(st.floats(0, 4999.99), st.floats(0, 5999.99), st.floats(0, 4999.99), st.floats(0, 5999.99))
def test_route_invariants(x0, y0, x1, y1):
    if (x0, y0) == (x1, y1):
        return
    try:
        r = generate_route((x0, y0), (x1, y1))
    except DegenerateRouteError:
        # endpoints closer than half a step: no direction improves
        assert math.dist((x0, y0), (x1, y1)) < 50.0
        return
    # next to the boundary an excluded step can force a detour that the
    # length bound does not account for, so the bound is checked only when
    # both endpoints keep a two-step margin from every edge
    margin = 100.0
    inner = all(margin <= v <= lim - margin for v, lim in ((x0, 5000), (x1, 5000), (y0, 6000), (y1, 6000)))
    _check_route(r, (x1, y1), check_length=inner)


def test_boundary_detour_example():
    # due south would leave the area; the route detours south-east then west
    r = generate_route((15.0, 36.0), (15.0, 0.0))
    assert list(r.directions) == [7, 4]
    _check_route(r, (15.0, 0.0), check_length=False)


def test_random_routes_deterministic():
    assert random_route(seed=11).identical(random_route(seed=11))
    assert not random_route(seed=11).identical(random_route(seed=12))


def test_many_random_routes_valid():
    # 2000 routes as in the evaluation; cheap enough to check all
    rng = np.random.default_rng(0)
    for _ in range(2000):
        r = random_route(seed=rng)
        assert len(r) >= 2
        wp = r.waypoints
        assert ((wp >= 0) & (wp < [5000.0, 6000.0])).all()


def test_random_route_separation():
    for s in range(50):
        r = random_route(seed=s, min_separation=1000.0)
        # the route runs at least until it is within a step of the far endpoint
        assert math.dist(r.position(0), r.position(len(r) - 1)) > 1000.0 - 50.0


def test_route_csv_round_trip():
    r = random_route(seed=5)
    buf = io.StringIO()
    r.write_csv(buf)
    assert buf.getvalue().startswith("idx,x_m,y_m,direction_idx\n0,")
    buf.seek(0)
    assert Trajectory.read_csv(buf).identical(r)
