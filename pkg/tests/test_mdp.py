import numpy as np
import pytest
from hypothesis import given, strategies as st

from droneho.errors import ConfigurationError, TerminalStateError
from droneho.mdp import HandoverEnv, RewardWeights, candidates, initial_state, reward, state_at, step
from helpers import line_grid, line_route

W19 = RewardWeights(1, 9)


def seven_cell_env(k=6, weights=W19):
    vals = [
        [0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
        [0.1, 0.9, 0.4, 0.8, 0.2, 0.3, 0.05],
        [0.5, 0.2, 0.6, 0.3, 0.7, 0.1, 0.0],
    ]
    grid = line_grid(vals)
    route = line_route(3)
    return grid, route, HandoverEnv(grid, route, weights, k)


def test_candidates_sorted_descending():
    grid, route, _ = seven_cell_env()
    assert candidates(grid, route, 0, 6) == [1, 3, 2, 5, 4, 0]
    assert candidates(grid, route, 0, 1) == [1]


def test_candidates_terminal():
    grid, route, _ = seven_cell_env()
    with pytest.raises(TerminalStateError):
        candidates(grid, route, 2, 6)


def test_reward_examples():
    assert reward(0, 1, 0.8, W19) == pytest.approx(6.2)
    assert reward(0, 0, 0.5, W19) == pytest.approx(4.5)
    w0 = RewardWeights(0, 1)
    assert reward(0, 1, 0.3, w0) == reward(0, 0, 0.3, w0)


def test_weights_validation_and_parsing():
    with pytest.raises(ConfigurationError):
        RewardWeights(0, 0)
    with pytest.raises(ConfigurationError):
        RewardWeights(-1, 2)
    assert RewardWeights.parse("5:5") == RewardWeights(5, 5)
    assert RewardWeights.parse("1/9") == W19
    with pytest.raises(ConfigurationError):
        RewardWeights.parse("1-9")


def test_step_second_strongest():
    grid, route, env = seven_cell_env()
    s0 = initial_state(grid, route)
    assert s0.serving_cell == 0
    nxt, r, terminal = step(s0, 1, grid, route, W19)
    # action 1: second strongest next cell (cell 3 at 0.8), a handover
    assert nxt.serving_cell == 3
    assert r == pytest.approx(-1 + 9 * 0.8)
    assert not terminal
    assert (nxt.x, nxt.y) == route.position(1)


def test_action_zero_on_strongest_no_handover():
    grid, route, _ = seven_cell_env()
    s = state_at(route, 1, 4)
    nxt, r, terminal = step(s, 0, grid, route, W19)
    assert nxt.serving_cell == 4
    assert r == pytest.approx(9 * 0.7)
    assert terminal


def test_step_rejects_bad_action():
    grid, route, env = seven_cell_env()
    with pytest.raises(ValueError):
        step(initial_state(grid, route), 6, grid, route, W19)
    with pytest.raises(ValueError):
        env.step(env.initial_state(), -1)
    with pytest.raises(TerminalStateError):
        env.step(env.state(2, 0), 0)


def test_env_k_validation():
    grid = line_grid([[0.1, 0.2], [0.3, 0.4]])
    with pytest.raises(ConfigurationError):
        HandoverEnv(grid, line_route(2), W19, k=3)


@given(st.integers(0, 2**31 - 1), st.integers(1, 5),
       st.tuples(st.integers(0, 5), st.integers(1, 5)))
def test_env_matches_functional_step(seed, k, w):
    rng = np.random.default_rng(seed)
    n, cells = 5, 6
    grid = line_grid(rng.random((n, cells)))
    route = line_route(n)
    weights = RewardWeights(*w)
    env = HandoverEnv(grid, route, weights, k)
    for i in range(n - 1):
        for c in range(cells):
            s = state_at(route, i, c)
            for a in range(k):
                expected = step(s, a, grid, route, weights, k)
                assert env.step(s, a) == expected
                # deterministic and bounded
                assert step(s, a, grid, route, weights, k) == expected
                assert -weights.w_ho <= expected[1] <= weights.w_rsrp
    # with no HO cost the best one-step action is 0
    env0 = HandoverEnv(grid, route, RewardWeights(0, 1), k)
    for i in range(n - 1):
        rewards = [env0.reward(i, 0, a) for a in range(k)]
        assert int(np.argmax(rewards)) == 0
