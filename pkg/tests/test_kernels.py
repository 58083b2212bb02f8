"""The compiled training kernels against the numpy reference."""
import numpy as np
import pytest

from droneho import kernels
from droneho.dqn import DQNTrainer, Minibatch, TrainConfig, compute_targets
from droneho.mdp import HandoverEnv, RewardWeights
from droneho.nn import OptState, backward, forward, init_mlp, rmsprop_step
from helpers import line_grid, line_route


@pytest.fixture
def case():
    rng = np.random.default_rng(21)
    model = init_mlp(9, (16, 16), 4, rng)
    model.params[:] += rng.normal(0, 0.05, model.params.shape)
    x = rng.normal(size=(32, 9))
    return rng, model, np.array(model.dims, dtype=np.int64), x


def test_forward_and_greedy(case):
    rng, model, dims, x = case
    np.testing.assert_allclose(kernels.forward(model.params, dims, x), forward(model, x), rtol=1e-12, atol=1e-13)
    for row in x:
        assert kernels.greedy_action(model.params, dims, row) == int(np.argmax(forward(model, row)))
    flat = np.zeros_like(model.params)
    assert kernels.greedy_action(flat, dims, x[0]) == 0


def test_bootstrap_targets(case):
    rng, model, dims, x = case
    rewards = rng.normal(size=32)
    terminal = (rng.random(32) < 0.3).astype(float)
    batch = Minibatch(np.arange(32), x, rng.integers(0, 4, 32), rewards, x[::-1].copy(), terminal)
    ref = compute_targets(batch, model, model, "post", 0.3)
    got = kernels.bootstrap_targets(model.params, dims, batch.next_states, rewards, terminal, 0.3)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-13)
    assert np.array_equal(got[terminal == 1], rewards[terminal == 1])


def test_fit_taken_actions_matches_backward_and_rmsprop(case):
    rng, model, dims, x = case
    actions = rng.integers(0, 4, 32)
    y = rng.normal(size=32)
    ref = model.copy()
    opt = OptState.for_model(ref)
    targets = np.zeros((32, 4))
    targets[np.arange(32), actions] = y
    params, avg, grad = model.params.copy(), np.zeros_like(model.params), np.zeros_like(model.params)
    for _ in range(5):
        g, ref_loss = backward(ref, x, targets, actions)
        loss = kernels.fit_taken_actions(params, avg, grad, dims, x, actions, y, 1e-3, 0.9, 1e-8)
        np.testing.assert_allclose(grad, g, rtol=1e-10, atol=1e-14)
        assert loss == pytest.approx(ref_loss, rel=1e-12)
        rmsprop_step(ref, opt, g)
    np.testing.assert_allclose(params, ref.params, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(avg, opt.avg_sq, rtol=1e-9, atol=1e-18)


def test_short_training_runs_agree():
    rng = np.random.default_rng(2)
    grid = line_grid(rng.random((10, 5)))
    env = HandoverEnv(grid, line_route(10), RewardWeights(1, 9), 3)
    base = dict(episodes=2, steps=60, k=3, hidden=(8, 8), batch_size=16, replay_capacity=100, seed=4)
    fast = DQNTrainer(env, TrainConfig(**base, backend="compiled"))
    slow = DQNTrainer(env, TrainConfig(**base, backend="numpy"))
    fast.run()
    slow.run()
    np.testing.assert_allclose(fast.online.params, slow.online.params, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(fast.target.params, slow.target.params, rtol=1e-9, atol=1e-12)
    assert fast.buffer.transitions() == slow.buffer.transitions()
