"""Compiled versions of the hot DQN training operations.

Each function here mirrors a numpy reference in :mod:`droneho.nn` /
:mod:`droneho.dqn` on the same flat parameter layout; results agree with
the reference to rounding error (summation order differs). The training loop
calls one fused update per step, which removes most per-call overhead of the
small 64-wide matrices.

All kernels use numba's numpy error model: float division follows IEEE
rules instead of raising, which lets LLVM vectorize the elementwise loops
(the optimizer update runs about twice as fast). No kernel divides by a
value that can be zero, so results are unchanged.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy")
def _offsets(dims):
    n_layers = dims.shape[0] - 1
    off = np.zeros(n_layers + 1, np.int64)
    for li in range(n_layers):
        off[li + 1] = off[li] + dims[li + 1] * dims[li] + dims[li + 1]
    return off


@njit(cache=True, error_model="numpy")
def _affine(params, off, dims, li, a, relu):
    n_in, n_out = dims[li], dims[li + 1]
    w = params[off[li]:off[li] + n_out * n_in].reshape(n_out, n_in)
    b = params[off[li] + n_out * n_in:off[li + 1]]
    z = np.dot(a, w.T)
    for i in range(z.shape[0]):
        for j in range(n_out):
            v = z[i, j] + b[j]
            z[i, j] = v if (not relu or v > 0.0) else 0.0
    return z


@njit(cache=True, error_model="numpy")
def forward(params, dims, x):
    """Batch forward pass, x of shape (B, dims[0])."""
    off = _offsets(dims)
    n_layers = dims.shape[0] - 1
    a = x
    for li in range(n_layers):
        a = _affine(params, off, dims, li, a, li < n_layers - 1)
    return a


@njit(cache=True, error_model="numpy")
def greedy_action(params, dims, x):
    """argmax of the Q-values for one input vector; ties go to the lowest index."""
    q = forward(params, dims, x.reshape(1, x.shape[0]))
    best = 0
    for j in range(1, q.shape[1]):
        if q[0, j] > q[0, best]:
            best = j
    return best


@njit(cache=True, error_model="numpy")
def bootstrap_targets(target, dims, x_next, rewards, terminal, discount):
    """r + discount * max_a' target-Q(s', a'), with no bootstrap on terminal samples."""
    y = rewards.copy()
    q_next = forward(target, dims, x_next)
    k = q_next.shape[1]
    for i in range(y.shape[0]):
        if terminal[i] == 0.0:
            best = q_next[i, 0]
            for j in range(1, k):
                if q_next[i, j] > best:
                    best = q_next[i, j]
            y[i] += discount * best
    return y


@njit(cache=True, error_model="numpy")
def fit_taken_actions(params, avg, grad, dims, x, actions, y, lr, decay, eps):
    """One RMSprop step on mean((y - Q(x, a))^2) over the taken actions.

    Writes the gradient into `grad`, updates `params` and `avg` in place and
    returns the loss before the step.
    """
    n_batch = x.shape[0]
    n_layers = dims.shape[0] - 1
    off = _offsets(dims)
    k = dims[n_layers]

    acts = [x]
    a = x
    for li in range(n_layers):
        a = _affine(params, off, dims, li, a, li < n_layers - 1)
        acts.append(a)

    pred = acts[n_layers]
    delta = np.zeros((n_batch, k))
    loss = 0.0
    for i in range(n_batch):
        d = y[i] - pred[i, actions[i]]
        loss += d * d
        delta[i, actions[i]] = d * (-2.0 / n_batch)
    loss /= n_batch

    for li in range(n_layers - 1, -1, -1):
        n_in, n_out = dims[li], dims[li + 1]
        base = off[li]
        gw = np.dot(delta.T, acts[li])
        grad[base:base + n_out * n_in] = gw.ravel()
        for j in range(n_out):
            s = 0.0
            for i in range(n_batch):
                s += delta[i, j]
            grad[base + n_out * n_in + j] = s
        if li > 0:
            w = params[base:base + n_out * n_in].reshape(n_out, n_in)
            nd = np.dot(delta, w)
            prev = acts[li]
            for i in range(n_batch):
                for j in range(n_in):
                    if prev[i, j] <= 0.0:
                        nd[i, j] = 0.0
            delta = nd

    for p in range(params.shape[0]):
        g = grad[p]
        avg[p] = avg[p] * decay + g * g * (1.0 - decay)
        params[p] -= g / (np.sqrt(avg[p]) + eps) * lr
    return loss


@njit(cache=True, error_model="numpy")
def floyd_sample(u, n):
    """len(u) distinct indices from range(n), every subset equally likely.

    Floyd's algorithm driven by the uniforms `u`: step j draws t from 0..j
    and takes j instead when t was already chosen.
    """
    m = u.shape[0]
    out = np.empty(m, np.int64)
    for jj in range(m):
        j = n - m + jj
        t = min(int(u[jj] * (j + 1)), j)
        for q in range(jj):
            if out[q] == t:
                t = j
                break
        out[jj] = t
    return out


@njit(cache=True, error_model="numpy")
def _gather(rows, idx):
    out = np.empty((idx.shape[0], rows.shape[1]))
    for i in range(idx.shape[0]):
        out[i] = rows[idx[i]]
    return out


@njit(cache=True, error_model="numpy")
def replay_targets(target, dims, next_states, rewards, terminal, idx, discount, bootstrap):
    """Targets for the buffer rows `idx`: rewards only, or bootstrapped from `target`."""
    r = rewards[idx]
    if not bootstrap:
        return r
    return bootstrap_targets(target, dims, _gather(next_states, idx), r, terminal[idx], discount)


@njit(cache=True, error_model="numpy")
def replay_fit(params, avg, grad, dims, states, actions, idx, y, lr, decay, eps):
    """fit_taken_actions on the buffer rows `idx`."""
    return fit_taken_actions(params, avg, grad, dims, _gather(states, idx), actions[idx], y, lr, decay, eps)
