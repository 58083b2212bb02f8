"""Small fully connected network with hand-written backprop and RMSprop.

Parameters of all layers live in one flat float64 vector; each layer's
weight matrix (out x in) and bias vector are views into it. Gradients use
the same flat layout, so the optimizer works on a single array.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
RELU = "relu"
IDENTITY = "identity"


def n_parameters(dims: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))


def _layer_views(vec: np.ndarray, dims: Sequence[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    views, off = [], 0
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        w = vec[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = vec[off:off + n_out]
        off += n_out
        views.append((w, b))
    return views


class MlpModel:
    """Feed-forward network: ReLU hidden layers, identity output layer."""

    def __init__(self, dims: Sequence[int], params: np.ndarray | None = None,
                 activations: Sequence[str] | None = None):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError(f"bad layer dims {self.dims}")
        n_layers = len(self.dims) - 1
        if activations is None:
            activations = [RELU] * (n_layers - 1) + [IDENTITY]
        if len(activations) != n_layers or activations[-1] != IDENTITY:
            raise ValueError("need one activation per layer and an identity output")
        self.activations = tuple(activations)
        size = n_parameters(self.dims)
        self.params = np.zeros(size) if params is None else np.array(params, dtype=float)
        if self.params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got shape {self.params.shape}")
        self.layers = _layer_views(self.params, self.dims)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def layer_views(self, vec: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer (W, b) views of any array laid out like the parameters."""
        return _layer_views(vec, self.dims)

    def copy(self) -> "MlpModel":
        return MlpModel(self.dims, self.params.copy(), self.activations)

    def load_params(self, other: "MlpModel") -> None:
        np.copyto(self.params, other.params)

    def equals(self, other: "MlpModel") -> bool:
        return self.dims == other.dims and np.array_equal(self.params, other.params)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "input_dim": self.input_dim,
            "layers": [
                {
                    "in": int(w.shape[1]),
                    "out": int(w.shape[0]),
                    "activation": act,
                    "weights": w.ravel().tolist(),
                    "biases": b.tolist(),
                }
                for (w, b), act in zip(self.layers, self.activations)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        layers = d["layers"]
        dims = [d["input_dim"]] + [layer["out"] for layer in layers]
        model = cls(dims, activations=[layer["activation"] for layer in layers])
        for (w, b), layer in zip(model.layers, layers):
            w[...] = np.asarray(layer["weights"], dtype=float).reshape(w.shape)
            b[...] = layer["biases"]
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_mlp(input_dim: int, hidden_dims: Sequence[int], k: int, seed) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    dims = [input_dim, *hidden_dims, k]
    if min(dims) < 1:
        raise ValueError("dimensions must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    model = MlpModel(dims)
    for w, _ in model.layers:
        bound = 1.0 / np.sqrt(w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return model


def _forward_cache(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    a = x
    for (w, b), act in zip(model.layers, model.activations):
        a = a @ w.T
        a += b
        if act == RELU:
            np.maximum(a, 0.0, out=a)
        acts.append(a)
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Q-values for one input (k,) or a batch (B, k)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.input_dim}")
    return _forward_cache(model, x)[-1]


def _as_mask(action_mask, shape: tuple[int, ...]) -> np.ndarray:
    if action_mask is None:
        return np.ones(shape)
    am = np.asarray(action_mask)
    if np.issubdtype(am.dtype, np.integer) and am.shape == shape[:-1]:
        mask = np.zeros(shape)
        mask[np.arange(shape[0]), am] = 1.0
        return mask
    return np.broadcast_to(am.astype(float), shape)


def _output_delta(pred: np.ndarray, target: np.ndarray, action_mask) -> tuple[np.ndarray, float]:
    """dLoss/dpred and the loss for the masked mean squared error."""
    am = None if action_mask is None else np.asarray(action_mask)
    if am is not None and np.issubdtype(am.dtype, np.integer) and am.shape == pred.shape[:-1]:
        # one taken action per sample: only those outputs carry error
        rows = np.arange(len(am))
        diff = target[rows, am] - pred[rows, am]
        n = len(am)
        delta = np.zeros_like(pred)
        delta[rows, am] = diff * (-2.0 / n)
        return delta, float(diff @ diff) / n
    mask = _as_mask(am, pred.shape)
    diff = (target - pred) * mask
    n = mask.sum()
    return diff * (-2.0 / n), float((diff * diff).sum() / n)


def backward(model: MlpModel, x, target, action_mask=None, out: np.ndarray | None = None):
    """Gradient of the masked mean squared error and the loss value.

    loss = sum(mask * (target - y)^2) / sum(mask). `action_mask` is a 0/1
    array shaped like `target`, an integer array of taken actions (one per
    sample), or None for all outputs. Returns (flat gradient, loss).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.input_dim}")
    if target.shape != (x.shape[0], model.output_dim):
        raise ValueError("target must have shape (batch, k)")

    acts = _forward_cache(model, x)
    delta, loss = _output_delta(acts[-1], target, action_mask)

    grad = np.empty_like(model.params) if out is None else out
    grads = model.layer_views(grad)
    for li in range(len(model.layers) - 1, -1, -1):
        gw, gb = grads[li]
        np.dot(delta.T, acts[li], out=gw)
        np.sum(delta, axis=0, out=gb)
        if li > 0:
            delta = delta @ model.layers[li][0]
            if model.activations[li - 1] == RELU:
                # relu'(z) is 1 exactly where the stored activation is positive
                delta *= acts[li] > 0
    return grad, loss


def loss_value(model: MlpModel, x, target, action_mask=None) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    mask = _as_mask(action_mask, target.shape)
    diff = (target - forward(model, x)) * mask
    return float((diff * diff).sum() / mask.sum())


@dataclass
class OptState:
    """RMSprop running average of squared gradients."""

    avg_sq: np.ndarray
    learning_rate: float = 1e-3
    decay: float = 0.9
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float = 1e-3, decay: float = 0.9,
                  eps: float = 1e-8) -> "OptState":
        return cls(np.zeros_like(model.params), learning_rate, decay, eps)

    def scratch(self) -> np.ndarray:
        buf = getattr(self, "_scratch", None)
        if buf is None or buf.shape != self.avg_sq.shape:
            buf = self._scratch = np.empty_like(self.avg_sq)
        return buf


def rmsprop_step(model: MlpModel, state: OptState, grad: np.ndarray) -> MlpModel:
    """avg <- decay*avg + (1-decay)*g^2;  w <- w - lr*g/(sqrt(avg)+eps). In place."""
    if grad.shape != model.params.shape or state.avg_sq.shape != model.params.shape:
        raise ValueError("gradient / optimizer state shape mismatch")
    avg = state.avg_sq
    tmp = state.scratch()
    avg *= state.decay
    np.multiply(grad, grad, out=tmp)
    tmp *= 1.0 - state.decay
    avg += tmp
    np.sqrt(avg, out=tmp)
    tmp += state.eps
    np.divide(grad, tmp, out=tmp)
    tmp *= state.learning_rate
    model.params -= tmp
    return model


class _ExtendedLoss:
    """Masked MSE under single-parameter nudges, in extended precision.

    Nudging one weight or bias of layer li moves one pre-activation column
    of that layer only, so the cached activations before it are reused and
    only the layers after it are recomputed.
    """

    def __init__(self, model: MlpModel, x: np.ndarray, target: np.ndarray, mask: np.ndarray):
        ld = np.longdouble
        self.model = model
        self.layers = [(w.astype(ld), b.astype(ld)) for w, b in model.layers]
        self.target = target.astype(ld)
        self.mask = mask.astype(ld)
        self.n = mask.sum()
        self.acts, self.pre = [x.astype(ld)], []
        for li, (w, b) in enumerate(self.layers):
            z = self.acts[-1] @ w.T + b
            self.pre.append(z)
            self.acts.append(self._activate(li, z))

    def _activate(self, li, z):
        return np.maximum(z, 0) if self.model.activations[li] == RELU else z

    def nudged(self, li: int, unit: int, shift: np.ndarray) -> np.longdouble:
        """Loss with `shift` added to pre-activation column `unit` of layer `li`."""
        a = self.acts[li + 1].copy()
        z = self.pre[li][:, unit] + shift
        a[:, unit] = self._activate(li, z)
        for lj in range(li + 1, len(self.layers)):
            w, b = self.layers[lj]
            a = self._activate(lj, a @ w.T + b)
        diff = (self.target - a) * self.mask
        return (diff * diff).sum() / self.n

    def central_differences(self, h: float) -> np.ndarray:
        h_ld = np.longdouble(h)
        out = np.empty(self.model.params.size)
        pos = 0
        for li, (w, _) in enumerate(self.layers):
            n_out, n_in = w.shape
            a_in = self.acts[li]
            for o in range(n_out):
                for i in range(n_in):
                    up = self.nudged(li, o, h_ld * a_in[:, i])
                    down = self.nudged(li, o, -h_ld * a_in[:, i])
                    out[pos + o * n_in + i] = float((up - down) / (2 * h_ld))
            pos += n_out * n_in
            for o in range(n_out):
                out[pos + o] = float((self.nudged(li, o, h_ld) - self.nudged(li, o, -h_ld)) / (2 * h_ld))
            pos += n_out
        return out


def grad_check(model: MlpModel, x, target, h: float = 1e-5, action_mask=None) -> float:
    """Max relative error between backward() and central differences.

    The finite differences use an extended-precision loss, so that their
    rounding noise (about eps * loss / h) stays well below the smallest
    gradient components being compared. A configuration with zero loss
    sits at a minimum where both gradients vanish; its error is defined
    as 0.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    analytic, loss = backward(model, x, target, action_mask)
    if loss == 0.0:
        return 0.0
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    numeric = _ExtendedLoss(model, x, target, _as_mask(action_mask, target.shape)).central_differences(h)
    err = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(err.max())
