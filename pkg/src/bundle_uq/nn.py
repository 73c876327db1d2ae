"""Small fully connected tanh networks with input tangents and exact parameter gradients.

Everything is plain numpy in double precision.  A forward pass can carry a
tangent (the derivative of every activation with respect to one input
column), and :func:`backprop` differentiates a scalar loss of both the
outputs and those tangents with respect to every weight and bias.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh",)


class ShapeError(ValueError):
    pass


@dataclass
class NetworkParams:
    """Weights and biases of an MLP with tanh hidden layers and a linear output.

    ``weights[k]`` has shape ``(layer_sizes[k+1], layer_sizes[k])``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or any(s <= 0 for s in self.layer_sizes):
            raise ShapeError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise ShapeError(f"expected {n} weight/bias pairs")
        for k in range(n):
            want = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if self.weights[k].shape != want:
                raise ShapeError(f"weights[{k}] has shape {self.weights[k].shape}, expected {want}")
            if self.biases[k].shape != (want[0],):
                raise ShapeError(f"biases[{k}] has shape {self.biases[k].shape}, expected {(want[0],)}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> "NetworkParams":
        """New params with this network's layout and values taken from ``flat``."""
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"flat vector has shape {flat.shape}, expected ({self.n_params},)")
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[i:i + w.size].reshape(w.shape))
            i += w.size
            biases.append(flat[i:i + b.size].copy())
            i += b.size
        return NetworkParams(list(self.layer_sizes), weights, biases, self.activation)

    def copy(self) -> "NetworkParams":
        return NetworkParams(list(self.layer_sizes), [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.activation)

    def map(self, fn) -> "NetworkParams":
        return NetworkParams(list(self.layer_sizes), [fn(w) for w in self.weights],
                             [fn(b) for b in self.biases], self.activation)

    def zeros_like(self) -> "NetworkParams":
        return self.map(np.zeros_like)


def init_params(layer_sizes, rng: np.random.Generator) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(list(layer_sizes), weights, biases)


def _check_inputs(params: NetworkParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(f"expected inputs with {params.in_dim} columns, got shape {x.shape}")
    return x


def forward(params: NetworkParams, inputs) -> np.ndarray:
    a = _check_inputs(params, inputs)
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if k < last:
            a = np.tanh(a)
    return a


@dataclass
class DualBatch:
    values: np.ndarray
    tangents: np.ndarray


@dataclass
class Tape:
    """Activations (and tangents) recorded on a forward pass, consumed by :func:`backprop`."""

    params_id: int
    activations: list[np.ndarray]
    tangents: list[np.ndarray] | None = field(default=None)
    pre_tangents: list[np.ndarray] | None = field(default=None)

    @property
    def values(self) -> np.ndarray:
        return self.activations[-1]

    @property
    def output_tangents(self) -> np.ndarray | None:
        return None if self.tangents is None else self.tangents[-1]


def record(params: NetworkParams, inputs, time_column: int | None = None) -> Tape:
    """Forward pass that keeps what :func:`backprop` needs.

    With ``time_column`` set, dual numbers are propagated alongside the values:
    the tangent is seeded with 1 on that input column and 0 elsewhere.
    """
    a = _check_inputs(params, inputs)
    acts = [a]
    tans = pre = None
    if time_column is not None:
        if not 0 <= time_column < params.in_dim:
            raise IndexError(f"time_column {time_column} out of range for input dim {params.in_dim}")
        t = np.zeros_like(a)
        t[:, time_column] = 1.0
        tans = [t]
        pre = [None]
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        if tans is not None:
            dz = tans[-1] @ w.T
            pre.append(dz)
        if k < last:
            a = np.tanh(z)
            if tans is not None:
                dz = (1.0 - a * a) * dz
        else:
            a = z
        acts.append(a)
        if tans is not None:
            tans.append(dz)
    return Tape(id(params), acts, tans, pre)


def forward_with_time_derivative(params: NetworkParams, inputs, time_column: int = 0) -> DualBatch:
    tape = record(params, inputs, time_column)
    return DualBatch(tape.values, tape.output_tangents)


def backprop(params: NetworkParams, tape: Tape, grad_values, grad_tangents=None) -> NetworkParams:
    """Gradient of a scalar loss with respect to all weights and biases.

    ``grad_values`` is dL/d(outputs) and ``grad_tangents`` dL/d(output tangents),
    both of shape (batch, out_dim).  Tangent paths are differentiated in reverse
    mode through the forward-mode recursion.
    """
    if tape.params_id != id(params):
        raise ValueError("tape was recorded with a different NetworkParams object")
    acts, tans = tape.activations, tape.tangents
    ga = np.asarray(grad_values, dtype=float)
    if ga.shape != acts[-1].shape:
        raise ShapeError(f"grad_values shape {ga.shape} != output shape {acts[-1].shape}")
    gt = None
    if grad_tangents is not None:
        if tans is None:
            raise ValueError("tangent gradient given but the tape has no tangents")
        gt = np.asarray(grad_tangents, dtype=float)
        if gt.shape != ga.shape:
            raise ShapeError(f"grad_tangents shape {gt.shape} != output shape {ga.shape}")

    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        w = params.weights[k]
        if k == params.n_layers - 1:
            gz, gdz = ga, gt
        else:
            a = acts[k + 1]
            s = 1.0 - a * a
            gz = ga * s
            if gt is not None:
                # tangent out = s * dz, so d/dz picks up ds/dz = -2 a s
                gz = gz - 2.0 * gt * tape.pre_tangents[k + 1] * a * s
                gdz = gt * s
            else:
                gdz = None
        gw[k] = gz.T @ acts[k]
        gb[k] = gz.sum(axis=0)
        if gdz is not None:
            gw[k] += gdz.T @ tans[k]
        if k > 0:
            ga = gz @ w
            gt = None if gdz is None else gdz @ w
    return NetworkParams(list(params.layer_sizes), gw, gb, params.activation)


def _check_finite(grads: NetworkParams):
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")


@dataclass
class AdamState:
    first_moment: NetworkParams
    second_moment: NetworkParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0, lr, **kw)


def adam_step(state: AdamState, params: NetworkParams, grads: NetworkParams):
    """One bias-corrected Adam update. Returns ``(new_state, new_params)``."""
    _check_finite(grads)
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = [b1 * m_ + (1 - b1) * g for m_, g in zip(_arrays(state.first_moment), _arrays(grads))]
    v = [b2 * v_ + (1 - b2) * g * g for v_, g in zip(_arrays(state.second_moment), _arrays(grads))]
    c1 = 1 - b1 ** step
    c2 = 1 - b2 ** step
    new = [p - state.lr * (m_ / c1) / (np.sqrt(v_ / c2) + state.eps)
           for p, m_, v_ in zip(_arrays(params), m, v)]
    new_state = AdamState(_rebuild(params, m), _rebuild(params, v), step,
                          state.lr, state.beta1, state.beta2, state.eps)
    return new_state, _rebuild(params, new)


def _arrays(p: NetworkParams) -> list[np.ndarray]:
    return [*p.weights, *p.biases]


def _rebuild(template: NetworkParams, arrays) -> NetworkParams:
    n = template.n_layers
    return NetworkParams(list(template.layer_sizes), list(arrays[:n]), list(arrays[n:]),
                         template.activation)


class FlatAdam:
    """Adam on a flat parameter vector (used by the variational trainer)."""

    def __init__(self, size: int, lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.step = 0
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def update(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        self.step += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.step)
        vhat = self.v / (1 - self.beta2 ** self.step)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- stacked evaluation: many parameter vectors, one batch of inputs ---------

def forward_many(template: NetworkParams, flat_params: np.ndarray, inputs) -> np.ndarray:
    """Evaluate ``S`` parameter vectors (rows of ``flat_params``) on the same inputs.

    Returns an array of shape (S, batch, out_dim).
    """
    x = _check_inputs(template, inputs)
    flat_params = np.atleast_2d(flat_params)
    a = np.broadcast_to(x, (flat_params.shape[0],) + x.shape)
    i = 0
    last = template.n_layers - 1
    for k, w in enumerate(template.weights):
        nw = w.size
        W = flat_params[:, i:i + nw].reshape((-1,) + w.shape)
        i += nw
        b = flat_params[:, i:i + w.shape[0]]
        i += w.shape[0]
        a = a @ W.transpose(0, 2, 1) + b[:, None, :]
        if k < last:
            a = np.tanh(a)
    return a


# -- checkpoints --------------------------------------------------------------

def params_to_dict(params: NetworkParams) -> dict:
    return {
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "weights": [[float(v) for v in w.ravel()] for w in params.weights],
        "biases": [[float(v) for v in b] for b in params.biases],
    }


def params_from_dict(d: dict) -> NetworkParams:
    sizes = [int(s) for s in d["layer_sizes"]]
    weights = [np.array(w, dtype=float).reshape(sizes[k + 1], sizes[k])
               for k, w in enumerate(d["weights"])]
    biases = [np.array(b, dtype=float) for b in d["biases"]]
    return NetworkParams(sizes, weights, biases, d.get("activation", "tanh"))


def save_checkpoint(path, params: NetworkParams, model_id: str, seed: int,
                    iterations_trained: int, **extra) -> Path:
    path = Path(path)
    payload = {"model_id": model_id, **params_to_dict(params), "seed": int(seed),
               "iterations_trained": int(iterations_trained), **extra}
    # float repr is shortest-round-trip, so decimal text reloads bit-exactly
    path.write_text(json.dumps(payload, indent=1))
    return path


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    d = json.loads(Path(path).read_text())
    return params_from_dict(d), d
