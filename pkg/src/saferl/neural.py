"""Small fully connected Q-network with hand-written backprop and Adam.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(B, fan_in)`` maps to ``X @ W + b``. Hidden layers use ReLU, the
output layer is linear.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

Q_NET_DIMS = (12, 64, 64, 5)


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class GradBundle:
    loss: float
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-4, **kwargs) -> "AdamState":
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls(lr=lr, m=zeros, v=[z.copy() for z in zeros], **kwargs)


def mlp_init(dims=Q_NET_DIMS, seed=0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Q-values for a single input vector or a ``(B, n_in)`` batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.weights[0].shape[0]:
        raise ValueError(f"expected input length {net.weights[0].shape[0]}, got {x.shape[-1]}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def loss_and_grads(net: Mlp, x: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> GradBundle:
    """Gradient of 0.5 * mean_i (y_i - Q(x_i)[a_i])^2 over all parameters."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")

    acts = [x]
    pre = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)

    rows = np.arange(n)
    err = h[rows, actions] - targets
    loss = 0.5 * float(np.mean(err**2))

    delta = np.zeros_like(h)
    delta[rows, actions] = err / n
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    for i in range(last, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre[i - 1] > 0)
    return GradBundle(loss, gw, gb)


def adam_step(net: Mlp, adam: AdamState, grads: GradBundle) -> tuple[Mlp, AdamState]:
    """Bias-corrected Adam update, applied in place; returns its arguments."""
    params = net.params()
    gparams = grads.params()
    if len(params) != len(gparams) or any(p.shape != g.shape for p, g in zip(params, gparams)):
        raise ValueError("gradient shapes do not match the network")
    if not adam.m:
        adam.m = [np.zeros_like(p) for p in params]
        adam.v = [np.zeros_like(p) for p in params]
    adam.t += 1
    c1 = 1.0 - adam.beta1**adam.t
    c2 = 1.0 - adam.beta2**adam.t
    for p, g, m, v in zip(params, gparams, adam.m, adam.v):
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        p -= adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)
    return net, adam


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: int
    worst_index: tuple

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(net: Mlp, x, actions, targets, step: float = 1e-5) -> GradCheckReport:
    """Compare backprop against central differences for every parameter.

    The relative error uses ``|a - n| / max(|a| + |n|, 1e-8)`` so entries
    with vanishing gradients (dead ReLUs) do not blow the ratio up.
    """
    analytic = loss_and_grads(net, x, actions, targets).params()
    worst = (0.0, 0, ())
    probe = net.copy()
    for k, p in enumerate(probe.params()):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = loss_and_grads(probe, x, actions, targets).loss
            p[idx] = orig - step
            down = loss_and_grads(probe, x, actions, targets).loss
            p[idx] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[k][idx]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8)
            if rel > worst[0]:
                worst = (rel, k, idx)
    return GradCheckReport(*worst)


def serialize(net: Mlp) -> bytes:
    payload = {
        "dims": net.dims,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    return json.dumps(payload).encode()


def deserialize(data: bytes) -> Mlp:
    try:
        payload = json.loads(data)
        dims = payload["dims"]
        weights = [np.array(w, dtype=float).reshape(i, o) for w, i, o in zip(payload["weights"], dims[:-1], dims[1:])]
        biases = [np.array(b, dtype=float).reshape(o) for b, o in zip(payload["biases"], dims[1:])]
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"malformed network payload: {exc}") from exc
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise ValueError("malformed network payload: layer count does not match dims")
    return Mlp(weights, biases)
