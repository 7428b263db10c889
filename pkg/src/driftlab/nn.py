"""Minimal fully-connected network with analytic backprop, Adam with
decoupled weight decay, gradient clipping, and EMA shadow parameters.

Shared by the generator and the classifier-two-sample-test metric. Gradients
are exact (verified against finite differences in the test suite), which is
why this is hand-rolled rather than pulled from a framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass
class MLP:
    """Feed-forward net: Linear -> SiLU on hidden layers, linear output."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_dims: list[int], rng: np.random.Generator) -> "MLP":
        if len(layer_dims) < 2:
            raise InvalidInputError("need at least input and output dims")
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        biases[-1] = np.zeros(layer_dims[-1])
        return cls(layer_dims=list(layer_dims), weights=weights, biases=biases)

    def forward(self, x: np.ndarray):
        """Returns (output, cache) with pre-activations for backward."""
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append((h, z))
            h = silu(z) if i < last else z
        return h, pre

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(loss) given d(loss)/d(output); returns (dWs, dbs)."""
        dWs = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        g = grad_out
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h, z = cache[i]
            if i < last:
                g = g * silu_grad(z)
            dWs[i] = h.T @ g
            dbs[i] = np.sum(g, axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return dWs, dbs

    def params_flat(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "MLP":
        return MLP(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip_norm: float = 0.0  # 0 disables clipping
    ema_decay: float = 0.0  # 0 disables EMA
    step: int = 0
    skipped_steps: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    ema: list[np.ndarray] = field(default_factory=list)

    def attach(self, params: list[np.ndarray]) -> None:
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        if self.ema_decay > 0:
            self.ema = [p.copy() for p in params]


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def optimizer_step(state: OptimizerState, params: list[np.ndarray],
                   grads: list[np.ndarray], lr: float | None = None) -> None:
    """Bias-corrected Adam with decoupled weight decay; updates in place.

    Non-finite gradients skip the step (counted). EMA shadows are refreshed
    after the parameter update.
    """
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped_steps += 1
        return
    lr = state.lr if lr is None else lr
    if state.grad_clip_norm > 0:
        norm = global_norm(grads)
        if norm > state.grad_clip_norm:
            scale = state.grad_clip_norm / norm
            grads = [g * scale for g in grads]
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay > 0:
            p -= lr * state.weight_decay * p
        p -= lr * update
    if state.ema_decay > 0:
        # Warm up the decay so the shadow forgets the initialization quickly
        # instead of carrying it for ~1/(1-decay) steps.
        decay = min(state.ema_decay, (1.0 + t) / (10.0 + t))
        for e, p in zip(state.ema, params):
            e *= decay
            e += (1.0 - decay) * p
