"""One-step generator: MLP trunk, manifold squash head, stop-gradient
drifting loss with analytic backprop, and the full training loop.

The loss for a batch of latents eps and frozen targets t (produced by
transporting the generator's own samples along the drift field) is

    L = mean_i d_g(f(eps_i), t_i)^2

whose ambient gradient is chained through the head Jacobian; the Euclidean
case reduces to 2 (f - t).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .drift import DriftConfig, SampleBatch, drift_field, transport_batch
from .errors import InvalidInputError
from .geometry import Manifold
from .kernels import KernelSpec
from .nn import MLP, OptimizerState, optimizer_step

HEADS = ("identity", "sphere_normalize", "hyperboloid_lift", "simplex_softmax_sqrt")

_CKPT_MAGIC = b"DRIFTLAB-CKPT-1\n"


def head_for_manifold(manifold: Manifold) -> str:
    return {
        "euclidean": "identity",
        "sphere": "sphere_normalize",
        "hyperboloid": "hyperboloid_lift",
        "sphere_product": "simplex_softmax_sqrt",
    }[manifold.family]


def raw_output_dim(manifold: Manifold) -> int:
    if manifold.family == "hyperboloid":
        return 2  # spatial coordinates; x0 comes from the lift
    return manifold.ambient_dim


@dataclass
class GeneratorParams:
    net: MLP
    head: str
    manifold: Manifold

    def __post_init__(self):
        if self.head not in HEADS:
            raise InvalidInputError(f"unknown head {self.head!r}")
        if self.net.layer_dims[-1] != raw_output_dim(self.manifold):
            raise InvalidInputError("network output dim does not match the manifold head")

    @classmethod
    def init(cls, latent_dim: int, hidden: list[int], manifold: Manifold,
             rng: np.random.Generator) -> "GeneratorParams":
        dims = [latent_dim] + list(hidden) + [raw_output_dim(manifold)]
        return cls(net=MLP.init(dims, rng), head=head_for_manifold(manifold),
                   manifold=manifold)


# ---------------------------------------------------------------------------
# Heads: forward and vector-Jacobian products


def head_forward(params: GeneratorParams, raw: np.ndarray):
    """Squash raw network output onto the manifold; cache what backward needs."""
    head = params.head
    if head == "identity":
        return raw, None
    if head == "sphere_normalize":
        u = raw.copy()
        norms = np.linalg.norm(u, axis=-1, keepdims=True)
        bad = norms[..., 0] < 1e-9
        if np.any(bad):
            u[bad, 0] += 1e-6  # documented fallback direction
            norms = np.linalg.norm(u, axis=-1, keepdims=True)
        return u / norms, (u, norms)
    if head == "hyperboloid_lift":
        x0 = np.sqrt(1.0 + np.sum(raw * raw, axis=-1, keepdims=True))
        return np.concatenate([x0, raw], axis=-1), (raw, x0)
    # simplex_softmax_sqrt
    man = params.manifold
    L, K = man.factors, man.factor_dim
    z = raw.reshape(raw.shape[0], L, K)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=-1, keepdims=True)
    s = np.sqrt(p)
    return s.reshape(raw.shape[0], L * K), (p, s)


def head_backward(params: GeneratorParams, cache, grad_f: np.ndarray) -> np.ndarray:
    """Pull an ambient gradient wrt the head output back to the raw output."""
    head = params.head
    if head == "identity":
        return grad_f
    if head == "sphere_normalize":
        u, norms = cache
        f = u / norms
        return (grad_f - np.sum(f * grad_f, axis=-1, keepdims=True) * f) / norms
    if head == "hyperboloid_lift":
        raw, x0 = cache
        g0 = grad_f[..., :1]
        # x0 = sqrt(1 + |raw|^2) so d x0 / d raw_i = raw_i / x0
        return grad_f[..., 1:] + g0 * raw / x0
    man = params.manifold
    L, K = man.factors, man.factor_dim
    p, s = cache
    g = grad_f.reshape(grad_f.shape[0], L, K)
    gs = g * s / 2.0
    return (gs - p * np.sum(gs, axis=-1, keepdims=True)).reshape(grad_f.shape[0], L * K)


# ---------------------------------------------------------------------------
# Loss


def _ambient_distance_grad(manifold: Manifold, F: np.ndarray, T: np.ndarray):
    """(loss values per sample, ambient gradient of d_g(f,t)^2 wrt f, degenerate count)."""
    fam = manifold.family
    if fam == "euclidean":
        diff = F - T
        return np.sum(diff * diff, axis=-1), 2.0 * diff, 0
    if fam == "sphere":
        c = np.clip(np.sum(F * T, axis=-1), -1.0, 1.0)
        d = np.arccos(c)
        degenerate = c <= -1.0 + 1e-9
        s = np.sqrt(np.clip(1.0 - c * c, 1e-24, None))
        coeff = np.where(d > 1e-9, d / s, 1.0)
        grad = -2.0 * coeff[..., None] * T
        grad[degenerate] = 0.0
        return d * d, grad, int(np.count_nonzero(degenerate))
    if fam == "hyperboloid":
        J = np.array([1.0, -1.0, -1.0])
        m = np.clip(np.sum(F * (T * J), axis=-1), 1.0, None)
        d = np.arccosh(m)
        sh = np.sqrt(np.clip(m * m - 1.0, 1e-24, None))
        coeff = np.where(d > 1e-9, d / sh, 1.0)
        grad = 2.0 * coeff[..., None] * (T * J)
        return d * d, grad, 0
    L, K = manifold.factors, manifold.factor_dim
    Ff = F.reshape(F.shape[0], L, K)
    Tf = T.reshape(T.shape[0], L, K)
    c = np.clip(np.sum(Ff * Tf, axis=-1), -1.0, 1.0)
    d = np.arccos(c)
    degenerate = c <= -1.0 + 1e-9
    s = np.sqrt(np.clip(1.0 - c * c, 1e-24, None))
    coeff = np.where(d > 1e-9, d / s, 1.0)
    grad = -2.0 * coeff[..., None] * Tf
    grad[degenerate] = 0.0
    return np.sum(d * d, axis=-1), grad.reshape(F.shape[0], L * K), int(np.count_nonzero(degenerate))


def forward(params: GeneratorParams, eps: np.ndarray) -> SampleBatch:
    raw, _ = params.net.forward(eps)
    out, _ = head_forward(params, raw)
    return SampleBatch(out, params.manifold, role="model_negative")


def loss_and_grad(params: GeneratorParams, eps: np.ndarray, targets: SampleBatch):
    """Mean squared (geodesic) distance to frozen targets, with exact grads."""
    raw, cache = params.net.forward(eps)
    F, head_cache = head_forward(params, raw)
    per_sample, grad_f, n_degenerate = _ambient_distance_grad(
        params.manifold, F, targets.points)
    n = eps.shape[0]
    loss = float(np.mean(per_sample))
    grad_raw = head_backward(params, head_cache, grad_f / n)
    dWs, dbs = params.net.backward(cache, grad_raw)
    return loss, dWs + dbs, n_degenerate


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int
    seed: int = 0
    latent_dim: int = 8
    hidden: tuple[int, ...] = (256, 256, 256, 256)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    grad_clip_norm: float = 1.0
    ema_decay: float = 0.999
    warmup_steps: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidInputError("steps must be >= 0")
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")


@dataclass
class TrainResult:
    params: GeneratorParams
    ema_params: GeneratorParams
    history: list[dict] = field(default_factory=list)
    degenerate_targets: int = 0
    opt_state: OptimizerState | None = None


def _ema_generator(params: GeneratorParams, state: OptimizerState) -> GeneratorParams:
    if not state.ema:
        return params
    net = params.net.copy()
    k = len(net.weights)
    for i in range(k):
        net.weights[i] = state.ema[i].copy()
        net.biases[i] = state.ema[k + i].copy()
    return GeneratorParams(net=net, head=params.head, manifold=params.manifold)


def train(config: TrainConfig, data_provider, manifold: Manifold,
          kernel: KernelSpec, drift_cfg: DriftConfig,
          params: GeneratorParams | None = None) -> TrainResult:
    """Drifting training: sample latents, transport the generated cloud along
    the drift field against a fresh data batch, regress on the frozen targets.
    """
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = GeneratorParams.init(config.latent_dim, list(config.hidden),
                                      manifold, rng)
    state = OptimizerState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                           weight_decay=config.weight_decay,
                           grad_clip_norm=config.grad_clip_norm,
                           ema_decay=config.ema_decay)
    flat = params.net.params_flat()
    state.attach(flat)
    result = TrainResult(params=params, ema_params=params, history=[])

    for step in range(config.steps):
        eps = rng.standard_normal((config.batch_size, config.latent_dim))
        gen = forward(params, eps)
        data = np.asarray(data_provider(step, rng), dtype=float)
        pos = SampleBatch(data, manifold, role="data_positive")
        V = drift_field(gen.points, pos, gen, kernel, drift_cfg)
        targets = SampleBatch(
            transport_batch(gen.points, V, manifold, drift_cfg),
            manifold, role="model_negative")
        loss, grads, n_degen = loss_and_grad(params, eps, targets)
        result.degenerate_targets += n_degen
        lr = state.lr
        if config.warmup_steps > 0:
            lr = state.lr * min(1.0, (step + 1) / config.warmup_steps)
        optimizer_step(state, flat, grads, lr=lr)
        if step % config.eval_every == 0 or step == config.steps - 1:
            vnorm = float(np.mean(manifold.tangent_norm(gen.points, V)
                                  if drift_cfg.geometry_mode == "intrinsic"
                                  else np.linalg.norm(V, axis=-1)))
            result.history.append({"step": step, "loss": loss, "mean_drift_norm": vnorm})

    result.ema_params = _ema_generator(params, state)
    result.opt_state = state
    return result


def sample(params: GeneratorParams, n: int, rng: np.random.Generator,
           latent_dim: int) -> np.ndarray:
    eps = rng.standard_normal((n, latent_dim))
    return forward(params, eps).points


# ---------------------------------------------------------------------------
# Checkpoints: magic, header (dims/head), then row-major float64 buffers,
# then optimizer and EMA buffers; written atomically (temp file + rename).


def save_checkpoint(path: str, params: GeneratorParams,
                    state: OptimizerState | None = None) -> None:
    header = {
        "layer_dims": params.net.layer_dims,
        "head": params.head,
        "manifold": {
            "family": params.manifold.family,
            "ambient_dim": params.manifold.ambient_dim,
            "factors": params.manifold.factors,
            "factor_dim": params.manifold.factor_dim,
        },
        "has_optimizer": state is not None,
    }
    hdr = json.dumps(header).encode() + b"\n"
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(_CKPT_MAGIC)
            f.write(len(hdr).to_bytes(8, "little"))
            f.write(hdr)
            for arr in params.net.params_flat():
                f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
            if state is not None:
                f.write(int(state.step).to_bytes(8, "little"))
                for group in (state.m, state.v, state.ema):
                    for arr in group:
                        f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path: str):
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise InvalidInputError(f"{path} is not a driftlab checkpoint")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen))
        dims = header["layer_dims"]
        man = Manifold(**header["manifold"])
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(np.frombuffer(f.read(8 * fan_in * fan_out),
                                         dtype=np.float64).reshape(fan_in, fan_out).copy())
        for fan_out in dims[1:]:
            biases.append(np.frombuffer(f.read(8 * fan_out), dtype=np.float64).copy())
        params = GeneratorParams(net=MLP(dims, weights, biases),
                                 head=header["head"], manifold=man)
        state = None
        if header.get("has_optimizer"):
            state = OptimizerState()
            state.step = int.from_bytes(f.read(8), "little")
            shapes = [w.shape for w in weights] + [b.shape for b in biases]
            def read_group():
                return [np.frombuffer(f.read(8 * int(np.prod(s))),
                                      dtype=np.float64).reshape(s).copy() for s in shapes]
            state.m = read_group()
            state.v = read_group()
            state.ema = read_group()
        return params, state
