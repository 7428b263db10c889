"""Drift fields: displacement-based and kernel-gradient, with transport,
smoothed-density estimates, and the diagnostic probes built on them.

The drift at a query point x against positive (data) and negative (model)
batches is

    V(x)      = E_pos[k dir] / E_pos[k] - E_neg[k dir] / E_neg[k]   (base)
    V_grad(x) = E_pos[grad k] / E_pos[k] - E_neg[grad k] / E_neg[k] (gradient)

with dir = y - x in ambient mode and dir = Log_x(y) in intrinsic mode.
Expectations are batch means; weights are accumulated in log space with a
max-shift so small bandwidths cannot underflow the ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UnderflowError_
from .geometry import Manifold, ManifoldPoint, TangentVector
from .kernels import GEODESIC_FAMILIES, KernelSpec, kernel_matrix

_LOG_UNDERFLOW = np.log(1e-300)
_TINY = 1e-12


@dataclass(frozen=True)
class DriftConfig:
    eta: float
    eta_max: float = 1.0
    mode: str = "gradient"  # base | gradient
    geometry_mode: str = "intrinsic"  # euclidean_ambient | intrinsic

    def __post_init__(self):
        if not self.eta >= 0:
            raise InvalidInputError("eta must be nonnegative")
        if not self.eta_max > 0:
            raise InvalidInputError("eta_max must be positive")
        if self.mode not in ("base", "gradient"):
            raise InvalidInputError(f"unknown drift mode {self.mode!r}")
        if self.geometry_mode not in ("euclidean_ambient", "intrinsic"):
            raise InvalidInputError(f"unknown geometry mode {self.geometry_mode!r}")


@dataclass
class SampleBatch:
    points: np.ndarray  # (n, ambient_dim)
    manifold: Manifold
    role: str = "data_positive"  # data_positive | model_negative

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise InvalidInputError("sample batch must be nonempty")
        if self.points.shape[1] != self.manifold.ambient_dim:
            raise InvalidInputError("batch dimension does not match the manifold")
        if self.role not in ("data_positive", "model_negative"):
            raise InvalidInputError(f"unknown batch role {self.role!r}")

    def __len__(self) -> int:
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# Core field computation


def _row_weights(logk: np.ndarray) -> np.ndarray:
    rowmax = np.max(logk, axis=1, keepdims=True)
    if np.any(rowmax < _LOG_UNDERFLOW):
        raise UnderflowError_(
            "all kernel weights below 1e-300 for at least one query point"
        )
    w = np.exp(logk - rowmax)
    return w / np.sum(w, axis=1, keepdims=True)


def _log_directions(manifold: Manifold, X: np.ndarray, Y: np.ndarray):
    """Log_x(y) in factored (ay, ax) coefficient form; see kernels.GradForm."""
    fam = manifold.family
    n, m = X.shape[0], Y.shape[0]
    if fam == "euclidean":
        ay = np.ones((n, m, 1))
        return ay, -ay, False
    if fam == "sphere":
        c = np.clip(X @ Y.T, -1.0, 1.0)
        d = np.arccos(c)
        s = np.sqrt(np.clip(1.0 - c * c, _TINY**2, None))
        alpha = np.where(d > 1e-9, d / s, 1.0)
        return alpha[..., None], (-alpha * c)[..., None], False
    if fam == "hyperboloid":
        J = np.array([1.0, -1.0, -1.0])
        mm = np.clip((X * J) @ Y.T, 1.0, None)
        d = np.arccosh(mm)
        sh = np.sqrt(np.clip(mm * mm - 1.0, _TINY**2, None))
        alpha = np.where(d > 1e-9, d / sh, 1.0)
        return alpha[..., None], (-alpha * mm)[..., None], False
    L, K = manifold.factors, manifold.factor_dim
    Xf = X.reshape(n, L, K)
    Yf = Y.reshape(m, L, K)
    c = np.clip(np.einsum("ilk,jlk->ijl", Xf, Yf), -1.0, 1.0)
    d = np.arccos(c)
    s = np.sqrt(np.clip(1.0 - c * c, _TINY**2, None))
    alpha = np.where(d > 1e-9, d / s, 1.0)
    return alpha, -alpha * c, False


def _combine(W, ay, ax, flip_y, X, Y):
    """V_i = sum_j W_ij (ay_ijf (M y_j)_f + ax_ijf (x_i)_f), per factor block f."""
    n, m, F = ay.shape
    d = X.shape[-1]
    block = d // F
    Ym = Y
    if flip_y:
        Ym = Y.copy()
        Ym[..., 1:] = -Ym[..., 1:]
    Yb = Ym.reshape(m, F, block)
    Xb = X.reshape(n, F, block)
    Vy = np.einsum("ijf,jfk->ifk", W[..., None] * ay, Yb)
    Vx = np.sum(W * ax[..., 0], axis=1)[..., None] * Xb[:, 0, :] if F == 1 else None
    if F == 1:
        return (Vy[:, 0, :] + Vx).reshape(n, d)
    Vx_full = np.sum(W[..., None] * ax, axis=1)[..., None] * Xb
    return (Vy + Vx_full).reshape(n, d)


def _component(X, batch_points, spec, manifold, cfg, diagnostics=None):
    if cfg.geometry_mode == "euclidean_ambient":
        eval_manifold = Manifold("euclidean", manifold.ambient_dim)
    else:
        eval_manifold = manifold
    logk, form = kernel_matrix(spec, eval_manifold, X, batch_points, diagnostics)
    W = _row_weights(logk)
    if cfg.mode == "gradient":
        return _combine(W, form.ay, form.ax, form.flip_y, X, batch_points)
    if cfg.geometry_mode == "euclidean_ambient":
        return W @ batch_points - X
    ay, ax, flip = _log_directions(manifold, X, batch_points)
    return _combine(W, ay, ax, flip, X, batch_points)


def drift_field(
    X,
    pos: SampleBatch,
    neg: SampleBatch,
    spec: KernelSpec,
    cfg: DriftConfig,
    diagnostics=None,
) -> np.ndarray:
    """Drift vectors for query points X (n, d); tangent in intrinsic mode."""
    if pos.role != "data_positive" or neg.role != "model_negative":
        raise InvalidInputError("pos must be data_positive and neg model_negative")
    if pos.manifold != neg.manifold:
        raise InvalidInputError("batches live on different manifolds")
    manifold = pos.manifold
    X = np.atleast_2d(np.asarray(X, dtype=float))
    attract = _component(X, pos.points, spec, manifold, cfg, diagnostics)
    repel = _component(X, neg.points, spec, manifold, cfg, diagnostics)
    V = attract - repel
    if cfg.geometry_mode == "intrinsic":
        if cfg.mode == "gradient":
            V = manifold.project_tangent(X, V)
        else:
            V = manifold.tangentialize(X, V)
    return V


def _single(x) -> tuple[np.ndarray, Manifold]:
    if isinstance(x, ManifoldPoint):
        return x.coords, x.manifold
    raise InvalidInputError("expected a ManifoldPoint")


def base_drift(x: ManifoldPoint, pos: SampleBatch, neg: SampleBatch,
               spec: KernelSpec, cfg: DriftConfig) -> TangentVector:
    cfg = DriftConfig(cfg.eta, cfg.eta_max, "base", cfg.geometry_mode)
    xc, man = _single(x)
    V = drift_field(xc[None, :], pos, neg, spec, cfg)[0]
    if cfg.geometry_mode == "euclidean_ambient":
        return TangentVector(ManifoldPoint(xc, Manifold("euclidean", man.ambient_dim)), V)
    return TangentVector(x, V)


def gradient_drift(x: ManifoldPoint, pos: SampleBatch, neg: SampleBatch,
                   spec: KernelSpec, cfg: DriftConfig) -> TangentVector:
    cfg = DriftConfig(cfg.eta, cfg.eta_max, "gradient", cfg.geometry_mode)
    xc, man = _single(x)
    V = drift_field(xc[None, :], pos, neg, spec, cfg)[0]
    if cfg.geometry_mode == "euclidean_ambient":
        return TangentVector(ManifoldPoint(xc, Manifold("euclidean", man.ambient_dim)), V)
    return TangentVector(x, V)


# ---------------------------------------------------------------------------
# Transport


def transport_batch(X, V, manifold: Manifold, cfg: DriftConfig) -> np.ndarray:
    """x -> Exp_x(cap(eta V)) intrinsically, or project(x + cap(eta V)) in ambient mode."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    step = cfg.eta * V
    if cfg.geometry_mode == "intrinsic":
        norms = manifold.tangent_norm(X, step)
    else:
        norms = np.linalg.norm(step, axis=-1)
    scale = np.where(norms > cfg.eta_max, cfg.eta_max / np.where(norms > 0, norms, 1.0), 1.0)
    step = step * scale[..., None]
    if cfg.geometry_mode == "intrinsic":
        return manifold.exp(X, step)
    return manifold.project(X + step)


def transport(x: ManifoldPoint, v: TangentVector, cfg: DriftConfig) -> ManifoldPoint:
    out = transport_batch(x.coords[None, :], v.components[None, :], x.manifold, cfg)[0]
    return ManifoldPoint(out, x.manifold)


# ---------------------------------------------------------------------------
# Smoothed densities and oracles


def smoothed_log_density_batch(X, batch: SampleBatch, spec: KernelSpec,
                               manifold: Manifold | None = None) -> np.ndarray:
    """log of the batch-mean kernel value at each query point (max-shifted)."""
    manifold = manifold or batch.manifold
    X = np.atleast_2d(np.asarray(X, dtype=float))
    logk, _ = kernel_matrix(spec, manifold, X, batch.points)
    rowmax = np.max(logk, axis=1)
    if np.any(rowmax < _LOG_UNDERFLOW):
        raise UnderflowError_("all kernel weights underflowed")
    return rowmax + np.log(np.mean(np.exp(logk - rowmax[:, None]), axis=1))


def smoothed_log_density(x: ManifoldPoint, batch: SampleBatch, spec: KernelSpec) -> float:
    return float(smoothed_log_density_batch(x.coords[None, :], batch, spec)[0])


def score_ratio_fd_oracle(x, pos: SampleBatch, neg: SampleBatch, spec: KernelSpec,
                          h: float = 1e-4) -> np.ndarray:
    """Central finite differences of log(p_hat/q_hat); Euclidean manifolds only."""
    if pos.manifold.family != "euclidean":
        raise InvalidInputError("the finite-difference oracle is Euclidean-only")
    xc = np.asarray(getattr(x, "coords", x), dtype=float)
    d = xc.shape[0]
    shifts = np.concatenate([xc + h * np.eye(d), xc - h * np.eye(d)], axis=0)
    lp = smoothed_log_density_batch(shifts, pos, spec)
    lq = smoothed_log_density_batch(shifts, neg, spec)
    diff = lp - lq
    return (diff[:d] - diff[d:]) / (2.0 * h)


# ---------------------------------------------------------------------------
# KL descent probe (1-D)


@dataclass(frozen=True)
class KlProbeResult:
    kl_before: float
    kl_after: float
    coverage_warning: bool


def _kernel_noise(spec: KernelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.family == "euclidean_gaussian":
        return rng.normal(0.0, spec.tau, size=n)
    if spec.family == "euclidean_laplace":
        return rng.laplace(0.0, spec.tau, size=n)
    raise InvalidInputError("kernel noise sampling implemented for Gaussian/Laplace")


def _grid_kl(q_vals: np.ndarray, p_vals: np.ndarray, grid: np.ndarray) -> float:
    ratio = np.where(q_vals > 0, q_vals / np.clip(p_vals, 1e-300, None), 1.0)
    integrand = np.where(q_vals > 0, q_vals * np.log(ratio), 0.0)
    return float(np.trapezoid(integrand, grid))


def kl_descent_probe(pos: SampleBatch, neg: SampleBatch, spec: KernelSpec,
                     eta: float, grid: np.ndarray, seed: int = 0) -> KlProbeResult:
    """Smoothed KL(q_hat || p_hat) on a 1-D lattice before and after one
    gradient-drift step of the negatives, evaluated in the smoothed variable
    (negatives are perturbed with kernel noise to obtain the evaluation
    points z = x + u, and each negative moves by eta * V(z))."""
    if pos.manifold.family != "euclidean" or pos.manifold.ambient_dim != 1:
        raise InvalidInputError("the KL probe is 1-D Euclidean only")
    grid = np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)

    def density(batch_pts):
        b = SampleBatch(batch_pts.reshape(-1, 1), pos.manifold)
        return np.exp(smoothed_log_density_batch(grid[:, None], b, spec))

    p_hat = density(pos.points)
    q_before = density(neg.points)
    kl_before = _grid_kl(q_before, p_hat, grid)

    z = neg.points[:, 0] + _kernel_noise(spec, rng, len(neg))
    cfg = DriftConfig(eta=eta, eta_max=np.inf if eta == 0 else 1e18,
                      mode="gradient", geometry_mode="euclidean_ambient")
    V = drift_field(z[:, None], pos, neg, spec, cfg)
    moved = neg.points + eta * V
    q_after = density(moved)
    kl_after = _grid_kl(q_after, p_hat, grid)

    mass = float(np.trapezoid(q_before, grid))
    mass_after = float(np.trapezoid(q_after, grid))
    warn = min(mass, mass_after, float(np.trapezoid(p_hat, grid))) < 0.999
    return KlProbeResult(kl_before=kl_before, kl_after=kl_after, coverage_warning=warn)


# ---------------------------------------------------------------------------
# Mean-shift bias decomposition diagnostic


@dataclass(frozen=True)
class MeanShiftDiagnostic:
    cosine_alignment: float
    a_p: float
    delta_p_norm: float
    excluded: int


def meanshift_bias_diagnostic(x: ManifoldPoint, pos: SampleBatch,
                              spec: KernelSpec) -> MeanShiftDiagnostic:
    """Decompose the gradient attraction into the mean-shift direction plus a
    covariance residual, for geodesic radial kernels exp(phi(d^2/tau^2)).

    For the Gaussian profile (phi' constant) the residual vanishes and the two
    attraction directions are parallel; the residual grows with bandwidth for
    the Laplace profile.
    """
    if spec.family not in GEODESIC_FAMILIES:
        raise InvalidInputError("diagnostic requires a geodesic radial kernel")
    man = x.manifold
    xc = x.coords[None, :]
    Y = pos.points
    d = man.dist(np.repeat(xc, len(pos), axis=0), Y)
    # arccos-based distances round to ~1e-8 for identical points, so the
    # coincidence cutoff must sit above that floor
    coincident = d < 1e-7
    excluded = int(np.count_nonzero(coincident))
    u = (d / spec.tau) ** 2
    if spec.family == "geodesic_gaussian":
        phi_prime = np.full_like(u, -0.5)
    else:  # laplace: phi(u) = -sqrt(u)
        phi_prime = np.where(coincident, 0.0, -0.5 / np.sqrt(np.where(coincident, 1.0, u)))
    a_p = float(np.mean(phi_prime[~coincident])) if excluded < len(pos) else 0.0

    base_cfg = DriftConfig(eta=1.0, mode="base", geometry_mode="intrinsic")
    grad_cfg = DriftConfig(eta=1.0, mode="gradient", geometry_mode="intrinsic")
    v_plus = _component(xc, Y, spec, man, base_cfg)[0]
    g_plus = _component(xc, Y, spec, man, grad_cfg)[0]
    v_plus = man.tangentialize(xc, v_plus[None, :])[0]
    g_plus = man.project_tangent(xc, g_plus[None, :])[0]

    nv = np.linalg.norm(v_plus)
    ng = np.linalg.norm(g_plus)
    cosine = float(v_plus @ g_plus / (nv * ng)) if nv > 0 and ng > 0 else 1.0
    residual = float(np.linalg.norm(spec.tau**2 * g_plus + 2.0 * a_p * v_plus))
    return MeanShiftDiagnostic(cosine_alignment=cosine, a_p=a_p,
                               delta_p_norm=residual, excluded=excluded)
