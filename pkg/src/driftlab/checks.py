"""Self-contained kernel diagnostics: finite-difference gradient sweeps,
spectral normalization Monte Carlo, and Gram positive-semidefiniteness
sweeps. Used by the kernel-check CLI command and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, sphere
from .kernels import KernelSpec, grad_from_form, kernel_matrix


def fd_gradient_check(spec: KernelSpec, manifold: Manifold,
                      n_pairs: int = 500, seed: int = 0,
                      h: float = 1e-5) -> float:
    """Max relative error between the analytic kernel gradient and a central
    finite difference of the kernel value along random geodesic directions.

    The directional derivative of k(exp_x(t v), y) at t = 0 equals
    <grad_x k, v> for tangent v, so the check never leaves the manifold.
    Relative error is normalized by the gradient norm per pair.
    """
    rng = np.random.default_rng(seed)
    X = manifold.random_points(rng, n_pairs)
    Y = manifold.random_points(rng, n_pairs)
    V = manifold.random_tangents(rng, X, norm=np.ones(n_pairs))

    logk, form = kernel_matrix(spec, manifold, X, Y)
    grads = grad_from_form(form, X, Y)  # (n, n, d); we need the diagonal
    idx = np.arange(n_pairs)
    g = grads[idx, idx]
    k0 = np.exp(logk[idx, idx])
    analytic = np.sum(g * k0[:, None] * V, axis=1)

    Xp = manifold.exp(X, h * V)
    Xm = manifold.exp(X, -h * V)
    logp, _ = kernel_matrix(spec, manifold, Xp, Y)
    logm, _ = kernel_matrix(spec, manifold, Xm, Y)
    fd = (np.exp(logp[idx, idx]) - np.exp(logm[idx, idx])) / (2.0 * h)

    scale = np.maximum(np.abs(fd), np.linalg.norm(g, axis=1) * k0)
    scale = np.maximum(scale, 1e-12)
    return float(np.max(np.abs(analytic - fd) / scale))


@dataclass(frozen=True)
class McNormalization:
    estimate: float
    stderr: float

    @property
    def within_3se(self) -> bool:
        return abs(self.estimate - 1.0) <= 3.0 * self.stderr


def spectral_normalization_mc(spec: KernelSpec, n: int = 100_000,
                              seed: int = 0) -> McNormalization:
    """Monte Carlo check that the spectral kernel integrates to 1 over the
    sphere: 4 pi times the mean of k(x0, Y) over uniform Y."""
    man = sphere()
    rng = np.random.default_rng(seed)
    Y = man.random_points(rng, n)
    x0 = np.array([[0.0, 0.0, 1.0]])
    logk, _ = kernel_matrix(spec, man, x0, Y)
    vals = 4.0 * np.pi * np.exp(logk[0])
    return McNormalization(estimate=float(np.mean(vals)),
                           stderr=float(np.std(vals) / np.sqrt(n)))


def fibonacci_sphere(n: int) -> np.ndarray:
    """Quasi-uniform point set on the unit sphere (golden-angle lattice)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class PsdSweepResult:
    min_eigs: list[tuple[float, float]]  # (tau, min eigenvalue)
    witness: tuple[float, float] | None  # first (tau, min eig) below -1e-6

    @property
    def all_psd(self) -> bool:
        return all(e >= -1e-9 for _, e in self.min_eigs)


def gram_psd_sweep(family: str, manifold: Manifold, points: np.ndarray,
                   taus=None, nu: float = 1.5,
                   max_degree: int = 64) -> PsdSweepResult:
    """Minimum Gram eigenvalue over a temperature sweep on a fixed point
    set. Records the first (tau, min eig) witness below -1e-6, if any."""
    if taus is None:
        taus = np.geomspace(0.1, 10.0, 13)
    out = []
    witness = None
    for tau in taus:
        spec = KernelSpec(family=family, tau=float(tau), nu=nu,
                          max_degree=max_degree)
        logk, _ = kernel_matrix(spec, manifold, points, points)
        G = np.exp(logk)
        G = 0.5 * (G + G.T)
        min_eig = float(np.linalg.eigvalsh(G)[0])
        out.append((float(tau), min_eig))
        if witness is None and min_eig < -1e-6:
            witness = (float(tau), min_eig)
    return PsdSweepResult(min_eigs=out, witness=witness)
