"""Kernel evaluation: values, log-values, and first-argument gradients.

Families
--------
euclidean_gaussian / euclidean_laplace / euclidean_matern
    evaluated on ambient coordinates; carry exact density normalization
    constants (they cancel in drift ratios but matter for smoothed-density
    estimates).
geodesic_laplace / geodesic_gaussian
    exp(-d_g/tau) and exp(-d_g^2 / 2 tau^2) on the manifold's geodesic
    distance; unnormalized (no closed-form constants on curved spaces).
spectral_matern / heat
    truncated Laplace-Beltrami expansions on S^2, collapsed to a Legendre
    series by the addition theorem, normalized so the kernel integrates
    to 1 over the sphere.

Gradients are ambient partial derivatives of the value as a function of the
raw ambient coordinates of x (callers project to the tangent space for
intrinsic use). For batch work, gradients are returned in a structured form

    (grad k / k)_ij = ay[i, j, f] * (M y_j)_f + ax[i, j, f] * (x_i)_f

per factor block f, where M is the identity except on the hyperboloid where
it is diag(1, -1, -1). This avoids (n, m, d) temporaries in the drift code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, kve

from .errors import InvalidInputError
from .geometry import Manifold

EUCLIDEAN_FAMILIES = ("euclidean_gaussian", "euclidean_laplace", "euclidean_matern")
GEODESIC_FAMILIES = ("geodesic_laplace", "geodesic_gaussian")
SPECTRAL_FAMILIES = ("spectral_matern", "heat")
ALL_FAMILIES = EUCLIDEAN_FAMILIES + GEODESIC_FAMILIES + SPECTRAL_FAMILIES

SPECTRAL_FLOOR = 1e-12
_TINY = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    family: str
    tau: float
    nu: float | None = None
    sigma2: float = 1.0
    max_degree: int = 64

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if not self.tau > 0:
            raise InvalidInputError("tau must be positive")
        if self.family in ("euclidean_matern", "spectral_matern"):
            if self.nu is None or not self.nu > 0:
                raise InvalidInputError("Matern kernels require nu > 0")
        if self.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be positive")
        if self.max_degree < 1:
            raise InvalidInputError("max_degree must be >= 1")


@dataclass
class KernelDiagnostics:
    """Counters filled in during evaluation (spectral truncation negativity)."""

    negative_values: int = 0
    floored_values: int = 0


@dataclass(frozen=True)
class KernelEval:
    value: float
    grad: np.ndarray


@dataclass
class GradForm:
    """Structured grad-over-value coefficients; see module docstring."""

    ay: np.ndarray  # (n, m, F)
    ax: np.ndarray  # (n, m, F)
    flip_y: bool = False  # apply diag(1,-1,-1) to y before scaling (hyperboloid)


def _check_compatible(spec: KernelSpec, manifold: Manifold) -> None:
    if spec.family in SPECTRAL_FAMILIES:
        if manifold.family != "sphere" or manifold.ambient_dim != 3:
            raise InvalidInputError("spectral kernels are implemented on S^2 only")


# ---------------------------------------------------------------------------
# Euclidean families


def _log_norm_constant(spec: KernelSpec, d: int) -> float:
    if spec.family == "euclidean_gaussian":
        return -0.5 * d * np.log(2.0 * np.pi * spec.tau**2)
    if spec.family == "euclidean_laplace":
        # multivariate exponential-norm density constant
        return (
            gammaln(d / 2.0)
            - np.log(2.0)
            - 0.5 * d * np.log(np.pi)
            - gammaln(float(d))
            - d * np.log(spec.tau)
        )
    if spec.family == "euclidean_matern":
        nu = float(spec.nu)
        # reciprocal of the spectral density at zero frequency; reduces to the
        # Gaussian constant as nu -> inf
        return -(
            0.5 * d * np.log(2.0 * np.pi * spec.tau**2 / nu)
            + gammaln(nu + d / 2.0)
            - gammaln(nu)
        )
    raise InvalidInputError(spec.family)


def _matern_log_correlation(z: np.ndarray, nu: float) -> np.ndarray:
    """log of the Matern correlation k0(z) = 2^{1-nu}/Gamma(nu) z^nu K_nu(z)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > _TINY
    zp = z[pos]
    k = kve(nu, zp)
    ok = np.isfinite(k) & (k > 0)
    logk0 = np.empty_like(zp)
    logk0[ok] = (
        (1.0 - nu) * np.log(2.0)
        - gammaln(nu)
        + nu * np.log(zp[ok])
        + np.log(k[ok])
        - zp[ok]
    )
    # kve overflows only when z is tiny relative to nu, where k0 ~ 1
    if nu > 1.0:
        logk0[~ok] = -(zp[~ok] ** 2) / (4.0 * (nu - 1.0))
    else:
        logk0[~ok] = 0.0
    out[pos] = logk0
    return out


def _matern_radial_score(z: np.ndarray, nu: float) -> np.ndarray:
    """-d/dz log k0(z) = K_{nu-1}(z) / K_nu(z), with a small-z series fallback."""
    z = np.asarray(z, dtype=float)
    num = kve(nu - 1.0, z)
    den = kve(nu, z)
    ok = np.isfinite(num) & np.isfinite(den) & (den > 0)
    rho = np.empty_like(z)
    rho[ok] = num[ok] / den[ok]
    if nu > 1.0:
        rho[~ok] = z[~ok] / (2.0 * (nu - 1.0))
    else:
        rho[~ok] = 1.0
    return rho


def _euclidean_matrix(spec: KernelSpec, X: np.ndarray, Y: np.ndarray):
    d = X.shape[-1]
    diff_r2 = (
        np.sum(X * X, axis=-1)[:, None]
        + np.sum(Y * Y, axis=-1)[None, :]
        - 2.0 * X @ Y.T
    )
    r2 = np.clip(diff_r2, 0.0, None)
    r = np.sqrt(r2)
    logc = _log_norm_constant(spec, d)
    tau = spec.tau
    if spec.family == "euclidean_gaussian":
        logk = logc - r2 / (2.0 * tau**2)
        ay = np.full_like(r, 1.0 / tau**2)
    elif spec.family == "euclidean_laplace":
        logk = logc - r / tau
        ay = np.where(r > _TINY, 1.0 / (tau * np.where(r > _TINY, r, 1.0)), 0.0)
    else:  # euclidean_matern
        nu = float(spec.nu)
        a = np.sqrt(2.0 * nu) / tau
        z = a * r
        logk = logc + _matern_log_correlation(z, nu)
        rho = _matern_radial_score(z, nu)
        safe_r = np.where(r > _TINY, r, 1.0)
        if nu > 1.0:
            small = a * a / (2.0 * (nu - 1.0))
        else:
            small = 0.0
        ay = np.where(r > _TINY, a * rho / safe_r, small)
    return logk, GradForm(ay=ay[..., None], ax=-ay[..., None])


# ---------------------------------------------------------------------------
# Geodesic radial families


def _geodesic_matrix(spec: KernelSpec, manifold: Manifold, X: np.ndarray, Y: np.ndarray):
    tau = spec.tau
    fam = manifold.family
    if fam == "euclidean":
        # geodesic distance is Euclidean; reuse the ambient machinery sans constant
        r = np.sqrt(
            np.clip(
                np.sum(X * X, axis=-1)[:, None]
                + np.sum(Y * Y, axis=-1)[None, :]
                - 2.0 * X @ Y.T,
                0.0,
                None,
            )
        )
        safe = np.where(r > _TINY, r, 1.0)
        if spec.family == "geodesic_laplace":
            logk = -r / tau
            ay = np.where(r > _TINY, 1.0 / (tau * safe), 0.0)
        else:
            logk = -(r * r) / (2.0 * tau**2)
            ay = np.full_like(r, 1.0 / tau**2)
        return logk, GradForm(ay=ay[..., None], ax=-ay[..., None])

    if fam == "sphere":
        c = np.clip(X @ Y.T, -1.0, 1.0)
        dg = np.arccos(c)
        s = np.sqrt(np.clip(1.0 - c * c, _TINY**2, None))  # sin(d)
        if spec.family == "geodesic_laplace":
            logk = -dg / tau
            ay = np.where(dg > _TINY, 1.0 / (tau * s), 0.0)
        else:
            logk = -(dg * dg) / (2.0 * tau**2)
            ratio = np.where(dg > _TINY, dg / s, 1.0)
            ay = ratio / tau**2
        return logk, GradForm(ay=ay[..., None], ax=np.zeros_like(ay)[..., None])

    if fam == "hyperboloid":
        J = np.array([1.0, -1.0, -1.0])
        m = np.clip((X * J) @ Y.T, 1.0, None)  # -<x,y>_L
        dg = np.arccosh(m)
        sh = np.sqrt(np.clip(m * m - 1.0, _TINY**2, None))  # sinh(d)
        if spec.family == "geodesic_laplace":
            logk = -dg / tau
            ay = np.where(dg > _TINY, -1.0 / (tau * sh), 0.0)
        else:
            logk = -(dg * dg) / (2.0 * tau**2)
            ratio = np.where(dg > _TINY, dg / sh, 1.0)
            ay = -ratio / tau**2
        return logk, GradForm(ay=ay[..., None], ax=np.zeros_like(ay)[..., None], flip_y=True)

    # sphere_product: per-factor blocks
    L, K = manifold.factors, manifold.factor_dim
    Xf = X.reshape(X.shape[0], L, K)
    Yf = Y.reshape(Y.shape[0], L, K)
    c = np.clip(np.einsum("ilk,jlk->ijl", Xf, Yf), -1.0, 1.0)
    df = np.arccos(c)
    s = np.sqrt(np.clip(1.0 - c * c, _TINY**2, None))
    d2 = np.sum(df * df, axis=-1)
    if spec.family == "geodesic_laplace":
        dg = np.sqrt(d2)
        logk = -dg / tau
        safe_dg = np.where(dg > _TINY, dg, 1.0)[..., None]
        ay = np.where(dg[..., None] > _TINY, df / (tau * safe_dg * s), 0.0)
    else:
        logk = -d2 / (2.0 * tau**2)
        ratio = np.where(df > _TINY, df / s, 1.0)
        ay = ratio / tau**2
    return logk, GradForm(ay=ay, ax=np.zeros_like(ay))


# ---------------------------------------------------------------------------
# Spectral families on S^2


def laplacian_eigenvalue(ell: int) -> float:
    return float(ell * (ell + 1))


def spectral_coeff(spec: KernelSpec, ell: int) -> float:
    """Raw spectral density f(lambda_ell) for the truncated expansion."""
    if spec.family not in SPECTRAL_FAMILIES:
        raise InvalidInputError("spectral_coeff requires a spectral kernel spec")
    if not 0 <= ell <= spec.max_degree:
        raise InvalidInputError("degree out of range")
    lam = laplacian_eigenvalue(ell)
    if spec.family == "spectral_matern":
        nu = float(spec.nu)
        return float((2.0 * nu / spec.tau**2 + lam) ** (-(nu + 1.0)))
    return float(np.exp(-0.5 * spec.tau**2 * lam))


def _normalized_coeffs(spec: KernelSpec) -> np.ndarray:
    """c_tilde_ell = f(lambda_ell)/f(lambda_0), so the kernel integrates to 1."""
    ells = np.arange(spec.max_degree + 1)
    lam = ells * (ells + 1.0)
    if spec.family == "spectral_matern":
        nu = float(spec.nu)
        base = 2.0 * nu / spec.tau**2
        logf = -(nu + 1.0) * np.log(base + lam)
        logf0 = -(nu + 1.0) * np.log(base)
        return np.exp(logf - logf0)
    return np.exp(-0.5 * spec.tau**2 * lam)


def legendre_series(weights: np.ndarray, t: np.ndarray):
    """Evaluate S(t) = sum_l w_l P_l(t) and S'(t) by the three-term recurrence."""
    t = np.asarray(t, dtype=float)
    p_prev = np.ones_like(t)  # P_0
    dp_prev = np.zeros_like(t)
    value = weights[0] * p_prev
    deriv = np.zeros_like(t)
    if len(weights) == 1:
        return value, deriv
    p = t.copy()  # P_1
    dp = np.ones_like(t)
    value = value + weights[1] * p
    deriv = deriv + weights[1] * dp
    for ell in range(1, len(weights) - 1):
        p_next = ((2 * ell + 1) * t * p - ell * p_prev) / (ell + 1)
        dp_next = dp_prev + (2 * ell + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
        value = value + weights[ell + 1] * p
        deriv = deriv + weights[ell + 1] * dp
    return value, deriv


def _spectral_matrix(
    spec: KernelSpec,
    X: np.ndarray,
    Y: np.ndarray,
    diagnostics: KernelDiagnostics | None = None,
):
    ctilde = _normalized_coeffs(spec)
    ells = np.arange(spec.max_degree + 1)
    weights = ctilde * (2 * ells + 1) / (4.0 * np.pi)
    t = np.clip(X @ Y.T, -1.0, 1.0)
    value, deriv = legendre_series(weights, t)
    if diagnostics is not None:
        neg = value <= 0.0
        diagnostics.negative_values += int(np.count_nonzero(neg))
        diagnostics.floored_values += int(np.count_nonzero(value < SPECTRAL_FLOOR))
    floored = np.clip(value, SPECTRAL_FLOOR, None)
    logk = np.log(floored)
    ay = deriv / floored
    return logk, GradForm(ay=ay[..., None], ax=np.zeros_like(ay)[..., None])


# ---------------------------------------------------------------------------
# Unified entry points


def kernel_matrix(
    spec: KernelSpec,
    manifold: Manifold,
    X: np.ndarray,
    Y: np.ndarray,
    diagnostics: KernelDiagnostics | None = None,
):
    """Log kernel values (n, m) and grad-over-value coefficients for batches."""
    _check_compatible(spec, manifold)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[-1] != Y.shape[-1]:
        raise InvalidInputError("x and y have different ambient dimensions")
    if spec.family in EUCLIDEAN_FAMILIES:
        return _euclidean_matrix(spec, X, Y)
    if spec.family in GEODESIC_FAMILIES:
        return _geodesic_matrix(spec, manifold, X, Y)
    return _spectral_matrix(spec, X, Y, diagnostics)


def grad_from_form(form: GradForm, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Materialize (grad k / k)_ij as an (n, m, d) array (small batches only)."""
    n, m, F = form.ay.shape
    d = X.shape[-1]
    block = d // F
    Ym = Y.copy()
    if form.flip_y:
        Ym[..., 1:] = -Ym[..., 1:]
    Yb = Ym.reshape(m, F, block)
    Xb = X.reshape(n, F, block)
    out = (
        form.ay[..., None] * Yb[None, :, :, :]
        + form.ax[..., None] * Xb[:, None, :, :]
    )
    return out.reshape(n, m, d)


def kernel_values(spec: KernelSpec, manifold: Manifold, X, Y,
                  diagnostics: KernelDiagnostics | None = None) -> np.ndarray:
    logk, _ = kernel_matrix(spec, manifold, X, Y, diagnostics)
    return np.exp(logk)


def kernel_eval(spec: KernelSpec, x, y, manifold: Manifold,
                diagnostics: KernelDiagnostics | None = None) -> KernelEval:
    """Single-pair value and ambient gradient with respect to x."""
    xc = np.asarray(getattr(x, "coords", x), dtype=float)
    yc = np.asarray(getattr(y, "coords", y), dtype=float)
    logk, form = kernel_matrix(spec, manifold, xc[None, :], yc[None, :], diagnostics)
    value = float(np.exp(logk[0, 0]))
    grad = value * grad_from_form(form, xc[None, :], yc[None, :])[0, 0]
    return KernelEval(value=value, grad=grad)


def gram_matrix(spec: KernelSpec, manifold: Manifold, points,
                diagnostics: KernelDiagnostics | None = None) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(
        [getattr(p, "coords", p) for p in points], dtype=float))
    if pts.shape[0] < 1:
        raise InvalidInputError("gram_matrix needs at least one point")
    K = kernel_values(spec, manifold, pts, pts, diagnostics)
    return 0.5 * (K + K.T)
