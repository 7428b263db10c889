"""Manifold geometry: exp/log maps, geodesic distance, tangent and manifold
projections, and the Fisher-Rao square-root embedding of the probability
simplex.

Supported families: Euclidean R^d, the unit sphere S^d embedded in R^{d+1},
the hyperboloid H^2 (Lorentz model in R^3), and products of positive sphere
orthants (S^{K-1}_+)^L used for categorical sequences.

All array operations are vectorized over leading axes: points are arrays of
shape (..., ambient_dim). Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLogError,
    DegenerateProjectionError,
    InvalidInputError,
)

MEMBERSHIP_TOL = 1e-9
TANGENCY_TOL = 1e-9
_SMALL = 1e-6  # switch to series forms below this angle / norm
EPS_FLOOR = 1e-6  # simplex boundary clamp

FAMILIES = ("euclidean", "sphere", "hyperboloid", "sphere_product")


def _minkowski(a, b):
    """Lorentz inner product <a,b>_L = -a0*b0 + a1*b1 + ... on the last axis."""
    s = np.sum(a * b, axis=-1)
    return s - 2.0 * a[..., 0] * b[..., 0]


@dataclass(frozen=True)
class Manifold:
    """Descriptor + vectorized geometric operations for one manifold family.

    ``factors`` and ``factor_dim`` are only meaningful for ``sphere_product``,
    where the ambient dimension is factors * factor_dim.
    """

    family: str
    ambient_dim: int
    factors: int = 1
    factor_dim: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown manifold family {self.family!r}")
        if self.ambient_dim < 1:
            raise InvalidInputError("ambient_dim must be positive")
        if self.family == "hyperboloid" and self.ambient_dim != 3:
            raise InvalidInputError("hyperboloid is modeled in R^3")
        if self.family == "sphere_product":
            if self.factors < 1 or self.factor_dim < 2:
                raise InvalidInputError("sphere_product needs factors >= 1, factor_dim >= 2")
            if self.ambient_dim != self.factors * self.factor_dim:
                raise InvalidInputError("ambient_dim must equal factors * factor_dim")

    # -- helpers ---------------------------------------------------------

    def _split(self, x):
        """View (..., L*K) as (..., L, K) for the product family."""
        return x.reshape(x.shape[:-1] + (self.factors, self.factor_dim))

    def _join(self, x):
        return x.reshape(x.shape[:-2] + (self.ambient_dim,))

    @property
    def injectivity_radius(self) -> float:
        if self.family in ("sphere", "sphere_product"):
            return float(np.pi)
        return float("inf")

    # -- membership ------------------------------------------------------

    def membership_error(self, x) -> np.ndarray:
        """Max violation of the membership invariant, per point."""
        x = np.asarray(x, dtype=float)
        if self.family == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.family == "sphere":
            return np.abs(np.linalg.norm(x, axis=-1) - 1.0)
        if self.family == "hyperboloid":
            err = np.abs(_minkowski(x, x) + 1.0)
            return np.where(x[..., 0] >= 1.0 - MEMBERSHIP_TOL, err, np.inf)
        xf = self._split(x)
        norm_err = np.max(np.abs(np.linalg.norm(xf, axis=-1) - 1.0), axis=-1)
        neg_err = np.max(np.clip(-xf, 0.0, None), axis=(-2, -1))
        return np.maximum(norm_err, neg_err)

    def check_point(self, x, tol: float = MEMBERSHIP_TOL) -> None:
        err = self.membership_error(x)
        worst = float(np.max(err)) if err.size else 0.0
        if worst > tol:
            raise InvalidInputError(
                f"point violates {self.family} membership by {worst:.3e} (tol {tol:.1e})"
            )

    def tangency_error(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.family == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.family == "sphere":
            return np.abs(np.sum(x * v, axis=-1))
        if self.family == "hyperboloid":
            return np.abs(_minkowski(x, v))
        xf, vf = self._split(x), self._split(v)
        return np.max(np.abs(np.sum(xf * vf, axis=-1)), axis=-1)

    def check_tangent(self, x, v, tol: float = TANGENCY_TOL) -> None:
        err = self.tangency_error(x, v)
        worst = float(np.max(err)) if err.size else 0.0
        if worst > tol:
            raise InvalidInputError(
                f"vector violates {self.family} tangency by {worst:.3e} (tol {tol:.1e})"
            )

    # -- metric ----------------------------------------------------------

    def tangent_norm(self, x, v) -> np.ndarray:
        """Riemannian norm of a tangent vector at x."""
        v = np.asarray(v, dtype=float)
        if self.family == "hyperboloid":
            q = _minkowski(v, v)
            return np.sqrt(np.clip(q, 0.0, None))
        return np.linalg.norm(v, axis=-1)

    def dist(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.family == "euclidean":
            return np.linalg.norm(y - x, axis=-1)
        if self.family == "sphere":
            c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
            return np.arccos(c)
        if self.family == "hyperboloid":
            m = np.clip(-_minkowski(x, y), 1.0, None)
            return np.arccosh(m)
        xf, yf = self._split(x), self._split(y)
        c = np.clip(np.sum(xf * yf, axis=-1), -1.0, 1.0)
        d = np.arccos(c)
        return np.sqrt(np.sum(d * d, axis=-1))

    # -- exp / log -------------------------------------------------------

    def exp(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.family == "euclidean":
            return x + v
        if self.family == "sphere":
            return self._sphere_exp(x, v)
        if self.family == "hyperboloid":
            theta = self.tangent_norm(x, v)[..., None]
            small = theta < _SMALL
            # sinh(t)/t -> 1 + t^2/6, cosh(t) -> 1 + t^2/2
            sinc = np.where(small, 1.0 + theta**2 / 6.0, np.sinh(theta) / np.where(small, 1.0, theta))
            return np.cosh(theta) * x + sinc * v
        return self._join(self._sphere_exp(self._split(x), self._split(v)))

    @staticmethod
    def _sphere_exp(x, v):
        theta = np.linalg.norm(v, axis=-1)[..., None]
        small = theta < _SMALL
        sinc = np.where(small, 1.0 - theta**2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        out = np.cos(theta) * x + sinc * v
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def log(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.family == "euclidean":
            return y - x
        if self.family == "sphere":
            c = np.sum(x * y, axis=-1)
            if np.any(c <= -1.0 + 1e-9):
                raise DegenerateLogError("log map undefined for near-antipodal sphere points")
            return self._sphere_log(x, y)
        if self.family == "hyperboloid":
            m = np.clip(-_minkowski(x, y), 1.0, None)[..., None]
            d = np.arccosh(m)
            u = y - m * x
            small = d < _SMALL
            alpha = np.where(small, 1.0 - d**2 / 6.0, d / np.where(small, 1.0, np.sinh(d)))
            return alpha * u
        xf, yf = self._split(x), self._split(y)
        c = np.sum(xf * yf, axis=-1)
        if np.any(c <= -1.0 + 1e-9):
            raise DegenerateLogError("log map undefined for near-antipodal factor points")
        return self._join(self._sphere_log(xf, yf))

    @staticmethod
    def _sphere_log(x, y):
        c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)[..., None]
        d = np.arccos(c)
        u = y - c * x
        s = np.sin(d)
        small = d < _SMALL
        alpha = np.where(small, 1.0 + d**2 / 6.0, d / np.where(small, 1.0, s))
        return alpha * u

    # -- projections -----------------------------------------------------

    def project_tangent(self, x, u) -> np.ndarray:
        """Project an ambient Euclidean gradient onto T_x M (Riemannian gradient)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.family == "euclidean":
            return u
        if self.family == "sphere":
            return u - np.sum(x * u, axis=-1, keepdims=True) * x
        if self.family == "hyperboloid":
            w = u.copy()
            w[..., 0] = -w[..., 0]  # Minkowski sign flip of the gradient
            return w + _minkowski(x, w)[..., None] * x
        xf, uf = self._split(x), self._split(u)
        return self._join(uf - np.sum(xf * uf, axis=-1, keepdims=True) * xf)

    def tangentialize(self, x, v) -> np.ndarray:
        """Project an ambient vector onto T_x M without gradient conversion.

        Unlike project_tangent this does not apply the Minkowski sign flip on
        the hyperboloid; use it to clean up vectors that are already meant to
        be tangent (e.g. averaged log-map directions).
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.family == "hyperboloid":
            return v + _minkowski(x, v)[..., None] * x
        return self.project_tangent(x, v)

    def project(self, u) -> np.ndarray:
        """Map an ambient vector onto the manifold (re-projection of drifted points)."""
        u = np.asarray(u, dtype=float)
        if self.family == "euclidean":
            return u
        if self.family == "sphere":
            n = np.linalg.norm(u, axis=-1, keepdims=True)
            if np.any(n < 1e-12):
                raise DegenerateProjectionError("cannot project a near-zero vector to the sphere")
            return u / n
        if self.family == "hyperboloid":
            spatial = u[..., 1:]
            x0 = np.sqrt(1.0 + np.sum(spatial * spatial, axis=-1))
            return np.concatenate([x0[..., None], spatial], axis=-1)
        uf = np.clip(self._split(u), 0.0, None)
        n = np.linalg.norm(uf, axis=-1, keepdims=True)
        if np.any(n < 1e-12):
            raise DegenerateProjectionError("cannot project a near-zero factor to the orthant")
        return self._join(uf / n)

    # -- sampling --------------------------------------------------------

    def random_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "euclidean":
            return rng.standard_normal((n, self.ambient_dim))
        if self.family == "sphere":
            u = rng.standard_normal((n, self.ambient_dim))
            return u / np.linalg.norm(u, axis=-1, keepdims=True)
        if self.family == "hyperboloid":
            spatial = rng.standard_normal((n, 2))
            return self.project(np.concatenate([np.zeros((n, 1)), spatial], axis=-1))
        u = np.abs(rng.standard_normal((n, self.factors, self.factor_dim)))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        return u.reshape(n, self.ambient_dim)

    def random_tangents(self, rng: np.random.Generator, x, norm) -> np.ndarray:
        """Tangent vectors at x with prescribed Riemannian norms."""
        x = np.asarray(x, dtype=float)
        u = rng.standard_normal(x.shape)
        if self.family == "hyperboloid":
            # direct tangent projection; u is not a gradient here
            v = u + _minkowski(x, u)[..., None] * x
        else:
            v = self.project_tangent(x, u)
        cur = self.tangent_norm(x, v)
        cur = np.where(cur < 1e-12, 1.0, cur)
        return v * (np.asarray(norm) / cur)[..., None]


def euclidean(dim: int) -> Manifold:
    return Manifold("euclidean", dim)


def sphere(ambient_dim: int = 3) -> Manifold:
    return Manifold("sphere", ambient_dim)


def hyperboloid() -> Manifold:
    return Manifold("hyperboloid", 3)


def sphere_product(factors: int, factor_dim: int) -> Manifold:
    return Manifold("sphere_product", factors * factor_dim, factors, factor_dim)


# ---------------------------------------------------------------------------
# Single-point wrappers


@dataclass(frozen=True)
class ManifoldPoint:
    coords: np.ndarray
    manifold: Manifold

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        if self.coords.shape != (self.manifold.ambient_dim,):
            raise InvalidInputError(
                f"expected coords of shape ({self.manifold.ambient_dim},), got {self.coords.shape}"
            )
        self.manifold.check_point(self.coords)


@dataclass(frozen=True)
class TangentVector:
    base: ManifoldPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))
        if self.components.shape != self.base.coords.shape:
            raise InvalidInputError("tangent components must match the base point shape")
        self.base.manifold.check_tangent(self.base.coords, self.components)

    @property
    def norm(self) -> float:
        return float(self.base.manifold.tangent_norm(self.base.coords, self.components))


def exp_map(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise InvalidInputError("tangent vector is not based at x")
    return ManifoldPoint(x.manifold.exp(x.coords, v.components), x.manifold)


def log_map(x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    if x.manifold != y.manifold:
        raise InvalidInputError("points live on different manifolds")
    return TangentVector(x, x.manifold.log(x.coords, y.coords))


def geodesic_distance(x: ManifoldPoint, y: ManifoldPoint) -> float:
    if x.manifold != y.manifold:
        raise InvalidInputError("points live on different manifolds")
    return float(x.manifold.dist(x.coords, y.coords))


def project_to_tangent(x: ManifoldPoint, u) -> TangentVector:
    return TangentVector(x, x.manifold.project_tangent(x.coords, np.asarray(u, dtype=float)))


def project_to_manifold(u, manifold: Manifold) -> ManifoldPoint:
    u = np.asarray(u, dtype=float)
    if manifold.family == "hyperboloid" and u.shape == (2,):
        u = np.concatenate([[0.0], u])  # spatial part given; lift fills x0
    return ManifoldPoint(manifold.project(u), manifold)


# ---------------------------------------------------------------------------
# Fisher-Rao simplex embedding (unit-sphere convention)


def simplex_embed_array(p, eps_floor: float = EPS_FLOOR) -> np.ndarray:
    """sqrt-embed probability vectors (..., K) onto the positive sphere orthant.

    Coordinates below eps_floor are clamped and the vector renormalized before
    the square root, since the Fisher-Rao metric degenerates at the boundary.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-9):
        raise InvalidInputError("probability vector has negative entries")
    if np.any(np.abs(np.sum(p, axis=-1) - 1.0) > 1e-9):
        raise InvalidInputError("probability vector does not sum to 1")
    q = np.clip(p, eps_floor, None)
    q = q / np.sum(q, axis=-1, keepdims=True)
    return np.sqrt(q)


def simplex_unembed_array(x) -> np.ndarray:
    """Inverse of the sqrt embedding: square and renormalize."""
    x = np.asarray(x, dtype=float)
    p = x * x
    return p / np.sum(p, axis=-1, keepdims=True)


def simplex_embed(p, eps_floor: float = EPS_FLOOR) -> ManifoldPoint:
    q = simplex_embed_array(p, eps_floor)
    return ManifoldPoint(q, sphere(q.shape[-1]))


def simplex_unembed(x: ManifoldPoint) -> np.ndarray:
    return simplex_unembed_array(x.coords)
