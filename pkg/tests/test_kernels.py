"""Kernels: values, gradients against finite differences, spectral
coefficients, normalization, and Gram positive-semidefiniteness."""

import numpy as np
import pytest
from scipy.special import eval_legendre

from driftlab.checks import (
    fd_gradient_check,
    fibonacci_sphere,
    gram_psd_sweep,
    spectral_normalization_mc,
)
from driftlab.errors import InvalidInputError
from driftlab.geometry import ManifoldPoint, euclidean, hyperboloid, sphere, sphere_product
from driftlab.kernels import (
    KernelDiagnostics,
    KernelSpec,
    gram_matrix,
    kernel_eval,
    kernel_matrix,
    legendre_series,
    spectral_coeff,
)


def _pt(man, coords):
    return ManifoldPoint(coords=np.asarray(coords, dtype=float), manifold=man)


# ------------------------------------------------------------- kernel_eval


def test_gaussian_value_at_zero_displacement():
    man = euclidean(1)
    ev = kernel_eval(KernelSpec("euclidean_gaussian", tau=1.0),
                     _pt(man, [0.0]), _pt(man, [0.0]), man)
    assert np.isclose(ev.value, (2 * np.pi) ** -0.5, atol=1e-12)
    assert np.allclose(ev.grad, 0.0, atol=1e-14)


def test_gaussian_gradient_identity():
    """grad = value * (y - x) / tau^2 for the Euclidean Gaussian."""
    man = euclidean(1)
    ev = kernel_eval(KernelSpec("euclidean_gaussian", tau=1.0),
                     _pt(man, [0.0]), _pt(man, [1.0]), man)
    assert np.isclose(ev.grad[0], ev.value, atol=1e-12)

    rng = np.random.default_rng(0)
    man3 = euclidean(3)
    tau = 0.7
    spec = KernelSpec("euclidean_gaussian", tau=tau)
    for _ in range(50):
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        ev = kernel_eval(spec, _pt(man3, x), _pt(man3, y), man3)
        assert np.max(np.abs(ev.grad - ev.value * (y - x) / tau**2)) < 1e-10


def test_laplace_1d_value_and_grad():
    man = euclidean(1)
    ev = kernel_eval(KernelSpec("euclidean_laplace", tau=1.0),
                     _pt(man, [0.0]), _pt(man, [2.0]), man)
    assert np.isclose(ev.value, np.exp(-2) / 2, atol=1e-12)
    assert np.isclose(ev.grad[0], np.exp(-2) / 2, atol=1e-12)


def test_symmetry_exact():
    rng = np.random.default_rng(4)
    cases = [
        (KernelSpec("euclidean_gaussian", tau=0.5), euclidean(3)),
        (KernelSpec("euclidean_laplace", tau=0.5), euclidean(3)),
        (KernelSpec("euclidean_matern", tau=0.5, nu=1.5), euclidean(3)),
        (KernelSpec("geodesic_laplace", tau=0.5), sphere()),
        (KernelSpec("geodesic_gaussian", tau=0.5), hyperboloid()),
        (KernelSpec("spectral_matern", tau=0.5, nu=1.5), sphere()),
        (KernelSpec("heat", tau=0.5), sphere()),
    ]
    for spec, man in cases:
        x = man.random_points(rng, 1)[0]
        y = man.random_points(rng, 1)[0]
        vxy = kernel_eval(spec, _pt(man, x), _pt(man, y), man).value
        vyx = kernel_eval(spec, _pt(man, y), _pt(man, x), man).value
        assert abs(vxy - vyx) < 1e-12


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        KernelSpec("euclidean_gaussian", tau=0.0)
    with pytest.raises(InvalidInputError):
        KernelSpec("euclidean_matern", tau=1.0, nu=-1.0)
    with pytest.raises(InvalidInputError):
        KernelSpec("nonsense", tau=1.0)
    # spectral kernels only on the sphere
    with pytest.raises(InvalidInputError):
        kernel_matrix(KernelSpec("heat", tau=1.0), euclidean(3),
                      np.zeros((1, 3)), np.zeros((1, 3)))


# --------------------------------------------------------- FD grad sweep


FD_CASES = [
    (KernelSpec("euclidean_gaussian", tau=0.7), euclidean(3)),
    (KernelSpec("euclidean_laplace", tau=0.7), euclidean(3)),
    (KernelSpec("euclidean_matern", tau=0.7, nu=0.5), euclidean(3)),
    (KernelSpec("euclidean_matern", tau=0.7, nu=1.5), euclidean(3)),
    (KernelSpec("euclidean_matern", tau=0.7, nu=2.5), euclidean(3)),
    (KernelSpec("euclidean_matern", tau=0.7, nu=100.0), euclidean(3)),
    (KernelSpec("geodesic_laplace", tau=0.7), sphere()),
    (KernelSpec("geodesic_gaussian", tau=0.7), sphere()),
    (KernelSpec("geodesic_laplace", tau=0.7), hyperboloid()),
    (KernelSpec("geodesic_gaussian", tau=0.7), hyperboloid()),
    (KernelSpec("geodesic_gaussian", tau=0.7), sphere_product(2, 4)),
    (KernelSpec("spectral_matern", tau=0.7, nu=1.5), sphere()),
    (KernelSpec("heat", tau=0.7), sphere()),
]


@pytest.mark.parametrize(
    "spec,man", FD_CASES,
    ids=[f"{s.family}-nu{s.nu}-{m.family}" for s, m in FD_CASES])
def test_gradient_finite_difference_500_pairs(spec, man):
    err = fd_gradient_check(spec, man, n_pairs=500, seed=20)
    assert err < 1e-5, f"max relative gradient error {err:.3e}"


# ------------------------------------------------------ spectral kernels


def test_spectral_coeff_values():
    matern = KernelSpec("spectral_matern", tau=1.0, nu=2.5)
    assert np.isclose(spectral_coeff(matern, 1), 7.0 ** -3.5, rtol=1e-12)
    heat = KernelSpec("heat", tau=1.0)
    assert spectral_coeff(heat, 0) == 1.0
    assert np.isclose(spectral_coeff(heat, 2), np.exp(-3.0), rtol=1e-12)


def test_heat_large_tau_collapses_to_uniform():
    man = sphere()
    spec = KernelSpec("heat", tau=10.0)
    rng = np.random.default_rng(8)
    X = man.random_points(rng, 10)
    Y = man.random_points(rng, 10)
    logk, _ = kernel_matrix(spec, man, X, Y)
    assert np.allclose(np.exp(logk), 1.0 / (4 * np.pi), rtol=1e-10)


def test_spectral_value_max_at_coincidence():
    spec = KernelSpec("spectral_matern", tau=0.5, nu=1.5)
    man = sphere()
    x = np.array([[0.0, 0.0, 1.0]])
    rng = np.random.default_rng(9)
    Y = man.random_points(rng, 200)
    logk_self, _ = kernel_matrix(spec, man, x, x)
    logk, _ = kernel_matrix(spec, man, x, Y)
    assert np.all(logk <= logk_self[0, 0] + 1e-12)


def test_spectral_grad_zero_at_coincidence_after_projection():
    spec = KernelSpec("heat", tau=0.5)
    man = sphere()
    x = _pt(man, [0.0, 0.0, 1.0])
    ev = kernel_eval(spec, x, x, man)
    tangential = man.project_tangent(x.coords[None], ev.grad[None])[0]
    assert np.max(np.abs(tangential)) < 1e-10


def test_legendre_series_matches_scipy():
    rng = np.random.default_rng(10)
    w = rng.uniform(0, 1, size=20)
    t = rng.uniform(-1, 1, size=50)
    val, dval = legendre_series(w, t)
    ref = sum(w[l] * eval_legendre(l, t) for l in range(20))
    assert np.max(np.abs(val - ref)) < 1e-10
    h = 1e-6
    refd = (sum(w[l] * eval_legendre(l, t + h) for l in range(20))
            - sum(w[l] * eval_legendre(l, t - h) for l in range(20))) / (2 * h)
    assert np.max(np.abs(dval - refd)) < 1e-4


def test_spectral_normalization_monte_carlo():
    for spec in (KernelSpec("spectral_matern", tau=0.7, nu=1.5),
                 KernelSpec("heat", tau=0.7)):
        mc = spectral_normalization_mc(spec, n=100_000, seed=6)
        assert mc.within_3se, (mc.estimate, mc.stderr)


def test_matern_nu100_matches_heat_limit():
    """spectral Matern at nu=100 approximates the heat kernel within 2%
    after matching bandwidths: coefficients (2 nu/tau^2 + lam)^-(nu+1)
    behave like exp(-lam tau_heat^2 / 2) with tau_heat^2 = tau^2 (nu+1)/nu
    for large nu."""
    nu, tau = 100.0, 1.0
    tau_heat = tau * np.sqrt((nu + 1.0) / nu)
    matern = KernelSpec("spectral_matern", tau=tau, nu=nu)
    heat = KernelSpec("heat", tau=tau_heat)
    man = sphere()
    angles = np.linspace(0.0, np.pi, 100)
    x = np.array([[0.0, 0.0, 1.0]])
    Y = np.stack([np.sin(angles), np.zeros_like(angles), np.cos(angles)],
                 axis=1)
    km, _ = kernel_matrix(matern, man, x, Y)
    kh, _ = kernel_matrix(heat, man, x, Y)
    vm, vh = np.exp(km[0]), np.exp(kh[0])
    rel = np.abs(vm - vh) / vh
    assert np.max(rel) < 0.02, float(np.max(rel))


def test_spectral_negativity_is_counted_not_hidden():
    spec = KernelSpec("spectral_matern", tau=0.15, nu=0.5, max_degree=8)
    man = sphere()
    x = np.array([[0.0, 0.0, 1.0]])
    angles = np.linspace(0.1, np.pi, 400)
    Y = np.stack([np.sin(angles), np.zeros_like(angles), np.cos(angles)],
                 axis=1)
    diag = KernelDiagnostics()
    logk, _ = kernel_matrix(spec, man, x, Y, diag)
    assert np.all(np.isfinite(logk))
    if diag.negative_values:
        assert diag.floored_values >= 1


# ------------------------------------------------------------------ gram


def test_gram_single_point():
    man = euclidean(2)
    G = gram_matrix(KernelSpec("euclidean_gaussian", tau=1.0), man,
                    np.array([[0.0, 0.0]]))
    assert G.shape == (1, 1)
    assert np.isclose(G[0, 0], 1.0 / (2 * np.pi))


def test_gram_spectral_matern_psd_50_points():
    man = sphere()
    pts = man.random_points(np.random.default_rng(13), 50)
    G = gram_matrix(KernelSpec("spectral_matern", tau=0.5, nu=1.5), man, pts)
    assert np.linalg.eigvalsh(0.5 * (G + G.T))[0] >= -1e-9


def test_psd_sweep_certifies_spectral_and_witnesses_geodesic_gaussian():
    pts = fibonacci_sphere(200)
    man = sphere()
    spectral = gram_psd_sweep("spectral_matern", man, pts)
    assert spectral.all_psd
    gaussian = gram_psd_sweep("geodesic_gaussian", man, pts)
    assert gaussian.witness is not None
    tau_w, eig_w = gaussian.witness
    assert eig_w < -1e-6


def test_geodesic_laplace_sphere_stays_psd_in_sweep():
    """The exponential of the negative great-circle distance is positive
    definite on the sphere (the distance is conditionally negative
    definite), so the sweep certifies rather than witnesses."""
    pts = fibonacci_sphere(200)
    sweep = gram_psd_sweep("geodesic_laplace", sphere(), pts)
    assert sweep.witness is None
    assert min(e for _, e in sweep.min_eigs) > -1e-9
