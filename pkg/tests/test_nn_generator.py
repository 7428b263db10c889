"""Network and generator: exact backprop vs finite differences, optimizer
behavior, manifold heads, the regression-loss identity, checkpoints, and a
small end-to-end training run."""

import numpy as np
import pytest

from driftlab.drift import DriftConfig, SampleBatch, drift_field, transport_batch
from driftlab.generator import (
    GeneratorParams,
    TrainConfig,
    _ambient_distance_grad,
    forward,
    head_forward,
    load_checkpoint,
    loss_and_grad,
    sample,
    save_checkpoint,
    train,
)
from driftlab.geometry import euclidean, hyperboloid, sphere, sphere_product
from driftlab.kernels import KernelSpec
from driftlab.nn import MLP, OptimizerState, optimizer_step, silu, silu_grad


# ------------------------------------------------------------------- silu


def test_silu_values_and_grad_fd():
    x = np.linspace(-5, 5, 201)
    assert np.isclose(silu(0.0), 0.0)
    assert np.isclose(silu(10.0), 10.0 / (1 + np.exp(-10)))
    h = 1e-6
    fd = (silu(x + h) - silu(x - h)) / (2 * h)
    assert np.max(np.abs(silu_grad(x) - fd)) < 1e-9


# ------------------------------------------------------------ MLP backprop


def _fd_param_grads(loss_fn, arrays, n_probe=5, h=1e-6, seed=0):
    """Finite-difference loss_fn() wrt a few entries of each array."""
    rng = np.random.default_rng(seed)
    probes = []
    for arr in arrays:
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        grads = []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            grads.append((up - down) / (2 * h))
        probes.append((idx, np.array(grads)))
    return probes


def test_mlp_backward_matches_finite_differences():
    rng = np.random.default_rng(1)
    net = MLP.init([2, 16, 16, 2], rng)
    X = rng.standard_normal((8, 2))
    R = rng.standard_normal((8, 2))

    def loss():
        out, _ = net.forward(X)
        return float(np.sum(out * R))

    out, cache = net.forward(X)
    dWs, dbs = net.backward(cache, R)
    analytic = dWs + dbs
    for arr, grad, (idx, fd) in zip(net.params_flat(), analytic,
                                    _fd_param_grads(loss, net.params_flat())):
        rel = np.abs(grad.reshape(-1)[idx] - fd) / np.maximum(np.abs(fd), 1e-6)
        assert np.max(rel) < 1e-4


@pytest.mark.parametrize("man", [sphere(), hyperboloid(), sphere_product(2, 3)],
                         ids=lambda m: m.family)
def test_full_pipeline_gradient_matches_fd(man):
    """Loss gradients through the manifold heads agree with central
    differences on the network parameters."""
    rng = np.random.default_rng(2)
    params = GeneratorParams.init(3, [16, 16], man, rng)
    eps = rng.standard_normal((8, 3))
    targets = SampleBatch(man.random_points(rng, 8), man, role="model_negative")

    def loss():
        return loss_and_grad(params, eps, targets)[0]

    _, grads, _ = loss_and_grad(params, eps, targets)
    for arr, grad, (idx, fd) in zip(params.net.params_flat(), grads,
                                    _fd_param_grads(loss, params.net.params_flat())):
        denom = np.maximum(np.abs(fd), 1e-5)
        rel = np.abs(grad.reshape(-1)[idx] - fd) / denom
        assert np.max(rel) < 1e-4, (man.family, float(np.max(rel)))


# --------------------------------------------------------------- optimizer


def test_adam_first_step_magnitude():
    """With zero moment buffers the first bias-corrected update is
    lr * g/|g| elementwise (up to eps), i.e. about lr * sign(g)."""
    p = [np.array([1.0, -1.0])]
    g = [np.array([0.5, -2.0])]
    state = OptimizerState(lr=1e-3)
    state.attach(p)
    optimizer_step(state, p, g)
    assert np.allclose(p[0], [1.0 - 1e-3, -1.0 + 1e-3], atol=1e-7)


def test_grad_clip_rescales_global_norm():
    p = [np.zeros(4)]
    g = [np.full(4, 5.0)]  # global norm 10
    state = OptimizerState(lr=1.0, grad_clip_norm=1.0)
    state.attach(p)
    optimizer_step(state, p, g)
    # first moment stores the clipped gradient: (1-beta1) * g * 0.1
    assert np.allclose(state.m[0], 0.1 * (1 - state.beta1) * 5.0)


def test_nonfinite_grads_skip_step():
    p = [np.array([1.0, 2.0])]
    state = OptimizerState(lr=1e-3)
    state.attach(p)
    optimizer_step(state, p, [np.array([np.nan, 0.0])])
    assert np.allclose(p[0], [1.0, 2.0])
    assert state.step == 0
    assert state.skipped_steps == 1


def test_weight_decay_is_decoupled():
    p = [np.array([10.0])]
    state = OptimizerState(lr=0.1, weight_decay=0.5)
    state.attach(p)
    optimizer_step(state, p, [np.array([0.0])])
    # zero gradient: only the decay term acts, p -> p (1 - lr wd)
    assert np.isclose(p[0][0], 10.0 * (1 - 0.1 * 0.5))


def test_ema_tracks_params_without_init_lag():
    """The warmed-up decay forgets the initialization within tens of steps
    instead of carrying it for ~1/(1-decay) steps."""
    p = [np.array([0.0])]
    state = OptimizerState(lr=0.05, ema_decay=0.999)
    state.attach(p)
    for _ in range(100):
        optimizer_step(state, p, [np.array([-1.0])])  # p drifts upward
    gap = abs(state.ema[0][0] - p[0][0])
    assert abs(p[0][0]) > 1.0
    assert gap < 0.3 * abs(p[0][0])


# ------------------------------------------------------------------- heads


def test_sphere_head_normalizes():
    man = sphere()
    params = GeneratorParams.init(2, [4], man, np.random.default_rng(3))
    out, _ = head_forward(params, np.array([[0.0, 0.0, 2.0]]))
    assert np.allclose(out, [[0.0, 0.0, 1.0]])


def test_hyperboloid_head_lifts():
    man = hyperboloid()
    params = GeneratorParams.init(2, [4], man, np.random.default_rng(4))
    out, _ = head_forward(params, np.array([[3.0, 4.0]]))
    assert np.allclose(out, [[np.sqrt(26.0), 3.0, 4.0]])
    assert man.membership_error(out).max() < 1e-12


def test_simplex_head_uniform_logits():
    man = sphere_product(1, 4)
    params = GeneratorParams.init(2, [4], man, np.random.default_rng(5))
    out, _ = head_forward(params, np.zeros((1, 4)))
    assert np.allclose(out, 0.5)


def test_heads_land_on_manifold():
    rng = np.random.default_rng(6)
    for man in (sphere(), hyperboloid(), sphere_product(3, 4)):
        params = GeneratorParams.init(4, [8], man, rng)
        batch = forward(params, rng.standard_normal((64, 4)))
        assert man.membership_error(batch.points).max() < 1e-9


# -------------------------------------------------------------------- loss


def test_euclidean_loss_example():
    man = euclidean(2)
    per, grad, ndeg = _ambient_distance_grad(
        man, np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    assert np.isclose(per[0], 25.0)
    assert np.allclose(grad, [[-6.0, -8.0]])
    assert ndeg == 0


def test_loss_equals_eta_squared_mean_drift_norm():
    """With Euclidean geometry and no transport cap, the regression loss on
    the frozen transported cloud equals eta^2 * mean ||V||^2."""
    man = euclidean(2)
    rng = np.random.default_rng(7)
    params = GeneratorParams.init(4, [32, 32], man, rng)
    eps = rng.standard_normal((128, 4))
    gen = forward(params, eps)
    pos = SampleBatch(rng.standard_normal((128, 2)) + 1.0, man)
    spec = KernelSpec("euclidean_gaussian", tau=0.8)
    eta = 0.3
    cfg = DriftConfig(eta=eta, eta_max=1e9, mode="gradient",
                      geometry_mode="euclidean_ambient")
    V = drift_field(gen.points, pos, gen, spec, cfg)
    targets = SampleBatch(transport_batch(gen.points, V, man, cfg), man,
                          role="model_negative")
    loss, _, _ = loss_and_grad(params, eps, targets)
    expected = eta**2 * float(np.mean(np.sum(V * V, axis=-1)))
    assert abs(loss - expected) < 1e-8


def test_targets_are_frozen_stop_gradient():
    """Gradients depend on targets only through their fixed coordinates:
    rebuilding the drift field with a different kernel after the targets are
    frozen changes nothing."""
    man = euclidean(2)
    rng = np.random.default_rng(8)
    params = GeneratorParams.init(4, [16], man, rng)
    eps = rng.standard_normal((32, 4))
    targets = SampleBatch(rng.standard_normal((32, 2)), man,
                          role="model_negative")
    _, g1, _ = loss_and_grad(params, eps, targets)
    # a drift recomputation with another kernel does not touch the targets
    gen = forward(params, eps)
    pos = SampleBatch(rng.standard_normal((32, 2)), man)
    drift_field(gen.points, pos, gen, KernelSpec("euclidean_laplace", tau=0.1),
                DriftConfig(eta=1.0, eta_max=1e9, mode="gradient",
                            geometry_mode="euclidean_ambient"))
    _, g2, _ = loss_and_grad(params, eps, targets)
    for a, b in zip(g1, g2):
        assert np.array_equal(a, b)


# ---------------------------------------------------------------- training


def _gaussian_provider(mean, std, dim):
    def provider(step, rng):
        return rng.normal(mean, std, size=(256, dim))
    return provider


def test_zero_steps_leaves_params_unchanged():
    man = euclidean(1)
    cfg = TrainConfig(steps=0, batch_size=32, seed=0, latent_dim=2,
                      hidden=(8,))
    res = train(cfg, _gaussian_provider(0.0, 1.0, 1), man,
                KernelSpec("euclidean_gaussian", tau=0.5),
                DriftConfig(eta=0.5, eta_max=1e9, mode="gradient",
                            geometry_mode="euclidean_ambient"))
    assert res.history == []
    ref = GeneratorParams.init(2, [8], man, np.random.default_rng(0))
    for a, b in zip(res.params.net.params_flat(), ref.net.params_flat()):
        assert np.array_equal(a, b)


def test_training_is_bit_deterministic():
    man = euclidean(1)
    cfg = TrainConfig(steps=20, batch_size=32, seed=11, latent_dim=2,
                      hidden=(16,), eval_every=5)
    args = (_gaussian_provider(0.0, 1.0, 1), man,
            KernelSpec("euclidean_gaussian", tau=0.5),
            DriftConfig(eta=0.5, eta_max=1e9, mode="gradient",
                        geometry_mode="euclidean_ambient"))
    r1 = train(cfg, *args)
    r2 = train(cfg, *args)
    assert r1.history == r2.history
    for a, b in zip(r1.params.net.params_flat(), r2.params.net.params_flat()):
        assert np.array_equal(a, b)
    for a, b in zip(r1.ema_params.net.params_flat(),
                    r2.ema_params.net.params_flat()):
        assert np.array_equal(a, b)


def test_train_recovers_1d_gaussian():
    """Generator trained against N(3,1) data matches its mean and spread."""
    man = euclidean(1)
    cfg = TrainConfig(steps=800, batch_size=256, seed=5, latent_dim=4,
                      hidden=(64, 64), lr=2e-3, eval_every=100)
    res = train(cfg, _gaussian_provider(3.0, 1.0, 1), man,
                KernelSpec("euclidean_gaussian", tau=0.5),
                DriftConfig(eta=0.5, eta_max=1e9, mode="gradient",
                            geometry_mode="euclidean_ambient"))
    pts = sample(res.ema_params, 4000, np.random.default_rng(99), 4)[:, 0]
    assert abs(np.mean(pts) - 3.0) < 0.2
    assert 0.75 < np.std(pts) < 1.25
    assert res.history[-1]["loss"] < res.history[0]["loss"]


# ------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    man = sphere()
    rng = np.random.default_rng(13)
    params = GeneratorParams.init(4, [16, 16], man, rng)
    state = OptimizerState(lr=1e-3, ema_decay=0.999)
    flat = params.net.params_flat()
    state.attach(flat)
    optimizer_step(state, flat, [rng.standard_normal(p.shape) for p in flat])
    path = str(tmp_path / "gen.ckpt")
    save_checkpoint(path, params, state)
    loaded, lstate = load_checkpoint(path)
    assert loaded.head == params.head
    assert loaded.manifold == man
    assert loaded.net.layer_dims == params.net.layer_dims
    for a, b in zip(loaded.net.params_flat(), params.net.params_flat()):
        assert np.array_equal(a, b)
    assert lstate.step == 1
    for a, b in zip(lstate.m + lstate.v + lstate.ema,
                    state.m + state.v + state.ema):
        assert np.array_equal(a, b)
    # samples from the loaded generator are identical
    s1 = sample(params, 16, np.random.default_rng(1), 4)
    s2 = sample(loaded, 16, np.random.default_rng(1), 4)
    assert np.array_equal(s1, s2)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"not a checkpoint")
    from driftlab.errors import InvalidInputError
    with pytest.raises(InvalidInputError):
        load_checkpoint(str(path))
