"""Generator-free particle harness.

Evolves a particle cloud directly under repeated drift-and-transport steps
against a fixed data batch. This isolates the drift field from network
training and is the fastest way to study its behavior.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .drift import DriftConfig, SampleBatch, drift_field, transport_batch
from .errors import InvalidInputError
from .geometry import Manifold
from .kernels import KernelSpec


@dataclass(frozen=True)
class SimulationConfig:
    n_particles: int
    n_steps: int
    kernel: KernelSpec
    drift: DriftConfig
    snapshot_every: int = 1
    init: str = "uniform_on_manifold"  # uniform_on_manifold | gaussian_chart | custom
    init_points: np.ndarray | None = None
    gaussian_chart_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidInputError("need at least 2 particles")
        if self.n_steps < 0:
            raise InvalidInputError("n_steps must be >= 0")
        if self.snapshot_every < 1:
            raise InvalidInputError("snapshot_every must be >= 1")
        if self.init not in ("uniform_on_manifold", "gaussian_chart", "custom"):
            raise InvalidInputError(f"unknown init {self.init!r}")
        if self.init == "custom" and self.init_points is None:
            raise InvalidInputError("custom init requires init_points")


@dataclass
class Snapshot:
    step: int
    cloud: SampleBatch
    mean_drift_norm: float


def _initialize(config: SimulationConfig, manifold: Manifold,
                rng: np.random.Generator) -> np.ndarray:
    if config.init == "custom":
        pts = np.atleast_2d(np.asarray(config.init_points, dtype=float))
        if pts.shape != (config.n_particles, manifold.ambient_dim):
            raise InvalidInputError("init_points shape does not match config")
        manifold.check_point(pts)
        return pts.copy()
    if config.init == "uniform_on_manifold":
        return manifold.random_points(rng, config.n_particles)
    # gaussian_chart: ambient Gaussian projected onto the manifold
    raw = rng.normal(0.0, config.gaussian_chart_std,
                     size=(config.n_particles, manifold.ambient_dim))
    if manifold.family == "euclidean":
        return raw
    if manifold.family == "hyperboloid":
        spatial = raw[:, 1:]
        x0 = np.sqrt(1.0 + np.sum(spatial * spatial, axis=1))
        return np.concatenate([x0[:, None], spatial], axis=1)
    return manifold.project(raw)


def simulate(config: SimulationConfig, data: SampleBatch) -> list[Snapshot]:
    """Iterate cloud <- transport(cloud, drift(cloud; pos=data, neg=cloud)).

    The data batch is fixed for the whole run. Snapshots (including step 0
    and the final step) record the cloud and the mean intrinsic drift norm.
    """
    manifold = data.manifold
    rng = np.random.default_rng(config.seed)
    cloud = _initialize(config, manifold, rng)
    snapshots: list[Snapshot] = []

    def record(step: int, V: np.ndarray) -> None:
        norms = manifold.tangent_norm(cloud, V)
        snapshots.append(Snapshot(
            step=step,
            cloud=SampleBatch(points=cloud.copy(), manifold=manifold,
                              role="model_negative"),
            mean_drift_norm=float(np.mean(norms)),
        ))

    neg = SampleBatch(points=cloud, manifold=manifold, role="model_negative")
    V = drift_field(cloud, data, neg, config.kernel, config.drift)
    record(0, V)
    for step in range(1, config.n_steps + 1):
        cloud = transport_batch(cloud, V, manifold, config.drift)
        neg = SampleBatch(points=cloud, manifold=manifold, role="model_negative")
        V = drift_field(cloud, data, neg, config.kernel, config.drift)
        if step % config.snapshot_every == 0 or step == config.n_steps:
            record(step, V)
    return snapshots


def snapshots_to_csv(snapshots: list[Snapshot]) -> str:
    """CSV with schema step,particle_id,coord0,coord1,..."""
    if not snapshots:
        raise InvalidInputError("no snapshots")
    dim = snapshots[0].cloud.points.shape[1]
    buf = io.StringIO()
    header = "step,particle_id," + ",".join(f"coord{i}" for i in range(dim))
    buf.write(header + "\n")
    for snap in snapshots:
        for pid, row in enumerate(snap.cloud.points):
            coords = ",".join(f"{c:.17g}" for c in row)
            buf.write(f"{snap.step},{pid},{coords}\n")
    return buf.getvalue()
