"""driftlab: one-step generative modeling with kernel drift fields on
Euclidean space, the sphere, the hyperboloid, and the Fisher-Rao simplex."""

from .drift import (
    DriftConfig,
    SampleBatch,
    base_drift,
    drift_field,
    gradient_drift,
    transport,
    transport_batch,
)
from .errors import DriftLabError
from .generator import GeneratorParams, TrainConfig, TrainResult, train
from .geometry import (
    Manifold,
    ManifoldPoint,
    TangentVector,
    euclidean,
    hyperboloid,
    sphere,
    sphere_product,
)
from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .metrics import MetricsReport
from .simulate import SimulationConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "DriftConfig", "SampleBatch", "base_drift", "drift_field",
    "gradient_drift", "transport", "transport_batch", "DriftLabError",
    "GeneratorParams", "TrainConfig", "TrainResult", "train", "Manifold",
    "ManifoldPoint", "TangentVector", "euclidean", "hyperboloid", "sphere",
    "sphere_product", "KernelSpec", "kernel_eval", "kernel_matrix",
    "MetricsReport", "SimulationConfig", "simulate", "__version__",
]
