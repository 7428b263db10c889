"""Run configuration: YAML parsing with strict key checking, default
resolution, and deterministic sub-seed derivation.

The full key grammar is documented in docs/config.md. Unknown keys are
rejected so typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .drift import DriftConfig
from .errors import InvalidInputError
from .generator import TrainConfig
from .geometry import Manifold, euclidean, hyperboloid, sphere, sphere_product
from .kernels import KernelSpec

_DEFAULTS: dict = {
    "experiment": "run",
    "seed": 0,
    "out": "runs",
    "manifold": {"family": "euclidean", "dim": 2, "factors": 1, "factor_dim": 1},
    "kernel": {"family": "euclidean_gaussian", "tau": 0.5, "nu": 1.5,
               "max_degree": 64},
    "drift": {"eta": 1.0, "eta_max": 1.0, "mode": "gradient",
              "geometry_mode": "euclidean_ambient"},
    "generator": {"latent_dim": 8, "hidden": [256, 256, 256, 256]},
    "train": {"steps": 2000, "batch_size": 256, "lr": 1e-3, "beta1": 0.9,
              "beta2": 0.95, "weight_decay": 0.01, "grad_clip_norm": 1.0,
              "ema_decay": 0.999, "warmup_steps": 0, "eval_every": 100},
    "dataset": {"name": "gaussian", "mean": [0.0], "std": 1.0,
                "chart_scale": None, "noise_std": 0.0, "path": None,
                "tag": "volcano", "L": 8, "K": 4, "table": "markov"},
    "simulate": {"n_particles": 500, "n_steps": 300, "snapshot_every": 10,
                 "init": "uniform_on_manifold", "gaussian_chart_std": 1.0},
    "metrics": {"which": ["sw2"], "n_eval": 2000, "n_proj": 128,
                "sinkhorn_epsilon": 1e-2, "kmer_k": 3},
}


def _merge_checked(defaults: dict, user: dict, path: str = "") -> dict:
    out = {}
    for key, dval in defaults.items():
        if key in user:
            uval = user[key]
            if isinstance(dval, dict) and isinstance(uval, dict):
                out[key] = _merge_checked(dval, uval, f"{path}{key}.")
            else:
                out[key] = uval
        else:
            out[key] = dval
    unknown = set(user) - set(defaults)
    if unknown:
        names = ", ".join(sorted(f"{path}{k}" for k in unknown))
        raise InvalidInputError(f"unknown config keys: {names}")
    return out


@dataclass
class RunConfig:
    """Fully resolved run configuration (every default filled in)."""

    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, user: dict) -> "RunConfig":
        if not isinstance(user, dict):
            raise InvalidInputError("config root must be a mapping")
        return cls(raw=_merge_checked(_DEFAULTS, user))

    @classmethod
    def from_yaml(cls, path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data or {})

    def __getitem__(self, key):
        return self.raw[key]

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)

    # Builders for library objects -------------------------------------

    def manifold(self) -> Manifold:
        m = self.raw["manifold"]
        family = m["family"]
        if family == "euclidean":
            return euclidean(int(m["dim"]))
        if family == "sphere":
            return sphere()
        if family == "hyperboloid":
            return hyperboloid()
        if family == "sphere_product":
            return sphere_product(int(m["factors"]), int(m["factor_dim"]))
        raise InvalidInputError(f"unknown manifold family {family!r}")

    def kernel(self) -> KernelSpec:
        k = self.raw["kernel"]
        return KernelSpec(family=k["family"], tau=float(k["tau"]),
                          nu=float(k["nu"]), max_degree=int(k["max_degree"]))

    def drift(self) -> DriftConfig:
        d = self.raw["drift"]
        return DriftConfig(eta=float(d["eta"]), eta_max=float(d["eta_max"]),
                           mode=d["mode"], geometry_mode=d["geometry_mode"])

    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        g = self.raw["generator"]
        return TrainConfig(
            steps=int(t["steps"]), batch_size=int(t["batch_size"]),
            seed=derive_seed(int(self.raw["seed"]), "train"),
            latent_dim=int(g["latent_dim"]),
            hidden=tuple(int(h) for h in g["hidden"]),
            lr=float(t["lr"]), beta1=float(t["beta1"]), beta2=float(t["beta2"]),
            weight_decay=float(t["weight_decay"]),
            grad_clip_norm=float(t["grad_clip_norm"]),
            ema_decay=float(t["ema_decay"]),
            warmup_steps=int(t["warmup_steps"]),
            eval_every=int(t["eval_every"]))


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def derive_seed(global_seed: int, label: str) -> int:
    """Deterministic sub-seed: splitmix64 of (global seed XOR fnv1a(label)),
    folded into the 32-bit range accepted everywhere."""
    return _splitmix64((global_seed & 0xFFFFFFFFFFFFFFFF) ^ _fnv1a(label)) \
        % (2**32)


def derived_rng(global_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(global_seed, label))
