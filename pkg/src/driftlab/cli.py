"""Command-line workbench: train | simulate | eval | kernel-check.

Owns output layout (<out>/<experiment>/<timestamp>/ plus a `latest` marker),
seeding, and file persistence. The config file grammar is documented in
docs/config.md.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import checks, datasets, metrics, svgplot
from .config import RunConfig, derive_seed, derived_rng
from .drift import SampleBatch
from .errors import DriftLabError, InvalidInputError
from .generator import sample as generator_sample
from .generator import save_checkpoint, train
from .geometry import Manifold, euclidean, hyperboloid, sphere
from .kernels import ALL_FAMILIES, KernelSpec
from .simulate import SimulationConfig, simulate, snapshots_to_csv


# --------------------------------------------------------------------------
# dataset wiring


class DatasetBundle:
    """A target distribution bound to a manifold: fresh batches on demand,
    plus the chart (when the target lives on a 2-D chart) and the sequence
    table (when the target is categorical)."""

    def __init__(self, manifold: Manifold, sampler, chart=None, table=None):
        self.manifold = manifold
        self._sampler = sampler
        self.chart = chart
        self.table = table

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._sampler(n, rng)


def build_dataset(cfg: RunConfig) -> DatasetBundle:
    ds = cfg["dataset"]
    name = ds["name"]
    manifold = cfg.manifold()

    if name == "gaussian":
        mean = np.asarray(ds["mean"], dtype=float)
        std = float(ds["std"])
        if manifold.family != "euclidean" or mean.size != manifold.ambient_dim:
            raise InvalidInputError(
                "gaussian dataset requires a euclidean manifold of matching dim")
        return DatasetBundle(manifold, lambda n, rng: rng.normal(
            mean, std, size=(n, mean.size)))

    if name in ("checkerboard", "swissroll"):
        noise_std = float(ds["noise_std"])

        def square(n, rng):
            seed = int(rng.integers(2**32))
            if name == "checkerboard":
                return datasets.sample_checkerboard(n, seed)
            return datasets.sample_swissroll(n, seed, noise_std)

        if manifold.family == "euclidean":
            if manifold.ambient_dim != 2:
                raise InvalidInputError(f"{name} on euclidean needs dim 2")
            return DatasetBundle(manifold, square)
        if manifold.family == "sphere":
            chart = datasets.ChartSpec("latlon_sphere",
                                       float(ds["chart_scale"] or 0.9))
        elif manifold.family == "hyperboloid":
            chart = datasets.ChartSpec("spatial_lift_hyperboloid",
                                       float(ds["chart_scale"] or 2.0))
        else:
            raise InvalidInputError(f"{name} is not defined on {manifold.family}")
        return DatasetBundle(
            manifold,
            lambda n, rng: datasets.chart_to_manifold(square(n, rng), chart).points,
            chart=chart)

    if name == "earth_csv":
        if manifold.family != "sphere":
            raise InvalidInputError("earth_csv requires the sphere manifold")
        if not ds["path"]:
            raise InvalidInputError("earth_csv requires dataset.path")
        earth = datasets.load_earth_csv(ds["path"], ds["tag"])
        splits = earth.split(seed=derive_seed(int(cfg["seed"]), "earth-split"))
        train_pts = splits["train"].points

        def from_split(n, rng):
            idx = rng.integers(0, len(train_pts), size=n)
            return train_pts[idx]

        bundle = DatasetBundle(manifold, from_split)
        bundle.splits = splits
        return bundle

    if name == "categorical_toy":
        L, K = int(ds["L"]), int(ds["K"])
        if manifold.family != "sphere_product" or \
                manifold.factors != L or manifold.factor_dim != K:
            raise InvalidInputError(
                "categorical_toy requires manifold sphere_product with "
                "factors = L and factor_dim = K")
        if ds["table"] == "markov":
            table = datasets.default_markov_table(L, K)
        elif ds["table"] == "product_uniform":
            table = datasets.product_uniform_table(L, K)
        else:
            raise InvalidInputError(f"unknown table {ds['table']!r}")

        def sampler(n, rng):
            seed = int(rng.integers(2**32))
            _, batch = datasets.sample_categorical_toy(n, seed, table)
            return batch.points

        return DatasetBundle(manifold, sampler, table=table)

    raise InvalidInputError(f"unknown dataset {name!r}")


# --------------------------------------------------------------------------
# metrics wiring

_GEODESIC_METRICS = ("mmd", "sinkhorn", "nn1")


def applicable_metrics(bundle: DatasetBundle) -> list[str]:
    out = ["sw2", "mmd", "sinkhorn", "nn1", "c2st"]
    if bundle.chart is not None:
        out.append("tile")
    if bundle.table is not None:
        out.append("kmer")
    return out


def compute_metrics(which: list[str], gen_points: np.ndarray,
                    data_points: np.ndarray, bundle: DatasetBundle,
                    cfg_metrics: dict, seed: int) -> metrics.MetricsReport:
    report = metrics.MetricsReport()
    man = bundle.manifold
    n_a, n_b = len(gen_points), len(data_points)
    for name in which:
        if name == "sw2":
            v = metrics.sliced_w2(gen_points, data_points,
                                  int(cfg_metrics["n_proj"]), seed)
        elif name == "mmd":
            v = metrics.mmd_geodesic(gen_points, data_points, man)
        elif name == "sinkhorn":
            res = metrics.sinkhorn_geodesic(
                gen_points, data_points, man,
                epsilon=float(cfg_metrics["sinkhorn_epsilon"]))
            if not res.converged:
                report.warn(f"sinkhorn stopped at {res.iterations} iterations "
                            "before reaching tolerance")
            v = res.value
        elif name == "nn1":
            n = min(n_a, n_b)
            v = metrics.nn1_accuracy(gen_points[:n], data_points[:n], man)
        elif name == "c2st":
            v = metrics.c2st(gen_points, data_points, seed)
        elif name == "tile":
            v = metrics.tile_accuracy(gen_points, bundle.chart)
        elif name == "kmer":
            L, K = bundle.table.L, bundle.table.K
            a = datasets.decode_sequences(gen_points, L, K)
            b = datasets.decode_sequences(data_points, L, K)
            v = metrics.kmer_correlation(list(map(tuple, a)),
                                         list(map(tuple, b)),
                                         int(cfg_metrics["kmer_k"]))
        else:
            raise InvalidInputError(f"unknown metric {name!r}")
        report.add(name, v, n_a, n_b, seed)
    return report


# --------------------------------------------------------------------------
# output layout


def make_run_dir(out_root: str, experiment: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{os.getpid()}"
    run_dir = os.path.join(out_root, experiment, stamp)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(out_root, experiment, "latest"), "w",
              encoding="utf-8") as fh:
        fh.write(stamp + "\n")
    return run_dir


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg.raw["seed"] = int(args.seed)
    if args.out is not None:
        cfg.raw["out"] = args.out
    return cfg


# --------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _load_config(args)
    bundle = build_dataset(cfg)
    manifold = bundle.manifold
    kernel = cfg.kernel()
    drift_cfg = cfg.drift()
    tc = cfg.train_config()

    run_dir = make_run_dir(cfg["out"], cfg["experiment"])
    _write(os.path.join(run_dir, "config.resolved"), cfg.to_yaml())

    def provider(step, rng):
        return bundle.sample(tc.batch_size, rng)

    result = train(tc, provider, manifold, kernel, drift_cfg)

    hist_lines = ["step,loss,mean_drift_norm"]
    hist_lines += [f"{h['step']},{h['loss']:.12g},{h['mean_drift_norm']:.12g}"
                   for h in result.history]
    _write(os.path.join(run_dir, "history.csv"), "\n".join(hist_lines) + "\n")
    save_checkpoint(os.path.join(run_dir, "checkpoint.ckpt"),
                    result.params, result.opt_state)
    save_checkpoint(os.path.join(run_dir, "checkpoint_ema.ckpt"),
                    result.ema_params)

    mcfg = cfg["metrics"]
    n_eval = int(mcfg["n_eval"])
    eval_seed = derive_seed(int(cfg["seed"]), "eval")
    gen_points = generator_sample(result.ema_params, n_eval,
                                  derived_rng(int(cfg["seed"]), "eval-latents"),
                                  tc.latent_dim)
    data_points = bundle.sample(n_eval, derived_rng(int(cfg["seed"]),
                                                    "eval-data"))
    which = mcfg["which"]
    if which == "all" or which == ["all"]:
        which = applicable_metrics(bundle)
    report = compute_metrics(which, gen_points, data_points, bundle,
                             mcfg, eval_seed)
    _write(os.path.join(run_dir, "metrics.csv"), report.to_csv())
    _write(os.path.join(run_dir, "samples.svg"),
           svgplot.cloud_svg(gen_points, manifold.family,
                             title=cfg["experiment"]))
    print(report.format_table())
    print(f"run directory: {run_dir}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    bundle = build_dataset(cfg)
    scfg_raw = cfg["simulate"]
    sim_cfg = SimulationConfig(
        n_particles=int(scfg_raw["n_particles"]),
        n_steps=int(scfg_raw["n_steps"]),
        snapshot_every=int(scfg_raw["snapshot_every"]),
        init=scfg_raw["init"],
        gaussian_chart_std=float(scfg_raw["gaussian_chart_std"]),
        kernel=cfg.kernel(),
        drift=cfg.drift(),
        seed=derive_seed(int(cfg["seed"]), "simulate"))
    data = SampleBatch(
        points=bundle.sample(int(cfg["metrics"]["n_eval"]),
                             derived_rng(int(cfg["seed"]), "sim-data")),
        manifold=bundle.manifold)
    snaps = simulate(sim_cfg, data)

    run_dir = make_run_dir(cfg["out"], cfg["experiment"])
    _write(os.path.join(run_dir, "config.resolved"), cfg.to_yaml())
    _write(os.path.join(run_dir, "snapshots.csv"), snapshots_to_csv(snaps))
    for snap in snaps:
        _write(os.path.join(run_dir, f"snapshot_{snap.step:06d}.svg"),
               svgplot.cloud_svg(snap.cloud.points, bundle.manifold.family,
                                 title=f"step {snap.step}"))
    print(f"{len(snaps)} snapshots, final mean drift norm "
          f"{snaps[-1].mean_drift_norm:.6g}")
    print(f"run directory: {run_dir}")
    return 0


def _load_points_csv(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        [float(tok) for tok in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    pts = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return pts


def _infer_manifold(points: np.ndarray, flag: str) -> Manifold:
    if flag == "euclidean":
        return euclidean(points.shape[1])
    if flag == "sphere":
        return sphere()
    if flag == "hyperboloid":
        return hyperboloid()
    # auto: 3-D unit vectors are treated as the sphere
    if points.shape[1] == 3 and np.allclose(
            np.linalg.norm(points, axis=1), 1.0, atol=1e-6):
        return sphere()
    return euclidean(points.shape[1])


def cmd_eval(args) -> int:
    a = _load_points_csv(args.samples_a)
    b = _load_points_csv(args.samples_b)
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    man = _infer_manifold(a, args.manifold)
    bundle = DatasetBundle(man, None)
    which = ["sw2", "mmd", "sinkhorn", "nn1"] if args.metric == "all" \
        else [args.metric]
    mcfg = {"n_proj": 128, "sinkhorn_epsilon": 1e-2, "kmer_k": 3}
    report = compute_metrics(which, a, b, bundle, mcfg, args.seed or 0)
    print(report.format_table())
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "metrics.csv"), report.to_csv())
    return 0


def cmd_kernel_check(args) -> int:
    family = args.family
    if family not in ALL_FAMILIES:
        raise InvalidInputError(f"unknown kernel family {family!r}")
    man = {"euclidean": euclidean(3), "sphere": sphere(),
           "hyperboloid": hyperboloid()}[args.manifold]
    spec = KernelSpec(family=family, tau=args.tau, nu=args.nu)
    rows = []

    err = checks.fd_gradient_check(spec, man, n_pairs=500, seed=args.seed or 0)
    rows.append(("gradient finite-difference", f"max rel err {err:.3e}",
                 err < 1e-5))

    if family in ("spectral_matern", "heat"):
        mc = checks.spectral_normalization_mc(spec, seed=args.seed or 0)
        rows.append(("spectral normalization MC",
                     f"integral {mc.estimate:.5f} +- {mc.stderr:.5f}",
                     mc.within_3se))

    sweep_man = man if man.family != "euclidean" else euclidean(3)
    pts = checks.fibonacci_sphere(200) if sweep_man.family == "sphere" \
        else sweep_man.random_points(np.random.default_rng(args.seed or 0), 200)
    sweep = checks.gram_psd_sweep(family, sweep_man, pts, nu=args.nu)
    worst = min(e for _, e in sweep.min_eigs)
    if sweep.witness is not None:
        tau_w, eig_w = sweep.witness
        rows.append(("gram PSD sweep",
                     f"non-PSD witness at tau={tau_w:.3g}, min eig {eig_w:.3e}",
                     True))
    else:
        rows.append(("gram PSD sweep",
                     f"no non-PSD witness found; worst min eig {worst:.3e}",
                     True))

    ok = True
    for name, detail, passed in rows:
        status = "PASS" if passed else "FAIL"
        ok = ok and passed
        print(f"{status}  {name:<28} {detail}")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="driftlab",
        description="kernel-drift generative modeling workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--workers", type=int,
                        default=os.cpu_count() or 1)

    sp = sub.add_parser("train", help="train a one-step generator")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("simulate", help="evolve a particle cloud")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("eval", help="metrics between two point CSVs")
    sp.add_argument("samples_a")
    sp.add_argument("samples_b")
    sp.add_argument("--metric", default="all",
                    choices=["all", "sw2", "mmd", "sinkhorn", "nn1", "c2st"])
    sp.add_argument("--manifold", default="auto",
                    choices=["auto", "euclidean", "sphere", "hyperboloid"])
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("kernel-check", help="kernel diagnostic sweeps")
    sp.add_argument("--family", required=True)
    sp.add_argument("--manifold", default="sphere",
                    choices=["euclidean", "sphere", "hyperboloid"])
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--nu", type=float, default=1.5)
    common(sp)
    sp.set_defaults(func=cmd_kernel_check)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (DriftLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
