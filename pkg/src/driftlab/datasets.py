"""Target distributions for the workbench.

Synthetic 2-D targets (checkerboard, swissroll) live in the unit square and
are pushed onto curved spaces through explicit chart maps. Geospatial event
CSVs are ingested as unit vectors on the sphere with a fixed random split.
A small categorical-sequence sampler provides discrete targets embedded on
products of positive sphere orthants.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .drift import SampleBatch
from .errors import InvalidInputError
from .geometry import (
    Manifold,
    hyperboloid,
    simplex_embed_array,
    sphere,
    sphere_product,
)

_SWISSROLL_T_MIN = 1.5 * np.pi
_SWISSROLL_T_MAX = 4.5 * np.pi


@dataclass(frozen=True)
class ChartSpec:
    """A map from the unit square onto a 2-D chart of a curved space.

    latlon_sphere: equirectangular chart, lon = (u - 1/2) * scale * 2pi,
        lat = (v - 1/2) * scale * pi. scale < 1 keeps images off the poles
        and the date line, where the inverse degenerates.
    spatial_lift_hyperboloid: (u, v) -> spatial coordinates
        (u - 1/2, v - 1/2) * 2 * scale, lifted to the hyperboloid by solving
        for the time component. Globally valid, exactly invertible.
    """

    chart: str
    scale: float

    def __post_init__(self):
        if self.chart not in ("latlon_sphere", "spatial_lift_hyperboloid"):
            raise InvalidInputError(f"unknown chart {self.chart!r}")
        if not self.scale > 0:
            raise InvalidInputError("chart scale must be positive")
        if self.chart == "latlon_sphere" and self.scale >= 1.0:
            raise InvalidInputError(
                "latlon_sphere scale must be < 1 to stay within chart validity")

    @property
    def manifold(self) -> Manifold:
        if self.chart == "latlon_sphere":
            return sphere()
        return hyperboloid()


def default_sphere_chart() -> ChartSpec:
    return ChartSpec(chart="latlon_sphere", scale=0.9)


def default_hyperboloid_chart() -> ChartSpec:
    return ChartSpec(chart="spatial_lift_hyperboloid", scale=2.0)


def sample_checkerboard(n: int, seed: int) -> np.ndarray:
    """Uniform samples on the black tiles of a 4x4 grid in the unit square.

    Tile (i, j) (column i, row j, both in 0..3) is black when i + j is even.
    Returns an (n, 2) array.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    black = np.array([(i, j) for i in range(4) for j in range(4)
                      if (i + j) % 2 == 0], dtype=float)
    idx = rng.integers(0, len(black), size=n)
    offsets = rng.uniform(0.0, 0.25, size=(n, 2))
    return black[idx] * 0.25 + offsets


def checkerboard_tile_is_black(points: np.ndarray) -> np.ndarray:
    """Boolean mask: does each unit-square point lie on a black 4x4 tile?

    Points outside [0, 1)^2 are clipped into the closed square first; the
    top/right boundary is folded into the last tile.
    """
    p = np.clip(np.asarray(points, dtype=float), 0.0, 1.0)
    cells = np.minimum((p * 4).astype(int), 3)
    return (cells[:, 0] + cells[:, 1]) % 2 == 0


def sample_swissroll(n: int, seed: int, noise_std: float = 0.0) -> np.ndarray:
    """Spiral (t cos t, t sin t), t in [1.5pi, 4.5pi], with Gaussian jitter,
    affinely rescaled into the unit square. Returns an (n, 2) array.

    The rescale is a fixed map (independent of the sample), so with
    noise_std = 0 the points lie exactly on the rescaled parametric curve.
    Jittered points are clipped to the square.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if noise_std < 0:
        raise InvalidInputError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    t = rng.uniform(_SWISSROLL_T_MIN, _SWISSROLL_T_MAX, size=n)
    p = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    if noise_std > 0:
        p = p + rng.normal(0.0, noise_std, size=p.shape)
    r = _SWISSROLL_T_MAX
    return np.clip((p + r) / (2.0 * r), 0.0, 1.0)


def swissroll_curve(t: np.ndarray) -> np.ndarray:
    """The noiseless swissroll curve under the same rescale as the sampler."""
    t = np.asarray(t, dtype=float)
    p = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    r = _SWISSROLL_T_MAX
    return (p + r) / (2.0 * r)


def chart_to_manifold(points: np.ndarray, spec: ChartSpec) -> SampleBatch:
    """Push unit-square points through the chart onto the manifold."""
    uv = np.atleast_2d(np.asarray(points, dtype=float))
    if uv.shape[1] != 2:
        raise InvalidInputError("chart points must be 2-D")
    if spec.chart == "latlon_sphere":
        lon = (uv[:, 0] - 0.5) * spec.scale * 2.0 * np.pi
        lat = (uv[:, 1] - 0.5) * spec.scale * np.pi
        x = np.stack([np.cos(lat) * np.cos(lon),
                      np.cos(lat) * np.sin(lon),
                      np.sin(lat)], axis=1)
        return SampleBatch(points=x, manifold=sphere())
    s = (uv - 0.5) * 2.0 * spec.scale
    x0 = np.sqrt(1.0 + np.sum(s * s, axis=1))
    x = np.concatenate([x0[:, None], s], axis=1)
    return SampleBatch(points=x, manifold=hyperboloid())


def manifold_to_chart(batch: SampleBatch | np.ndarray,
                      spec: ChartSpec) -> tuple[np.ndarray, np.ndarray]:
    """Invert the chart map. Returns (uv points, degenerate mask).

    On the sphere, points at the poles have no defined longitude; their
    longitude is set to 0 and the degenerate mask is True there.
    """
    x = batch.points if isinstance(batch, SampleBatch) else np.atleast_2d(
        np.asarray(batch, dtype=float))
    if x.shape[1] != 3:
        raise InvalidInputError("expected 3-D ambient points")
    if spec.chart == "latlon_sphere":
        z = np.clip(x[:, 2], -1.0, 1.0)
        lat = np.arcsin(z)
        horizontal = np.hypot(x[:, 0], x[:, 1])
        degenerate = horizontal < 1e-12
        lon = np.where(degenerate, 0.0, np.arctan2(x[:, 1], x[:, 0]))
        u = lon / (spec.scale * 2.0 * np.pi) + 0.5
        v = lat / (spec.scale * np.pi) + 0.5
        return np.stack([u, v], axis=1), degenerate
    uv = x[:, 1:] / (2.0 * spec.scale) + 0.5
    return uv, np.zeros(x.shape[0], dtype=bool)


@dataclass(frozen=True)
class EarthRecord:
    lat_deg: float
    lon_deg: float
    tag: str


@dataclass
class EarthData:
    """Parsed geospatial events: unit vectors on the sphere plus provenance."""

    records: list[EarthRecord]
    points: np.ndarray  # (n, 3)
    tag: str
    rejected_lines: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def split(self, seed: int) -> dict[str, SampleBatch]:
        """Seeded 80/10/10 train/val/test split (floor sizes, remainder
        to train). Reproducible from (seed, row count) alone."""
        n = len(self.records)
        perm = np.random.default_rng(seed).permutation(n)
        n_val = n // 10
        n_test = n // 10
        n_train = n - n_val - n_test
        man = sphere()
        return {
            "train": SampleBatch(self.points[perm[:n_train]], man),
            "val": SampleBatch(self.points[perm[n_train:n_train + n_val]], man),
            "test": SampleBatch(self.points[perm[n_train + n_val:]], man),
        }


def latlon_to_unit_vector(lat_deg: np.ndarray, lon_deg: np.ndarray) -> np.ndarray:
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    return np.stack([np.cos(lat) * np.cos(lon),
                     np.cos(lat) * np.sin(lon),
                     np.sin(lat)], axis=-1)


_EARTH_TAGS = ("volcano", "earthquake", "fire", "flood")


def load_earth_csv(path: str, dataset_tag: str) -> EarthData:
    """Load a `lat,lon` CSV (decimal degrees) as sphere points.

    Lines starting with `#` are skipped. Rows with coordinates outside
    [-90, 90] x [-180, 180] are rejected and recorded with their line
    number; rows that fail to parse raise an invalid-input error naming
    the line.
    """
    if dataset_tag not in _EARTH_TAGS:
        raise InvalidInputError(f"unknown dataset tag {dataset_tag!r}")
    records: list[EarthRecord] = []
    rejected: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = ((i, line) for i, line in enumerate(fh, start=1)
                 if not line.lstrip().startswith("#"))
        line_numbers: list[int] = []

        def rows():
            for i, line in lines:
                line_numbers.append(i)
                yield line

        reader = csv.DictReader(rows())
        if reader.fieldnames is None or not {
                "lat", "lon"}.issubset({f.strip() for f in reader.fieldnames}):
            raise InvalidInputError(f"{path}: header must contain lat,lon columns")
        for row in reader:
            lineno = line_numbers[-1]
            try:
                lat = float(row["lat"])
                lon = float(row["lon"])
            except (TypeError, ValueError, KeyError) as exc:
                raise InvalidInputError(
                    f"{path}:{lineno}: malformed row: {exc}") from exc
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                rejected.append((lineno, f"lat={lat} lon={lon} out of range"))
                continue
            records.append(EarthRecord(lat_deg=lat, lon_deg=lon, tag=dataset_tag))
    if not records:
        raise InvalidInputError(f"{path}: no valid rows")
    pts = latlon_to_unit_vector(np.array([r.lat_deg for r in records]),
                                np.array([r.lon_deg for r in records]))
    return EarthData(records=records, points=pts, tag=dataset_tag,
                     rejected_lines=rejected)


@dataclass(frozen=True)
class CategoricalTable:
    """Sequence distribution over K categories at L positions.

    kind "product": probs has shape (L, K), positions independent.
    kind "markov": probs[0] is the initial distribution and rows 1..L-1 are
    ignored; transition (K, K) gives first-order dependence.
    """

    kind: str
    L: int
    K: int
    probs: np.ndarray
    transition: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("product", "markov"):
            raise InvalidInputError(f"unknown table kind {self.kind!r}")
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.L, self.K):
            raise InvalidInputError("probs must have shape (L, K)")
        _check_rows_normalized(probs, "probs")
        object.__setattr__(self, "probs", probs)
        if self.kind == "markov":
            if self.transition is None:
                raise InvalidInputError("markov table needs a transition matrix")
            trans = np.asarray(self.transition, dtype=float)
            if trans.shape != (self.K, self.K):
                raise InvalidInputError("transition must have shape (K, K)")
            _check_rows_normalized(trans, "transition")
            object.__setattr__(self, "transition", trans)


def _check_rows_normalized(table: np.ndarray, name: str) -> None:
    if np.any(table < 0) or not np.allclose(table.sum(axis=-1), 1.0, atol=1e-9):
        raise InvalidInputError(f"{name} rows must be normalized probabilities")


def product_uniform_table(L: int, K: int) -> CategoricalTable:
    return CategoricalTable(kind="product", L=L, K=K,
                            probs=np.full((L, K), 1.0 / K))


def default_markov_table(L: int = 8, K: int = 4) -> CategoricalTable:
    """A fixed sticky-chain table: each state strongly prefers to repeat and
    otherwise steps to the next state cyclically. Gives sequences with
    pronounced k-mer structure, far from the uniform product."""
    init = np.full(K, 1.0 / K)
    trans = np.full((K, K), 0.3 / (K - 1) if K > 1 else 0.0)
    for a in range(K):
        trans[a, a] = 0.55
        trans[a, (a + 1) % K] += 0.15
    trans /= trans.sum(axis=1, keepdims=True)
    probs = np.tile(init, (L, 1))
    return CategoricalTable(kind="markov", L=L, K=K, probs=probs,
                            transition=trans)


def sample_categorical_toy(n: int, seed: int,
                           table: CategoricalTable) -> tuple[np.ndarray, SampleBatch]:
    """Draw n sequences from the table. Returns (sequences (n, L) int array,
    simplex-embedded SampleBatch on (S^{K-1}_+)^L with ambient dim L*K)."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    L, K = table.L, table.K
    seqs = np.empty((n, L), dtype=np.int64)
    if table.kind == "product":
        for pos in range(L):
            cdf = np.cumsum(table.probs[pos])
            seqs[:, pos] = np.searchsorted(cdf, rng.random(n), side="right")
    else:
        cdf0 = np.cumsum(table.probs[0])
        seqs[:, 0] = np.searchsorted(cdf0, rng.random(n), side="right")
        cdf_t = np.cumsum(table.transition, axis=1)
        for pos in range(1, L):
            u = rng.random(n)
            rows = cdf_t[seqs[:, pos - 1]]
            seqs[:, pos] = (u[:, None] > rows).sum(axis=1)
    np.clip(seqs, 0, K - 1, out=seqs)
    return seqs, embed_sequences(seqs, K)


def embed_sequences(seqs: np.ndarray, K: int) -> SampleBatch:
    """One-hot encode, clamp, and square-root embed each position onto the
    positive sphere orthant; concatenate positions into one ambient vector."""
    seqs = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
    n, L = seqs.shape
    onehot = np.zeros((n, L, K))
    onehot[np.arange(n)[:, None], np.arange(L)[None, :], seqs] = 1.0
    embedded = simplex_embed_array(onehot.reshape(n * L, K)).reshape(n, L * K)
    return SampleBatch(points=embedded, manifold=sphere_product(L, K))


def decode_sequences(batch: SampleBatch | np.ndarray, L: int, K: int) -> np.ndarray:
    """Map points on (S^{K-1}_+)^L back to category indices by the largest
    squared coordinate per position. Returns an (n, L) int array."""
    x = batch.points if isinstance(batch, SampleBatch) else np.atleast_2d(
        np.asarray(batch, dtype=float))
    if x.shape[1] != L * K:
        raise InvalidInputError("ambient dimension does not match L * K")
    return np.argmax(x.reshape(-1, L, K) ** 2, axis=2)
