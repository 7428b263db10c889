"""Two-sample evaluation suite.

All metrics are deterministic given (inputs, seed). Distances on curved
spaces are geodesic; sliced Wasserstein works extrinsically on the ambient
embeddings.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .datasets import ChartSpec, checkerboard_tile_is_black, manifold_to_chart
from .drift import SampleBatch
from .errors import InvalidInputError, UndefinedCorrelationError
from .geometry import Manifold
from .nn import MLP, OptimizerState, optimizer_step


def _as_points(x) -> np.ndarray:
    if isinstance(x, SampleBatch):
        return x.points
    p = np.atleast_2d(np.asarray(x, dtype=float))
    return p


def pairwise_geodesic(manifold: Manifold, A: np.ndarray,
                      B: np.ndarray) -> np.ndarray:
    """(n, m) matrix of geodesic distances."""
    return manifold.dist(A[:, None, :], B[None, :, :])


def sliced_w2(A, B, n_proj: int = 128, seed: int = 0) -> float:
    """Sliced Wasserstein-2 on ambient coordinates.

    Projects both sets onto n_proj random unit directions, computes the 1-D
    squared W2 between the projected empirical distributions, averages over
    directions, and takes the square root at the end. Unequal sizes are
    handled by evaluating both empirical quantile functions on a common
    grid of max(|A|, |B|) midpoints (deterministic, no resampling).
    """
    a, b = _as_points(A), _as_points(B)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InvalidInputError("sliced_w2 needs nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("ambient dimensions differ")
    if n_proj < 1:
        raise InvalidInputError("n_proj must be >= 1")
    rng = np.random.default_rng(seed)
    d = a.shape[1]
    dirs = rng.standard_normal((n_proj, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    n, m = pa.shape[0], pb.shape[0]
    if n != m:
        grid = (np.arange(max(n, m)) + 0.5) / max(n, m)
        pa = pa[np.minimum((grid * n).astype(int), n - 1)]
        pb = pb[np.minimum((grid * m).astype(int), m - 1)]
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def mmd_geodesic(A, B, manifold: Manifold) -> float:
    """Smooth discrepancy with kernel exp(-d_g(x,y)^2), unbiased U-statistic
    (off-diagonal means within each set, plain mean across). May be slightly
    negative when the distributions coincide; reported as-is."""
    a, b = _as_points(A), _as_points(B)
    n, m = a.shape[0], b.shape[0]
    if n < 2 or m < 2:
        raise InvalidInputError("mmd_geodesic needs at least 2 points per set")
    kaa = np.exp(-pairwise_geodesic(manifold, a, a) ** 2)
    kbb = np.exp(-pairwise_geodesic(manifold, b, b) ** 2)
    kab = np.exp(-pairwise_geodesic(manifold, a, b) ** 2)
    term_a = (kaa.sum() - np.trace(kaa)) / (n * (n - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (m * (m - 1))
    return float(term_a + term_b - 2.0 * kab.mean())


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    converged: bool
    iterations: int


def sinkhorn_geodesic(A, B, manifold: Manifold, epsilon: float = 1e-2,
                      max_iter: int = 2000, tol: float = 1e-6) -> SinkhornResult:
    """Entropically regularized transport cost with squared geodesic cost.

    Log-domain fixed-point iterations with uniform marginals; returns the
    transport cost <P, C> without the entropy term. Non-convergence within
    max_iter is flagged, not raised.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    a, b = _as_points(A), _as_points(B)
    n, m = a.shape[0], b.shape[0]
    C = pairwise_geodesic(manifold, a, b) ** 2
    log_mu = -np.log(n) * np.ones(n)
    log_nu = -np.log(m) * np.ones(m)
    f = np.zeros(n)
    g = np.zeros(m)
    neg_C = -C / epsilon
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # Simultaneous (Jacobi) updates keep the iteration exactly symmetric
        # under swapping A and B, so the reported cost is too. Half-step
        # damping prevents the two-cycle oscillation plain Jacobi exhibits.
        f_new = -epsilon * _logsumexp(
            neg_C + g[None, :] / epsilon + log_nu[None, :], axis=1)
        g_new = -epsilon * _logsumexp(
            neg_C + f[:, None] / epsilon + log_mu[:, None], axis=0)
        f = 0.5 * (f + f_new)
        g = 0.5 * (g + g_new)
        log_P = neg_C + (f[:, None] + g[None, :]) / epsilon \
            + log_mu[:, None] + log_nu[None, :]
        row_err = np.abs(np.exp(_logsumexp(log_P, axis=1)) - np.exp(log_mu)).max()
        col_err = np.abs(np.exp(_logsumexp(log_P, axis=0)) - np.exp(log_nu)).max()
        if max(row_err, col_err) < tol:
            converged = True
            break
    P = np.exp(log_P)
    return SinkhornResult(value=float(np.sum(P * C)), converged=converged,
                          iterations=it)


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def nn1_accuracy(A, B, manifold: Manifold) -> float:
    """Leave-one-out 1-NN two-sample accuracy on the pooled labeled set.

    Each pooled point is classified by its nearest neighbor (geodesic
    distance, excluding itself); ties go to the smaller index. Values near
    0.5 mean the two sets are hard to distinguish. Identical multisets
    give 0 by the tie-break rule (each point's nearest is its duplicate
    in the other class)."""
    a, b = _as_points(A), _as_points(B)
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("nn1_accuracy needs equal-size sets")
    if a.shape[0] < 2:
        raise InvalidInputError("need at least 2 points per set")
    pooled = np.concatenate([a, b], axis=0)
    labels = np.concatenate([np.zeros(len(a)), np.ones(len(b))])
    D = pairwise_geodesic(manifold, pooled, pooled)
    np.fill_diagonal(D, np.inf)
    nearest = np.argmin(D, axis=1)  # argmin takes the smallest index on ties
    return float(np.mean(labels[nearest] == labels))


def tile_accuracy(points, chart: ChartSpec) -> float:
    """Fraction of points whose chart pre-image lands on a black tile of the
    4x4 checkerboard. Pole-degenerate points and points outside the unit
    square count as misses."""
    uv, degenerate = manifold_to_chart(points, chart)
    inside = np.all((uv >= 0.0) & (uv <= 1.0), axis=1) & ~degenerate
    hits = inside & checkerboard_tile_is_black(uv)
    return float(np.mean(hits))


def c2st(A, B, seed: int = 0, epochs: int = 500, lr: float = 1e-3) -> float:
    """Classifier two-sample test: held-out accuracy of a small MLP trained
    to distinguish the two sets. 0.5 means indistinguishable.

    Protocol: pooled 80/20 split (seeded shuffle), (16, 16)-hidden SiLU
    classifier, full-batch Adam for a fixed number of epochs, inputs
    standardized by training statistics."""
    a, b = _as_points(A), _as_points(B)
    if a.shape[0] < 64 or b.shape[0] < 64:
        raise InvalidInputError("c2st needs at least 64 points per set")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("ambient dimensions differ")
    rng = np.random.default_rng(seed)
    X = np.concatenate([a, b], axis=0)
    y = np.concatenate([np.zeros(len(a)), np.ones(len(b))])
    perm = rng.permutation(len(X))
    X, y = X[perm], y[perm]
    n_train = int(0.8 * len(X))
    Xtr, ytr = X[:n_train], y[:n_train]
    Xte, yte = X[n_train:], y[n_train:]
    mu = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Xtr = (Xtr - mu) / sd
    Xte = (Xte - mu) / sd

    net = MLP.init([X.shape[1], 16, 16, 1], rng)
    opt = OptimizerState(lr=lr)
    opt.attach(net.params_flat())
    t = ytr[:, None]
    for _ in range(epochs):
        logits, cache = net.forward(Xtr)
        p = 1.0 / (1.0 + np.exp(-logits))
        grad_out = (p - t) / len(Xtr)  # mean binary cross-entropy
        dWs, dbs = net.backward(cache, grad_out)
        optimizer_step(opt, net.params_flat(), dWs + dbs)
    logits_te, _ = net.forward(Xte)
    pred = (logits_te[:, 0] > 0).astype(float)
    return float(np.mean(pred == yte))


def _kmer_frequencies(corpus, k: int) -> dict:
    counts: dict = {}
    total = 0
    for seq in corpus:
        items = tuple(seq)
        if len(items) < k:
            raise InvalidInputError(f"sequence shorter than k={k}")
        for i in range(len(items) - k + 1):
            key = items[i:i + k]
            counts[key] = counts.get(key, 0) + 1
            total += 1
    return {key: c / total for key, c in counts.items()}


def kmer_correlation(corpus_a, corpus_b, k: int) -> float:
    """Pearson correlation between relative k-mer frequency vectors over the
    union of k-mers observed in either corpus. Sequences may be strings or
    integer arrays."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    fa = _kmer_frequencies(corpus_a, k)
    fb = _kmer_frequencies(corpus_b, k)
    union = sorted(set(fa) | set(fb))
    va = np.array([fa.get(key, 0.0) for key in union])
    vb = np.array([fb.get(key, 0.0) for key in union])
    if np.std(va) < 1e-15 or np.std(vb) < 1e-15:
        raise UndefinedCorrelationError(
            "k-mer frequencies have zero variance in one corpus")
    return float(np.corrcoef(va, vb)[0, 1])


@dataclass
class MetricEntry:
    value: float
    n_a: int
    n_b: int
    seed: int
    params: dict = field(default_factory=dict)


@dataclass
class MetricsReport:
    """Named collection of metric values with provenance and diagnostics."""

    entries: dict[str, MetricEntry] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def add(self, name: str, value: float, n_a: int, n_b: int, seed: int = 0,
            **params) -> None:
        if not np.isfinite(value):
            raise InvalidInputError(f"metric {name!r} produced non-finite value")
        self.entries[name] = MetricEntry(value=float(value), n_a=n_a, n_b=n_b,
                                         seed=seed, params=dict(params))

    def warn(self, message: str) -> None:
        self.diagnostics.append(message)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("metric,value,n_a,n_b,seed\n")
        for name in sorted(self.entries):
            e = self.entries[name]
            buf.write(f"{name},{e.value:.12g},{e.n_a},{e.n_b},{e.seed}\n")
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'metric':<16} {'value':>14} {'n_a':>6} {'n_b':>6} {'seed':>6}"]
        for name in sorted(self.entries):
            e = self.entries[name]
            lines.append(f"{name:<16} {e.value:>14.6g} {e.n_a:>6} {e.n_b:>6} "
                         f"{e.seed:>6}")
        for msg in self.diagnostics:
            lines.append(f"warning: {msg}")
        return "\n".join(lines)
