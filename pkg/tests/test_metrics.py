"""Metrics: hand-computed oracles, calibration on identical distributions,
discrimination on separated ones, and the report container."""

import numpy as np
import pytest

from driftlab.datasets import default_sphere_chart, sample_checkerboard, chart_to_manifold
from driftlab.errors import InvalidInputError, UndefinedCorrelationError
from driftlab.geometry import euclidean, sphere
from driftlab.metrics import (
    MetricsReport,
    c2st,
    kmer_correlation,
    mmd_geodesic,
    nn1_accuracy,
    sinkhorn_geodesic,
    sliced_w2,
    tile_accuracy,
)


# ---------------------------------------------------------------- sliced W2


def test_sliced_w2_identical_sets_zero():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((200, 3))
    assert sliced_w2(A, A.copy()) == 0.0


def test_sliced_w2_translation_1d():
    """In one dimension a pure shift has W2 equal to the shift."""
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5000, 1))
    assert abs(sliced_w2(A, A + 2.0) - 2.0) < 1e-9


def test_sliced_w2_deterministic_and_symmetric():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((300, 2))
    B = rng.standard_normal((400, 2)) + 0.5
    v1 = sliced_w2(A, B, seed=7)
    v2 = sliced_w2(A, B, seed=7)
    assert v1 == v2
    assert sliced_w2(B, A, seed=7) == pytest.approx(v1, abs=1e-12)


def test_sliced_w2_unequal_sizes_consistent():
    """The quantile-grid estimate on a subsample of the same distribution
    stays near zero."""
    rng = np.random.default_rng(3)
    A = rng.standard_normal((10_000, 2))
    B = rng.standard_normal((2_000, 2))
    assert sliced_w2(A, B) < 0.1


def test_sliced_w2_input_validation():
    with pytest.raises(InvalidInputError):
        sliced_w2(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        sliced_w2(np.zeros((3, 2)), np.zeros((3, 3)))


# --------------------------------------------------------------------- MMD


def test_mmd_antipodal_singleton_pairs_hand_value():
    """A = two copies of the north pole, B = two copies of the south pole:
    unbiased MMD = 1 + 1 - 2 exp(-pi^2)."""
    man = sphere()
    A = np.tile([0.0, 0.0, 1.0], (2, 1))
    B = np.tile([0.0, 0.0, -1.0], (2, 1))
    val = mmd_geodesic(A, B, man)
    assert np.isclose(val, 2.0 - 2.0 * np.exp(-np.pi**2), atol=1e-10)


def test_mmd_same_distribution_near_zero():
    man = sphere()
    rng = np.random.default_rng(4)
    A = man.random_points(rng, 500)
    B = man.random_points(rng, 500)
    assert abs(mmd_geodesic(A, B, man)) < 0.01


def test_mmd_discriminates_hemispheres():
    man = sphere()
    rng = np.random.default_rng(5)
    A = man.random_points(rng, 300)
    A[:, 2] = np.abs(A[:, 2])
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    B = A * np.array([1.0, 1.0, -1.0])
    assert mmd_geodesic(A, B, man) > 0.05


# ----------------------------------------------------------------- sinkhorn


def test_sinkhorn_singleton_exact_cost():
    man = sphere()
    A = np.array([[1.0, 0.0, 0.0]])
    B = np.array([[0.0, 1.0, 0.0]])
    res = sinkhorn_geodesic(A, B, man, epsilon=1e-3)
    assert res.converged
    assert np.isclose(res.value, (np.pi / 2) ** 2, atol=1e-9)


def test_sinkhorn_identical_sets_small_cost():
    man = euclidean(2)
    rng = np.random.default_rng(6)
    A = rng.standard_normal((50, 2))
    res = sinkhorn_geodesic(A, A.copy(), man, epsilon=1e-3)
    assert res.value < 1e-4


def test_sinkhorn_symmetric_under_swap():
    man = sphere()
    rng = np.random.default_rng(7)
    A = man.random_points(rng, 40)
    B = man.random_points(rng, 60)
    r1 = sinkhorn_geodesic(A, B, man, epsilon=0.05)
    r2 = sinkhorn_geodesic(B, A, man, epsilon=0.05)
    assert abs(r1.value - r2.value) < 1e-9
    with pytest.raises(InvalidInputError):
        sinkhorn_geodesic(A, B, man, epsilon=0.0)


def test_sinkhorn_nonconvergence_is_flagged():
    man = euclidean(1)
    rng = np.random.default_rng(8)
    A = rng.standard_normal((30, 1))
    B = rng.standard_normal((30, 1)) + 50.0
    res = sinkhorn_geodesic(A, B, man, epsilon=1e-4, max_iter=3)
    assert not res.converged
    assert res.iterations == 3


# --------------------------------------------------------------------- 1-NN


def test_nn1_identical_multisets_zero():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((100, 2))
    assert nn1_accuracy(A, A.copy(), euclidean(2)) == 0.0


def test_nn1_separated_clusters_one():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((100, 2))
    B = rng.standard_normal((100, 2)) + 100.0
    assert nn1_accuracy(A, B, euclidean(2)) == 1.0


def test_nn1_same_distribution_calibrated():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((500, 2))
    B = rng.standard_normal((500, 2))
    acc = nn1_accuracy(A, B, euclidean(2))
    assert 0.4 < acc < 0.6


def test_nn1_requires_equal_sizes():
    with pytest.raises(InvalidInputError):
        nn1_accuracy(np.zeros((3, 2)), np.zeros((4, 2)), euclidean(2))


# --------------------------------------------------------------------- tile


def test_tile_accuracy_perfect_on_checkerboard_pushforward():
    chart = default_sphere_chart()
    uv = sample_checkerboard(2000, seed=12)
    batch = chart_to_manifold(uv, chart)
    assert tile_accuracy(batch, chart) == 1.0


def test_tile_accuracy_uniform_near_half():
    chart = default_sphere_chart()
    rng = np.random.default_rng(13)
    uv = rng.uniform(0, 1, size=(20_000, 2))
    batch = chart_to_manifold(uv, chart)
    assert abs(tile_accuracy(batch, chart) - 0.5) < 0.02


def test_tile_accuracy_pole_counts_as_miss():
    chart = default_sphere_chart()
    assert tile_accuracy(np.array([[0.0, 0.0, 1.0]]), chart) == 0.0


# --------------------------------------------------------------------- c2st


def test_c2st_same_distribution_near_chance():
    rng = np.random.default_rng(14)
    A = rng.standard_normal((400, 2))
    B = rng.standard_normal((400, 2))
    acc = c2st(A, B, seed=0)
    assert 0.38 < acc < 0.62


def test_c2st_separated_distributions_near_one():
    rng = np.random.default_rng(15)
    A = rng.standard_normal((400, 2))
    B = rng.standard_normal((400, 2)) + 5.0
    assert c2st(A, B, seed=0) > 0.95


def test_c2st_deterministic_given_seed():
    rng = np.random.default_rng(16)
    A = rng.standard_normal((200, 2))
    B = rng.standard_normal((200, 2)) + 1.0
    assert c2st(A, B, seed=3) == c2st(A, B, seed=3)
    with pytest.raises(InvalidInputError):
        c2st(A[:10], B, seed=0)


# --------------------------------------------------------------------- kmer


def test_kmer_correlation_identical_corpora():
    corpus = ["ABAB", "BBAA", "AABB"]
    assert kmer_correlation(corpus, list(corpus), 2) == pytest.approx(1.0)


def test_kmer_correlation_hand_value():
    """a: AAB -> {AA: 1/2, AB: 1/2}; b: ABB -> {AB: 1/2, BB: 1/2}.
    Union (AA, AB, BB): va = (.5, .5, 0), vb = (0, .5, .5), r = -1/2."""
    assert kmer_correlation(["AAB"], ["ABB"], 2) == pytest.approx(-0.5)


def test_kmer_correlation_integer_sequences():
    a = [np.array([0, 0, 0, 0, 1])]   # 00: 3/4, 01: 1/4
    b = [np.array([0, 1, 0, 1])]      # 01: 2/3, 10: 1/3
    v = kmer_correlation(a, b, 2)
    assert -1.0 <= v <= 1.0
    assert v == pytest.approx(kmer_correlation(b, a, 2))


def test_kmer_correlation_undefined_on_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        kmer_correlation(["AB"], ["AB"], 2)  # single k-mer, zero variance
    with pytest.raises(InvalidInputError):
        kmer_correlation(["A"], ["AB"], 2)


# ------------------------------------------------------------------- report


def test_metrics_report_csv_schema_and_order():
    rep = MetricsReport()
    rep.add("sw2", 0.125, n_a=100, n_b=200, seed=3)
    rep.add("mmd", 0.5, n_a=100, n_b=200)
    rep.warn("something to note")
    csv_text = rep.to_csv()
    lines = csv_text.strip().split("\n")
    assert lines[0] == "metric,value,n_a,n_b,seed"
    assert lines[1] == "mmd,0.5,100,200,0"
    assert lines[2] == "sw2,0.125,100,200,3"
    table = rep.format_table()
    assert "warning: something to note" in table
    with pytest.raises(InvalidInputError):
        rep.add("bad", float("nan"), n_a=1, n_b=1)
