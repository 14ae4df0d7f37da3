"""Segment scoring against brute-force oracles; PCA against power iteration."""

import numpy as np
import pytest

from scenesed.metrics import (
    MetricError, SegmentCounts, macro_f, micro_f, pairwise_distances, pca_2d,
    score_report, segment_counts,
)


def brute_force_counts(ref, pred):
    n, t = ref.shape
    tp = np.zeros(n, dtype=int)
    fp = np.zeros(n, dtype=int)
    fn = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(t):
            r, p = bool(ref[i, j]), bool(pred[i, j])
            if r and p:
                tp[i] += 1
            elif p and not r:
                fp[i] += 1
            elif r and not p:
                fn[i] += 1
    return tp, fp, fn


def test_perfect_prediction():
    rng = np.random.default_rng(0)
    ref = (rng.random((3, 20)) < 0.4).astype(int)
    counts = segment_counts(ref, ref)
    assert np.array_equal(counts.tp, ref.sum(axis=1))
    assert not counts.fp.any()
    assert not counts.fn.any()


def test_single_class_swap():
    counts = segment_counts(np.array([[1, 0]]), np.array([[0, 1]]))
    assert (counts.tp[0], counts.fp[0], counts.fn[0]) == (0, 1, 1)


def test_counts_match_brute_force_on_random_pairs():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = rng.integers(1, 7)
        t = rng.integers(1, 51)
        ref = (rng.random((n, t)) < 0.3).astype(int)
        pred = (rng.random((n, t)) < 0.3).astype(int)
        counts = segment_counts(ref, pred)
        tp, fp, fn = brute_force_counts(ref, pred)
        assert np.array_equal(counts.tp, tp)
        assert np.array_equal(counts.fp, fp)
        assert np.array_equal(counts.fn, fn)


def test_counts_shape_mismatch():
    with pytest.raises(MetricError):
        segment_counts(np.zeros((2, 3)), np.zeros((2, 4)))


def test_counts_accumulate_across_clips():
    a = segment_counts(np.array([[1, 1, 0]]), np.array([[1, 0, 1]]))
    b = segment_counts(np.array([[0, 1, 0]]), np.array([[0, 1, 0]]))
    total = a + b
    assert (total.tp[0], total.fp[0], total.fn[0]) == (2, 1, 1)


def test_tp_plus_fn_equals_reference_activity():
    rng = np.random.default_rng(2)
    ref = (rng.random((4, 30)) < 0.5).astype(int)
    pred = (rng.random((4, 30)) < 0.5).astype(int)
    counts = segment_counts(ref, pred)
    assert np.array_equal(counts.tp + counts.fn, ref.sum(axis=1))


# ---------------------------------------------------------------------------
# F-scores


def test_perfect_scores_are_one():
    ref = np.array([[1, 0, 1], [0, 1, 0]])
    counts = segment_counts(ref, ref)
    assert micro_f(counts) == 1.0
    assert macro_f(counts) == 1.0


def test_worked_two_class_example():
    counts = SegmentCounts(tp=np.array([1, 0]), fp=np.array([1, 0]), fn=np.array([1, 0]))
    assert micro_f(counts) == 2 * 1 / (2 * 1 + 1 + 1)  # 0.5
    assert macro_f(counts) == 0.25  # (0.5 + 0) / 2, absent class scores 0


def test_degenerate_all_empty():
    counts = SegmentCounts.zeros(3)
    assert micro_f(counts) == 0.0
    assert macro_f(counts) == 0.0


def test_scores_invariant_under_class_relabeling():
    rng = np.random.default_rng(3)
    ref = (rng.random((5, 40)) < 0.3).astype(int)
    pred = (rng.random((5, 40)) < 0.3).astype(int)
    counts = segment_counts(ref, pred)
    perm = rng.permutation(5)
    permuted = segment_counts(ref[perm], pred[perm])
    assert micro_f(counts) == micro_f(permuted)
    assert abs(macro_f(counts) - macro_f(permuted)) < 1e-15


def test_empty_clip_changes_nothing():
    rng = np.random.default_rng(4)
    ref = (rng.random((3, 20)) < 0.4).astype(int)
    pred = (rng.random((3, 20)) < 0.4).astype(int)
    counts = segment_counts(ref, pred)
    padded = counts + segment_counts(np.zeros((3, 10)), np.zeros((3, 10)))
    assert micro_f(counts) == micro_f(padded)
    assert macro_f(counts) == macro_f(padded)


def test_single_class_micro_equals_macro():
    rng = np.random.default_rng(5)
    for _ in range(10):
        ref = (rng.random((1, 30)) < 0.4).astype(int)
        pred = (rng.random((1, 30)) < 0.4).astype(int)
        counts = segment_counts(ref, pred)
        assert micro_f(counts) == macro_f(counts)


def test_score_report_fields():
    counts = SegmentCounts(tp=np.array([2, 0]), fp=np.array([1, 0]), fn=np.array([1, 3]))
    report = score_report(counts, ["dog", "cat"])
    assert report.classes[0].precision == 2 / 3
    assert report.classes[0].recall == 2 / 3
    assert report.classes[1].f_score == 0.0
    d = report.to_dict()
    assert set(d) == {"micro_f", "macro_f", "classes"}
    assert 0.0 <= d["micro_f"] <= 1.0


# ---------------------------------------------------------------------------
# PCA


def power_iteration_pca(x, iters=4000):
    """Deflated power iteration on the covariance; the independent oracle."""
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    dirs = []
    for _ in range(2):
        v = np.ones(cov.shape[0]) / np.sqrt(cov.shape[0])
        for _ in range(iters):
            v = cov @ v
            v /= np.linalg.norm(v)
        lam = v @ cov @ v
        dirs.append(v)
        cov = cov - lam * np.outer(v, v)
    return centered @ np.array(dirs).T


def test_rank2_data_projects_isometrically():
    rng = np.random.default_rng(6)
    basis = rng.normal(size=(2, 10))
    coeffs = rng.normal(size=(8, 2))
    x = coeffs @ basis + rng.normal(size=10)  # rank-2 cloud, arbitrary offset
    proj, _ = pca_2d(x)
    orig = pairwise_distances(x)
    reduced = pairwise_distances(proj)
    assert np.max(np.abs(orig - reduced)) < 1e-9


def test_identical_points_project_to_origin():
    x = np.tile(np.array([1.0, 2.0, 3.0]), (5, 1))
    proj, fractions = pca_2d(x)
    assert np.allclose(proj, 0.0)
    assert np.array_equal(fractions, [0.0, 0.0])


def test_pca_matches_power_iteration_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(5, 10))
    proj, _ = pca_2d(x)
    oracle = power_iteration_pca(x)
    for col in range(2):
        direct = np.max(np.abs(proj[:, col] - oracle[:, col]))
        flipped = np.max(np.abs(proj[:, col] + oracle[:, col]))
        assert min(direct, flipped) < 1e-6


def test_pca_is_deterministic_with_positive_leading_coordinates():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(6, 4))
    a, fa = pca_2d(x)
    b, fb = pca_2d(x.copy())
    assert np.array_equal(a, b)
    assert np.array_equal(fa, fb)


def test_explained_variance_fractions_properties():
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.normal(size=(7, 5)) * rng.uniform(0.1, 3.0, size=5)
        _, fractions = pca_2d(x)
        assert 0.0 <= fractions[1] <= fractions[0] <= 1.0
        assert fractions.sum() <= 1.0 + 1e-12


def test_pca_needs_three_vectors():
    with pytest.raises(MetricError):
        pca_2d(np.zeros((2, 4)))


# ---------------------------------------------------------------------------
# distances


def test_identical_points_distance_zero():
    d = pairwise_distances(np.ones((3, 4)))
    assert np.array_equal(d, np.zeros((3, 3)))


def test_three_four_five():
    d = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert d[0, 1] == 5.0
    assert d[1, 0] == 5.0
    assert d[0, 0] == d[1, 1] == 0.0


def test_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(6, 3))
    d = pairwise_distances(x)
    assert np.array_equal(d, d.T)
    for i in range(6):
        for j in range(6):
            for k in range(6):
                assert d[i, j] <= d[i, k] + d[k, j] + 1e-12
