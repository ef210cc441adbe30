import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omiclust import (
    Partition,
    ValidationError,
    adjusted_rand_index,
    assign_to_centers,
    kmeans,
    kmeans_fit,
    misclassification_rate,
)


def ari_pair_counting(a, b):
    """Direct O(n^2) pair-counting ARI for small n."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.size
    n11 = n00 = n10 = n01 = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa = a[i] == a[j]
            sb = b[i] == b[j]
            n11 += sa and sb
            n00 += (not sa) and (not sb)
            n10 += sa and not sb
            n01 += (not sa) and sb
    npairs = n * (n - 1) / 2
    ra = n11 + n10
    rb = n11 + n01
    expected = ra * rb / npairs
    maximum = 0.5 * (ra + rb)
    if maximum == expected:
        return 1.0 if (n10 == 0 and n01 == 0) else 0.0
    return (n11 - expected) / (maximum - expected)


def error_by_enumeration(pred, truth, K):
    """Best label matching by brute force over permutations."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    best = 0
    for perm in itertools.permutations(range(1, K + 1)):
        mapped = np.array([perm[p - 1] for p in pred])
        best = max(best, int(np.sum(mapped == truth)))
    return 1.0 - best / pred.size


labels_strategy = st.lists(st.integers(1, 4), min_size=2, max_size=10)


def test_partition_validation():
    p = Partition(labels=np.array([1, 2, 1, 2]), K=2)
    assert p.n == 4
    with pytest.raises(ValidationError, match="must be 1-d"):
        Partition(labels=np.zeros((2, 2), dtype=int), K=2)
    with pytest.raises(ValidationError, match="need at least K=3"):
        Partition(labels=np.array([1, 2]), K=3)
    with pytest.raises(ValidationError, match=r"labels must lie in 1..2"):
        Partition(labels=np.array([0, 1, 2]), K=2)
    with pytest.raises(ValidationError, match=r"labels must lie in 1..2"):
        Partition(labels=np.array([1, 2, 3]), K=2)


@given(labels_strategy, st.integers(0, 10 ** 6))
@settings(max_examples=200, deadline=None)
def test_ari_matches_pair_counting_oracle(a, seed):
    rng = np.random.default_rng(seed)
    b = rng.integers(1, 5, size=len(a))
    got = adjusted_rand_index(np.array(a), b)
    want = ari_pair_counting(np.array(a), b)
    assert got == pytest.approx(want, abs=1e-12)


@given(labels_strategy)
@settings(max_examples=100, deadline=None)
def test_ari_identical_is_one(a):
    assert adjusted_rand_index(np.array(a), np.array(a)) == 1.0


@given(labels_strategy, st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_ari_symmetric_and_label_invariant(a, seed):
    rng = np.random.default_rng(seed)
    a = np.array(a)
    b = rng.integers(1, 5, size=a.size)
    assert adjusted_rand_index(a, b) == pytest.approx(
        adjusted_rand_index(b, a), abs=1e-12
    )
    # renaming cluster ids changes nothing
    perm = rng.permutation(10) + 1
    assert adjusted_rand_index(perm[a - 1], b) == pytest.approx(
        adjusted_rand_index(a, b), abs=1e-12
    )


def test_ari_known_values():
    # independent-looking split of 6 samples, hand-checked table
    a = np.array([1, 1, 1, 2, 2, 2])
    b = np.array([1, 1, 2, 2, 2, 1])
    assert adjusted_rand_index(a, b) == pytest.approx(ari_pair_counting(a, b))
    # all-singletons vs all-one-cluster: zero denominator, not identical
    assert adjusted_rand_index([1, 2, 3], [1, 1, 1]) == 0.0
    assert adjusted_rand_index([1, 1, 1], [1, 1, 1]) == 1.0
    with pytest.raises(ValidationError, match="sizes differ"):
        adjusted_rand_index([1, 2], [1, 2, 3])
    with pytest.raises(ValidationError, match="empty"):
        adjusted_rand_index([], [])


def test_ari_accepts_partitions():
    pa = Partition(labels=np.array([1, 1, 2, 2]), K=2)
    pb = Partition(labels=np.array([2, 2, 1, 1]), K=2)
    assert adjusted_rand_index(pa, pb) == 1.0


@given(st.integers(2, 4), st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_misclassification_matches_enumeration(K, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(K, 12))
    pred = rng.integers(1, K + 1, size=n)
    truth = rng.integers(1, K + 1, size=n)
    got = misclassification_rate(pred, truth)
    want = error_by_enumeration(pred, truth, K)
    assert got == pytest.approx(want, abs=1e-12)


def test_misclassification_handles_unequal_K():
    pred = np.array([1, 1, 2, 2, 3, 3])
    truth = np.array([1, 1, 1, 1, 2, 2])
    # best match: {1,2}->1 keeps 4 of 6? one of 1/2 maps elsewhere
    assert misclassification_rate(pred, truth) == pytest.approx(1.0 / 3.0)
    assert misclassification_rate(truth, pred) == pytest.approx(1.0 / 3.0)


def test_kmeans_recovers_separated_clouds():
    rng = np.random.default_rng(0)
    pts = np.vstack(
        [
            rng.normal(loc, 0.1, size=(20, 2))
            for loc in ((0.0, 0.0), (5.0, 5.0), (-5.0, 5.0))
        ]
    )
    truth = np.repeat([1, 2, 3], 20)
    part = kmeans(pts, 3, seed=1)
    assert adjusted_rand_index(part, truth) == 1.0
    assert misclassification_rate(part, truth) == 0.0


def test_kmeans_deterministic_for_seed():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(40, 3))
    p1 = kmeans(pts, 4, seed=9)
    p2 = kmeans(pts, 4, seed=9)
    assert np.array_equal(p1.labels, p2.labels)


def test_kmeans_validation():
    with pytest.raises(ValidationError, match="n >= K >= 1"):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(ValidationError, match="non-finite"):
        kmeans(np.array([[np.nan, 0.0], [0.0, 1.0]]), 1)
    with pytest.raises(ValidationError, match="restarts"):
        kmeans(np.zeros((4, 2)), 2, restarts=0)


def test_kmeans_never_leaves_empty_clusters():
    # many duplicated points force empty-cluster repair paths
    pts = np.zeros((12, 1))
    pts[6:] = 1.0
    for seed in range(10):
        part = kmeans(pts, 4, restarts=1, seed=seed)
        assert np.unique(part.labels).size == 4


def test_kmeans_one_dim_input():
    x = np.concatenate([np.zeros(10), np.ones(10) * 8])
    part = kmeans(x, 2, seed=0)
    assert adjusted_rand_index(part, np.repeat([1, 2], 10)) == 1.0


def test_assign_to_centers_matches_training_partition():
    rng = np.random.default_rng(5)
    pts = np.vstack(
        [rng.normal(0, 0.2, size=(15, 2)), rng.normal(6, 0.2, size=(15, 2))]
    )
    part, centers = kmeans_fit(pts, 2, seed=2)
    again = assign_to_centers(pts, centers)
    assert np.array_equal(part.labels, again.labels)
