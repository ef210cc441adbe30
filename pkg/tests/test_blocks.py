import numpy as np
import pytest

from omiclust import (
    ElasticNet,
    FusedLasso,
    Lasso,
    OmicsBlock,
    ValidationError,
    center_rows,
    make_penalty,
    subset_columns,
)
from omiclust.blocks import validate_analysis


def small_block(name="b1", p=4, n=6, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return OmicsBlock(name=name, values=rng.normal(size=(p, n)), **kw)


def test_block_shape_and_defaults():
    b = small_block(p=3, n=5)
    assert b.p == 3 and b.n == 5
    assert b.feature_ids == ("f1", "f2", "f3")
    assert b.sample_ids is None
    assert not b.centered and not b.ordered
    assert b.values.dtype == np.float64


def test_block_values_are_read_only():
    b = small_block()
    with pytest.raises(ValueError):
        b.values[0, 0] = 1.0


def test_block_rejects_bad_shapes():
    with pytest.raises(ValidationError, match="must be 2-d"):
        OmicsBlock(name="b", values=np.zeros(5))
    with pytest.raises(ValidationError, match="at least 1 feature and 2 samples"):
        OmicsBlock(name="b", values=np.zeros((3, 1)))


def test_block_rejects_non_finite_with_position():
    vals = np.zeros((2, 3))
    vals[1, 2] = np.nan
    with pytest.raises(ValidationError, match=r"row 2, column 3"):
        OmicsBlock(name="b", values=vals)
    vals[1, 2] = np.inf
    with pytest.raises(ValidationError, match="non-finite"):
        OmicsBlock(name="b", values=vals)


def test_block_id_validation():
    with pytest.raises(ValidationError, match="2 feature ids for 3 rows"):
        OmicsBlock(name="b", values=np.zeros((3, 2)), feature_ids=("a", "b"))
    with pytest.raises(ValidationError, match="duplicate feature id 'a'"):
        OmicsBlock(name="b", values=np.zeros((2, 2)), feature_ids=("a", "a"))
    with pytest.raises(ValidationError, match="3 sample ids for 2 columns"):
        OmicsBlock(name="b", values=np.zeros((2, 2)), sample_ids=("x", "y", "z"))


def test_block_row_means_shape_checked():
    with pytest.raises(ValidationError, match="row_means shape"):
        OmicsBlock(name="b", values=np.zeros((3, 2)), row_means=np.zeros(2))


def test_center_rows_zero_mean_and_restore():
    b = small_block(seed=3)
    c = center_rows(b)
    assert c.centered
    assert np.allclose(c.values.mean(axis=1), 0.0, atol=1e-12)
    # recorded means restore the original data
    assert np.allclose(c.values + c.row_means[:, None], b.values)


def test_center_rows_accumulates_means():
    b = small_block(seed=4)
    once = center_rows(b)
    shifted = OmicsBlock(
        name="b1",
        values=once.values + 2.0,
        row_means=once.row_means,
    )
    twice = center_rows(shifted)
    # total shift from the raw data is the sum of both passes
    assert np.allclose(twice.row_means, once.row_means + 2.0)


def test_subset_columns_picks_samples():
    b = small_block(n=5, sample_ids=tuple("abcde"))
    c = center_rows(b)
    s = subset_columns(c, [0, 3])
    assert s.n == 2
    assert s.sample_ids == ("a", "d")
    assert not s.centered
    assert np.allclose(s.values, c.values[:, [0, 3]])
    assert np.allclose(s.row_means, c.row_means)


def test_penalty_params_and_kinds():
    assert Lasso(0.5).params == (0.5,)
    assert Lasso(0.5).kind == "lasso"
    assert ElasticNet(0.1, 0.2).params == (0.1, 0.2)
    assert FusedLasso(0.1, 0.2).kind == "fused"
    assert make_penalty("lasso", (1.0,)) == Lasso(1.0)
    assert make_penalty("enet", (1.0, 2.0)) == ElasticNet(1.0, 2.0)


def test_penalty_rejects_bad_values():
    with pytest.raises(ValidationError, match="lam must be a finite value >= 0"):
        Lasso(-1.0)
    with pytest.raises(ValidationError, match="lam2"):
        FusedLasso(0.1, np.nan)
    with pytest.raises(ValidationError, match="unknown penalty kind 'ridge'"):
        make_penalty("ridge", (1.0,))


def test_validate_analysis_catches_mismatches():
    b1 = center_rows(small_block("g", n=6, seed=1))
    b2 = center_rows(small_block("m", n=6, seed=2))
    validate_analysis([b1, b2])  # fine

    with pytest.raises(ValidationError, match="need at least one block"):
        validate_analysis([])
    b3 = center_rows(small_block("x", n=5, seed=3))
    with pytest.raises(ValidationError, match="has 5 samples, expected 6"):
        validate_analysis([b1, b3])
    with pytest.raises(ValidationError, match="not row-centered"):
        validate_analysis([b1, small_block("raw", n=6)])


def test_validate_analysis_sample_id_mismatch_names_column():
    ids1 = ("s1", "s2", "s3", "s4")
    ids2 = ("s1", "s2", "sX", "s4")
    b1 = center_rows(small_block("g", n=4, seed=1, sample_ids=ids1))
    b2 = center_rows(small_block("m", n=4, seed=2, sample_ids=ids2))
    with pytest.raises(ValidationError, match=r"column 3: 's3' vs 'sX'"):
        validate_analysis([b1, b2])


def test_validate_analysis_penalties():
    b1 = center_rows(small_block("g", seed=1))
    b2 = center_rows(small_block("m", seed=2))
    with pytest.raises(ValidationError, match="1 penalties for 2 blocks"):
        validate_analysis([b1, b2], [Lasso(0.1)])
    with pytest.raises(ValidationError, match="requires ordered rows"):
        validate_analysis([b1], [FusedLasso(0.1, 0.1)])
    ordered = center_rows(small_block("g", seed=1, ordered=True))
    validate_analysis([ordered], [FusedLasso(0.1, 0.1)])  # fine
