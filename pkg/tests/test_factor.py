import numpy as np
import pytest

from omiclust import (
    FactorModel,
    NumericalError,
    OmicsBlock,
    ValidationError,
    center_rows,
    e_step,
    init_model,
    predict_latent,
)
from omiclust.factor import (
    PSI_ABS_FLOOR,
    PSI_REL_FLOOR,
    concat_values,
    psi_floor,
    woodbury_apply,
)


def make_blocks(p_list=(7, 5), n=30, seed=0):
    rng = np.random.default_rng(seed)
    return [
        center_rows(
            OmicsBlock(name=f"b{t + 1}", values=rng.normal(size=(p, n)))
        )
        for t, p in enumerate(p_list)
    ]


def dense_sigma(model):
    return model.W @ model.W.T + np.diag(model.psi)


def test_factor_model_validation():
    W = np.zeros((5, 2))
    psi = np.ones(5)
    m = FactorModel(W=W, psi=psi, block_sizes=(3, 2), K=3)
    assert m.q == 2 and m.p_total == 5
    assert [s for s in m.block_slices()] == [slice(0, 3), slice(3, 5)]
    assert m.w_block(1).shape == (2, 2)
    assert m.psi_block(0).shape == (3,)

    with pytest.raises(ValidationError, match="does not match K"):
        FactorModel(W=W, psi=psi, block_sizes=(3, 2), K=4)
    with pytest.raises(ValidationError, match="psi length"):
        FactorModel(W=W, psi=np.ones(4), block_sizes=(3, 2), K=3)
    with pytest.raises(ValidationError, match="block sizes"):
        FactorModel(W=W, psi=psi, block_sizes=(3, 3), K=3)
    with pytest.raises(ValidationError, match="psi entries must be positive"):
        FactorModel(W=W, psi=np.zeros(5), block_sizes=(3, 2), K=3)


def test_psi_floor_levels():
    vals = np.vstack([np.zeros(10), 2.0 * np.ones(10)])
    floor = psi_floor(vals)
    assert floor[0] == PSI_ABS_FLOOR
    assert np.isclose(floor[1], PSI_REL_FLOOR * 4.0)


def test_init_model_shapes_and_scale():
    blocks = make_blocks()
    m = init_model(blocks, K=3)
    assert m.W.shape == (12, 2)
    assert m.block_sizes == (7, 5)
    assert np.all(m.psi > 0)
    # latent scores implied by the init have second moment near n
    stats = e_step(m, concat_values(blocks))
    diag = np.diag(stats.EZ @ stats.EZ.T) / blocks[0].n
    assert np.all(diag < 2.0)


def test_init_model_rejects_bad_K():
    blocks = make_blocks(n=5)
    with pytest.raises(ValidationError, match="K must be >= 2"):
        init_model(blocks, K=1)
    with pytest.raises(ValidationError, match="must be below n"):
        init_model(blocks, K=6)


def test_init_model_deterministic():
    blocks = make_blocks(seed=5)
    m1 = init_model(blocks, K=4)
    m2 = init_model(blocks, K=4)
    assert np.array_equal(m1.W, m2.W)
    assert np.array_equal(m1.psi, m2.psi)


def test_woodbury_matches_dense_inverse():
    # p small enough to invert Sigma directly
    rng = np.random.default_rng(7)
    for K in (2, 3, 4):
        W = rng.normal(size=(9, K - 1))
        psi = rng.uniform(0.5, 2.0, size=9)
        m = FactorModel(W=W, psi=psi, block_sizes=(5, 4), K=K)
        X = rng.normal(size=(9, 12))
        S, core = woodbury_apply(m, X)
        S_dense = np.linalg.solve(dense_sigma(m), X)
        rel = np.max(np.abs(S - S_dense)) / np.max(np.abs(S_dense))
        assert rel <= 1e-8
        assert np.allclose(core, np.eye(K - 1) + W.T @ (W / psi[:, None]))


def test_e_step_matches_dense_gaussian_conditioning():
    # E[Z|X] = W' Sigma^{-1} X and Cov = (I + W' Psi^{-1} W)^{-1}
    rng = np.random.default_rng(11)
    W = rng.normal(size=(8, 2))
    psi = rng.uniform(0.3, 1.5, size=8)
    m = FactorModel(W=W, psi=psi, block_sizes=(8,), K=3)
    X = rng.normal(size=(8, 15))
    stats = e_step(m, X)

    EZ_dense = W.T @ np.linalg.solve(dense_sigma(m), X)
    cov_dense = np.linalg.inv(np.eye(2) + W.T @ (W / psi[:, None]))
    assert np.max(np.abs(stats.EZ - EZ_dense)) <= 1e-9
    assert np.max(np.abs(stats.cov_post - cov_dense)) <= 1e-9
    SZZ_dense = 15 * cov_dense + EZ_dense @ EZ_dense.T
    assert np.max(np.abs(stats.SZZ - SZZ_dense)) <= 1e-8
    assert stats.n == 15


def test_e_step_rejects_wrong_rows():
    blocks = make_blocks()
    m = init_model(blocks, K=3)
    with pytest.raises(ValidationError, match="model expects 12"):
        e_step(m, np.zeros((5, 4)))


def test_woodbury_flags_singular_core():
    # zero noise variance is rejected upstream; a hostile psi close to
    # zero with colinear loadings makes the core blow up instead
    W = np.ones((6, 2)) * 1e9
    W[:, 1] = W[:, 0]
    psi = np.full(6, 1e-12)
    m = FactorModel(W=W, psi=psi, block_sizes=(6,), K=3)
    with pytest.raises(NumericalError):
        woodbury_apply(m, np.ones((6, 3)))


def test_predict_latent_matches_e_step():
    blocks = make_blocks(seed=2)
    m = init_model(blocks, K=3)
    EZ = predict_latent(m, blocks)
    assert np.allclose(EZ, e_step(m, concat_values(blocks)).EZ)
    with pytest.raises(ValidationError, match="do not match model"):
        predict_latent(m, blocks[:1])
