"""Latent-variable Gaussian model shared by all penalized fits.

The generative model ties T blocks to one latent matrix Z with K-1 rows:
X_t = W_t Z + E_t, with Z standard normal across samples and E_t having a
diagonal covariance per block. Stacking blocks gives X = W Z + E with
marginal covariance Sigma = W W' + Psi. Everything downstream works on the
stacked arrays and never forms the p x p Sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError

# variance floor: absolute, and relative to the row's second moment
PSI_ABS_FLOOR = 1e-6
PSI_REL_FLOOR = 1e-4


@dataclass(frozen=True)
class FactorModel:
    """Stacked loading matrix, noise diagonal, and block layout.

    W has one column per latent dimension (K-1 total); psi holds the
    per-feature noise variances for all blocks concatenated in order.
    """

    W: np.ndarray
    psi: np.ndarray
    block_sizes: tuple
    K: int

    def __post_init__(self):
        W = np.ascontiguousarray(self.W, dtype=np.float64)
        psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != self.K - 1:
            raise ValidationError(
                f"W shape {W.shape} does not match K={self.K}"
            )
        if psi.shape != (W.shape[0],):
            raise ValidationError("psi length does not match W rows")
        if sum(self.block_sizes) != W.shape[0]:
            raise ValidationError("block sizes do not sum to W rows")
        if np.any(psi <= 0):
            raise ValidationError("psi entries must be positive")
        W.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))

    @property
    def q(self):
        return self.K - 1

    @property
    def p_total(self):
        return self.W.shape[0]

    def block_slices(self):
        start = 0
        for size in self.block_sizes:
            yield slice(start, start + size)
            start += size

    def w_block(self, t):
        sl = list(self.block_slices())[t]
        return self.W[sl]

    def psi_block(self, t):
        sl = list(self.block_slices())[t]
        return self.psi[sl]


@dataclass(frozen=True)
class LatentStats:
    """Posterior latent summaries from one expectation pass.

    EZ is the (K-1) x n posterior mean; cov_post the shared per-sample
    posterior covariance; SZZ the aggregated second moment
    n * cov_post + EZ EZ'.
    """

    EZ: np.ndarray
    cov_post: np.ndarray
    SZZ: np.ndarray

    @property
    def n(self):
        return self.EZ.shape[1]


def concat_values(blocks):
    return np.vstack([b.values for b in blocks])


def psi_floor(values):
    """Per-row lower bound for noise variances, from the centered data."""
    second = np.mean(values * values, axis=1)
    return np.maximum(PSI_ABS_FLOOR, PSI_REL_FLOOR * second)


def init_model(blocks, K, seed=0):
    """Initialize loadings from a truncated SVD of the stacked data.

    W takes the leading left singular vectors scaled by singular values over
    sqrt(n), so that the implied latent scores have second moment near n.
    Noise variances start at the per-row residual variance of the rank-(K-1)
    reconstruction, floored. The result is deterministic; `seed` is accepted
    for signature stability and reserved for degenerate spectra.

    Raises:
        ValidationError: K < 2, or K-1 not below the sample count.
    """
    del seed
    if K < 2:
        raise ValidationError(f"K must be >= 2, got {K}")
    n = blocks[0].n
    if K - 1 >= n:
        raise ValidationError(f"K-1={K - 1} must be below n={n}")
    X = concat_values(blocks)
    q = K - 1
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    U, s, Vt = U[:, :q], s[:q], Vt[:q]
    # fix the sign of each singular pair so results do not depend on the
    # underlying LAPACK driver
    for k in range(q):
        j = int(np.argmax(np.abs(U[:, k])))
        if U[j, k] < 0:
            U[:, k] = -U[:, k]
            Vt[k] = -Vt[k]
    W = U * (s / np.sqrt(n))
    Z0 = np.sqrt(n) * Vt
    resid = X - W @ Z0
    psi = np.maximum(np.mean(resid * resid, axis=1), psi_floor(X))
    return FactorModel(W=W, psi=psi, block_sizes=tuple(b.p for b in blocks), K=K)


def woodbury_apply(model, X):
    """Apply the inverse marginal covariance to stacked data columns.

    Uses the low-rank identity
    Sigma^{-1} X = Psi^{-1} X - Psi^{-1} W core^{-1} W' Psi^{-1} X with
    core = I + W' Psi^{-1} W, so cost stays linear in p.

    Returns:
        (S, core): S = Sigma^{-1} X with the same shape as X, and the
        (K-1) x (K-1) capacitance matrix `core` for reuse.

    Raises:
        NumericalError: the core factorization fails or outputs are
        non-finite; the message carries the condition estimate.
    """
    W = model.W
    psi_inv = 1.0 / model.psi
    PiX = X * psi_inv[:, None]
    PiW = W * psi_inv[:, None]
    core = np.eye(model.q) + W.T @ PiW
    try:
        cho = linalg.cho_factor(core, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"core factorization failed (cond~{np.linalg.cond(core):.3e}): {exc}"
        ) from exc
    S = PiX - PiW @ linalg.cho_solve(cho, W.T @ PiX)
    if not np.all(np.isfinite(S)):
        raise NumericalError(
            f"non-finite result in covariance solve (cond~{np.linalg.cond(core):.3e})"
        )
    return S, core
