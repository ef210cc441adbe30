"""Penalized EM fitting of the joint latent-variable model.

Each iteration runs one expectation pass, one ridge-reweighted update of the
loadings per block (the absolute-value terms are replaced by quadratics
around the previous estimate), and one noise-variance update. Rows whose
previous loadings sit entirely below the reweighting floor are frozen at
zero for the rest of the fit; entries below a hard threshold are zeroed
once at convergence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import cg

from .blocks import validate_analysis
from .clustering import Partition, kmeans
from .errors import NumericalError, ValidationError
from .factor import (
    PSI_ABS_FLOOR,
    FactorModel,
    LatentStats,
    concat_values,
    init_model,
    psi_floor,
    woodbury_apply,
)
from .util import derive_seed

# switch the fused system to conjugate gradients beyond this size
FUSED_CG_LIMIT = 200_000


@dataclass(frozen=True)
class FitOptions:
    """Knobs for a single fit.

    tol is applied to the relative objective change |d| / (1 + |obj|);
    lqa_floor bounds the reweighting denominators and doubles as the
    drop threshold; zero_threshold is the hard zero applied to W once
    at convergence.
    """

    max_iter: int = 200
    tol: float = 1e-4
    lqa_floor: float = 1e-6
    zero_threshold: float = 1e-4
    kmeans_restarts: int = 20
    seed: int = 0
    isotropic_psi: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if not (self.tol > 0 and self.lqa_floor > 0):
            raise ValidationError("tol and lqa_floor must be positive")
        if self.zero_threshold < 0:
            raise ValidationError("zero_threshold must be >= 0")
        if self.kmeans_restarts < 1:
            raise ValidationError("kmeans_restarts must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Fitted model plus the sample-level outputs of one EM run."""

    model: FactorModel
    stats: LatentStats
    labels: Partition
    objective_trace: tuple
    converged: bool
    n_iter: int
    selected: tuple  # per block: 1-based indices of rows kept nonzero

    @property
    def K(self):
        return self.model.K


def e_step(model, data):
    """Posterior latent summaries for stacked data at the current model.

    `data` may be the stacked p x n array or a block list. EZ comes from
    the low-rank covariance solve; the aggregated second moment adds the
    shared posterior covariance n times.
    """
    X = data if isinstance(data, np.ndarray) else concat_values(data)
    if X.shape[0] != model.p_total:
        raise ValidationError(
            f"data has {X.shape[0]} rows, model expects {model.p_total}"
        )
    n = X.shape[1]
    S, core = woodbury_apply(model, X)
    EZ = model.W.T @ S
    try:
        cov_post = linalg.cho_solve(linalg.cho_factor(core, lower=True), np.eye(model.q))
    except linalg.LinAlgError as exc:
        raise NumericalError(f"posterior covariance solve failed: {exc}") from exc
    cov_post = 0.5 * (cov_post + cov_post.T)
    SZZ = n * cov_post + EZ @ EZ.T
    SZZ = 0.5 * (SZZ + SZZ.T)
    return LatentStats(EZ=EZ, cov_post=cov_post, SZZ=SZZ)


def predict_latent(model, blocks):
    """Posterior latent means for new samples under a fitted model.

    The new blocks must match the training blocks in feature count and
    order, and be centered with the training row means.
    """
    sizes = tuple(b.p for b in blocks)
    if sizes != model.block_sizes:
        raise ValidationError(
            f"block sizes {sizes} do not match model {model.block_sizes}"
        )
    return e_step(model, concat_values(blocks)).EZ


# ---------------------------------------------------------------------------
# loading updates
# ---------------------------------------------------------------------------


def _kept_rows(prev_w, l1, floor):
    """Drop rule: with an active sparsity rate, rows entirely below the
    floor stay at zero."""
    if l1 <= 0:
        return np.ones(prev_w.shape[0], dtype=bool)
    return np.any(np.abs(prev_w) >= floor, axis=1)


def _ridge_rows_update(C, SZZ, a_diag, kept):
    """Solve w_i (SZZ + diag(a_i)) = c_i for every kept row."""
    p, q = C.shape
    W = np.zeros((p, q))
    if not np.any(kept):
        return W
    if q == 1:
        W[kept, 0] = C[kept, 0] / (SZZ[0, 0] + a_diag[kept, 0])
        return W
    m = int(kept.sum())
    M = np.broadcast_to(SZZ, (m, q, q)).copy()
    idx = np.arange(q)
    M[:, idx, idx] += a_diag[kept]
    try:
        W[kept] = np.linalg.solve(M, C[kept, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"row ridge solve failed: {exc}") from exc
    return W


def _lasso_update(C, SZZ, prev_w, sigma2, lam, floor):
    a_diag = 2.0 * sigma2[:, None] * lam / np.maximum(np.abs(prev_w), floor)
    return _ridge_rows_update(C, SZZ, a_diag, _kept_rows(prev_w, lam, floor))


def _enet_update(C, SZZ, prev_w, sigma2, lam1, lam2, floor):
    a_diag = 2.0 * sigma2[:, None] * (
        lam1 / np.maximum(np.abs(prev_w), floor) + lam2
    )
    return _ridge_rows_update(C, SZZ, a_diag, _kept_rows(prev_w, lam1, floor))


def _fused_banded_system(C, SZZ, prev_w, sigma2, lam1, lam2, floor, kept):
    """Assemble the symmetric banded system for one ordered block.

    Loadings are vectorized feature-major, so the coefficient of feature i
    and that of feature i+1 for the same latent dimension sit exactly q
    apart; the fusion terms occupy the q-th band while the per-feature
    SZZ/sigma^2 blocks fill bands 0..q-1. Rows removed by the drop rule
    are excluded from the system with their values fixed at zero, which
    keeps the full-grid fusion contributions on the diagonal.
    """
    p, q = prev_w.shape
    inv_psi = 1.0 / sigma2
    a_w = 1.0 / np.maximum(np.abs(prev_w), floor)  # (p, q)
    diff = prev_w[1:] - prev_w[:-1]
    m_up = 1.0 / np.maximum(np.abs(diff), floor)  # (p-1, q): couples i, i+1
    d_sum = np.zeros((p, q))
    d_sum[:-1] += m_up
    d_sum[1:] += m_up

    keep_idx = np.flatnonzero(kept)
    pk = keep_idx.size
    band = np.zeros((q + 1, pk * q))
    diag = (
        np.diag(SZZ)[None, :] * inv_psi[:, None]
        + 2.0 * lam1 * a_w
        + 2.0 * lam2 * d_sum
    )
    band[0] = diag[keep_idx].reshape(-1)
    for o in range(1, q):
        inner = np.zeros((p, q))
        inner[:, : q - o] = SZZ[o:, : q - o].diagonal()[None, :] * inv_psi[:, None]
        band[o] = inner[keep_idx].reshape(-1)
    if pk > 1:
        adjacent = keep_idx[1:] == keep_idx[:-1] + 1
        outer = np.zeros((pk, q))
        outer[:-1][adjacent] = -2.0 * lam2 * m_up[keep_idx[:-1][adjacent]]
        band[q] = outer.reshape(-1)
    rhs = (C * inv_psi[:, None])[keep_idx].reshape(-1)
    return band, rhs


def _fused_update(C, SZZ, prev_w, sigma2, lam1, lam2, floor):
    p, q = prev_w.shape
    kept = _kept_rows(prev_w, lam1, floor)
    W = np.zeros((p, q))
    if not np.any(kept):
        return W
    band, rhs = _fused_banded_system(C, SZZ, prev_w, sigma2, lam1, lam2, floor, kept)
    size = rhs.size
    if size > FUSED_CG_LIMIT:
        offsets = [0] + [-o for o in range(1, q + 1)] + [o for o in range(1, q + 1)]
        data = [band[0]]
        data += [band[o][: size - o] for o in range(1, q + 1)]
        data += [band[o][: size - o] for o in range(1, q + 1)]
        A = sparse.diags(data, offsets, shape=(size, size), format="csr")
        sol, info = cg(A, rhs, x0=prev_w[kept].reshape(-1), rtol=1e-10, atol=0.0)
        if info != 0:
            raise NumericalError(f"fused conjugate-gradient solve failed (info={info})")
    else:
        try:
            # a system smaller than the nominal bandwidth carries only
            # all-zero outer bands, which solveh_banded rejects
            sol = linalg.solveh_banded(band[: min(q + 1, size)], rhs, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"fused banded solve failed: {exc}") from exc
    W[kept] = sol.reshape(-1, q)
    return W


def _block_C(block, stats):
    return block.values @ stats.EZ.T


def m_step_lasso(block, stats, prev_w, prev_psi, lam, lqa_floor=1e-6):
    """One reweighted-ridge update of a block's loadings under the
    sparsity penalty. Returns the new p x (K-1) loading matrix.

    `lam` is a per-sample rate: the absolute penalty weight is lam * n,
    so the same value has the same strength on data subsets of different
    sizes (the data term of the objective also grows with n).
    """
    return _lasso_update(
        _block_C(block, stats), stats.SZZ, prev_w, prev_psi, lam * stats.n, lqa_floor
    )


def m_step_enet(block, stats, prev_w, prev_psi, lam1, lam2, lqa_floor=1e-6):
    """Update under sparsity plus a quadratic term; per-sample rates as
    in m_step_lasso. With lam1 = 0 the update is a closed-form ridge
    with no dependence on prev_w."""
    n = stats.n
    return _enet_update(
        _block_C(block, stats), stats.SZZ, prev_w, prev_psi, lam1 * n, lam2 * n, lqa_floor
    )


def m_step_fused(block, stats, prev_w, prev_psi, lam1, lam2, lqa_floor=1e-6):
    """Update under sparsity plus fusion of adjacent rows; per-sample
    rates as in m_step_lasso. Requires an ordered block and solves one
    banded system coupling all rows."""
    if not block.ordered:
        raise ValidationError(
            f"fused update requires ordered rows (block {block.name!r})"
        )
    n = stats.n
    return _fused_update(
        _block_C(block, stats), stats.SZZ, prev_w, prev_psi, lam1 * n, lam2 * n, lqa_floor
    )


def _psi_raw(xx_rows, C, new_w, n):
    return (xx_rows - np.sum(new_w * C, axis=1)) / n


def update_psi(block, stats, new_w):
    """Noise-variance update for one block from the current expectations.

    Per feature: (second moment minus the explained cross term) / n,
    floored at max(1e-6, 1e-4 x row second moment).
    """
    xx = np.sum(block.values * block.values, axis=1)
    raw = _psi_raw(xx, _block_C(block, stats), new_w, stats.n)
    return np.maximum(raw, psi_floor(block.values))


# ---------------------------------------------------------------------------
# objective and fit loop
# ---------------------------------------------------------------------------


def _penalty_value(pen, w, n):
    """Penalty portion of the objective: per-sample rates times n, at
    the rates the ridge weights actually target (absolute-value terms
    count twice their nominal rate, which is what each surrogate update
    is guaranteed to improve)."""
    if pen.kind == "lasso":
        return n * 2.0 * pen.lam * np.sum(np.abs(w))
    if pen.kind == "enet":
        return n * (2.0 * pen.lam1 * np.sum(np.abs(w)) + pen.lam2 * np.sum(w * w))
    if pen.kind == "fused":
        return n * (
            2.0 * pen.lam1 * np.sum(np.abs(w))
            + 2.0 * pen.lam2 * np.sum(np.abs(w[1:] - w[:-1]))
        )
    raise ValidationError(f"unknown penalty kind {pen.kind!r}")


def _objective(xx_all, C_all, stats, model, penalties, slices):
    """Penalized variational bound at the current expectations.

    Expected complete-data log-likelihood under the latest posterior, plus
    that posterior's entropy, minus the penalties. The bound equals the
    penalized marginal log-likelihood right after an expectation pass and
    every update step is guaranteed not to lower it (for the W step via
    the surrogate argument, hence the doubled absolute-value rates).
    """
    n = stats.n
    p = model.p_total
    obj = -0.5 * float(np.trace(stats.SZZ))
    W, psi = model.W, model.psi
    quad = np.sum((W @ stats.SZZ) * W, axis=1)
    cross = np.sum(W * C_all, axis=1)
    resid = xx_all - 2.0 * cross + quad
    obj += -0.5 * n * float(np.sum(np.log(psi))) - 0.5 * float(np.sum(resid / psi))
    sign, logdet = np.linalg.slogdet(stats.cov_post)
    if sign <= 0:
        raise NumericalError("posterior covariance is not positive definite")
    obj += 0.5 * n * logdet + 0.5 * n * model.q - 0.5 * n * p * np.log(2.0 * np.pi)
    for pen, sl in zip(penalties, slices):
        obj -= _penalty_value(pen, W[sl], n)
    return obj


def _new_block_w(pen, C, stats, prev_w, prev_psi, floor):
    n = stats.n
    if pen.kind == "lasso":
        return _lasso_update(C, stats.SZZ, prev_w, prev_psi, pen.lam * n, floor)
    if pen.kind == "enet":
        return _enet_update(
            C, stats.SZZ, prev_w, prev_psi, pen.lam1 * n, pen.lam2 * n, floor
        )
    if pen.kind == "fused":
        return _fused_update(
            C, stats.SZZ, prev_w, prev_psi, pen.lam1 * n, pen.lam2 * n, floor
        )
    raise ValidationError(f"unknown penalty kind {pen.kind!r}")


def fit(blocks, K, penalties, opts=None):
    """Fit the penalized model and cluster the samples.

    Runs EM from the SVD initialization until the relative objective
    change drops below opts.tol or opts.max_iter is reached, hard-zeros
    small loadings, recomputes the latent summaries under the final model,
    and K-means clusters the posterior means.

    Args:
        blocks: row-centered OmicsBlock list sharing samples.
        K: number of clusters; the model uses K-1 latent dimensions.
        penalties: one penalty object per block.
        opts: FitOptions; defaults used when omitted.

    Returns:
        FitResult. `converged` is False when max_iter ran out; the result
        is still returned.
    """
    opts = opts or FitOptions()
    validate_analysis(blocks, penalties)
    model = init_model(blocks, K, opts.seed)
    X = concat_values(blocks)
    n = X.shape[1]
    if n < K:
        raise ValidationError(f"need at least K={K} samples, got {n}")
    xx_all = np.sum(X * X, axis=1)
    slices = list(model.block_slices())
    floors = [psi_floor(b.values) for b in blocks]

    trace = []
    converged = False
    prev_obj = None
    for _ in range(opts.max_iter):
        stats = e_step(model, X)
        C_all = X @ stats.EZ.T
        new_W = np.empty_like(model.W)
        raw_psi = np.empty(model.p_total)
        for pen, sl, floor in zip(penalties, slices, floors):
            new_W[sl] = _new_block_w(
                pen, C_all[sl], stats, model.W[sl], model.psi[sl], opts.lqa_floor
            )
            raw_psi[sl] = _psi_raw(xx_all[sl], C_all[sl], new_W[sl], n)
        if opts.isotropic_psi:
            psi = np.full(model.p_total, max(float(raw_psi.mean()), PSI_ABS_FLOOR))
        else:
            psi = np.concatenate(
                [np.maximum(raw_psi[sl], floor) for sl, floor in zip(slices, floors)]
            )
        model = FactorModel(W=new_W, psi=psi, block_sizes=model.block_sizes, K=K)
        obj = _objective(xx_all, C_all, stats, model, penalties, slices)
        trace.append(obj)
        if prev_obj is not None and abs(obj - prev_obj) <= opts.tol * (1.0 + abs(obj)):
            converged = True
            break
        prev_obj = obj

    W_final = model.W.copy()
    W_final[np.abs(W_final) < opts.zero_threshold] = 0.0
    model = FactorModel(W=W_final, psi=model.psi, block_sizes=model.block_sizes, K=K)
    stats = e_step(model, X)
    labels = kmeans(
        stats.EZ.T, K, restarts=opts.kmeans_restarts, seed=derive_seed(opts.seed, 11)
    )
    selected = tuple(
        np.flatnonzero(np.any(W_final[sl] != 0.0, axis=1)) + 1 for sl in slices
    )
    if not converged:
        warnings.warn(
            f"EM did not converge in {opts.max_iter} iterations", RuntimeWarning
        )
    return FitResult(
        model=model,
        stats=stats,
        labels=labels,
        objective_trace=tuple(trace),
        converged=converged,
        n_iter=len(trace),
        selected=selected,
    )
