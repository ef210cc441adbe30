"""Penalty-parameter search and joint selection of K.

Candidate penalty values are placed on a good-lattice-point set mapped
into a per-block search domain, each candidate is scored by a
cross-validated reproducibility index (median adjusted Rand index
between predicted and independently refit test partitions), and the
best (K, parameters) pair is returned.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .blocks import (
    PENALTY_PARAM_NAMES,
    center_rows,
    make_penalty,
    subset_columns,
    validate_analysis,
)
from .clustering import adjusted_rand_index, kmeans
from .em import FitOptions, fit, predict_latent, e_step
from .errors import ConfigError, ValidationError
from .factor import concat_values, init_model
from .util import derive_seed

SCALES = ("log", "linear")


@dataclass(frozen=True)
class Interval:
    """One parameter range with its sampling scale."""

    lo: float
    hi: float
    scale: str = "log"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValidationError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not (0.0 <= self.lo < self.hi):
            raise ValidationError(f"interval needs 0 <= lo < hi, got [{self.lo}, {self.hi}]")
        if self.scale == "log" and self.lo <= 0.0:
            raise ValidationError("log-scale interval needs lo > 0")

    def map_unit(self, u):
        """Map unit-cube coordinates into the interval on the declared scale."""
        u = np.asarray(u, dtype=np.float64)
        if self.scale == "log":
            return self.lo * (self.hi / self.lo) ** u
        return self.lo + u * (self.hi - self.lo)


@dataclass(frozen=True)
class SearchDomain:
    """Per-block penalty-parameter ranges.

    `groups` holds one tuple of intervals per block: a single interval
    for a pure sparsity penalty, two for penalties with a second
    parameter. The flattened interval list defines the search-space
    coordinates in block order.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.d < 1:
            raise ValidationError("search domain needs at least one interval")
        for g in groups:
            if not (1 <= len(g) <= 2):
                raise ValidationError("each block contributes one or two intervals")
            for iv in g:
                if not isinstance(iv, Interval):
                    raise ValidationError("domain entries must be Interval instances")

    @property
    def d(self):
        return sum(len(g) for g in self.groups)

    @property
    def intervals(self):
        return tuple(iv for g in self.groups for iv in g)


def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def centered_l2_discrepancy(points):
    """Centered L2 discrepancy of a point set in the unit cube.

    Args:
      points: array of shape (n, d) with entries in [0, 1].

    Returns:
      The discrepancy value (square root of the usual squared form).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    a = np.abs(x - 0.5)
    term1 = (13.0 / 12.0) ** d
    term2 = (2.0 / n) * np.prod(1.0 + 0.5 * a - 0.5 * a * a, axis=1).sum()
    cross = (
        1.0
        + 0.5 * (a[:, None, :] + a[None, :, :])
        - 0.5 * np.abs(x[:, None, :] - x[None, :, :])
    )
    term3 = np.prod(cross, axis=2).sum() / (n * n)
    return float(np.sqrt(max(term1 - term2 + term3, 0.0)))


def _korobov_unit(n, d, h):
    g = np.empty(d, dtype=np.int64)
    g[0] = 1
    for j in range(1, d):
        g[j] = (g[j - 1] * h) % n
    i = np.arange(n, dtype=np.int64)
    return ((i[:, None] * g[None, :]) % n) / n + 0.5 / n


def good_lattice_points(n, d):
    """Unit-cube lattice of n points in d dimensions.

    The generator vector (1, h, h^2, ...) mod n is chosen by scanning all
    h in 1..n-1 for the lowest centered L2 discrepancy; ties keep the
    smallest h.
    """
    if not is_prime(n) or n < 5:
        raise ValidationError(f"n_points must be a prime >= 5, got {n}")
    if not (1 <= d <= 6):
        raise ValidationError(f"dimension must be in 1..6, got {d}")
    if d == 1:
        return _korobov_unit(n, 1, 1)
    best = None
    best_pts = None
    for h in range(1, n):
        pts = _korobov_unit(n, d, h)
        disc = centered_l2_discrepancy(pts)
        if best is None or disc < best:
            best = disc
            best_pts = pts
    return best_pts


def uniform_design(n_points, domain, seed=0):
    """Low-discrepancy parameter vectors spread over a search domain.

    The unit lattice is assigned to coordinates in a canonical interval
    order, so reordering the domain's intervals permutes the output
    columns the same way. `seed` is accepted for signature stability;
    the point set is deterministic.

    Args:
      n_points: prime number of points, at least 5.
      domain: SearchDomain to cover.
      seed: unused; the design is deterministic.

    Returns:
      Array of shape (n_points, domain.d), one parameter vector per row.
    """
    del seed
    ivs = domain.intervals
    d = len(ivs)
    unit = good_lattice_points(n_points, d)
    order = sorted(range(d), key=lambda j: (ivs[j].scale, ivs[j].lo, ivs[j].hi))
    out = np.empty_like(unit)
    for rank, j in enumerate(order):
        out[:, j] = ivs[j].map_unit(unit[:, rank])
    return out


def lambda_max(blocks, K, seed=0):
    """Per-block smallest sparsity rate that zeroes every loading.

    Computed from the stationarity condition of the penalized update at
    the initial model's first expectation pass, in the per-sample units
    the penalties use.
    """
    validate_analysis(blocks)
    model = init_model(blocks, K, seed)
    stats = e_step(model, concat_values(blocks))
    out = []
    for t, sl in enumerate(model.block_slices()):
        C = blocks[t].values @ stats.EZ.T
        out.append(
            float(np.max(np.abs(C) / (2.0 * model.psi[sl, None] * stats.n)))
        )
    return out


def default_domain(blocks, K, kinds, seed=0):
    """Search domain anchored at each block's lambda_max.

    The sparsity weight ranges over [1e-3 * lambda_max, lambda_max] on a
    log scale; penalties with a second parameter add [1e-3, 10] log.
    """
    lmax = lambda_max(blocks, K, seed)
    groups = []
    for t, kind in enumerate(kinds):
        if kind not in PENALTY_PARAM_NAMES:
            raise ConfigError(f"unknown penalty kind {kind!r}")
        if lmax[t] <= 0.0:
            raise ConfigError(f"block {blocks[t].name!r} carries no signal to scale a domain")
        ivs = [Interval(1e-3 * lmax[t], lmax[t], "log")]
        if len(PENALTY_PARAM_NAMES[kind]) == 2:
            ivs.append(Interval(1e-3, 10.0, "log"))
        groups.append(tuple(ivs))
    return SearchDomain(tuple(groups))


def penalties_from_vector(kinds, vector):
    """Split a flat parameter vector into per-block penalty objects."""
    vector = np.asarray(vector, dtype=np.float64)
    pens = []
    pos = 0
    for kind in kinds:
        k = len(PENALTY_PARAM_NAMES[kind])
        pens.append(make_penalty(kind, vector[pos : pos + k]))
        pos += k
    if pos != vector.size:
        raise ValidationError(
            f"parameter vector has {vector.size} entries, penalties need {pos}"
        )
    return pens


def fold_assignment(n, folds, seed):
    """Random fold ids in 0..folds-1, sizes as equal as possible."""
    if not (2 <= folds <= n):
        raise ValidationError(f"folds must be in 2..{n}, got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % folds
    return ids


def _as_fold_sets(fold_ids, n, repeats):
    if isinstance(fold_ids, (list, tuple)):
        sets = [np.asarray(ids, dtype=np.int64) for ids in fold_ids]
    else:
        sets = [np.asarray(fold_ids, dtype=np.int64)]
    if len(sets) != repeats:
        raise ValidationError(
            f"fold_ids provides {len(sets)} assignments for repeats={repeats}"
        )
    for ids in sets:
        if ids.shape != (n,):
            raise ValidationError(f"each fold assignment must have length {n}")
    return sets


def reproducibility_index(
    blocks,
    K,
    penalties,
    folds=10,
    opts=None,
    fold_ids=None,
    base_seed=None,
    repeats=1,
):
    """Resampled stability of the clustering at fixed parameters.

    The data are repeatedly partitioned into learning and test splits:
    `repeats` independent random fold assignments, each contributing
    `folds` learning/test splits. Each split fits the model on the
    learning part, predicts the latent positions of the held-out
    samples under that model, and K-means clusters the predictions
    (partition C1). The held-out part is then fit and its own latent
    positions clustered (partition C2), and the split scores the
    adjusted Rand index between the two; the index is the median over
    all splits. Both K-means runs use a single random start. With
    multiple starts both runs converge to the best optimum of what is
    nearly the same point cloud, so even an arbitrary over-split of a
    true cluster reproduces and the index loses its grip on K; a
    single start only agrees across runs when the partition has one
    dominant basin. Splits whose test part has fewer than 3K samples
    are skipped with a warning. A split where either fit selects no
    features scores 0, since clustering collapsed latent positions
    would report spurious perfect agreement.

    Args:
      blocks: list of OmicsBlock (centering is redone per split).
      K: number of clusters.
      penalties: concrete per-block penalty objects.
      folds: number of cross-validation folds per repetition.
      opts: FitOptions for the split fits; defaults used when omitted.
      fold_ids: optional precomputed fold assignment(s) to reuse; a single
        length-n array, or a list of them with one entry per repeat.
      base_seed: stream root for per-split seeds; defaults to opts.seed.
      repeats: number of independent fold assignments to pool.

    Returns:
      Median adjusted Rand index over the evaluated splits, in [-1, 1].

    Raises:
      ConfigError: if every split was skipped.
    """
    opts = FitOptions() if opts is None else opts
    validate_analysis(blocks, penalties, require_centered=False)
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    n = blocks[0].n
    base = opts.seed if base_seed is None else base_seed
    if fold_ids is None:
        fold_sets = [
            fold_assignment(n, folds, derive_seed(base, 29, rep))
            for rep in range(repeats)
        ]
    else:
        fold_sets = _as_fold_sets(fold_ids, n, repeats)
    scores = []
    for rep, ids in enumerate(fold_sets):
        for f in range(int(ids.max()) + 1):
            test_idx = np.flatnonzero(ids == f)
            learn_idx = np.flatnonzero(ids != f)
            if test_idx.size < 3 * K:
                warnings.warn(
                    f"repeat {rep + 1} fold {f + 1}: test split has "
                    f"{test_idx.size} samples, fewer than {3 * K}; skipped",
                    RuntimeWarning,
                    stacklevel=2,
                )
                continue
            learn_blocks = []
            test_pred = []
            test_raw = []
            for b in blocks:
                lb_raw = subset_columns(b, learn_idx)
                mu = lb_raw.values.mean(axis=1)
                learn_blocks.append(center_rows(lb_raw))
                tb_raw = subset_columns(b, test_idx)
                test_raw.append(tb_raw)
                test_pred.append(
                    replace(
                        tb_raw,
                        values=tb_raw.values - mu[:, None],
                        centered=True,
                        row_means=mu
                        if tb_raw.row_means is None
                        else tb_raw.row_means + mu,
                    )
                )
            fit_l = fit(
                learn_blocks,
                K,
                penalties,
                replace(opts, seed=derive_seed(base, rep, f, 0)),
            )
            if sum(len(s) for s in fit_l.selected) == 0:
                scores.append(0.0)
                continue
            c1 = kmeans(
                predict_latent(fit_l.model, test_pred).T,
                K,
                restarts=1,
                seed=derive_seed(base, rep, f, 1),
            )
            fit_t = fit(
                [center_rows(tb) for tb in test_raw],
                K,
                penalties,
                replace(opts, seed=derive_seed(base, rep, f, 2)),
            )
            if sum(len(s) for s in fit_t.selected) == 0:
                scores.append(0.0)
                continue
            c2 = kmeans(
                fit_t.stats.EZ.T,
                K,
                restarts=1,
                seed=derive_seed(base, rep, f, 3),
            )
            scores.append(adjusted_rand_index(c1, c2))
    if not scores:
        raise ConfigError(
            f"every split was skipped: {folds} folds on n={n} leave test "
            f"splits below {3 * K} samples"
        )
    return float(np.median(scores))


@dataclass(frozen=True)
class TuneResult:
    """Full evaluation table and the selected configuration.

    evaluated holds (K, parameter tuple, index) triples for every lattice
    point; ri_by_K maps each K to its best index, matching the usual
    per-K summary column.
    """

    evaluated: tuple
    best_K: int
    best_params: tuple
    ri_by_K: dict

    @property
    def best_ri(self):
        return self.ri_by_K[self.best_K]


def _sparsity_positions(kinds):
    """Indices of each block's sparsity rate in the flat parameter vector."""
    pos = 0
    out = []
    for kind in kinds:
        out.append(pos)
        pos += len(PENALTY_PARAM_NAMES[kind])
    return out


# selection accepts the largest K whose peak index is within this
# fraction of the overall peak
SELECTION_TOLERANCE = 0.2


def tune(
    blocks,
    K_range,
    kinds,
    domain=None,
    n_points=5,
    folds=10,
    opts=None,
    repeats=1,
    probe_threshold=None,
):
    """Joint search over cluster counts and penalty parameters.

    Every K in K_range is scored at n_points lattice parameter vectors
    by the reproducibility index, reusing the same fold assignments
    across the whole call. Three safeguards shape the selection:

    * Degeneracy veto. Before scoring, each configuration gets one
      full-data probe fit with loadings zeroed below probe_threshold.
      The configuration scores 0 in the table if any block then selects
      nothing (it has effectively discarded a data type), or if any
      latent column has no loading above the threshold: K clusters need
      K-1 live latent directions, and a fit that zeroes a whole column
      is declaring that this K has no support in the data. Both
      degenerate states can look extremely reproducible, the first
      because a whole data type is ignored, the second because the
      surviving directions are the (very stable) directions of a
      smaller K.
    * Tolerant pick across K. Merging true clusters reproduces almost
      perfectly (the coarsening is unambiguous), so the absolute
      maximum of the index systematically favors too-small K. Selection
      therefore takes the largest K whose per-K peak is within
      SELECTION_TOLERANCE of the overall peak.
    * Parsimony within K. Among that K's configurations whose index is
      within SELECTION_TOLERANCE of the per-K peak, the one with the
      largest product of per-block sparsity rates wins: equally
      reproducible clusterings should use the strongest feature
      screening in every block. The product ignores second parameters
      (ridge and fusion weights smooth, they do not screen) and, being
      a product, favors moderate rates on all blocks over one extreme
      block.

    Args:
      blocks: list of OmicsBlock.
      K_range: cluster counts to consider, each at least 2.
      kinds: per-block penalty kind names ("lasso", "enet", "fused").
      domain: optional SearchDomain, or a callable mapping K to one;
        defaults to default_domain per K.
      n_points: prime lattice size, at least 5.
      folds: cross-validation folds per repetition.
      opts: FitOptions shared by all fits; defaults used when omitted.
      repeats: independent fold assignments pooled per evaluation.
      probe_threshold: loading level below which a block counts as
        discarded in the veto; defaults to opts.zero_threshold.

    Returns:
      TuneResult with the full table and the selected configuration.
    """
    if len(K_range) == 0:
        raise ValidationError("K_range must be nonempty")
    if any(k < 2 for k in K_range):
        raise ValidationError("every K must be >= 2")
    if len(kinds) != len(blocks):
        raise ConfigError(f"{len(blocks)} blocks but {len(kinds)} penalty kinds")
    opts = FitOptions() if opts is None else opts
    if probe_threshold is None:
        probe_threshold = opts.zero_threshold
    n = blocks[0].n
    fold_sets = [
        fold_assignment(n, folds, derive_seed(opts.seed, 31, rep))
        for rep in range(repeats)
    ]
    evaluated = []
    for K in K_range:
        if domain is None:
            dom = default_domain(blocks, K, kinds, opts.seed)
        elif callable(domain):
            dom = domain(K)
        else:
            dom = domain
        points = uniform_design(n_points, dom, opts.seed)
        for j in range(points.shape[0]):
            params = tuple(float(v) for v in points[j])
            pens = penalties_from_vector(kinds, points[j])
            base = derive_seed(opts.seed, K, j)
            probe = fit(
                blocks,
                K,
                pens,
                replace(
                    opts,
                    seed=derive_seed(base, 41),
                    zero_threshold=probe_threshold,
                ),
            )
            if min(len(s) for s in probe.selected) == 0:
                evaluated.append((K, params, 0.0))
                continue
            try:
                ri = reproducibility_index(
                    blocks,
                    K,
                    pens,
                    folds=folds,
                    opts=opts,
                    fold_ids=fold_sets,
                    base_seed=base,
                    repeats=repeats,
                )
            except ConfigError as exc:
                raise ConfigError(f"K={K}: {exc}") from exc
            evaluated.append((K, params, ri))
    per_K = {}
    for row in evaluated:
        per_K.setdefault(row[0], []).append(row)
    ri_by_K = {K: max(row[2] for row in rows) for K, rows in per_K.items()}
    max_ri = max(ri_by_K.values())
    if max_ri > 0.0:
        cut = (1.0 - SELECTION_TOLERANCE) * max_ri
        best_K = max(K for K, ri in ri_by_K.items() if ri >= cut)
    else:
        # nothing stable anywhere: fall back to the plain maximum,
        # preferring the smaller K
        best_K = min(K for K, ri in ri_by_K.items() if ri == max_ri)
    in_cut = (1.0 - SELECTION_TOLERANCE) * ri_by_K[best_K]
    l1_pos = _sparsity_positions(kinds)
    best_params = max(
        (row for row in per_K[best_K] if row[2] >= in_cut),
        key=lambda row: (float(np.prod([row[1][i] for i in l1_pos])), row[1]),
    )[1]
    return TuneResult(
        evaluated=tuple(evaluated),
        best_K=int(best_K),
        best_params=best_params,
        ri_by_K=ri_by_K,
    )
