"""Data blocks and penalty settings for multi-block analyses.

A block holds one data type as a features-by-samples matrix. All blocks in
an analysis must share the same samples in the same column order. Rows are
centered before model fitting; the original row means are kept so that new
samples can be shifted onto the training scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError


def _frozen_array(values, dtype=np.float64):
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OmicsBlock:
    """One data type: a p x n matrix with feature ids and sample metadata.

    Args:
        name: short identifier used in reports and output file names.
        values: p x n array, features in rows, samples in columns.
        feature_ids: length-p sequence of unique feature names.
        ordered: whether row order is meaningful (e.g. genome position);
            required for the fused penalty.
        centered: whether rows already have mean zero.
        row_means: original row means recorded by center_rows.
        sample_ids: optional length-n sequence of sample names.
    """

    name: str
    values: np.ndarray
    feature_ids: tuple = ()
    ordered: bool = False
    centered: bool = False
    row_means: np.ndarray | None = None
    sample_ids: tuple | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(
                f"block {self.name!r}: values must be 2-d, got shape {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 2:
            raise ValidationError(
                f"block {self.name!r}: need at least 1 feature and 2 samples, "
                f"got shape {arr.shape}"
            )
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"block {self.name!r}: non-finite value at row {i + 1}, "
                f"column {j + 1}"
            )
        object.__setattr__(self, "values", _frozen_array(arr))

        ids = tuple(str(f) for f in self.feature_ids)
        if not ids:
            ids = tuple(f"f{i + 1}" for i in range(arr.shape[0]))
        if len(ids) != arr.shape[0]:
            raise ValidationError(
                f"block {self.name!r}: {len(ids)} feature ids for "
                f"{arr.shape[0]} rows"
            )
        if len(set(ids)) != len(ids):
            dup = next(f for f in ids if ids.count(f) > 1)
            raise ValidationError(f"block {self.name!r}: duplicate feature id {dup!r}")
        object.__setattr__(self, "feature_ids", ids)

        if self.sample_ids is not None:
            sids = tuple(str(s) for s in self.sample_ids)
            if len(sids) != arr.shape[1]:
                raise ValidationError(
                    f"block {self.name!r}: {len(sids)} sample ids for "
                    f"{arr.shape[1]} columns"
                )
            object.__setattr__(self, "sample_ids", sids)

        if self.row_means is not None:
            mu = np.asarray(self.row_means, dtype=np.float64)
            if mu.shape != (arr.shape[0],):
                raise ValidationError(
                    f"block {self.name!r}: row_means shape {mu.shape} does not "
                    f"match {arr.shape[0]} rows"
                )
            object.__setattr__(self, "row_means", _frozen_array(mu))

    @property
    def p(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


def center_rows(block):
    """Return a copy of the block with every row shifted to mean zero.

    The subtracted means are stored on the result so raw follow-up samples
    can be placed on the same scale.
    """
    mu = block.values.mean(axis=1)
    return replace(
        block,
        values=block.values - mu[:, None],
        centered=True,
        row_means=(mu if block.row_means is None else block.row_means + mu),
    )


def subset_columns(block, idx):
    """Return the block restricted to the given sample columns (uncentered)."""
    idx = np.asarray(idx)
    sids = None
    if block.sample_ids is not None:
        sids = tuple(block.sample_ids[i] for i in idx)
    return replace(
        block,
        values=block.values[:, idx],
        centered=False,
        row_means=block.row_means,
        sample_ids=sids,
    )


# ---------------------------------------------------------------------------
# penalties
# ---------------------------------------------------------------------------


def _check_nonneg(name, value):
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise ValidationError(f"{name} must be a finite value >= 0, got {value!r}")
    return v


@dataclass(frozen=True)
class Lasso:
    """Sparsity penalty with a single per-sample rate per block.

    Rates are per sample throughout: the absolute penalty scales with the
    number of samples in whatever data the model is fit to, so a tuned
    value transfers between cross-validation splits and the full data.
    """

    lam: float
    kind: str = field(default="lasso", init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_nonneg("lam", self.lam))

    @property
    def params(self):
        return (self.lam,)


@dataclass(frozen=True)
class ElasticNet:
    """Sparsity plus a quadratic term; stabilizes correlated features.
    Both rates are per sample (see Lasso)."""

    lam1: float
    lam2: float
    kind: str = field(default="enet", init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "lam1", _check_nonneg("lam1", self.lam1))
        object.__setattr__(self, "lam2", _check_nonneg("lam2", self.lam2))

    @property
    def params(self):
        return (self.lam1, self.lam2)


@dataclass(frozen=True)
class FusedLasso:
    """Sparsity plus smoothness of adjacent rows; needs an ordered block.
    Both rates are per sample (see Lasso)."""

    lam1: float
    lam2: float
    kind: str = field(default="fused", init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "lam1", _check_nonneg("lam1", self.lam1))
        object.__setattr__(self, "lam2", _check_nonneg("lam2", self.lam2))

    @property
    def params(self):
        return (self.lam1, self.lam2)


PENALTY_KINDS = {"lasso": Lasso, "enet": ElasticNet, "fused": FusedLasso}

# parameter names per kind, in lattice/domain order
PENALTY_PARAM_NAMES = {
    "lasso": ("lam",),
    "enet": ("lam1", "lam2"),
    "fused": ("lam1", "lam2"),
}


def make_penalty(kind, params):
    cls = PENALTY_KINDS.get(kind)
    if cls is None:
        raise ValidationError(f"unknown penalty kind {kind!r}")
    return cls(*params)


def validate_analysis(blocks, penalties=None, require_centered=True):
    """Check cross-block consistency; raise ValidationError on any problem."""
    if not blocks:
        raise ValidationError("need at least one block")
    n = blocks[0].n
    for b in blocks:
        if b.n != n:
            raise ValidationError(
                f"block {b.name!r} has {b.n} samples, expected {n}"
            )
        if require_centered and not b.centered:
            raise ValidationError(f"block {b.name!r} is not row-centered")
    ref = blocks[0].sample_ids
    for b in blocks[1:]:
        if ref is not None and b.sample_ids is not None and b.sample_ids != ref:
            k = next(
                i for i, (x, y) in enumerate(zip(ref, b.sample_ids)) if x != y
            )
            raise ValidationError(
                f"sample ids disagree between blocks {blocks[0].name!r} and "
                f"{b.name!r} at column {k + 1}: {ref[k]!r} vs {b.sample_ids[k]!r}"
            )
    if penalties is not None:
        if len(penalties) != len(blocks):
            raise ValidationError(
                f"{len(penalties)} penalties for {len(blocks)} blocks"
            )
        for b, pen in zip(blocks, penalties):
            if pen.kind == "fused" and not b.ordered:
                raise ValidationError(
                    f"fused penalty on block {b.name!r} requires ordered rows"
                )
