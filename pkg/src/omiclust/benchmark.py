"""Simulation benchmark comparing the penalized fits with simple baselines.

Reproduces the two-setup study at desk scale: per replicate, fresh data,
joint selection of K and penalty parameters by the reproducibility index,
a final fit at the selected configuration, and per-method summaries of
correct-K frequency, misclassification against the simulated truth,
reproducibility, and per-block feature selection counts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .blocks import center_rows
from .clustering import (
    adjusted_rand_index,
    assign_to_centers,
    kmeans,
    kmeans_fit,
    misclassification_rate,
)
from .em import FitOptions, fit
from .errors import ConfigError, OmiclustError, ValidationError
from .simulate import kmeans_baseline, simulate_setup1, simulate_setup2, svd_baseline
from .tuning import (
    Interval,
    SearchDomain,
    fold_assignment,
    lambda_max,
    penalties_from_vector,
    tune,
)
from .util import derive_seed

ICLUSTER_METHODS = ("lasso", "enet", "fused")
BASELINE_METHODS = ("svd", "kmeans-separate", "kmeans-concatenated")

# shared tuning protocol for every replicate
K_RANGE = (2, 3, 4, 5)
N_POINTS = 5
FOLDS = 5
REPEATS = 3
# loadings below this count as unselected, both when reporting features
# from the final fit and in the tuning veto
REPORT_ZERO = 0.2
# sparsity rates above roughly 0.3 * lambda_max wipe out whole blocks
# on this data scale, so the search stays below that
SPARSITY_CAP = 0.3


def search_domain(blocks, K, kinds, seed=0):
    """Penalty domain used by the benchmark's tuning runs.

    Narrower than the library default: sparsity rates range over
    [1e-3, SPARSITY_CAP] * lambda_max per block on a log scale, ridge
    weights over [1e-3, 1], fusion weights over [1e-2, 2]. Lattice
    points outside these ranges either do nothing or kill a block
    outright and would only waste design points.
    """
    lmax = lambda_max(blocks, K, seed)
    groups = []
    for t, kind in enumerate(kinds):
        ivs = [Interval(1e-3 * lmax[t], SPARSITY_CAP * lmax[t], "log")]
        if kind == "enet":
            ivs.append(Interval(1e-3, 1.0, "log"))
        elif kind == "fused":
            ivs.append(Interval(1e-2, 2.0, "log"))
        groups.append(tuple(ivs))
    return SearchDomain(tuple(groups))


@dataclass(frozen=True)
class MethodSummary:
    """Aggregates for one method row (or one block of a separate method)."""

    method: str
    block: str | None
    correct_k_percent: float
    error_mean: float
    error_sd: float
    ri_mean: float
    ri_sd: float
    tp: tuple | None  # per block: (mean, sd)
    fp: tuple | None
    n_ok: int
    failures: tuple

    def label(self):
        if self.block is None:
            return self.method
        return f"{self.method} [{self.block}]"


@dataclass(frozen=True)
class BenchReport:
    """All method summaries for one simulation setup."""

    setup: int
    R: int
    seed: int
    block_names: tuple
    rows: tuple

    def format_table(self):
        """Render the clustering and feature-selection summary tables."""
        out = [
            f"# benchmark setup {self.setup}: {self.R} replicates, seed {self.seed}",
            "",
            "method\tcorrect_K_pct\terror\tri",
        ]
        for r in self.rows:
            out.append(
                "\t".join(
                    [
                        r.label(),
                        f"{r.correct_k_percent:.0f}",
                        f"{r.error_mean:.4f} ({r.error_sd:.4f})",
                        f"{r.ri_mean:.2f} ({r.ri_sd:.2f})",
                    ]
                )
            )
        out.append("")
        out.append("method\t" + "\t".join(
            f"TP_{b}\tFP_{b}" for b in self.block_names
        ))
        for r in self.rows:
            if r.tp is None:
                cells = ["--", "--"] * len(self.block_names)
            else:
                cells = []
                for (tpm, tps), (fpm, fps) in zip(r.tp, r.fp):
                    cells.append(f"{tpm:.2f} ({tps:.2f})")
                    cells.append(f"{fpm:.2f} ({fps:.2f})")
            out.append("\t".join([r.label(), *cells]))
        failed = [(r.label(), f) for r in self.rows for f in r.failures]
        if failed:
            out.append("")
            out.append("failures:")
            for label, (rep, msg) in failed:
                out.append(f"  {label} replicate {rep}: {msg}")
        return "\n".join(out) + "\n"


def _mean_sd(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1))


def _feature_counts(selected, truth_features):
    tp = []
    fp = []
    for sel, true in zip(selected, truth_features):
        s = set(int(i) for i in sel)
        t = set(int(i) for i in true)
        tp.append(len(s & t))
        fp.append(len(s - t))
    return tp, fp


def _svd_latents(values, q):
    try:
        U, _, _ = linalg.svd(values, full_matrices=False)
    except linalg.LinAlgError as exc:
        raise ConfigError(f"svd failed on baseline data: {exc}") from exc
    return U[:, :q]


def _baseline_partition(values, K, mode, restarts, seed):
    if mode == "svd":
        basis = _svd_latents(values, K - 1)
        return kmeans((basis.T @ values).T, K, restarts=restarts, seed=seed)
    return kmeans(values.T, K, restarts=restarts, seed=seed)


def baseline_reproducibility(values, K, mode, folds, repeats, base_seed, restarts=20):
    """Reproducibility index mirror for the non-model baselines.

    Same split protocol as reproducibility_index: the learning part
    yields cluster centers (K-means on learning columns, or on learning
    SVD latents), the test part is assigned to the nearest center for
    C1, and an independent run of the same partitioner on the test part
    alone gives C2.
    """
    n = values.shape[1]
    scores = []
    for rep in range(repeats):
        ids = fold_assignment(n, folds, derive_seed(base_seed, 29, rep))
        for f in range(folds):
            test_idx = np.flatnonzero(ids == f)
            learn_idx = np.flatnonzero(ids != f)
            if test_idx.size < 3 * K:
                continue
            learn = values[:, learn_idx]
            mu = learn.mean(axis=1, keepdims=True)
            learn = learn - mu
            test = values[:, test_idx] - mu
            if mode == "svd":
                basis = _svd_latents(learn, K - 1)
                lpts = (basis.T @ learn).T
                tpts = (basis.T @ test).T
            else:
                lpts = learn.T
                tpts = test.T
            _, centers = kmeans_fit(
                lpts, K, restarts=restarts, seed=derive_seed(base_seed, rep, f, 1)
            )
            c1 = assign_to_centers(tpts, centers)
            c2 = _baseline_partition(
                test - test.mean(axis=1, keepdims=True),
                K,
                mode,
                restarts,
                derive_seed(base_seed, rep, f, 2),
            )
            scores.append(adjusted_rand_index(c1, c2))
    if not scores:
        raise ConfigError(
            f"every split was skipped: {folds} folds on n={n} leave test "
            f"splits below {3 * K} samples"
        )
    return float(np.median(scores))


def _select_baseline_K(values, mode, folds, repeats, base_seed):
    rows = []
    for K in K_RANGE:
        ri = baseline_reproducibility(values, K, mode, folds, repeats, base_seed)
        rows.append((ri, K))
    best = max(rows)
    return best[1], best[0]


def _run_icluster_replicate(kind, blocks, truth, rep_seed, folds, repeats, n_points):
    kinds = tuple(kind for _ in blocks)
    opts = FitOptions(seed=rep_seed)
    res = tune(
        blocks,
        K_RANGE,
        kinds,
        domain=lambda K: search_domain(blocks, K, kinds, rep_seed),
        n_points=n_points,
        folds=folds,
        opts=opts,
        repeats=repeats,
        probe_threshold=REPORT_ZERO,
    )
    pens = penalties_from_vector(kinds, np.asarray(res.best_params))
    final = fit(
        blocks, res.best_K, pens, replace(opts, zero_threshold=REPORT_ZERO)
    )
    err = misclassification_rate(final.labels, truth.labels)
    tp, fp = _feature_counts(final.selected, truth.true_features)
    return {
        "K": res.best_K,
        "ri": res.best_ri,
        "error": err,
        "tp": tp,
        "fp": fp,
    }


def _run_baseline_replicate(method, blocks, truth, rep_seed, folds, repeats):
    out = []
    if method == "kmeans-separate":
        for i, b in enumerate(blocks):
            base = derive_seed(rep_seed, 7, i)
            K_sel, ri = _select_baseline_K(b.values, "kmeans", folds, repeats, base)
            part = kmeans_baseline(
                [b], K_sel, "separate", seed=derive_seed(base, 1)
            )[0]
            err = misclassification_rate(part, truth.labels)
            out.append(
                (b.name, {"K": K_sel, "ri": ri, "error": err, "tp": None, "fp": None})
            )
        return out
    stacked = np.vstack([b.values for b in blocks])
    base = derive_seed(rep_seed, 7, 0)
    if method == "kmeans-concatenated":
        K_sel, ri = _select_baseline_K(stacked, "kmeans", folds, repeats, base)
        part = kmeans_baseline(
            blocks, K_sel, "concatenated", seed=derive_seed(base, 1)
        )[0]
    else:
        K_sel, ri = _select_baseline_K(stacked, "svd", folds, repeats, base)
        part = svd_baseline(blocks, K_sel, seed=derive_seed(base, 1))
    err = misclassification_rate(part, truth.labels)
    out.append((None, {"K": K_sel, "ri": ri, "error": err, "tp": None, "fp": None}))
    return out


def run_benchmark(
    setup,
    methods=ICLUSTER_METHODS,
    R=50,
    seed=0,
    folds=FOLDS,
    repeats=REPEATS,
    n_points=N_POINTS,
):
    """Run R replicates of one simulation setup for the given methods.

    Args:
      setup: 1 or 2, selecting the simulation recipe.
      methods: any of lasso, enet, fused, svd, kmeans-separate,
        kmeans-concatenated.
      R: number of replicates (data seeds are seed + replicate index).
      seed: base seed.
      folds: cross-validation folds per repetition of the index.
      repeats: independent fold assignments pooled per evaluation.
      n_points: lattice size for the parameter search.

    Returns:
      BenchReport. Per-replicate failures are recorded in the affected
      method's row rather than aborting the run.
    """
    if setup not in (1, 2):
        raise ConfigError(f"setup must be 1 or 2, got {setup!r}")
    if R < 2:
        raise ValidationError("R must be >= 2")
    unknown = set(methods) - set(ICLUSTER_METHODS) - set(BASELINE_METHODS)
    if unknown:
        raise ConfigError(f"unknown methods: {sorted(unknown)}")
    sim = simulate_setup1 if setup == 1 else simulate_setup2
    true_K = 2 if setup == 1 else 3

    records = {}
    failures = {}
    block_names = None
    for r in range(R):
        rep_seed = seed + r
        raw_blocks, truth = sim(seed=rep_seed)
        if block_names is None:
            block_names = tuple(b.name for b in raw_blocks)
        blocks = [center_rows(b) for b in raw_blocks]
        for method in methods:
            try:
                if method in ICLUSTER_METHODS:
                    rows = [
                        (None, _run_icluster_replicate(
                            method, blocks, truth, rep_seed, folds, repeats,
                            n_points,
                        ))
                    ]
                else:
                    rows = _run_baseline_replicate(
                        method, blocks, truth, rep_seed, folds, repeats
                    )
            except OmiclustError as exc:
                failures.setdefault(method, []).append((r, str(exc)))
                continue
            for name, rec in rows:
                records.setdefault((method, name), []).append(rec)

    summaries = []
    for method in methods:
        keys = sorted(
            (k for k in records if k[0] == method),
            key=lambda k: (k[1] is not None, k[1]),
        )
        if not keys and method in failures:
            keys = [(method, None)]
        for key in keys:
            recs = records.get(key, [])
            errs = [x["error"] for x in recs]
            ris = [x["ri"] for x in recs]
            correct = 100.0 * np.mean([x["K"] == true_K for x in recs]) if recs else float("nan")
            err_m, err_s = _mean_sd(errs)
            ri_m, ri_s = _mean_sd(ris)
            if recs and recs[0]["tp"] is not None:
                tp = tuple(
                    _mean_sd([x["tp"][t] for x in recs])
                    for t in range(len(block_names))
                )
                fp = tuple(
                    _mean_sd([x["fp"][t] for x in recs])
                    for t in range(len(block_names))
                )
            else:
                tp = fp = None
            summaries.append(
                MethodSummary(
                    method=method,
                    block=key[1],
                    correct_k_percent=float(correct),
                    error_mean=err_m,
                    error_sd=err_s,
                    ri_mean=ri_m,
                    ri_sd=ri_s,
                    tp=tp,
                    fp=fp,
                    n_ok=len(recs),
                    failures=tuple(failures.get(method, ())),
                )
            )
    return BenchReport(
        setup=setup,
        R=R,
        seed=seed,
        block_names=block_names,
        rows=tuple(summaries),
    )
