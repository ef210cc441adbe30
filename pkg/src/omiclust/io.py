"""File formats: matrices, labels, models, tuning tables, configs, manifests.

All formats are plain delimited text. Matrices store features in rows and
samples in columns, with a header row of sample ids and a leading column of
feature ids. Floats are written with 17 significant digits so every file
round-trips bit-exactly through its own loader. Structured results carry a
schema tag in the first line.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .blocks import OmicsBlock, PENALTY_KINDS, make_penalty
from .clustering import Partition
from .errors import ConfigError, ParseError, ValidationError
from .factor import FactorModel

FLOAT_FMT = "%.17g"

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _fmt(x):
    return FLOAT_FMT % float(x)


def _split_header(line):
    if "\t" in line:
        return "\t", line.rstrip("\r\n").split("\t")
    return ",", line.rstrip("\r\n").split(",")


def load_matrix(path, name=None):
    """Read a delimited features-by-samples matrix as an uncentered block.

    The delimiter (tab or comma) is inferred from the header row. The
    header holds a corner label followed by sample ids; each data row is
    a feature id followed by the numeric values.

    Args:
      path: file to read.
      name: block name; defaults to the file stem.

    Returns:
      OmicsBlock with feature and sample ids, uncentered.

    Raises:
      ParseError: ragged rows, non-numeric cells, duplicate feature ids,
        or an empty file, with the offending line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty matrix file", path=path, line=1)
    delim, header = _split_header(lines[0])
    sample_ids = [c.strip() for c in header[1:]]
    n = len(sample_ids)
    if n < 2:
        raise ParseError(
            f"need at least 2 sample columns, found {n}", path=path, line=1
        )
    feature_ids = []
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.rstrip("\r\n").split(delim)
        if len(cells) != n + 1:
            raise ParseError(
                f"data row {lineno - 1} has {len(cells) - 1} values, "
                f"expected {n}",
                path=path,
                line=lineno,
            )
        fid = cells[0].strip()
        if fid in feature_ids:
            raise ParseError(
                f"duplicate feature id {fid!r}", path=path, line=lineno
            )
        vals = np.empty(n)
        for j, cell in enumerate(cells[1:]):
            try:
                vals[j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"non-numeric cell at data row {lineno - 1}, "
                    f"column {j + 1}: {cell.strip()!r}",
                    path=path,
                    line=lineno,
                ) from None
        feature_ids.append(fid)
        rows.append(vals)
    if not rows:
        raise ParseError("matrix has no data rows", path=path, line=1)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    try:
        return OmicsBlock(
            name=name,
            values=np.vstack(rows),
            feature_ids=tuple(feature_ids),
            sample_ids=tuple(sample_ids),
        )
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from exc


def save_matrix(block, path, delim="\t"):
    """Write a block so load_matrix returns bit-identical values."""
    sids = block.sample_ids or tuple(f"s{j + 1}" for j in range(block.n))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(delim.join(["id", *sids]) + "\n")
        for fid, row in zip(block.feature_ids, block.values):
            fh.write(delim.join([fid, *map(_fmt, row)]) + "\n")


def check_sample_ids(blocks):
    """Require identical sample-id sequences across blocks that carry ids."""
    ref = None
    ref_name = None
    for b in blocks:
        if b.sample_ids is None:
            continue
        if ref is None:
            ref, ref_name = b.sample_ids, b.name
        elif b.sample_ids != ref:
            k = next(
                i for i, (x, y) in enumerate(zip(ref, b.sample_ids)) if x != y
            ) if len(ref) == len(b.sample_ids) else min(len(ref), len(b.sample_ids))
            raise ValidationError(
                f"sample ids of block {b.name!r} differ from block "
                f"{ref_name!r} (first mismatch at column {k + 1})"
            )


def save_labels(partition, path, sample_ids=None):
    """Write sample, label rows; loader restores the same partition."""
    sids = sample_ids or tuple(f"s{j + 1}" for j in range(partition.n))
    if len(sids) != partition.n:
        raise ValidationError(
            f"{len(sids)} sample ids for {partition.n} labels"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# omiclust labels v1 K={partition.K}\n")
        fh.write("sample\tcluster\n")
        for sid, lab in zip(sids, partition.labels):
            fh.write(f"{sid}\t{lab}\n")


def load_labels(path):
    """Read a labels file; returns (Partition, sample_ids)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# omiclust labels v1"):
        raise ParseError("not a labels file (missing schema tag)", path=path, line=1)
    m = re.search(r"K=(\d+)", lines[0])
    if m is None:
        raise ParseError("labels schema line lacks K", path=path, line=1)
    K = int(m.group(1))
    sids = []
    labs = []
    for lineno, raw in enumerate(lines[2:], start=3):
        if not raw.strip():
            continue
        cells = raw.split("\t")
        if len(cells) != 2:
            raise ParseError("expected sample<TAB>cluster", path=path, line=lineno)
        try:
            lab = int(cells[1])
        except ValueError:
            raise ParseError(
                f"non-integer cluster label {cells[1]!r}", path=path, line=lineno
            ) from None
        sids.append(cells[0])
        labs.append(lab)
    try:
        part = Partition(labels=np.array(labs, dtype=np.int64), K=K)
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from exc
    return part, tuple(sids)


def save_model(model, path, block_names=None):
    """Write loadings and noise variances; load_model restores them."""
    names = tuple(block_names) if block_names else tuple(
        f"block{t + 1}" for t in range(len(model.block_sizes))
    )
    if len(names) != len(model.block_sizes):
        raise ValidationError(
            f"{len(names)} block names for {len(model.block_sizes)} blocks"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# omiclust model v1\n")
        fh.write(f"K = {model.K}\n")
        fh.write("blocks = " + ",".join(names) + "\n")
        fh.write("sizes = " + ",".join(str(s) for s in model.block_sizes) + "\n")
        fh.write("[W]\n")
        for row in model.W:
            fh.write("\t".join(map(_fmt, row)) + "\n")
        fh.write("[psi]\n")
        for v in model.psi:
            fh.write(_fmt(v) + "\n")


def load_model(path):
    """Read a model file; returns (FactorModel, block_names)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "# omiclust model v1":
        raise ParseError("not a model file (missing schema tag)", path=path, line=1)
    meta = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("["):
        if lines[i].strip():
            key, _, val = lines[i].partition("=")
            meta[key.strip()] = val.strip()
        i += 1
    try:
        K = int(meta["K"])
        names = tuple(meta["blocks"].split(","))
        sizes = tuple(int(s) for s in meta["sizes"].split(","))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad model header: {exc}", path=path, line=i) from exc
    sections = {}
    current = None
    for lineno in range(i, len(lines)):
        raw = lines[lineno].strip()
        if not raw:
            continue
        if raw.startswith("["):
            current = raw.strip("[]")
            sections[current] = []
        elif current is None:
            raise ParseError("value outside section", path=path, line=lineno + 1)
        else:
            sections[current].append((lineno + 1, raw))
    for need in ("W", "psi"):
        if need not in sections:
            raise ParseError(f"missing [{need}] section", path=path)
    p = sum(sizes)
    W = np.empty((p, K - 1))
    if len(sections["W"]) != p:
        raise ParseError(
            f"[W] has {len(sections['W'])} rows, expected {p}", path=path
        )
    for r, (lineno, raw) in enumerate(sections["W"]):
        cells = raw.split("\t")
        if len(cells) != K - 1:
            raise ParseError(
                f"[W] row has {len(cells)} columns, expected {K - 1}",
                path=path,
                line=lineno,
            )
        try:
            W[r] = [float(c) for c in cells]
        except ValueError:
            raise ParseError("non-numeric W entry", path=path, line=lineno) from None
    if len(sections["psi"]) != p:
        raise ParseError(
            f"[psi] has {len(sections['psi'])} rows, expected {p}", path=path
        )
    psi = np.empty(p)
    for r, (lineno, raw) in enumerate(sections["psi"]):
        try:
            psi[r] = float(raw)
        except ValueError:
            raise ParseError("non-numeric psi entry", path=path, line=lineno) from None
    try:
        model = FactorModel(W=W, psi=psi, block_sizes=sizes, K=K)
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from exc
    return model, names


def save_tune_table(result, path):
    """Write the full tuning table plus the selected row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# omiclust tune v1\n")
        fh.write(f"best_K = {result.best_K}\n")
        fh.write("best_params = " + ",".join(map(_fmt, result.best_params)) + "\n")
        fh.write("best_ri = " + _fmt(result.best_ri) + "\n")
        fh.write("[table]\n")
        fh.write("K\tparams\tri\n")
        for K, params, ri in result.evaluated:
            fh.write(f"{K}\t" + ",".join(map(_fmt, params)) + "\t" + _fmt(ri) + "\n")


def load_tune_table(path):
    """Read a tuning table; returns (evaluated, best_K, best_params)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "# omiclust tune v1":
        raise ParseError("not a tune table (missing schema tag)", path=path, line=1)
    meta = {}
    i = 1
    while i < len(lines) and lines[i].strip() != "[table]":
        if lines[i].strip():
            key, _, val = lines[i].partition("=")
            meta[key.strip()] = val.strip()
        i += 1
    try:
        best_K = int(meta["best_K"])
        best_params = tuple(float(x) for x in meta["best_params"].split(","))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad tune header: {exc}", path=path) from exc
    evaluated = []
    for lineno in range(i + 2, len(lines)):
        raw = lines[lineno].strip()
        if not raw:
            continue
        cells = raw.split("\t")
        if len(cells) != 3:
            raise ParseError("expected K, params, ri", path=path, line=lineno + 1)
        try:
            evaluated.append(
                (
                    int(cells[0]),
                    tuple(float(x) for x in cells[1].split(",")),
                    float(cells[2]),
                )
            )
        except ValueError:
            raise ParseError("non-numeric table row", path=path, line=lineno + 1) from None
    return evaluated, best_K, best_params


def write_manifest(path, entries):
    """Write sorted key = value lines under a schema tag."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# omiclust manifest v1\n")
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")


def load_manifest(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "# omiclust manifest v1":
        raise ParseError("not a manifest (missing schema tag)", path=path, line=1)
    entries = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        key, sep, val = raw.partition("=")
        if not sep:
            raise ParseError("expected key = value", path=path, line=lineno)
        entries[key.strip()] = val.strip()
    return entries


@dataclass(frozen=True)
class BlockSpec:
    """One block entry from a config file."""

    path: str
    name: str
    penalty: str
    params: tuple | None = None  # None means tune this block
    ordered: bool = False
    ranges: tuple = ()  # optional per-parameter (lo, hi) domain overrides


@dataclass(frozen=True)
class AnalysisConfig:
    """Parsed analysis configuration.

    K is set for a fixed-K fit; K_range for tuning. Exactly one of the
    two is required by the commands that consume the config.
    """

    blocks: tuple
    K: int | None = None
    K_range: tuple | None = None
    n_points: int = 5
    folds: int = 10
    repeats: int = 1
    seed: int = 0
    out: str = "."
    fit: dict = field(default_factory=dict)


_FIT_KEYS = {
    "max_iter": int,
    "tol": float,
    "lqa_floor": float,
    "zero_threshold": float,
    "kmeans_restarts": int,
    "isotropic_psi": None,  # bool, handled separately
}


def _parse_bool(val, lineno, path):
    low = val.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ParseError(f"expected a boolean, got {val!r}", path=path, line=lineno)


def _parse_K_range(val):
    val = val.strip()
    if ".." in val:
        lo, hi = val.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in val.split(","))


def parse_config(text, path=None):
    """Parse the flat key-value + [block] section config format.

    Global keys: K or K_range, n_points, folds, repeats, seed, out, and
    fit options (max_iter, tol, lqa_floor, zero_threshold,
    kmeans_restarts, isotropic_psi). Each [block] section needs path and
    penalty, with optional name, ordered, params (comma list, or
    "tune"), and range1/range2 domain overrides.

    Returns:
      AnalysisConfig.

    Raises:
      ParseError: malformed lines or values.
      ConfigError: missing/invalid fields after parsing.
    """
    globals_ = {}
    blocks = []
    current = None  # None = global scope, else dict for a block
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if line != "[block]":
                raise ParseError(
                    f"unknown section {line!r} (only [block] is allowed)",
                    path=path,
                    line=lineno,
                )
            current = {"_line": lineno}
            blocks.append(current)
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ParseError("expected key = value", path=path, line=lineno)
        key = key.strip()
        val = val.strip()
        target = globals_ if current is None else current
        if key in target:
            raise ParseError(f"duplicate key {key!r}", path=path, line=lineno)
        target[key] = (val, lineno)

    specs = []
    for i, b in enumerate(blocks):
        start = b.pop("_line")
        if "path" not in b:
            raise ConfigError(f"block section at line {start} lacks a path")
        bpath, _ = b.pop("path")
        pen, pen_line = b.pop("penalty", (None, start))
        if pen is None or pen not in PENALTY_KINDS:
            raise ParseError(
                f"block needs a penalty of {sorted(PENALTY_KINDS)}, got {pen!r}",
                path=path,
                line=pen_line,
            )
        name, _ = b.pop("name", (os.path.splitext(os.path.basename(bpath))[0], 0))
        ordered_val, ordered_line = b.pop("ordered", ("false", start))
        ordered = _parse_bool(ordered_val, ordered_line, path)
        params_val, params_line = b.pop("params", ("tune", start))
        if params_val.lower() == "tune":
            params = None
        else:
            try:
                params = tuple(float(x) for x in params_val.split(","))
            except ValueError:
                raise ParseError(
                    f"bad params {params_val!r}", path=path, line=params_line
                ) from None
        ranges = []
        for rkey in ("range1", "range2"):
            if rkey in b:
                rval, rline = b.pop(rkey)
                parts = rval.split(",")
                if len(parts) != 2:
                    raise ParseError(
                        f"{rkey} must be lo,hi", path=path, line=rline
                    )
                try:
                    ranges.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    raise ParseError(
                        f"bad {rkey} {rval!r}", path=path, line=rline
                    ) from None
        if b:
            key = next(iter(b))
            raise ParseError(
                f"unknown block key {key!r}", path=path, line=b[key][1]
            )
        if pen == "fused" and not ordered:
            raise ConfigError(
                f"block {name!r}: the fused penalty requires ordered = true"
            )
        specs.append(
            BlockSpec(
                path=bpath,
                name=name,
                penalty=pen,
                params=params,
                ordered=ordered,
                ranges=tuple(ranges),
            )
        )
    if not specs:
        raise ConfigError("config declares no [block] sections")

    K = None
    K_range = None
    if "K" in globals_:
        val, lineno = globals_.pop("K")
        try:
            K = int(val)
        except ValueError:
            raise ParseError(f"bad K {val!r}", path=path, line=lineno) from None
    if "K_range" in globals_:
        val, lineno = globals_.pop("K_range")
        try:
            K_range = _parse_K_range(val)
        except ValueError:
            raise ParseError(f"bad K_range {val!r}", path=path, line=lineno) from None
    if K is None and K_range is None:
        raise ConfigError("config needs K or K_range")

    def take_int(key, default):
        if key not in globals_:
            return default
        val, lineno = globals_.pop(key)
        try:
            return int(val)
        except ValueError:
            raise ParseError(f"bad {key} {val!r}", path=path, line=lineno) from None

    n_points = take_int("n_points", 5)
    folds = take_int("folds", 10)
    repeats = take_int("repeats", 1)
    seed = take_int("seed", 0)
    out = globals_.pop("out", (".", 0))[0]

    fit = {}
    for key, conv in _FIT_KEYS.items():
        if key not in globals_:
            continue
        val, lineno = globals_.pop(key)
        if conv is None:
            fit[key] = _parse_bool(val, lineno, path)
        else:
            try:
                fit[key] = conv(val)
            except ValueError:
                raise ParseError(f"bad {key} {val!r}", path=path, line=lineno) from None
    if globals_:
        key = next(iter(globals_))
        raise ParseError(
            f"unknown key {key!r}", path=path, line=globals_[key][1]
        )
    return AnalysisConfig(
        blocks=tuple(specs),
        K=K,
        K_range=K_range,
        n_points=n_points,
        folds=folds,
        repeats=repeats,
        seed=seed,
        out=out,
        fit=fit,
    )


def load_config(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_config(fh.read(), path=path)


def load_analysis(config, base_dir="."):
    """Load all matrices named by a config and cross-check sample ids.

    Returns:
      (blocks, penalties) where penalties is None when any block says
      tune, else the concrete per-block penalty objects.
    """
    blocks = []
    for spec in config.blocks:
        bpath = os.path.join(base_dir, spec.path)
        if not os.path.exists(bpath):
            raise ConfigError(f"block {spec.name!r}: no such file {bpath!r}")
        b = load_matrix(bpath, name=spec.name)
        if spec.ordered:
            b = OmicsBlock(
                name=b.name,
                values=b.values,
                feature_ids=b.feature_ids,
                ordered=True,
                sample_ids=b.sample_ids,
            )
        blocks.append(b)
    check_sample_ids(blocks)
    if any(s.params is None for s in config.blocks):
        return blocks, None
    penalties = [make_penalty(s.penalty, s.params) for s in config.blocks]
    return blocks, penalties


def export_plotdata(result, out_dir, blocks=None):
    """Write coefficient profiles and the latent scatter for a fit.

    Writes one `<block>_coefficients.tsv` per block (feature index, id,
    one column per latent dimension) and `latent_scatter.tsv` (sample
    id, latent coordinates, cluster label).

    Returns:
      List of written paths.
    """
    model = result.model
    os.makedirs(out_dir, exist_ok=True)
    if blocks is not None:
        if tuple(b.p for b in blocks) != model.block_sizes:
            raise ValidationError(
                "blocks do not match the fitted model's layout"
            )
        names = [b.name for b in blocks]
        fids = [b.feature_ids for b in blocks]
        sids = next(
            (b.sample_ids for b in blocks if b.sample_ids is not None),
            None,
        )
    else:
        names = [f"block{t + 1}" for t in range(len(model.block_sizes))]
        fids = [
            tuple(f"f{i + 1}" for i in range(size)) for size in model.block_sizes
        ]
        sids = None
    if sids is None:
        sids = tuple(f"s{j + 1}" for j in range(result.stats.n))
    written = []
    zcols = [f"w{k + 1}" for k in range(model.q)]
    for t, sl in enumerate(model.block_slices()):
        path = os.path.join(out_dir, f"{names[t]}_coefficients.tsv")
        Wt = model.W[sl]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\t".join(["index", "feature", *zcols]) + "\n")
            for i, (fid, row) in enumerate(zip(fids[t], Wt), start=1):
                fh.write("\t".join([str(i), fid, *map(_fmt, row)]) + "\n")
        written.append(path)
    path = os.path.join(out_dir, "latent_scatter.tsv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        zcols = [f"z{k + 1}" for k in range(model.q)]
        fh.write("\t".join(["sample", *zcols, "cluster"]) + "\n")
        for j, sid in enumerate(sids):
            coords = map(_fmt, result.stats.EZ[:, j])
            fh.write("\t".join([sid, *coords, str(result.labels.labels[j])]) + "\n")
    written.append(path)
    return written
