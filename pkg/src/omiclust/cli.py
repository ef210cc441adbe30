"""Command-line driver: fit, tune, simulate, benchmark, ari.

Heavy imports are deferred so the OMICLUST_THREADS override can cap the
BLAS thread pools before numpy loads.
"""

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _apply_thread_override():
    n = os.environ.get("OMICLUST_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def _version():
    try:
        from importlib.metadata import version

        return version("omiclust")
    except Exception:
        return "unknown"


def build_parser():
    p = argparse.ArgumentParser(
        prog="omiclust",
        description="Sparse integrative clustering of multi-block omics data.",
    )
    p.add_argument("--version", action="version", version=f"omiclust {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit the model described by a config file")
    f.add_argument("config", help="analysis config (needs K and fixed penalties)")

    t = sub.add_parser(
        "tune", help="search K and penalty parameters by reproducibility"
    )
    t.add_argument("config", help="analysis config (needs K_range)")

    s = sub.add_parser("simulate", help="write one simulated data set")
    s.add_argument("--setup", type=int, required=True, choices=(1, 2))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument(
        "--demo-variant",
        action="store_true",
        help="setup-1 coefficient-profile demonstration layout",
    )

    b = sub.add_parser("benchmark", help="run the simulation benchmark")
    b.add_argument("--setup", type=int, required=True, choices=(1, 2))
    b.add_argument(
        "--methods",
        default="lasso,enet,fused",
        help="comma list: lasso, enet, fused, svd, kmeans-separate, "
        "kmeans-concatenated",
    )
    b.add_argument("--reps", type=int, default=50, help="replicates")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=".", help="output directory")
    b.add_argument("--folds", type=int, default=None)
    b.add_argument("--repeats", type=int, default=None)
    b.add_argument("--n-points", type=int, default=None)

    a = sub.add_parser("ari", help="adjusted Rand index of two label files")
    a.add_argument("labels_a")
    a.add_argument("labels_b")
    return p


def _outdir(base, out):
    path = os.path.join(base, out) if not os.path.isabs(out) else out
    os.makedirs(path, exist_ok=True)
    return path


def _config_entries(cfg, config_path):
    entries = {
        "config": os.path.basename(config_path),
        "seed": cfg.seed,
        "version": _version(),
        "n_points": cfg.n_points,
        "folds": cfg.folds,
        "repeats": cfg.repeats,
    }
    if cfg.K is not None:
        entries["K"] = cfg.K
    if cfg.K_range is not None:
        entries["K_range"] = ",".join(str(k) for k in cfg.K_range)
    for key, val in sorted(cfg.fit.items()):
        entries[f"fit.{key}"] = val
    for spec in cfg.blocks:
        entries[f"block.{spec.name}.path"] = spec.path
        entries[f"block.{spec.name}.penalty"] = spec.penalty
        if spec.params is not None:
            entries[f"block.{spec.name}.params"] = ",".join(
                repr(float(x)) for x in spec.params
            )
    return entries


def _fit_opts(cfg):
    from .em import FitOptions

    return FitOptions(seed=cfg.seed, **cfg.fit)


def _cmd_fit(args):
    from .blocks import center_rows
    from .em import fit
    from .errors import ConfigError
    from .io import (
        export_plotdata,
        load_analysis,
        load_config,
        save_labels,
        save_model,
        write_manifest,
    )

    if not os.path.exists(args.config):
        raise ConfigError(f"no such config file: {args.config}")
    cfg = load_config(args.config)
    if cfg.K is None:
        raise ConfigError("fit needs K in the config (K_range is for tune)")
    base = os.path.dirname(os.path.abspath(args.config))
    raw, penalties = load_analysis(cfg, base_dir=base)
    if penalties is None:
        raise ConfigError(
            "fit needs fixed penalty parameters for every block "
            "(params = tune is only valid for the tune command)"
        )
    blocks = [center_rows(b) for b in raw]
    result = fit(blocks, cfg.K, penalties, _fit_opts(cfg))
    out = _outdir(base, cfg.out)
    model_path = os.path.join(out, "model.txt")
    labels_path = os.path.join(out, "labels.txt")
    save_model(result.model, model_path, block_names=[b.name for b in blocks])
    save_labels(result.labels, labels_path, sample_ids=raw[0].sample_ids)
    written = export_plotdata(result, out, blocks=blocks)
    entries = _config_entries(cfg, args.config)
    entries.update(
        {
            "command": "fit",
            "converged": result.converged,
            "iterations": result.n_iter,
            "objective": repr(float(result.objective_trace[-1])),
            "outputs": ",".join(
                sorted(
                    os.path.basename(p)
                    for p in [model_path, labels_path, *written]
                )
            ),
        }
    )
    for b in blocks:
        entries[f"row_means.{b.name}"] = ",".join(
            repr(float(x)) for x in b.row_means
        )
    write_manifest(os.path.join(out, "manifest.txt"), entries)
    selected = ", ".join(
        f"{b.name}: {len(s)}" for b, s in zip(blocks, result.selected)
    )
    print(f"fit K={cfg.K}: converged={result.converged} "
          f"iterations={result.n_iter}")
    print(f"features kept per block: {selected}")
    print(f"outputs written to {out}")
    return 0


def _cmd_tune(args):
    from .blocks import center_rows
    from .errors import ConfigError
    from .io import load_analysis, load_config, save_tune_table, write_manifest
    from .tuning import Interval, SearchDomain, tune

    if not os.path.exists(args.config):
        raise ConfigError(f"no such config file: {args.config}")
    cfg = load_config(args.config)
    K_range = cfg.K_range if cfg.K_range is not None else (cfg.K,)
    base = os.path.dirname(os.path.abspath(args.config))
    raw, _ = load_analysis(cfg, base_dir=base)
    blocks = [center_rows(b) for b in raw]
    kinds = tuple(spec.penalty for spec in cfg.blocks)
    domain = None
    if any(spec.ranges for spec in cfg.blocks):
        if not all(spec.ranges for spec in cfg.blocks):
            raise ConfigError(
                "either every block or no block may override its ranges"
            )
        domain = SearchDomain(
            tuple(
                tuple(Interval(lo, hi) for lo, hi in spec.ranges)
                for spec in cfg.blocks
            )
        )
    result = tune(
        blocks,
        K_range,
        kinds,
        domain=domain,
        n_points=cfg.n_points,
        folds=cfg.folds,
        opts=_fit_opts(cfg),
        repeats=cfg.repeats,
    )
    out = _outdir(base, cfg.out)
    table_path = os.path.join(out, "tune.txt")
    save_tune_table(result, table_path)
    entries = _config_entries(cfg, args.config)
    entries.update(
        {
            "command": "tune",
            "best_K": result.best_K,
            "best_params": ",".join(repr(float(x)) for x in result.best_params),
            "best_ri": repr(float(result.best_ri)),
            "outputs": os.path.basename(table_path),
        }
    )
    write_manifest(os.path.join(out, "manifest.txt"), entries)
    print("K\tri")
    for K in K_range:
        print(f"{K}\t{result.ri_by_K[K]:.4f}")
    params = ", ".join(f"{x:.4g}" for x in result.best_params)
    print(f"selected K={result.best_K} with parameters ({params})")
    print(f"outputs written to {out}")
    return 0


def _cmd_simulate(args):
    from .io import save_labels, save_matrix, write_manifest
    from .simulate import simulate_setup1, simulate_setup2

    if args.setup == 1:
        blocks, truth = simulate_setup1(args.seed, demo_variant=args.demo_variant)
    else:
        if args.demo_variant:
            print("omiclust: error: --demo-variant applies to setup 1 only",
                  file=sys.stderr)
            return 2
        blocks, truth = simulate_setup2(args.seed)
    out = _outdir(os.getcwd(), args.out)
    files = []
    for b in blocks:
        path = os.path.join(out, f"{b.name}.txt")
        save_matrix(b, path)
        files.append(path)
    labels_path = os.path.join(out, "truth_labels.txt")
    save_labels(truth.labels, labels_path, sample_ids=blocks[0].sample_ids)
    files.append(labels_path)
    entries = {
        "command": "simulate",
        "setup": args.setup,
        "seed": args.seed,
        "demo_variant": args.demo_variant,
        "version": _version(),
        "outputs": ",".join(sorted(os.path.basename(p) for p in files)),
    }
    for b, feats in zip(blocks, truth.true_features):
        entries[f"truth_features.{b.name}"] = ",".join(str(i) for i in feats)
    write_manifest(os.path.join(out, "manifest.txt"), entries)
    print(f"simulated setup {args.setup} (seed {args.seed}) into {out}")
    return 0


def _cmd_benchmark(args):
    from . import benchmark as bench
    from .io import write_manifest

    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    kwargs = {}
    if args.folds is not None:
        kwargs["folds"] = args.folds
    if args.repeats is not None:
        kwargs["repeats"] = args.repeats
    if args.n_points is not None:
        kwargs["n_points"] = args.n_points
    report = bench.run_benchmark(
        args.setup, methods=methods, R=args.reps, seed=args.seed, **kwargs
    )
    text = report.format_table()
    print(text, end="")
    out = _outdir(os.getcwd(), args.out)
    table_path = os.path.join(out, "benchmark.txt")
    with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    entries = {
        "command": "benchmark",
        "setup": args.setup,
        "methods": ",".join(methods),
        "R": args.reps,
        "seed": args.seed,
        "version": _version(),
        "outputs": "benchmark.txt",
    }
    for row in report.rows:
        key = row.method if row.block is None else f"{row.method}.{row.block}"
        entries[f"{key}.correct_K_pct"] = repr(float(row.correct_k_percent))
        entries[f"{key}.error_mean"] = repr(float(row.error_mean))
        entries[f"{key}.error_sd"] = repr(float(row.error_sd))
        entries[f"{key}.ri_mean"] = repr(float(row.ri_mean))
        entries[f"{key}.ri_sd"] = repr(float(row.ri_sd))
        entries[f"{key}.replicates_ok"] = row.n_ok
        if row.tp is not None:
            for name, (tpm, tps), (fpm, fps) in zip(
                report.block_names, row.tp, row.fp
            ):
                entries[f"{key}.tp_mean.{name}"] = repr(float(tpm))
                entries[f"{key}.tp_sd.{name}"] = repr(float(tps))
                entries[f"{key}.fp_mean.{name}"] = repr(float(fpm))
                entries[f"{key}.fp_sd.{name}"] = repr(float(fps))
    write_manifest(os.path.join(out, "results.txt"), entries)
    write_manifest(
        os.path.join(out, "manifest.txt"),
        {
            "command": "benchmark",
            "setup": args.setup,
            "methods": ",".join(methods),
            "R": args.reps,
            "seed": args.seed,
            "version": _version(),
            "outputs": "benchmark.txt,results.txt",
        },
    )
    print(f"outputs written to {out}")
    return 0


def _cmd_ari(args):
    from .clustering import adjusted_rand_index, Partition
    from .errors import ValidationError
    from .io import load_labels

    part_a, ids_a = load_labels(args.labels_a)
    part_b, ids_b = load_labels(args.labels_b)
    if ids_a != ids_b:
        if sorted(ids_a) != sorted(ids_b):
            raise ValidationError("label files cover different samples")
        order = {sid: j for j, sid in enumerate(ids_b)}
        perm = [order[sid] for sid in ids_a]
        part_b = Partition(labels=part_b.labels[perm], K=part_b.K)
    print(adjusted_rand_index(part_a, part_b))
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "tune": _cmd_tune,
    "simulate": _cmd_simulate,
    "benchmark": _cmd_benchmark,
    "ari": _cmd_ari,
}


def run_cli(argv=None):
    """Parse argv and run one subcommand; returns the exit code."""
    _apply_thread_override()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .errors import ConfigError, OmiclustError, ParseError

    try:
        return _COMMANDS[args.command](args)
    except (ParseError, ConfigError) as exc:
        print(f"omiclust: error: {exc}", file=sys.stderr)
        return 2
    except OmiclustError as exc:
        print(f"omiclust: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"omiclust: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
