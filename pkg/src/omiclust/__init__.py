"""Sparse integrative clustering of multi-omics data.

Fits a shared latent-variable Gaussian model across several data blocks
with lasso, elastic-net, or fused-lasso penalties on the loadings, picks
penalty parameters and the number of clusters by a cross-validated
reproducibility index over a uniform-design lattice, and ships a
simulation benchmark plus a command-line front end.
"""

import os as _os

# cap BLAS thread pools before numpy loads them
_threads = _os.environ.get("OMICLUST_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)

from .benchmark import BenchReport, MethodSummary, run_benchmark
from .blocks import (
    ElasticNet,
    FusedLasso,
    Lasso,
    OmicsBlock,
    center_rows,
    make_penalty,
    subset_columns,
)
from .clustering import (
    Partition,
    adjusted_rand_index,
    assign_to_centers,
    kmeans,
    kmeans_fit,
    misclassification_rate,
)
from .em import FitOptions, FitResult, e_step, fit, predict_latent
from .errors import (
    ConfigError,
    NumericalError,
    OmiclustError,
    ParseError,
    ValidationError,
)
from .factor import FactorModel, LatentStats, init_model
from .io import (
    AnalysisConfig,
    BlockSpec,
    export_plotdata,
    load_config,
    load_labels,
    load_matrix,
    load_model,
    load_tune_table,
    parse_config,
    save_labels,
    save_matrix,
    save_model,
    save_tune_table,
)
from .simulate import (
    SimTruth,
    kmeans_baseline,
    simulate_setup1,
    simulate_setup2,
    svd_baseline,
)
from .tuning import (
    Interval,
    SearchDomain,
    TuneResult,
    default_domain,
    good_lattice_points,
    lambda_max,
    reproducibility_index,
    tune,
    uniform_design,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "BenchReport",
    "BlockSpec",
    "ConfigError",
    "ElasticNet",
    "FactorModel",
    "FitOptions",
    "FitResult",
    "FusedLasso",
    "Interval",
    "Lasso",
    "LatentStats",
    "MethodSummary",
    "NumericalError",
    "OmiclustError",
    "OmicsBlock",
    "ParseError",
    "Partition",
    "SearchDomain",
    "SimTruth",
    "TuneResult",
    "ValidationError",
    "adjusted_rand_index",
    "assign_to_centers",
    "center_rows",
    "default_domain",
    "e_step",
    "export_plotdata",
    "fit",
    "good_lattice_points",
    "init_model",
    "kmeans",
    "kmeans_baseline",
    "kmeans_fit",
    "lambda_max",
    "load_config",
    "load_labels",
    "load_matrix",
    "load_model",
    "load_tune_table",
    "make_penalty",
    "misclassification_rate",
    "parse_config",
    "predict_latent",
    "reproducibility_index",
    "run_benchmark",
    "save_labels",
    "save_matrix",
    "save_model",
    "save_tune_table",
    "simulate_setup1",
    "simulate_setup2",
    "subset_columns",
    "svd_baseline",
    "tune",
    "uniform_design",
    "__version__",
]
