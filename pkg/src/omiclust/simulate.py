"""Synthetic two-block data generators and reference clustering baselines.

Both generators return uncentered blocks plus the ground truth used to
score feature selection and cluster recovery. Baselines cluster sample
columns directly (per block or stacked) or after a rank reduction of
the stacked matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import OmicsBlock, center_rows
from .clustering import Partition, kmeans
from .errors import ValidationError
from .factor import concat_values


@dataclass(frozen=True)
class SimTruth:
    """Ground truth of a simulated data set.

    true_features holds one tuple of 1-based row indices per block,
    matching the indexing of FitResult.selected.
    """

    labels: Partition
    true_features: tuple


def simulate_setup1(seed, demo_variant=False):
    """Two-cluster pair of blocks driven by one latent variable.

    Both blocks are 200 x 100 with standard normal noise. In the default
    variant both loading vectors have value 3 on rows 1-20; the demo
    variant instead uses value 1.5, with block 2's signal moved to rows
    101-120. Cluster labels split samples by the sign of the latent
    variable.

    Args:
      seed: RNG seed; fixed draw order (latent, block-1 noise, block-2
        noise) keeps outputs stable per seed.
      demo_variant: switch to the coefficient-profile demonstration
        layout described above.

    Returns:
      (blocks, truth): two uncentered OmicsBlock and a SimTruth.
    """
    rng = np.random.default_rng(seed)
    n, p = 100, 200
    z = rng.standard_normal(n)
    e1 = rng.standard_normal((p, n))
    e2 = rng.standard_normal((p, n))
    amp = 1.5 if demo_variant else 3.0
    w1 = np.zeros(p)
    w1[:20] = amp
    w2 = np.zeros(p)
    if demo_variant:
        w2[100:120] = amp
        feats2 = tuple(range(101, 121))
    else:
        w2[:20] = amp
        feats2 = tuple(range(1, 21))
    x1 = np.outer(w1, z) + e1
    x2 = np.outer(w2, z) + e2
    labels = np.where(z > 0, 1, 2).astype(np.int64)
    blocks = [
        OmicsBlock("data1", x1, ordered=True),
        OmicsBlock("data2", x2, ordered=True),
    ]
    truth = SimTruth(
        labels=Partition(labels, 2),
        true_features=(tuple(range(1, 21)), feats2),
    )
    return blocks, truth


def simulate_setup2(seed):
    """Three equal clusters of 50 samples across two 500-row blocks.

    Block 1 marks cluster 1 on rows 1-10 (mean 2) and cluster 2 on rows
    491-500 (mean 1.5). Block 2 copies half of block 1's cluster-1
    signal plus fresh noise on rows 1-10 and marks cluster 3 on rows
    491-500 (mean 2); everything else is standard normal.

    Returns:
      (blocks, truth): two uncentered OmicsBlock and a SimTruth.
    """
    rng = np.random.default_rng(seed)
    n, p = 150, 500
    x1 = rng.standard_normal((p, n))
    x1[:10, :50] += 2.0
    x1[490:, 50:100] += 1.5
    x2 = rng.standard_normal((p, n))
    x2[:10, :50] += 0.5 * x1[:10, :50]
    x2[490:, 100:150] += 2.0
    labels = np.repeat([1, 2, 3], 50).astype(np.int64)
    feats = tuple(range(1, 11)) + tuple(range(491, 501))
    blocks = [
        OmicsBlock("data1", x1, ordered=True),
        OmicsBlock("data2", x2, ordered=True),
    ]
    truth = SimTruth(labels=Partition(labels, 3), true_features=(feats, feats))
    return blocks, truth


def svd_baseline(blocks, K, restarts=20, seed=0):
    """Cluster samples on the top K-1 right singular vectors of the
    stacked row-centered matrix."""
    if K < 2:
        raise ValidationError("K must be >= 2")
    X = concat_values([center_rows(b) for b in blocks])
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    return kmeans(vt[: K - 1].T, K, restarts=restarts, seed=seed)


def kmeans_baseline(blocks, K, mode, restarts=20, seed=0):
    """K-means on raw sample columns.

    Args:
      blocks: list of OmicsBlock.
      K: number of clusters.
      mode: "separate" clusters each block on its own; "concatenated"
        stacks all blocks first.
      restarts: restarts per clustering.
      seed: RNG seed.

    Returns:
      List of Partition, one per block for "separate", one element for
      "concatenated".
    """
    if K < 2:
        raise ValidationError("K must be >= 2")
    if mode == "separate":
        return [
            kmeans(b.values.T, K, restarts=restarts, seed=seed) for b in blocks
        ]
    if mode == "concatenated":
        return [kmeans(concat_values(blocks).T, K, restarts=restarts, seed=seed)]
    raise ValidationError(f"mode must be 'separate' or 'concatenated', got {mode!r}")
