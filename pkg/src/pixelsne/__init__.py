"""Exact t-SNE, Barnes-Hut SNE and pixel-aligned Barnes-Hut SNE in 2D."""

import os

__version__ = "0.1.0"

# The bundled TBB is too old for numba; the workqueue layer needs nothing extra.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .affinity import build_affinities, calibrate_rows, symmetrize  # noqa: E402
from .estimator import PixelSNE  # noqa: E402
from .ingest import load_matrix, make_gaussian_mixture, pca_reduce  # noqa: E402
from .neighbors import NeighborGraph, exact_knn, knn_graph, rp_knn, vp_knn  # noqa: E402
from .optimizer import DivergenceError, OptimizerConfig, run  # noqa: E402

__all__ = [
    "PixelSNE",
    "OptimizerConfig",
    "DivergenceError",
    "NeighborGraph",
    "build_affinities",
    "calibrate_rows",
    "symmetrize",
    "exact_knn",
    "vp_knn",
    "rp_knn",
    "knn_graph",
    "load_matrix",
    "pca_reduce",
    "make_gaussian_mixture",
    "run",
    "__version__",
]
