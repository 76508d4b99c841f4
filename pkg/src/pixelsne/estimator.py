"""Scikit-learn style front end for the three embedding methods."""

import time

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .affinity import build_affinities
from .ingest import pca_reduce
from .optimizer import OptimizerConfig, run, set_num_threads

METHODS = {
    # method: (tree backend, screen coordinates, default kNN backend)
    "exact": ("exact", False, "exact"),
    "bhsne": ("data", False, "vp"),
    "pixelsne": ("pixel", True, "rp"),
}


def derive_seeds(seed, n=2):
    """Independent sub-seeds (kNN, initialization, ...) from one user seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


class PixelSNE(TransformerMixin, BaseEstimator):
    """2D neighbor embedding with exact, Barnes-Hut or pixel-aligned repulsion.

    Parameters
    ----------
    method : {"pixelsne", "bhsne", "exact"}, default="pixelsne"
        ``pixelsne`` keeps coordinates in ``[0, r1) x [0, r2)`` and uses the
        static pixel quadtree; ``bhsne`` rebuilds a data quadtree each
        iteration on unconstrained coordinates; ``exact`` evaluates repulsion
        over all pairs.
    perplexity : float, default=50
    n_iter : int, default=1000
    theta : float, default=0.5
        Barnes-Hut opening threshold; ignored by ``exact``.
    criterion : {"linear", "squared"}, default="linear"
        Cell opening test: summarize when ``diag / dist < theta`` (linear) or
        ``diag / dist**2 < theta`` (squared).
    learning_rate : float, default=200
    resolution : tuple of int, default=(512, 512)
        Screen size ``(r1, r2)``, used by ``pixelsne`` only.
    knn : {"exact", "vp", "rp"} or None
        Neighbor search backend. None picks ``rp`` for ``pixelsne``, ``vp``
        for ``bhsne`` and ``exact`` for ``exact``.
    pca_components : int or None, default=50
        Reduce inputs wider than this before the neighbor search.
    early_exaggeration : float, default=12
    exaggeration_iter : int, default=250
    eps : float, default=1e-6
    n_threads : int, default=1
    random_state : int, default=0

    Attributes
    ----------
    embedding_ : ndarray of shape (n_samples, 2)
    kl_divergence_ : float
        Cost after the last iteration (tree-approximated normalizer unless
        ``method="exact"``).
    cost_trace_ : CostTrace
    affinities_ : scipy.sparse.csr_matrix
    beta_ : ndarray of shape (2,)
    n_iter_ : int
    timings_ : dict
        Wall-clock seconds for ``p`` (affinities) and ``coord`` (optimization).
    """

    def __init__(
        self,
        method="pixelsne",
        perplexity=50.0,
        n_iter=1000,
        theta=0.5,
        criterion="linear",
        learning_rate=200.0,
        resolution=(512, 512),
        knn=None,
        pca_components=50,
        early_exaggeration=12.0,
        exaggeration_iter=250,
        eps=1e-6,
        n_threads=1,
        random_state=0,
    ):
        self.method = method
        self.perplexity = perplexity
        self.n_iter = n_iter
        self.theta = theta
        self.criterion = criterion
        self.learning_rate = learning_rate
        self.resolution = resolution
        self.knn = knn
        self.pca_components = pca_components
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iter = exaggeration_iter
        self.eps = eps
        self.n_threads = n_threads
        self.random_state = random_state

    def _config(self, init_seed):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}, got {self.method!r}")
        backend, screen, _ = METHODS[self.method]
        return OptimizerConfig(
            n_iter=self.n_iter,
            theta=self.theta,
            criterion=self.criterion,
            learning_rate=self.learning_rate,
            early_exaggeration=self.early_exaggeration,
            exaggeration_iter=self.exaggeration_iter,
            eps=self.eps,
            backend=backend,
            screen=screen,
            resolution=tuple(self.resolution),
            seed=init_seed,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        knn_seed, init_seed = derive_seeds(self.random_state)
        cfg = self._config(init_seed)
        knn = self.knn or METHODS[self.method][2]
        set_num_threads(self.n_threads)

        t0 = time.perf_counter()
        if self.pca_components is not None and X.shape[1] > self.pca_components:
            X = pca_reduce(X, min(self.pca_components, X.shape[0]))
        p = build_affinities(X, self.perplexity, backend=knn, seed=knn_seed)
        t1 = time.perf_counter()
        result = run(p, cfg)
        t2 = time.perf_counter()

        self.embedding_ = result.embedding.z
        self.beta_ = result.embedding.beta
        self.cost_trace_ = result.trace
        self.kl_divergence_ = result.trace.costs[-1]
        self.affinities_ = p
        self.n_iter_ = cfg.n_iter
        self.timings_ = {"p": t1 - t0, "coord": t2 - t1, "total": t2 - t0}
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).embedding_

    def transform(self, X):
        """Return the embedding of the training data.

        The method has no out-of-sample extension, so ``X`` must be the
        matrix passed to ``fit``.
        """
        check_is_fitted(self, "embedding_")
        X = check_array(X, dtype=np.float64)
        if X.shape[0] != self.embedding_.shape[0]:
            raise ValueError("transform only returns the embedding of the fitted data")
        return self.embedding_
