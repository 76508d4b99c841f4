"""Sparse joint probabilities P from a kNN graph.

Each item's Gaussian bandwidth is calibrated by bisection so that the
conditional distribution over its k retrieved neighbors has the requested
perplexity; the conditional rows are then symmetrized into a joint matrix
``p_ij = (p_j|i + p_i|j) / (2n)`` stored as a scipy CSR matrix.
"""

import numba
import numpy as np
import scipy.sparse as sp

from .neighbors import NeighborGraph, knn_graph

SIGMA_MIN = 1e-20
SIGMA_MAX = 1e20
MAX_BISECTION_ITERS = 200
PROB_FLOOR = 1e-12
# Absolute perplexity tolerance is PERPLEXITY_RTOL * perplexity.
PERPLEXITY_RTOL = 1e-9


@numba.njit(cache=True)
def _row_for_sigma(g, inv_two_s2, out):
    total = 0.0
    for j in range(g.shape[0]):
        w = np.exp(-g[j] * inv_two_s2)
        if w < PROB_FLOOR:
            w = PROB_FLOOR
        out[j] = w
        total += w
    h = 0.0
    for j in range(g.shape[0]):
        p = out[j] / total
        out[j] = p
        if p > 0.0:
            h -= p * np.log2(p)
    return h


@numba.njit(cache=True)
def _calibrate_rows(dists, perplexity, sigma, cond, n_iter):
    n, k = dists.shape
    target = np.log2(perplexity)
    tol = PERPLEXITY_RTOL * perplexity
    log_lo0 = np.log(SIGMA_MIN)
    log_hi0 = np.log(SIGMA_MAX)
    g = np.empty(k)
    for i in range(n):
        dmin = np.inf
        dmax = 0.0
        for j in range(k):
            d2 = dists[i, j] * dists[i, j]
            g[j] = d2
            if d2 < dmin:
                dmin = d2
            if d2 > dmax:
                dmax = d2
        if dmax == dmin:
            for j in range(k):
                cond[i, j] = 1.0 / k
            sigma[i] = SIGMA_MIN if dmax == 0.0 else SIGMA_MAX
            n_iter[i] = 0
            continue
        # scale-free working units: shifted squared distances in [0, 1]
        ref = dmax - dmin
        for j in range(k):
            g[j] = (g[j] - dmin) / ref
        lo = log_lo0
        hi = log_hi0
        s = 0.0
        it = 0
        while it < MAX_BISECTION_ITERS:
            it += 1
            mid = 0.5 * (lo + hi)
            s = np.exp(mid)
            h = _row_for_sigma(g, 1.0 / (2.0 * s * s), cond[i])
            perp = 2.0 ** h
            if abs(perp - perplexity) <= tol:
                break
            if h > target:
                hi = mid
            else:
                lo = mid
        sigma[i] = s * np.sqrt(ref)
        n_iter[i] = it


def calibrate_rows(dists, perplexity):
    """Calibrate conditional rows for a (n_items, k) array of neighbor distances.

    Returns
    -------
    sigma : ndarray of shape (n_items,)
        Gaussian bandwidths in input distance units.
    cond : ndarray of shape (n_items, k)
        Conditional probabilities ``p_j|i``; each row sums to 1.
    n_iter : ndarray of shape (n_items,)
        Bisection steps used (``MAX_BISECTION_ITERS`` means the cap was hit).
    """
    dists = np.ascontiguousarray(dists, dtype=np.float64)
    if dists.ndim != 2:
        raise ValueError("dists must be 2D (n_items, k)")
    k = dists.shape[1]
    if k < 1:
        raise ValueError("need at least one neighbor per item")
    if not (1.0 <= perplexity < k):
        raise ValueError(
            f"perplexity {perplexity} is unreachable with k={k} neighbors (need 1 <= u < k)"
        )
    if not np.all(np.isfinite(dists)) or np.any(dists < 0):
        raise ValueError("distances must be finite and non-negative")
    n = dists.shape[0]
    sigma = np.empty(n)
    cond = np.empty((n, k))
    n_iter = np.empty(n, dtype=np.int64)
    _calibrate_rows(dists, float(perplexity), sigma, cond, n_iter)
    return sigma, cond, n_iter


def calibrate_row(dists, perplexity):
    """Single-row convenience wrapper around :func:`calibrate_rows`."""
    sigma, cond, _ = calibrate_rows(np.atleast_2d(dists), perplexity)
    return sigma[0], cond[0]


def perplexity_of(row):
    """2 ** (Shannon entropy in bits) of a probability row."""
    row = np.asarray(row, dtype=np.float64)
    nz = row[row > 0]
    return 2.0 ** (-(nz * np.log2(nz)).sum())


def symmetrize(neighbor_ids, cond, n_items):
    """Joint probabilities from conditional rows; missing directions count as 0."""
    neighbor_ids = np.asarray(neighbor_ids)
    n, k = neighbor_ids.shape
    rows = np.repeat(np.arange(n), k)
    c = sp.csr_matrix(
        (np.asarray(cond, dtype=np.float64).ravel(), (rows, neighbor_ids.ravel())),
        shape=(n_items, n_items),
    )
    p = ((c + c.T) / (2.0 * n_items)).tocsr()
    p.sum_duplicates()
    p.sort_indices()
    p.eliminate_zeros()
    return p


def affinities_from_graph(graph: NeighborGraph, perplexity):
    _, cond, _ = calibrate_rows(graph.dists, perplexity)
    return symmetrize(graph.ids, cond, graph.n_items)


def build_affinities(x, perplexity=50.0, backend="exact", seed=0, **knn_kwargs):
    """kNN search with k = floor(3u), per-row calibration, symmetrization."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    k = int(3 * perplexity)
    if k >= n:
        raise ValueError(
            f"perplexity {perplexity} needs {k} neighbors but only {n} items are available"
        )
    graph = knn_graph(x, k, backend=backend, seed=seed, **knn_kwargs)
    return affinities_from_graph(graph, perplexity)


def affinities_to_tsv(p, path):
    """Write the non-zero entries of ``p`` as ``i, j, p_ij`` rows."""
    coo = p.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i\tj\tp_ij\n")
        for a in order:
            fh.write(f"{coo.row[a]}\t{coo.col[a]}\t{float(coo.data[a])!r}\n")
