"""k-nearest-neighbor graphs over high-dimensional inputs.

Three backends share one output type:

* ``exact_knn``: blocked brute force (BLAS screening, exact re-ranking).
* ``vp_knn``: vantage-point tree search; exact, only the order of work differs.
* ``rp_knn``: random-projection forest followed by neighbor-of-neighbor
  refinement passes; approximate candidate sets, exact distances.

Distances are always ``sqrt(sum((a - b) ** 2))`` evaluated directly, and ties
are broken by the lower item index, so every backend ranks identically.
"""

from dataclasses import dataclass

import numba
import numpy as np

# Multiplicative slack on pruning bounds; covers rounding in triangle-inequality bounds.
_PRUNE_SLACK = 1e-9


@dataclass
class NeighborGraph:
    """k nearest neighbors per item, sorted by (distance, index)."""

    ids: np.ndarray
    dists: np.ndarray

    @property
    def k(self):
        return self.ids.shape[1]

    @property
    def n_items(self):
        return self.ids.shape[0]

    def to_tsv(self, path):
        """Write ``item_id, neighbor_id, distance`` rows."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("item_id\tneighbor_id\tdistance\n")
            for i in range(self.n_items):
                for j, d in zip(self.ids[i], self.dists[i]):
                    fh.write(f"{i}\t{j}\t{float(d)!r}\n")


def _check_k(x, k):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be a 2D array")
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= x.shape[0]:
        raise ValueError(f"k={k} must be smaller than n_items={x.shape[0]}")
    return x, k


def recall(approx, exact):
    """Fraction of true neighbors present in the approximate lists."""
    hits = 0
    for a, e in zip(approx.ids, exact.ids):
        hits += np.intersect1d(a, e, assume_unique=True).size
    return hits / exact.ids.size


# --------------------------------------------------------------------------
# shared numba helpers


@numba.njit(cache=True, inline="always")
def _dist(x, i, j):
    s = 0.0
    for d in range(x.shape[1]):
        t = x[i, d] - x[j, d]
        s += t * t
    return np.sqrt(s)


@numba.njit(cache=True, inline="always")
def _worse(da, ia, db, ib):
    return da > db or (da == db and ia > ib)


@numba.njit(cache=True)
def _heap_push(hd, hi, size, d, j):
    """Offer (d, j) to a bounded max-heap of capacity len(hd); returns new size."""
    cap = hd.shape[0]
    if size < cap:
        pos = size
        size += 1
    else:
        if not _worse(hd[0], hi[0], d, j):
            return size
        # replace root, sift down
        pos = 0
        while True:
            left = 2 * pos + 1
            if left >= size:
                break
            child = left
            right = left + 1
            if right < size and _worse(hd[right], hi[right], hd[left], hi[left]):
                child = right
            if _worse(hd[child], hi[child], d, j):
                hd[pos] = hd[child]
                hi[pos] = hi[child]
                pos = child
            else:
                break
        hd[pos] = d
        hi[pos] = j
        return size
    # sift up
    while pos > 0:
        parent = (pos - 1) >> 1
        if _worse(d, j, hd[parent], hi[parent]):
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hi[pos] = j
    return size


@numba.njit(cache=True)
def _heap_sorted(hd, hi, size, out_d, out_i):
    # insertion sort by (d, idx); size is k, small
    for a in range(size):
        out_d[a] = hd[a]
        out_i[a] = hi[a]
    for a in range(1, size):
        d = out_d[a]
        j = out_i[a]
        b = a - 1
        while b >= 0 and _worse(out_d[b], out_i[b], d, j):
            out_d[b + 1] = out_d[b]
            out_i[b + 1] = out_i[b]
            b -= 1
        out_d[b + 1] = d
        out_i[b + 1] = j


# --------------------------------------------------------------------------
# exact


@numba.njit(cache=True)
def _rank_candidates(x, rows, cand, k, out_ids, out_dists):
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    for r in range(rows.shape[0]):
        i = rows[r]
        size = 0
        for c in range(cand.shape[1]):
            j = cand[r, c]
            if j == i or j < 0:
                continue
            size = _heap_push(hd, hi, size, _dist(x, i, j), j)
        _heap_sorted(hd, hi, size, out_dists[i], out_ids[i])


@numba.njit(cache=True)
def _full_row(x, i, k, out_ids, out_dists):
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    size = 0
    for j in range(x.shape[0]):
        if j != i:
            size = _heap_push(hd, hi, size, _dist(x, i, j), j)
    _heap_sorted(hd, hi, size, out_dists[i], out_ids[i])


def exact_knn(x, k, block_size=512):
    """Exact k nearest neighbors (Euclidean), ties broken by lower index.

    Candidates are screened with a blocked Gram-matrix computation, then
    re-ranked with directly evaluated distances. A row whose screening margin
    cannot rule out a missed neighbor is recomputed by a full scan.
    """
    x, k = _check_k(x, k)
    n = x.shape[0]
    ids = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    m = min(n - 1, k + max(8, k // 2))
    scale = sq.max()
    for start in range(0, n, block_size):
        rows = np.arange(start, min(n, start + block_size))
        d2 = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        d2[np.arange(rows.size), rows] = np.inf
        if m < n - 1:
            cand = np.argpartition(d2, m - 1, axis=1)[:, :m]
            bound = np.take_along_axis(d2, cand, axis=1).max(axis=1)
        else:
            cand = np.broadcast_to(np.arange(n), (rows.size, n)).copy()
            bound = np.full(rows.size, np.inf)
        _rank_candidates(x, rows, cand, k, ids, dists)
        tol = 1e-9 * (sq[rows] + scale) + 1e-300
        unsafe = dists[rows, k - 1] ** 2 + 2.0 * tol >= bound
        for i in rows[unsafe]:
            _full_row(x, i, k, ids, dists)
    return NeighborGraph(ids, dists)


# --------------------------------------------------------------------------
# vantage-point tree


@numba.njit(cache=True)
def _vp_build(x, seed):
    n = x.shape[0]
    np.random.seed(seed)
    order = np.arange(n)
    item = np.empty(n, dtype=np.int64)
    radius = np.zeros(n)
    inside = np.full(n, -1, dtype=np.int64)
    outside = np.full(n, -1, dtype=np.int64)
    # stack of (lo, hi, node_id, parent, is_inside)
    st_lo = np.empty(n + 1, dtype=np.int64)
    st_hi = np.empty(n + 1, dtype=np.int64)
    st_parent = np.empty(n + 1, dtype=np.int64)
    st_side = np.empty(n + 1, dtype=np.int64)
    top = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_parent[0] = -1
    st_side[0] = 0
    top = 1
    n_nodes = 0
    dbuf = np.empty(n)
    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        parent = st_parent[top]
        side = st_side[top]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if side == 0:
                inside[parent] = node
            else:
                outside[parent] = node
        pick = lo + np.random.randint(0, hi - lo)
        tmp = order[lo]
        order[lo] = order[pick]
        order[pick] = tmp
        v = order[lo]
        item[node] = v
        if hi - lo == 1:
            continue
        m = hi - lo - 1
        seg = order[lo + 1 : hi]
        for a in range(m):
            dbuf[a] = _dist(x, v, seg[a])
        perm = np.argsort(dbuf[:m], kind="mergesort")
        r = dbuf[perm[(m - 1) // 2]]
        sorted_seg = seg[perm].copy()
        sorted_d = dbuf[:m][perm].copy()
        n_in = 0
        while n_in < m and sorted_d[n_in] <= r:
            n_in += 1
        for a in range(m):
            order[lo + 1 + a] = sorted_seg[a]
        radius[node] = r
        if n_in < m:
            st_lo[top] = lo + 1 + n_in
            st_hi[top] = hi
            st_parent[top] = node
            st_side[top] = 1
            top += 1
        if n_in > 0:
            st_lo[top] = lo + 1
            st_hi[top] = lo + 1 + n_in
            st_parent[top] = node
            st_side[top] = 0
            top += 1
    return item, radius, inside, outside


@numba.njit(cache=True)
def _vp_search(x, item, radius, inside, outside, k, out_ids, out_dists):
    n = x.shape[0]
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    st_node = np.empty(2 * n + 2, dtype=np.int64)
    st_bound = np.empty(2 * n + 2)
    for q in range(n):
        size = 0
        tau = np.inf
        top = 1
        st_node[0] = 0
        st_bound[0] = 0.0
        while top > 0:
            top -= 1
            node = st_node[top]
            if st_bound[top] > tau * (1.0 + _PRUNE_SLACK):
                continue
            v = item[node]
            dqv = _dist(x, q, v)
            if v != q:
                size = _heap_push(hd, hi, size, dqv, v)
                if size == k:
                    tau = hd[0]
            r = radius[node]
            cin = inside[node]
            cout = outside[node]
            b_in = max(dqv - r, 0.0)
            b_out = max(r - dqv, 0.0)
            # push the farther side first so the nearer one is expanded first
            if dqv <= r:
                if cout >= 0:
                    st_node[top] = cout
                    st_bound[top] = b_out
                    top += 1
                if cin >= 0:
                    st_node[top] = cin
                    st_bound[top] = b_in
                    top += 1
            else:
                if cin >= 0:
                    st_node[top] = cin
                    st_bound[top] = b_in
                    top += 1
                if cout >= 0:
                    st_node[top] = cout
                    st_bound[top] = b_out
                    top += 1
        _heap_sorted(hd, hi, size, out_dists[q], out_ids[q])


class VantagePointTree:
    """Vantage-point tree over the rows of ``x``.

    Each node holds one vantage item; its inside child holds items within
    ``radius`` (the median distance to the vantage), the outside child the rest.
    """

    def __init__(self, x, seed=0):
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.item, self.radius, self.inside, self.outside = _vp_build(self.x, int(seed))

    def query_self(self, k):
        n = self.x.shape[0]
        ids = np.empty((n, k), dtype=np.int64)
        dists = np.empty((n, k))
        _vp_search(self.x, self.item, self.radius, self.inside, self.outside, k, ids, dists)
        return NeighborGraph(ids, dists)


def vp_knn(x, k, seed=0):
    """Exact kNN graph via a vantage-point tree (vantage picked uniformly at random)."""
    x, k = _check_k(x, k)
    return VantagePointTree(x, seed).query_self(k)


# --------------------------------------------------------------------------
# random-projection forest + neighbor-of-neighbor refinement


@numba.njit(cache=True)
def _rp_tree_leaves(x, leaf_max, point_leaf, members, leaf_start):
    """Grow one tree; fill leaf membership in CSR form. Returns leaf count."""
    n, dim = x.shape
    order = np.arange(n)
    st_lo = np.empty(n + 1, dtype=np.int64)
    st_hi = np.empty(n + 1, dtype=np.int64)
    st_lo[0] = 0
    st_hi[0] = n
    top = 1
    n_leaves = 0
    filled = 0
    proj = np.empty(n)
    direction = np.empty(dim)
    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        size = hi - lo
        if size <= leaf_max:
            leaf_start[n_leaves] = filled
            for a in range(lo, hi):
                members[filled] = order[a]
                point_leaf[order[a]] = n_leaves
                filled += 1
            n_leaves += 1
            leaf_start[n_leaves] = filled
            continue
        norm = 0.0
        for d in range(dim):
            direction[d] = np.random.standard_normal()
            norm += direction[d] * direction[d]
        norm = np.sqrt(norm)
        for d in range(dim):
            direction[d] /= norm
        for a in range(size):
            p = order[lo + a]
            s = 0.0
            for d in range(dim):
                s += x[p, d] * direction[d]
            proj[a] = s
        perm = np.argsort(proj[:size], kind="mergesort")
        seg = order[lo:hi][perm].copy()
        for a in range(size):
            order[lo + a] = seg[a]
        mid = lo + size // 2
        st_lo[top] = lo
        st_hi[top] = mid
        top += 1
        st_lo[top] = mid
        st_hi[top] = hi
        top += 1
    return n_leaves


@numba.njit(cache=True)
def _rp_forest(x, num_trees, leaf_max, seed):
    n = x.shape[0]
    np.random.seed(seed)
    point_leaf = np.empty((num_trees, n), dtype=np.int64)
    members = np.empty((num_trees, n), dtype=np.int64)
    leaf_start = np.empty((num_trees, n + 1), dtype=np.int64)
    for t in range(num_trees):
        _rp_tree_leaves(x, leaf_max, point_leaf[t], members[t], leaf_start[t])
    return point_leaf, members, leaf_start


@numba.njit(cache=True)
def _rp_initial(x, k, point_leaf, members, leaf_start, out_ids, out_dists, seed):
    n = x.shape[0]
    num_trees = point_leaf.shape[0]
    stamp = np.full(n, -1, dtype=np.int64)
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    np.random.seed(seed + 7919)
    for i in range(n):
        size = 0
        stamp[i] = i
        for t in range(num_trees):
            leaf = point_leaf[t, i]
            for a in range(leaf_start[t, leaf], leaf_start[t, leaf + 1]):
                j = members[t, a]
                if stamp[j] != i:
                    stamp[j] = i
                    size = _heap_push(hd, hi, size, _dist(x, i, j), j)
        while size < k:
            j = np.random.randint(0, n)
            if stamp[j] != i:
                stamp[j] = i
                size = _heap_push(hd, hi, size, _dist(x, i, j), j)
        _heap_sorted(hd, hi, size, out_dists[i], out_ids[i])


@numba.njit(cache=True)
def _refine_pass(x, ids, dists, new_ids, new_dists):
    n, k = ids.shape
    stamp = np.full(n, -1, dtype=np.int64)
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    for i in range(n):
        size = 0
        stamp[i] = i
        for a in range(k):
            j = ids[i, a]
            if stamp[j] != i:
                stamp[j] = i
                size = _heap_push(hd, hi, size, dists[i, a], j)
        for a in range(k):
            j = ids[i, a]
            for b in range(k):
                m = ids[j, b]
                if stamp[m] != i:
                    stamp[m] = i
                    d = _dist(x, i, m)
                    if size < k or not _worse(d, m, hd[0], hi[0]):
                        size = _heap_push(hd, hi, size, d, m)
        _heap_sorted(hd, hi, size, new_dists[i], new_ids[i])


def rp_knn(x, k, num_trees=10, refine_iters=3, seed=0, leaf_max=None):
    """Approximate kNN graph: random-projection forest plus neighbor exploring.

    Each tree splits on a random unit direction at the projected median until
    leaves hold at most ``leaf_max`` items (default ``2 * k``). Items sharing a
    leaf in any tree become candidates; each refinement pass then offers every
    item the neighbors of its current neighbors.
    """
    x, k = _check_k(x, k)
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    if refine_iters < 0:
        raise ValueError("refine_iters must be >= 0")
    leaf_max = 2 * k if leaf_max is None else int(leaf_max)
    if leaf_max < 1:
        raise ValueError("leaf_max must be >= 1")
    n = x.shape[0]
    point_leaf, members, leaf_start = _rp_forest(x, int(num_trees), leaf_max, int(seed))
    ids = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    _rp_initial(x, k, point_leaf, members, leaf_start, ids, dists, int(seed))
    for _ in range(refine_iters):
        new_ids = np.empty_like(ids)
        new_dists = np.empty_like(dists)
        _refine_pass(x, ids, dists, new_ids, new_dists)
        ids, dists = new_ids, new_dists
    return NeighborGraph(ids, dists)


def knn_graph(x, k, backend="exact", seed=0, **kwargs):
    """Dispatch to one of the kNN backends by name."""
    if backend == "exact":
        return exact_knn(x, k)
    if backend == "vp":
        return vp_knn(x, k, seed=seed)
    if backend == "rp":
        return rp_knn(x, k, seed=seed, **kwargs)
    raise ValueError(f"unknown knn backend {backend!r}")
