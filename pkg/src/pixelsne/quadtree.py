"""Quadtrees for Barnes-Hut repulsion in 2D.

``DataQuadtree`` is rebuilt from the current coordinates: the root spans the
data bounding box (upper edge padded by a small epsilon) and cells split until
each leaf holds at most one point. ``PixelQuadtree`` is a static lattice over
the screen ``[0, r1 + eps) x [0, r2 + eps)`` whose smallest cells are one
pixel; it is built once and each iteration only re-assigns points to it.
Cell centers of a pixel tree are geometric centers, except that a leaf holding
a single point uses that point.

Both trees answer the same query: for every point i, the pre-normalization
repulsion ``sum_j w_ij**2 (z_i - z_j)`` and the kernel sum ``sum_j w_ij`` with
``w_ij = 1 / (1 + sum_d beta_d (z_id - z_jd)**2)``. A cell c is summarized by
its center when ``diag_c / ||z_i - center_c||**2 < theta`` (or, with
``criterion="linear"``, ``diag_c / ||z_i - center_c|| < theta``) and it does not
contain i. Lengths in the test are measured in the kernel metric
``sqrt(sum_d beta_d dz_d**2)``, so the same cells open whether a configuration
is stored in screen units or unscaled.

The data tree runs this test per point. The pixel tree runs it once per block
of the lattice, at the block's nearest point, which is at least as strict for
every point in the block; the block's points then share one interaction list.

Child quadrant order is SW, SE, NW, NE, i.e. ``(y_high << 1) | x_high``.
"""

from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

DATA_MAX_DEPTH = 48
MAX_PIXEL_DEPTH = 12
PIXEL_EPS = 1e-6
_CHUNK = 256
GROUP_SIZE = 32
CRITERIA = ("squared", "linear")


@numba.njit(cache=True, inline="always")
def _summarize(diag, d2, theta, squared):
    if squared:
        return diag < theta * d2
    return diag * diag < theta * theta * d2


def _kernel_diag(widths, beta):
    # cell diagonals measured in the kernel metric, like the distances they are compared to
    b = np.asarray(beta, dtype=np.float64)
    return np.sqrt((widths * widths * b).sum(axis=1))


def _criterion_flag(criterion):
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    return criterion == "squared"


@numba.njit(cache=True)
def _spread_bits(v):
    v &= 0xFFFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


@numba.njit(cache=True)
def _morton_keys(pts, idx, x0, y0, sx, sy):
    keys = np.empty(idx.shape[0], dtype=np.int64)
    for a in range(idx.shape[0]):
        gx = np.int64((pts[idx[a], 0] - x0) * sx)
        gy = np.int64((pts[idx[a], 1] - y0) * sy)
        keys[a] = _spread_bits(gx) | (_spread_bits(gy) << 1)
    return keys


def query_order(pts, idx, lo, hi):
    """Positions in ``idx`` sorted along a Z-order curve.

    Nearby query points walk nearly the same cells, so visiting them
    consecutively keeps the tree arrays in cache.
    """
    span = np.maximum(np.asarray(hi, dtype=np.float64) - lo, 1e-300)
    scale = (2.0 ** 20 - 1) / span
    keys = _morton_keys(pts, idx, float(lo[0]), float(lo[1]), float(scale[0]), float(scale[1]))
    return np.argsort(keys, kind="stable")


@dataclass
class RepulsionResult:
    """Per-point repulsion sums before division by the kernel total."""

    forces: np.ndarray
    z_terms: np.ndarray
    visits: np.ndarray

    @property
    def z(self):
        return float(self.z_terms.sum())


# --------------------------------------------------------------------------
# data-driven tree


@numba.njit(cache=True)
def _dtree_build(pts, eps_x, eps_y, max_depth, cap):
    n = pts.shape[0]
    bounds = np.empty((cap, 4))  # xmin, ymin, xmax, ymax
    count = np.zeros(cap, dtype=np.int64)
    sums = np.zeros((cap, 2))
    child = np.full(cap, -1, dtype=np.int64)
    head = np.full(cap, -1, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    xmin = pts[0, 0]
    xmax = pts[0, 0]
    ymin = pts[0, 1]
    ymax = pts[0, 1]
    for i in range(1, n):
        xmin = min(xmin, pts[i, 0])
        xmax = max(xmax, pts[i, 0])
        ymin = min(ymin, pts[i, 1])
        ymax = max(ymax, pts[i, 1])
    bounds[0, 0] = xmin
    bounds[0, 1] = ymin
    bounds[0, 2] = xmax + eps_x
    bounds[0, 3] = ymax + eps_y
    n_nodes = 1
    for p in range(n):
        px = pts[p, 0]
        py = pts[p, 1]
        node = 0
        while True:
            count[node] += 1
            sums[node, 0] += px
            sums[node, 1] += py
            if child[node] < 0:
                if count[node] == 1:
                    head[node] = p
                    nxt[p] = -1
                    break
                if depth[node] >= max_depth:
                    nxt[p] = head[node]
                    head[node] = p
                    break
                if n_nodes + 4 > cap:
                    return -1, bounds, count, sums, child, head, depth, nxt
                x0 = bounds[node, 0]
                y0 = bounds[node, 1]
                x1 = bounds[node, 2]
                y1 = bounds[node, 3]
                mx = 0.5 * (x0 + x1)
                my = 0.5 * (y0 + y1)
                first = n_nodes
                n_nodes += 4
                for q in range(4):
                    c = first + q
                    depth[c] = depth[node] + 1
                    if q & 1:
                        bounds[c, 0] = mx
                        bounds[c, 2] = x1
                    else:
                        bounds[c, 0] = x0
                        bounds[c, 2] = mx
                    if q & 2:
                        bounds[c, 1] = my
                        bounds[c, 3] = y1
                    else:
                        bounds[c, 1] = y0
                        bounds[c, 3] = my
                child[node] = first
                # push the resident point one level down
                q0 = head[node]
                head[node] = -1
                qx = pts[q0, 0]
                qy = pts[q0, 1]
                c = first + (1 if qx >= mx else 0) + (2 if qy >= my else 0)
                count[c] = 1
                sums[c, 0] = qx
                sums[c, 1] = qy
                head[c] = q0
                nxt[q0] = -1
                node = first + (1 if px >= mx else 0) + (2 if py >= my else 0)
            else:
                f = child[node]
                mx = bounds[f + 1, 0]
                my = bounds[f + 2, 1]
                node = f + (1 if px >= mx else 0) + (2 if py >= my else 0)
    return n_nodes, bounds, count, sums, child, head, depth, nxt


@numba.njit(cache=True, parallel=True)
def _dtree_repulsion(pts, bounds, count, com, child, head, nxt, diag,
                     beta_x, beta_y, theta, squared, idx, order, forces, zterms, visits):
    m = idx.shape[0]
    n_chunks = (m + _CHUNK - 1) // _CHUNK
    for ch in prange(n_chunks):
        stack = np.empty(4 * DATA_MAX_DEPTH + 8, dtype=np.int64)
        for b in range(ch * _CHUNK, min(m, (ch + 1) * _CHUNK)):
            a = order[b]
            i = idx[a]
            zx = pts[i, 0]
            zy = pts[i, 1]
            fx = 0.0
            fy = 0.0
            zs = 0.0
            nv = 0
            top = 1
            stack[0] = 0
            while top > 0:
                top -= 1
                node = stack[top]
                c = count[node]
                if c == 0:
                    continue
                nv += 1
                if child[node] < 0:
                    j = head[node]
                    while j >= 0:
                        if j != i:
                            dx = zx - pts[j, 0]
                            dy = zy - pts[j, 1]
                            w = 1.0 / (1.0 + beta_x * dx * dx + beta_y * dy * dy)
                            zs += w
                            w2 = w * w
                            fx += w2 * dx
                            fy += w2 * dy
                        j = nxt[j]
                    continue
                dx = zx - com[node, 0]
                dy = zy - com[node, 1]
                d2 = beta_x * dx * dx + beta_y * dy * dy
                inside = (bounds[node, 0] <= zx < bounds[node, 2]
                          and bounds[node, 1] <= zy < bounds[node, 3])
                if not inside and _summarize(diag[node], d2, theta, squared):
                    w = 1.0 / (1.0 + beta_x * dx * dx + beta_y * dy * dy)
                    zs += c * w
                    w2 = c * w * w
                    fx += w2 * dx
                    fy += w2 * dy
                else:
                    f = child[node]
                    for q in range(4):
                        stack[top] = f + q
                        top += 1
            forces[a, 0] = fx
            forces[a, 1] = fy
            zterms[a] = zs
            visits[a] = nv


class DataQuadtree:
    """Quadtree rebuilt from scratch for a set of 2D points.

    Node arrays are flat: ``bounds[c] = (xmin, ymin, xmax, ymax)``, ``count``,
    ``com`` (center of mass), ``child`` (index of the first of four children or
    -1), and leaf member lists threaded through ``head``/``next_member``.
    """

    def __init__(self, points, eps=1e-6, max_depth=DATA_MAX_DEPTH):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError("points must have shape (n >= 1, 2)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinate")
        self.points = pts
        span = pts.max(axis=0) - pts.min(axis=0)
        pad = np.where(span > 0, eps * span, eps)
        cap = 8 * pts.shape[0] + 64
        while True:
            out = _dtree_build(pts, pad[0], pad[1], max_depth, cap)
            if out[0] >= 0:
                break
            cap *= 4
        n_nodes = out[0]
        self.bounds = out[1][:n_nodes]
        self.count = out[2][:n_nodes]
        sums = out[3][:n_nodes]
        self.child = out[4][:n_nodes]
        self.head = out[5][:n_nodes]
        self.depth = out[6][:n_nodes]
        self.next_member = out[7]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.com = np.where(self.count[:, None] > 0, sums / self.count[:, None], 0.0)
        self.widths = self.bounds[:, 2:] - self.bounds[:, :2]
        self.diag = np.sqrt((self.widths ** 2).sum(axis=1))

    @property
    def n_nodes(self):
        return self.count.shape[0]

    @property
    def max_depth(self):
        return int(self.depth[self.count > 0].max())

    def is_leaf(self, node):
        return self.child[node] < 0

    def members(self, node):
        """Point indices stored in a leaf (empty for internal nodes)."""
        out = []
        j = self.head[node]
        while j >= 0:
            out.append(int(j))
            j = self.next_member[j]
        return out

    def subtree_members(self, node):
        stack, out = [node], []
        while stack:
            c = stack.pop()
            if self.child[c] < 0:
                out.extend(self.members(c))
            else:
                stack.extend(range(self.child[c], self.child[c] + 4))
        return out

    def repulsion(self, theta, beta=(1.0, 1.0), index=None, criterion="linear"):
        idx = np.arange(self.points.shape[0]) if index is None else np.atleast_1d(index)
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        forces = np.empty((idx.size, 2))
        zterms = np.empty(idx.size)
        visits = np.empty(idx.size, dtype=np.int64)
        _dtree_repulsion(self.points, self.bounds, self.count, self.com, self.child,
                         self.head, self.next_member, _kernel_diag(self.widths, beta),
                         float(beta[0]),
                         float(beta[1]), float(theta), _criterion_flag(criterion), idx,
                         query_order(self.points, idx, self.bounds[0, :2], self.bounds[0, 2:]),
                         forces, zterms, visits)
        return RepulsionResult(forces, zterms, visits)


def build_data_tree(points, eps=1e-6):
    """Build a :class:`DataQuadtree`; ``eps`` is relative to the per-axis range."""
    return DataQuadtree(points, eps=eps)


# --------------------------------------------------------------------------
# pixel-aligned tree


@numba.njit(cache=True)
def _ptree_clear(count, head, pix, piy, n_assigned, depth):
    for i in range(n_assigned):
        ix = pix[i]
        iy = piy[i]
        off = 0
        for k in range(depth + 1):
            s = depth - k
            count[off + ((iy >> s) << k) + (ix >> s)] = 0
            off += 1 << (k << 1)
        head[((iy << depth) + ix)] = -1


@numba.njit(cache=True)
def _ptree_assign(z, scale_x, scale_y, depth, count, head, nxt, pix, piy):
    n = z.shape[0]
    for i in range(n):
        ix = np.int64(z[i, 0] * scale_x)
        iy = np.int64(z[i, 1] * scale_y)
        pix[i] = ix
        piy[i] = iy
        off = 0
        for k in range(depth + 1):
            s = depth - k
            count[off + ((iy >> s) << k) + (ix >> s)] += 1
            off += 1 << (k << 1)
        leaf = (iy << depth) + ix
        nxt[i] = head[leaf]
        head[leaf] = i


@numba.njit(cache=True)
def _grow(ex, ey, ec, el):
    cap = 2 * ex.shape[0]
    ex2 = np.empty(cap)
    ey2 = np.empty(cap)
    ec2 = np.empty(cap)
    el2 = np.empty(cap, dtype=np.int64)
    m = ex.shape[0]
    ex2[:m] = ex
    ey2[:m] = ey
    ec2[:m] = ec
    el2[:m] = el
    return ex2, ey2, ec2, el2


@numba.njit(cache=True, parallel=True)
def _ptree_repulsion(z, depth, g, count, head, pix, piy, centers_x, centers_y, half_x, half_y,
                     level_diag, beta_x, beta_y, theta, squared, idx, order, gstart,
                     forces, zterms, visits):
    # One traversal per group block at level g. A cell is summarized when the
    # test holds at the block's nearest point, so it holds for every member.
    # The traversal emits (position, count, leaf) entries that each member
    # then sums in a flat loop; leaf is -1 for summarized coarse cells.
    n_groups = gstart.shape[0] - 1
    for gi in prange(n_groups):
        st_k = np.empty(4 * MAX_PIXEL_DEPTH + 8, dtype=np.int64)
        st_x = np.empty(4 * MAX_PIXEL_DEPTH + 8, dtype=np.int64)
        st_y = np.empty(4 * MAX_PIXEL_DEPTH + 8, dtype=np.int64)
        ex = np.empty(1024)
        ey = np.empty(1024)
        ec = np.empty(1024)
        el = np.empty(1024, dtype=np.int64)
        ne = 0
        i0 = idx[order[gstart[gi]]]
        gx = pix[i0] >> (depth - g)
        gy = piy[i0] >> (depth - g)
        gcx = centers_x[(1 << g) - 1 + gx]
        gcy = centers_y[(1 << g) - 1 + gy]
        top = 1
        st_k[0] = 0
        st_x[0] = 0
        st_y[0] = 0
        while top > 0:
            top -= 1
            k = st_k[top]
            cx = st_x[top]
            cy = st_y[top]
            c = count[((1 << (k << 1)) - 1) // 3 + (cy << k) + cx]
            if c == 0:
                continue
            # cells overlapping the block are always opened
            if k <= g:
                near = (gx >> (g - k)) == cx and (gy >> (g - k)) == cy
            else:
                near = (cx >> (k - g)) == gx and (cy >> (k - g)) == gy
            px = centers_x[(1 << k) - 1 + cx]
            py = centers_y[(1 << k) - 1 + cy]
            if not near:
                dx = max(abs(px - gcx) - half_x, 0.0)
                dy = max(abs(py - gcy) - half_y, 0.0)
                near = not _summarize(level_diag[k], beta_x * dx * dx + beta_y * dy * dy,
                                      theta, squared)
            if near and k < depth:
                for q in range(4):
                    st_k[top] = k + 1
                    st_x[top] = (cx << 1) + (q & 0x0001)
                    st_y[top] = (cy << 1) + (q >> 1)
                    top += 1
                continue
            if ne == ex.shape[0]:
                ex, ey, ec, el = _grow(ex, ey, ec, el)
            el[ne] = -1
            if k == depth:
                # pixel-sized leaf: a lone point is used as is, a shared
                # pixel through its center
                el[ne] = (cy << depth) + cx
                if c == 1:
                    j = head[el[ne]]
                    px = z[j, 0]
                    py = z[j, 1]
            ex[ne] = px
            ey[ne] = py
            ec[ne] = c
            ne += 1
        for b in range(gstart[gi], gstart[gi + 1]):
            a = order[b]
            i = idx[a]
            zx = z[i, 0]
            zy = z[i, 1]
            own = (piy[i] << depth) + pix[i]
            fx = 0.0
            fy = 0.0
            zs = 0.0
            for e in range(ne):
                c = ec[e]
                if el[e] == own:
                    c -= 1.0
                    if c == 0.0:
                        continue
                dx = zx - ex[e]
                dy = zy - ey[e]
                w = 1.0 / (1.0 + beta_x * dx * dx + beta_y * dy * dy)
                zs += c * w
                w2 = c * w * w
                fx += w2 * dx
                fy += w2 * dy
            forces[a, 0] = fx
            forces[a, 1] = fy
            zterms[a] = zs
            visits[a] = ne


def pixel_tree_depth(r1, r2):
    """Depth bound max_d floor(log2 r_d)."""
    return max(int(r1).bit_length() - 1, int(r2).bit_length() - 1)


class PixelQuadtree:
    """Static pixel-aligned quadtree over ``[0, r1 + eps) x [0, r2 + eps)``.

    All cells down to depth ``max_d floor(log2 r_d)`` exist. Cell geometry
    (widths, diagonals, centers) is fixed at construction; only occupancy
    counts and leaf member lists change when points are assigned. Cells are
    addressed as ``(level, ix, iy)``; per-level arrays are laid out row-major
    with level ``k`` starting at offset ``(4**k - 1) / 3``.
    """

    def __init__(self, r1, r2, eps=PIXEL_EPS):
        if int(r1) != r1 or int(r2) != r2:
            raise ValueError("resolutions must be integers")
        r1, r2 = int(r1), int(r2)
        if r1 < 2 or r2 < 2:
            raise ValueError(f"resolutions must be >= 2, got {r1}x{r2}")
        if eps <= 0:
            raise ValueError("eps must be positive")
        depth = pixel_tree_depth(r1, r2)
        if depth > MAX_PIXEL_DEPTH:
            raise ValueError(
                f"resolution {r1}x{r2} needs depth {depth} > supported {MAX_PIXEL_DEPTH}"
            )
        self.resolution = (r1, r2)
        self.eps = float(eps)
        self.depth = depth
        extent = np.array([r1 + eps, r2 + eps])
        levels = np.arange(depth + 1)
        self.level_width = extent[None, :] / (2.0 ** levels)[:, None]
        self.level_diag = np.sqrt((self.level_width ** 2).sum(axis=1))
        # centers[(1 << k) - 1 + i] is the center of column/row i at level k
        cx, cy = [], []
        for k in levels:
            cells = np.arange(1 << k)
            cx.append((cells + 0.5) * self.level_width[k, 0])
            cy.append((cells + 0.5) * self.level_width[k, 1])
        self.centers_x = np.concatenate(cx)
        self.centers_y = np.concatenate(cy)
        # z * scale gives the leaf column/row; a multiply, not a divide, per point
        self.scale = (1 << depth) / extent
        n_cells = ((1 << (2 * (depth + 1))) - 1) // 3
        self.count = np.zeros(n_cells, dtype=np.int32)
        self.head = np.full(1 << (2 * depth), -1, dtype=np.int64)
        self._pix = np.zeros(0, dtype=np.int64)
        self._piy = np.zeros(0, dtype=np.int64)
        self._next = np.zeros(0, dtype=np.int64)
        self._z = None

    @property
    def n_cells(self):
        return self.count.size

    @staticmethod
    def level_offset(k):
        return ((1 << (2 * k)) - 1) // 3

    def cell_bounds(self, level, ix, iy):
        """((xmin, xmax), (ymin, ymax)) of a cell."""
        w = self.level_width[level]
        return (ix * w[0], (ix + 1) * w[0]), (iy * w[1], (iy + 1) * w[1])

    def cell_center(self, level, ix, iy):
        k = (1 << level) - 1
        return self.centers_x[k + ix], self.centers_y[k + iy]

    def occupancy(self, level):
        """Counts at one level as an array indexed ``[iy, ix]``."""
        off = self.level_offset(level)
        side = 1 << level
        return self.count[off:off + side * side].reshape(side, side)

    def leaf_members(self, ix, iy):
        out = []
        j = self.head[(iy << self.depth) + ix]
        while j >= 0:
            out.append(int(j))
            j = self._next[j]
        return out

    def clear(self):
        if self._pix.size:
            _ptree_clear(self.count, self.head, self._pix, self._piy, self._pix.size, self.depth)
        self._pix = self._pix[:0]
        self._piy = self._piy[:0]
        self._z = None

    def assign(self, z):
        """Clear previous occupancy, then record every point along its root-to-leaf path."""
        z = np.ascontiguousarray(z, dtype=np.float64)
        r = np.asarray(self.resolution, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != 2:
            raise ValueError("z must have shape (n, 2)")
        bad = ~((z >= 0.0) & (z < r)).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(
                f"point {i} at {tuple(z[i])} lies outside the screen [0, {r[0]:g}) x [0, {r[1]:g})"
            )
        self.clear()
        n = z.shape[0]
        if self._next.size != n:
            self._next = np.empty(n, dtype=np.int64)
        self._pix = np.empty(n, dtype=np.int64)
        self._piy = np.empty(n, dtype=np.int64)
        _ptree_assign(z, self.scale[0], self.scale[1], self.depth, self.count,
                      self.head, self._next, self._pix, self._piy)
        self._z = z
        return self

    def repulsion(self, theta, beta=(1.0, 1.0), index=None, criterion="linear"):
        if self._z is None:
            raise RuntimeError("assign points before querying repulsion")
        z = self._z
        idx = np.arange(z.shape[0]) if index is None else np.atleast_1d(index)
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        g = self.group_level()
        # Z-order over leaf pixels makes every group block a contiguous run
        keys = _morton_keys(z, idx, 0.0, 0.0, float(self.scale[0]), float(self.scale[1]))
        order = np.argsort(keys, kind="stable")
        block = keys[order] >> (2 * (self.depth - g))
        gstart = np.concatenate(([0], np.flatnonzero(np.diff(block)) + 1, [idx.size]))
        forces = np.empty((idx.size, 2))
        zterms = np.empty(idx.size)
        visits = np.empty(idx.size, dtype=np.int64)
        _ptree_repulsion(z, self.depth, g, self.count, self.head, self._pix, self._piy,
                         self.centers_x, self.centers_y,
                         0.5 * self.level_width[g, 0], 0.5 * self.level_width[g, 1],
                         _kernel_diag(self.level_width, beta),
                         float(beta[0]), float(beta[1]), float(theta),
                         _criterion_flag(criterion), idx, order.astype(np.int64),
                         gstart.astype(np.int64), forces, zterms, visits)
        return RepulsionResult(forces, zterms, visits)

    def group_level(self):
        """Deepest level whose occupied cells hold ``GROUP_SIZE`` points on average.

        Points in one cell of this level share a traversal.
        """
        n = self._pix.size
        for k in range(self.depth, 0, -1):
            if n >= GROUP_SIZE * np.count_nonzero(self.occupancy(k)):
                return k
        return 0


def build_pixel_tree(r1, r2, eps=PIXEL_EPS):
    return PixelQuadtree(r1, r2, eps)


def assign_points(tree, z):
    return tree.assign(z)


def repulsion(tree, theta, beta=(1.0, 1.0), index=None, criterion="linear"):
    """Barnes-Hut repulsion for the points currently held by ``tree``."""
    return tree.repulsion(theta, beta=beta, index=index, criterion=criterion)


# --------------------------------------------------------------------------
# dense reference


@numba.njit(cache=True)
def _dense_repulsion(z, beta_x, beta_y, forces, zterms):
    n = z.shape[0]
    for i in range(n):
        fx = 0.0
        fy = 0.0
        zs = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = z[i, 0] - z[j, 0]
            dy = z[i, 1] - z[j, 1]
            w = 1.0 / (1.0 + beta_x * dx * dx + beta_y * dy * dy)
            zs += w
            w2 = w * w
            fx += w2 * dx
            fy += w2 * dy
        forces[i, 0] = fx
        forces[i, 1] = fy
        zterms[i] = zs


def dense_repulsion(z, beta=(1.0, 1.0)):
    """O(N^2) repulsion sums; the reference the trees approximate."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    n = z.shape[0]
    forces = np.empty((n, 2))
    zterms = np.empty(n)
    _dense_repulsion(z, float(beta[0]), float(beta[1]), forces, zterms)
    return RepulsionResult(forces, zterms, np.full(n, n - 1, dtype=np.int64))


def tree_stats_tsv(tree, path):
    """Dump depth histogram, node count and occupancy distribution."""
    if isinstance(tree, DataQuadtree):
        occupied = tree.count > 0
        depths = tree.depth[occupied]
        leaf_counts = tree.count[occupied & (tree.child < 0)]
        n_nodes = tree.n_nodes
    else:
        depths, leaf_counts = [], tree.occupancy(tree.depth).ravel()
        for k in range(tree.depth + 1):
            occ = tree.occupancy(k)
            depths.append(np.full(int((occ > 0).sum()), k))
        depths = np.concatenate(depths)
        leaf_counts = leaf_counts[leaf_counts > 0]
        n_nodes = tree.n_cells
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("section\tkey\tvalue\n")
        fh.write(f"summary\tnode_count\t{n_nodes}\n")
        fh.write(f"summary\toccupied_nodes\t{depths.size}\n")
        for d, c in zip(*np.unique(depths, return_counts=True)):
            fh.write(f"depth_histogram\t{d}\t{c}\n")
        for occ, c in zip(*np.unique(leaf_counts, return_counts=True)):
            fh.write(f"leaf_occupancy\t{occ}\t{c}\n")
