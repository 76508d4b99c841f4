"""Gradient descent on the KL objective in screen or unscaled coordinates.

In screen mode every update is followed by an affine per-axis rescale into
``[0, r_d)``. The Student-t kernel is then evaluated as
``1 / (1 + sum_d beta_d (z_id - z_jd)**2)`` where ``beta_d`` accumulates the
squared rescale factors, so q is the same as it would be on the never-rescaled
trajectory. Gradients keep the ``(z_i - z_j)`` form without a beta factor and
the velocity is rescaled with the coordinates; together these make a screen
run an affine image of the corresponding unscaled run.
"""

import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from numba import prange

from .quadtree import CRITERIA, DataQuadtree, PixelQuadtree, dense_repulsion

BACKENDS = ("exact", "data", "pixel")
DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """Raised when the optimization produces non-finite or runaway values."""


@dataclass
class OptimizerConfig:
    n_iter: int = 1000
    theta: float = 0.5
    criterion: str = "linear"
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iter: int = 250
    eps: float = 1e-6
    backend: str = "pixel"
    # None means: screen coordinates for the pixel backend, unscaled otherwise
    screen: bool | None = None
    resolution: tuple = (512, 512)
    seed: int = 0
    cost_every: int = 50
    min_gain: float = 0.01

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.screen is None:
            self.screen = self.backend == "pixel"
        if self.backend == "pixel" and not self.screen:
            raise ValueError("the pixel backend requires screen coordinates")
        r1, r2 = self.resolution
        if int(r1) != r1 or int(r2) != r2 or r1 < 2 or r2 < 2:
            raise ValueError(f"resolution must be two integers >= 2, got {self.resolution}")
        self.resolution = (int(r1), int(r2))
        if self.cost_every < 1:
            raise ValueError("cost_every must be >= 1")


@dataclass
class ScreenEmbedding:
    """Coordinates plus the per-axis kernel scale state.

    ``resolution`` is None for unscaled embeddings, whose ``beta`` stays 1.
    ``gamma`` is the span (plus eps) used by the most recent rescale.
    """

    z: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    resolution: tuple | None
    t: int = 1

    @property
    def n_items(self):
        return self.z.shape[0]


@dataclass
class GradientState:
    velocity: np.ndarray
    gains: np.ndarray
    attraction: np.ndarray | None = None
    repulsion: np.ndarray | None = None
    z_sum: float = float("nan")
    # raw updated coordinates of the last step, before rescale or recentering
    z_hat: np.ndarray | None = None


@dataclass
class CostTrace:
    """Cost checkpoints with phase timings (ms) accumulated since the previous row."""

    rows: list = field(default_factory=list)

    COLUMNS = ("iteration", "cost", "tree_ms", "attraction_ms", "repulsion_ms", "rescale_ms")

    def append(self, iteration, cost, phases):
        self.rows.append((iteration, cost, *(phases[k] for k in self.COLUMNS[2:])))

    @property
    def iterations(self):
        return [r[0] for r in self.rows]

    @property
    def costs(self):
        return [r[1] for r in self.rows]

    def __len__(self):
        return len(self.rows)

    def to_text(self):
        lines = ["\t".join(self.COLUMNS)]
        for it, cost, *ms in self.rows:
            lines.append(f"{it}\t{cost:.10g}\t" + "\t".join(f"{m:.3f}" for m in ms))
        return "\n".join(lines) + "\n"

    def to_tsv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


@dataclass
class RunResult:
    embedding: ScreenEmbedding
    trace: CostTrace
    state: GradientState
    elapsed: float


# --------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, parallel=True)
def _attraction(indptr, indices, data, z, beta_x, beta_y, scale, out):
    n = z.shape[0]
    for i in prange(n):
        fx = 0.0
        fy = 0.0
        zx = z[i, 0]
        zy = z[i, 1]
        for a in range(indptr[i], indptr[i + 1]):
            j = indices[a]
            dx = zx - z[j, 0]
            dy = zy - z[j, 1]
            w = data[a] / (1.0 + beta_x * dx * dx + beta_y * dy * dy)
            fx += w * dx
            fy += w * dy
        out[i, 0] = scale * fx
        out[i, 1] = scale * fy


@numba.njit(cache=True)
def _sparse_kl(indptr, indices, data, z, beta_x, beta_y, z_sum):
    n = z.shape[0]
    total = 0.0
    for i in range(n):
        for a in range(indptr[i], indptr[i + 1]):
            p = data[a]
            if p <= 0.0:
                continue
            j = indices[a]
            dx = z[i, 0] - z[j, 0]
            dy = z[i, 1] - z[j, 1]
            q = 1.0 / ((1.0 + beta_x * dx * dx + beta_y * dy * dy) * z_sum)
            total += p * np.log(p / q)
    return total


def _csr(p):
    p = sp.csr_matrix(p)
    return p.indptr.astype(np.int64), p.indices.astype(np.int64), p.data.astype(np.float64)


def attractive_forces(p, z, beta=(1.0, 1.0), scale=1.0):
    """``sum_j p_ij w_ij (z_i - z_j)`` over the stored entries of ``p``."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty_like(z)
    indptr, indices, data = _csr(p)
    _attraction(indptr, indices, data, z, float(beta[0]), float(beta[1]), float(scale), out)
    return out


def rescale(z_hat, resolution, eps=1e-6):
    """Map raw coordinates into ``[0, r_d)`` per axis.

    Returns the screen coordinates and the per-axis span ``gamma = max - min + eps``.
    The result is clipped just below ``r_d`` because ``span + eps`` can round to
    ``span`` for very wide spans.
    """
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if not np.all(np.isfinite(z_hat)):
        raise ValueError("non-finite coordinates")
    r = np.asarray(resolution, dtype=np.float64)
    lo = z_hat.min(axis=0)
    gamma = z_hat.max(axis=0) - lo + eps
    z = r * (z_hat - lo) / gamma
    np.minimum(z, np.nextafter(r, 0.0), out=z)
    return z, gamma


def update_beta(beta, gamma, resolution):
    """One step of the kernel-scale recurrence ``beta <- beta * (gamma / r)**2``."""
    ratio = np.asarray(gamma, dtype=np.float64) / np.asarray(resolution, dtype=np.float64)
    return np.asarray(beta, dtype=np.float64) * ratio * ratio


def init_embedding(n, resolution=(512, 512), seed=0, eps=1e-6, screen=True):
    """Draw i.i.d. standard normal coordinates; rescale them into the screen if asked.

    The initial rescale is the first factor of beta (base value 1), so the
    kernel on the screen coordinates equals the kernel on the raw draw.
    """
    if n < 2:
        raise ValueError("need at least 2 items")
    raw = np.random.default_rng(seed).standard_normal((n, 2))
    if not screen:
        return ScreenEmbedding(raw, np.ones(2), np.full(2, np.nan), None, 1)
    z, gamma = rescale(raw, resolution, eps)
    beta = update_beta(np.ones(2), gamma, resolution)
    return ScreenEmbedding(z, beta, gamma, tuple(resolution), 1)


def make_tree(cfg):
    if cfg.backend == "pixel":
        return PixelQuadtree(*cfg.resolution, eps=cfg.eps)
    return None


def repulsive_forces(z, beta, theta, backend, tree=None, criterion="linear"):
    """Repulsion sums via the requested backend; returns (result, tree_seconds)."""
    t0 = time.perf_counter()
    if backend == "pixel":
        tree.assign(z)
    elif backend == "data":
        tree = DataQuadtree(z)
    t1 = time.perf_counter()
    if backend == "exact":
        rep = dense_repulsion(z, beta)
    else:
        rep = tree.repulsion(theta, beta=beta, criterion=criterion)
    return rep, t1 - t0, time.perf_counter() - t1


def kl_gradient(p, z, beta=(1.0, 1.0), theta=0.0, backend="exact", tree=None,
                exaggeration=1.0, criterion="linear"):
    """``4 (F_attr - F_rep / Z)`` for every point."""
    rep, _, _ = repulsive_forces(z, beta, theta, backend, tree, criterion)
    attr = attractive_forces(p, z, beta, exaggeration)
    return 4.0 * (attr - rep.forces / rep.z)


def joint_q(z, beta=(1.0, 1.0)):
    """Dense low-dimensional joint probabilities (small N only)."""
    z = np.asarray(z, dtype=np.float64)
    diff = z[:, None, :] - z[None, :, :]
    w = 1.0 / (1.0 + (np.asarray(beta) * diff * diff).sum(-1))
    np.fill_diagonal(w, 0.0)
    return w / w.sum()


def kl_cost(p, z, beta=(1.0, 1.0), mode="exact", theta=0.5, tree=None, criterion="linear"):
    """KL(P || Q) over the stored entries of ``p``.

    ``mode="exact"`` computes the normalizer densely; ``mode="bh"`` takes it
    from a tree traversal (``tree`` may be a PixelQuadtree; otherwise a data
    tree is built).
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    if mode == "exact":
        z_sum = dense_repulsion(z, beta).z
    elif mode == "bh":
        if isinstance(tree, PixelQuadtree):
            tree.assign(z)
        else:
            tree = DataQuadtree(z)
        z_sum = tree.repulsion(theta, beta=beta, criterion=criterion).z
    else:
        raise ValueError(f"unknown cost mode {mode!r}")
    indptr, indices, data = _csr(p)
    return float(_sparse_kl(indptr, indices, data, z, float(beta[0]), float(beta[1]), z_sum))


# --------------------------------------------------------------------------
# iteration


def step(emb, state, p, cfg, tree=None, phases=None):
    """One iteration: forces, gains and momentum update, then rescale or recenter."""
    it = emb.t
    exaggeration = cfg.early_exaggeration if it <= cfg.exaggeration_iter else 1.0
    momentum = cfg.momentum if it <= cfg.momentum_switch_iter else cfg.final_momentum
    z = emb.z

    rep, t_tree, t_rep = repulsive_forces(
        z, emb.beta, cfg.theta, cfg.backend, tree, cfg.criterion
    )
    t0 = time.perf_counter()
    attr = attractive_forces(p, z, emb.beta, exaggeration)
    t_attr = time.perf_counter() - t0

    grad = 4.0 * (attr - rep.forces / rep.z)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(
            f"non-finite gradient at iteration {it} (learning rate {cfg.learning_rate})"
        )
    flip = np.sign(grad) != np.sign(state.velocity)
    state.gains = np.where(flip, state.gains + 0.2, state.gains * 0.8)
    np.maximum(state.gains, cfg.min_gain, out=state.gains)
    state.velocity = momentum * state.velocity - cfg.learning_rate * state.gains * grad
    z_hat = z + state.velocity
    if not np.all(np.abs(z_hat) <= DIVERGENCE_LIMIT):
        raise DivergenceError(
            f"coordinates exceeded {DIVERGENCE_LIMIT:g} at iteration {it} "
            f"(learning rate {cfg.learning_rate})"
        )

    t0 = time.perf_counter()
    if cfg.screen:
        z_new, gamma = rescale(z_hat, cfg.resolution, cfg.eps)
        emb.beta = update_beta(emb.beta, gamma, cfg.resolution)
        emb.gamma = gamma
        # the velocity is a displacement; express it in the new frame
        state.velocity = state.velocity * (np.asarray(cfg.resolution) / gamma)
    else:
        z_new = z_hat - z_hat.mean(axis=0)
    t_rescale = time.perf_counter() - t0

    emb.z = z_new
    emb.t = it + 1
    state.attraction = attr
    state.repulsion = rep.forces
    state.z_sum = rep.z
    state.z_hat = z_hat
    if phases is not None:
        phases["tree_ms"] += 1e3 * t_tree
        phases["repulsion_ms"] += 1e3 * t_rep
        phases["attraction_ms"] += 1e3 * t_attr
        phases["rescale_ms"] += 1e3 * t_rescale
    return emb


def _zero_phases():
    return dict.fromkeys(CostTrace.COLUMNS[2:], 0.0)


def _run_cost(p, emb, cfg, tree):
    if cfg.backend == "exact":
        return kl_cost(p, emb.z, emb.beta, mode="exact")
    return kl_cost(p, emb.z, emb.beta, mode="bh", theta=cfg.theta, tree=tree,
                   criterion=cfg.criterion)


def run(p, cfg, init=None, callback=None):
    """Optimize for ``cfg.n_iter`` iterations.

    Parameters
    ----------
    p : sparse matrix
        Symmetric joint probabilities summing to one.
    cfg : OptimizerConfig
    init : ScreenEmbedding, optional
        Starting state; drawn from ``cfg.seed`` when omitted.
    callback : callable, optional
        Called as ``callback(emb, state)`` after every iteration.

    Returns
    -------
    RunResult
        Cost is recorded before the first step, every ``cfg.cost_every``
        iterations, and after the last one.
    """
    p = sp.csr_matrix(p)
    n = p.shape[0]
    t_start = time.perf_counter()
    emb = init if init is not None else init_embedding(
        n, cfg.resolution, cfg.seed, cfg.eps, screen=cfg.screen
    )
    if emb.n_items != n:
        raise ValueError("embedding and affinities disagree on n_items")
    state = GradientState(np.zeros((n, 2)), np.ones((n, 2)))
    tree = make_tree(cfg)
    trace = CostTrace()
    phases = _zero_phases()
    trace.append(0, _run_cost(p, emb, cfg, tree), phases)
    for it in range(1, cfg.n_iter + 1):
        step(emb, state, p, cfg, tree, phases)
        if callback is not None:
            callback(emb, state)
        if it % cfg.cost_every == 0 or it == cfg.n_iter:
            trace.append(it, _run_cost(p, emb, cfg, tree), phases)
            phases = _zero_phases()
    return RunResult(emb, trace, state, time.perf_counter() - t_start)


def set_num_threads(n):
    """Threads used by the per-point force kernels."""
    n = int(n)
    if n < 1:
        raise ValueError("threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def pixel_depth(resolution):
    return max(int(math.log2(r)) for r in resolution)
