"""Loading, validating and pre-reducing input matrices.

Text formats hold one item per row. The binary format is::

    b"PSNE" | version byte 0x01 | uint32 LE N | uint32 LE D | N*D float32 LE, row-major
"""

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PSNE"
VERSION = 1
_HEADER = struct.Struct("<4sBII")

# Dense covariance eigendecomposition up to this many input dims.
EIGH_MAX_DIMS = 256


class InputFormatError(ValueError):
    """Raised when an input file cannot be parsed into a valid matrix."""


def _check_matrix(values):
    if values.ndim != 2:
        raise InputFormatError(f"expected a 2D matrix, got shape {values.shape}")
    n, d = values.shape
    if n < 2:
        raise InputFormatError(f"need at least 2 items, got {n}")
    if d < 1:
        raise InputFormatError("need at least 1 dimension")
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise InputFormatError(f"row {row}: non-finite value")
    return values


def _read_text(path, delimiter, label_col):
    rows, labels = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for row_idx, fields in enumerate(csv.reader(fh, delimiter=delimiter)):
            if not fields or all(not f.strip() for f in fields):
                continue
            if label_col == "last":
                labels.append(fields[-1].strip())
                fields = fields[:-1]
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise InputFormatError(
                    f"row {row_idx}: expected {width} fields, got {len(fields)}"
                )
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise InputFormatError(f"row {row_idx}: non-numeric cell") from None
            if not all(np.isfinite(vals)):
                raise InputFormatError(f"row {row_idx}: NaN or Inf cell")
            rows.append(vals)
    if not rows:
        raise InputFormatError(f"{path}: empty file")
    x = _check_matrix(np.asarray(rows, dtype=np.float64))
    y = np.asarray(labels) if label_col == "last" else None
    return x, y


def read_binary(path):
    """Read a matrix stored in the PSNE binary format (returned as float64)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InputFormatError(f"{path}: empty or truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise InputFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise InputFormatError(
            f"{path}: expected {expected} bytes for N={n}, D={d}, got {len(raw)}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    return _check_matrix(values.astype(np.float64))


def write_binary(path, x):
    """Write ``x`` in the PSNE binary format (values stored as float32)."""
    x = np.ascontiguousarray(x, dtype="<f4")
    if x.ndim != 2:
        raise ValueError("x must be 2D")
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
        fh.write(x.tobytes())


def load_matrix(path, format="tsv", label_col="none"):
    """Load a data matrix and optional labels.

    Parameters
    ----------
    path : str or Path
        Input file.
    format : {"tsv", "csv", "binary"}
    label_col : {"none", "last"}
        Whether the final text column holds a categorical label. Ignored for
        the binary format, which carries no labels.

    Returns
    -------
    x : ndarray of shape (n_items, n_dims)
    labels : ndarray of shape (n_items,) or None
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    if format == "binary":
        return read_binary(path), None
    if format not in ("tsv", "csv"):
        raise ValueError(f"unknown format {format!r}")
    if label_col not in ("none", "last"):
        raise ValueError(f"unknown label_col {label_col!r}")
    return _read_text(path, "\t" if format == "tsv" else ",", label_col)


def pca_reduce(x, target_dims=50):
    """Project mean-centered data onto its leading principal components.

    Components are ordered by decreasing explained variance; no whitening is
    applied. Each component's sign is fixed so that its largest-magnitude
    loading is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if target_dims < 1 or target_dims > min(n, d):
        raise ValueError(
            f"target_dims={target_dims} must be in [1, min(n_items, n_dims)={min(n, d)}]"
        )
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        raise ValueError("input has zero variance in every dimension")
    if d <= EIGH_MAX_DIMS:
        cov = centered.T @ centered / max(n - 1, 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:target_dims]
        components = evecs[:, order]
    else:
        from sklearn.utils.extmath import randomized_svd

        _, _, vt = randomized_svd(centered, target_dims, n_iter=7, random_state=0)
        components = vt.T
    flip = np.sign(components[np.argmax(np.abs(components), axis=0), np.arange(target_dims)])
    flip[flip == 0] = 1.0
    return centered @ (components * flip)


def make_gaussian_mixture(n_clusters, n_items, n_dims, seed=0, spread=8.0):
    """Deterministic isotropic Gaussian mixture with round-robin cluster labels.

    Cluster centers are drawn from N(0, spread^2 I); points add N(0, I) noise.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(n_clusters, n_dims))
    labels = np.arange(n_items) % n_clusters
    x = centers[labels] + rng.normal(size=(n_items, n_dims))
    return x, labels


def parse_synth(spec, seed=0):
    """Parse ``gaussians:C:N:D`` into a generated (x, labels) pair."""
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] != "gaussians":
        raise ValueError(f"bad synthetic spec {spec!r}; expected gaussians:C:N:D")
    try:
        c, n, d = (int(p) for p in parts[1:])
    except ValueError:
        raise ValueError(f"bad synthetic spec {spec!r}; C, N, D must be integers") from None
    if c < 1 or n < 2 or d < 1:
        raise ValueError(f"bad synthetic spec {spec!r}")
    return make_gaussian_mixture(c, n, d, seed=seed)
