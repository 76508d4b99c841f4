"""Static SVG scatterplots of 2D embeddings."""

import os
import tempfile

import numpy as np

# 20 categorical colors, cycled by label order
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
    "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)
DEFAULT_COLOR = PALETTE[0]


def atomic_write(path, text):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def label_colors(labels):
    """Map each label to a palette color; labels are ordered as ``np.unique`` sorts them."""
    if labels is None:
        return None
    classes, codes = np.unique(np.asarray(labels), return_inverse=True)
    return [PALETTE[c % len(PALETTE)] for c in codes.ravel()]


def svg_document(coords, labels=None, resolution=None, radius=1.5, opacity=0.7, pad=0.02):
    """Build the SVG text.

    With ``resolution=(r1, r2)`` the canvas spans the screen ``[0, r1) x [0, r2)``;
    otherwise it spans the data bounding box plus a small margin. The y axis is
    flipped so larger y values are drawn higher up.
    """
    z = np.asarray(coords, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ValueError("coords must have shape (n_items, 2)")
    if not np.all(np.isfinite(z)):
        raise ValueError("coords must be finite")
    if resolution is not None:
        x0, y0 = 0.0, 0.0
        w, h = float(resolution[0]), float(resolution[1])
    else:
        lo, hi = z.min(axis=0), z.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        lo = lo - pad * span
        x0, y0 = lo
        w, h = span * (1 + 2 * pad)
    colors = label_colors(labels) or [DEFAULT_COLOR] * z.shape[0]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.6g} {h:.6g}" '
        f'width="800" height="{800 * h / w:.0f}">\n',
        f'<rect x="0" y="0" width="{w:.6g}" height="{h:.6g}" fill="white"/>\n',
        f'<g fill-opacity="{opacity:g}" stroke="none">\n',
    ]
    for (x, y), color in zip(z, colors):
        parts.append(
            f'<circle cx="{x - x0:.4f}" cy="{h - (y - y0):.4f}" r="{radius:g}" fill="{color}"/>\n'
        )
    parts.append("</g>\n</svg>\n")
    return "".join(parts)


def render_svg(coords, path, labels=None, resolution=None, radius=1.5, opacity=0.7):
    """Write a scatterplot with one circle per item to ``path``."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if not 0.0 < opacity <= 1.0:
        raise ValueError("opacity must be in (0, 1]")
    atomic_write(path, svg_document(coords, labels, resolution, radius, opacity))
