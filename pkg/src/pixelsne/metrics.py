"""Embedding quality measures and the backend timing harness."""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .neighbors import exact_knn

EXACT_MAX_ITEMS = 5000


def _neighbor_ids(points, k):
    return exact_knn(np.asarray(points, dtype=np.float64), k).ids


def _check_k(n, k):
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n_items={n}")


def _overlap(a, b):
    # per-row count of ids shared by two neighbor lists (ids are unique within a row)
    both = np.sort(np.concatenate([a, b], axis=1), axis=1)
    return (both[:, 1:] == both[:, :-1]).sum(axis=1)


def precision_curve(x, z, ks):
    """Neighborhood precision for several k from one pair of exact searches.

    Neighbor lists are ordered by (distance, index), so the list for a
    smaller k is a prefix of the list for the largest k.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[0] != z.shape[0]:
        raise ValueError("x and z must have the same number of items")
    n = x.shape[0]
    ks = sorted(set(int(k) for k in ks))
    for k in ks:
        _check_k(n, k)
    hi = _neighbor_ids(x, ks[-1])
    lo = _neighbor_ids(z, ks[-1])
    return {k: float(_overlap(hi[:, :k], lo[:, :k]).sum() / (k * n)) for k in ks}


def neighborhood_precision(x, z, k):
    """Fraction of each item's k nearest input-space neighbors that are also
    among its k nearest embedding neighbors, averaged over items."""
    return precision_curve(x, z, [k])[int(k)]


def _encode(labels):
    if labels is None:
        raise ValueError("labels are required for kNN accuracy")
    labels = np.asarray(labels)
    # np.unique sorts, so code order is label order and argmax picks the smallest label
    classes, codes = np.unique(labels, return_inverse=True)
    return classes, codes.ravel()


def knn_accuracy_curve(z, labels, ks):
    """Leave-one-out majority-vote accuracy for several k."""
    z = np.asarray(z, dtype=np.float64)
    classes, codes = _encode(labels)
    n = z.shape[0]
    if codes.shape[0] != n:
        raise ValueError("labels and z must have the same number of items")
    ks = sorted(set(int(k) for k in ks))
    for k in ks:
        _check_k(n, k)
    nbr_codes = codes[_neighbor_ids(z, ks[-1])]
    rows = np.repeat(np.arange(n), 1)
    out = {}
    for k in ks:
        votes = np.zeros((n, classes.shape[0]), dtype=np.int64)
        np.add.at(votes, (np.repeat(rows, k), nbr_codes[:, :k].ravel()), 1)
        out[k] = float((votes.argmax(axis=1) == codes).mean())
    return out


def knn_accuracy(z, labels, k):
    """Leave-one-out kNN classification accuracy in the embedding.

    Ties in the vote go to the smallest label.
    """
    return knn_accuracy_curve(z, labels, [k])[int(k)]


@dataclass
class QualityReport:
    precision: dict = field(default_factory=dict)
    accuracy: dict = field(default_factory=dict)
    kl: float = float("nan")
    # wall-clock milliseconds per phase
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, rates in (("precision", self.precision), ("accuracy", self.accuracy)):
            for k, v in rates.items():
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name}@{k}={v} is outside [0, 1]")
        for phase, ms in self.timings.items():
            if ms < 0:
                raise ValueError(f"negative duration for {phase}")

    def items(self):
        out = [(f"precision@{k}", v) for k, v in sorted(self.precision.items())]
        out += [(f"accuracy@{k}", v) for k, v in sorted(self.accuracy.items())]
        out.append(("kl", self.kl))
        out += [(f"{phase}_ms", v) for phase, v in self.timings.items()]
        return out

    def to_text(self):
        return "".join(f"{key}={value:.6g}\n" for key, value in self.items())

    def write_text(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def read_text(cls, path):
        rep = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                key, _, value = line.strip().partition("=")
                if not key:
                    continue
                v = float(value)
                if key.startswith("precision@"):
                    rep.precision[int(key.split("@")[1])] = v
                elif key.startswith("accuracy@"):
                    rep.accuracy[int(key.split("@")[1])] = v
                elif key == "kl":
                    rep.kl = v
                elif key.endswith("_ms"):
                    rep.timings[key[:-3]] = v
        return rep

    def tsv_rows(self, run_id="run"):
        """Long-format ``run, metric, k, value`` rows for multi-run aggregation."""
        rows = [(run_id, "precision", k, v) for k, v in sorted(self.precision.items())]
        rows += [(run_id, "accuracy", k, v) for k, v in sorted(self.accuracy.items())]
        rows.append((run_id, "kl", "", self.kl))
        rows += [(run_id, f"{p}_ms", "", v) for p, v in self.timings.items()]
        return rows


def write_reports_tsv(path, reports):
    """Write ``{run_id: QualityReport}`` as one TSV table."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run\tmetric\tk\tvalue\n")
        for run_id, rep in reports.items():
            for row in rep.tsv_rows(run_id):
                fh.write("\t".join(str(c) for c in row[:3]) + f"\t{row[3]:.6g}\n")


def evaluate(x, z, labels=None, ks=(1, 3, 5, 10, 20, 30), kl=float("nan"), timings=None,
             floor=False):
    """Build a :class:`QualityReport`; ``floor=True`` scores integer pixel positions."""
    z = np.floor(z) if floor else np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    ks = [k for k in ks if k < n]
    prec = precision_curve(x, z, ks) if x is not None else {}
    acc = knn_accuracy_curve(z, labels, ks) if labels is not None else {}
    return QualityReport(prec, acc, kl, dict(timings or {}))


# --------------------------------------------------------------------------
# timing harness


@dataclass
class BenchRow:
    name: str
    p: list
    coord: list

    @staticmethod
    def _stats(values):
        mean = sum(values) / len(values)
        std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
        return mean, std

    @property
    def total(self):
        return [a + b for a, b in zip(self.p, self.coord)]

    def summary(self):
        return (*self._stats(self.p), *self._stats(self.coord), *self._stats(self.total))


@dataclass
class BenchTable:
    rows: list

    COLUMNS = ("method", "p_mean_s", "p_std_s", "coord_mean_s", "coord_std_s",
               "total_mean_s", "total_std_s")

    def to_tsv(self):
        lines = ["\t".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(row.name + "\t" + "\t".join(f"{v:.4f}" for v in row.summary()))
        return "\n".join(lines) + "\n"

    def to_text(self):
        head = f"{'method':<12}{'P (s)':>20}{'Coord (s)':>20}{'Total (s)':>20}"
        lines = [head, "-" * len(head)]
        for row in self.rows:
            s = row.summary()
            cells = "".join(f"{f'{s[i]:.3f} ± {s[i + 1]:.3f}':>20}" for i in (0, 2, 4))
            lines.append(f"{row.name:<12}{cells}")
        return "\n".join(lines) + "\n"


def benchmark(estimators, x, repeats=3, names=None):
    """Time affinity construction and coordinate optimization per estimator.

    Parameters
    ----------
    estimators : list of PixelSNE
        Each is cloned and fitted ``repeats`` times on ``x``.
    x : ndarray of shape (n_items, n_dims)
    repeats : int
    names : list of str, optional
        Row labels; defaults to each estimator's ``method``.

    Returns
    -------
    BenchTable
        Mean and standard deviation of P, Coord and Total seconds per row.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = np.asarray(x).shape[0]
    for est in estimators:
        if est.method == "exact" and n > EXACT_MAX_ITEMS:
            raise ValueError(
                f"the exact method is limited to {EXACT_MAX_ITEMS} items, got {n}"
            )
    names = names or [est.method for est in estimators]
    rows = []
    for name, est in zip(names, estimators):
        row = BenchRow(name, [], [])
        for _ in range(repeats):
            fitted = clone(est).fit(x)
            row.p.append(fitted.timings_["p"])
            row.coord.append(fitted.timings_["coord"])
        rows.append(row)
    return BenchTable(rows)
