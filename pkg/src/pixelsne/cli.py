"""Command-line interface: ``pixelsne {embed,bench,metrics,render}``."""

import argparse
import hashlib
import io
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .estimator import METHODS, PixelSNE, derive_seeds
from .ingest import load_matrix, parse_synth
from .metrics import EXACT_MAX_ITEMS, benchmark, evaluate, write_reports_tsv
from .render import atomic_write, render_svg

DEFAULT_METRICS_K = "1,3,5,10,20,30"


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors exit with status 1 and a single line, like runtime errors
    def error(self, message):
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def parse_resolution(text):
    try:
        w, h = text.lower().split("x")
        r = (int(w), int(h))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if min(r) < 2:
        raise argparse.ArgumentTypeError("resolution must be at least 2x2")
    return r


def parse_ks(text):
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be >= 1")
    return ks


def _add_input(p, required=False):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--in", dest="input", metavar="PATH", help="input matrix file")
    src.add_argument("--synth", metavar="gaussians:C:N:D",
                     help="generate a Gaussian mixture instead of reading a file")
    p.add_argument("--format", choices=("tsv", "csv", "binary"), default="tsv")
    p.add_argument("--label-col", choices=("none", "last"), default="none")


def _add_common(p):
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _add_embedding(p):
    p.add_argument("--method", choices=sorted(METHODS), default="pixelsne")
    p.add_argument("--knn", choices=("exact", "vp", "rp"), default=None,
                   help="neighbor search (default: rp for pixelsne, vp for bhsne, exact for exact)")
    p.add_argument("--perplexity", type=float, default=50.0)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--criterion", choices=("linear", "squared"), default="linear",
                   help="Barnes-Hut cell opening test")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--res", type=parse_resolution, default=(512, 512), metavar="WxH")
    pca = p.add_mutually_exclusive_group()
    pca.add_argument("--pca", type=int, default=50, metavar="INT")
    pca.add_argument("--no-pca", dest="pca", action="store_const", const=None)


def _add_metrics(p):
    p.add_argument("--metrics-k", type=parse_ks, default=parse_ks(DEFAULT_METRICS_K),
                   metavar="K,K,...")
    p.add_argument("--floor", action="store_true",
                   help="score floored (integer pixel) coordinates")


def _add_render(p):
    p.add_argument("--radius", type=float, default=1.5)
    p.add_argument("--opacity", type=float, default=0.7)


def build_parser():
    parser = _Parser(prog="pixelsne", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pixelsne {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="compute a 2D embedding")
    _add_input(p, required=True)
    _add_common(p)
    _add_embedding(p)
    _add_metrics(p)
    _add_render(p)
    p.add_argument("--svg", action="store_true", help="also write plot.svg")
    p.add_argument("--metrics", action="store_true", help="also write metrics.tsv")

    p = sub.add_parser("bench", help="time P construction and optimization per method")
    _add_input(p, required=True)
    _add_common(p)
    _add_embedding(p)
    p.add_argument("--methods", default="bhsne,pixelsne",
                   help="comma-separated methods to compare")
    p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("metrics", help="score an existing coords.tsv")
    _add_input(p, required=False)
    _add_common(p)
    _add_metrics(p)
    p.add_argument("--coords", metavar="PATH", required=True)

    p = sub.add_parser("render", help="draw an existing coords.tsv as SVG")
    _add_common(p)
    _add_render(p)
    p.add_argument("--coords", metavar="PATH", required=True)
    p.add_argument("--res", type=parse_resolution, default=None, metavar="WxH",
                   help="canvas size for screen coordinates (default: data bounds)")
    return parser


# --------------------------------------------------------------------------
# helpers


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_input(args):
    """Return (x, labels, digest) from ``--in`` or ``--synth``."""
    if args.synth:
        x, labels = parse_synth(args.synth, seed=args.seed)
        return x, labels, f"synth:{args.synth}"
    if not args.input:
        raise CLIError("an input is required (--in PATH or --synth SPEC)")
    x, labels = load_matrix(args.input, format=args.format, label_col=args.label_col)
    return x, labels, "sha256:" + _digest(args.input)


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def format_coords(z, labels=None):
    buf = io.StringIO()
    for i, (x, y) in enumerate(np.asarray(z, dtype=np.float64)):
        row = f"{i}\t{float(x)!r}\t{float(y)!r}"
        if labels is not None:
            row += f"\t{labels[i]}"
        buf.write(row + "\n")
    return buf.getvalue()


def read_coords(path):
    """Parse coords.tsv into (z, labels or None)."""
    ids, pts, labels = [], [], []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            fields = line.rstrip("\n").split("\t")
            if len(fields) not in (3, 4):
                raise CLIError(f"{path}: row {n}: expected 3 or 4 fields")
            ids.append(int(fields[0]))
            pts.append((float(fields[1]), float(fields[2])))
            if len(fields) == 4:
                labels.append(fields[3])
    if ids != list(range(len(ids))):
        raise CLIError(f"{path}: ids must be 0..N-1 in order")
    if labels and len(labels) != len(ids):
        raise CLIError(f"{path}: labels present on some rows only")
    return np.asarray(pts), (np.asarray(labels) if labels else None)


def make_estimator(args, method=None):
    return PixelSNE(
        method=method or args.method,
        perplexity=args.perplexity,
        n_iter=args.iters,
        theta=args.theta,
        criterion=args.criterion,
        resolution=args.res,
        knn=args.knn,
        pca_components=args.pca,
        n_threads=args.threads,
        random_state=args.seed,
    )


def _manifest(args, est, digest, x, extra):
    lines = [
        f"software=pixelsne {__version__}",
        f"python={platform.python_version()}",
        f"command={args.command}",
        f"input_digest={digest}",
        f"n_items={x.shape[0]}",
        f"n_dims={x.shape[1]}",
        f"seed={args.seed}",
        "sub_seeds=" + ",".join(str(s) for s in derive_seeds(args.seed)),
    ]
    for key in sorted(vars(args)):
        if key in ("command", "seed"):
            continue
        lines.append(f"arg.{key}={getattr(args, key)}")
    for key, value in sorted(est.get_params().items()):
        lines.append(f"param.{key}={value}")
    lines.extend(f"{k}={v}" for k, v in extra)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands


def embed_command(args):
    x, labels, digest = load_input(args)
    out = _out_dir(args)
    est = make_estimator(args)
    est.fit(x)
    z = est.embedding_
    screen = METHODS[args.method][1]

    t0 = time.perf_counter()
    atomic_write(os.path.join(out, "coords.tsv"), format_coords(z, labels))
    atomic_write(os.path.join(out, "timing.tsv"), est.cost_trace_.to_text())
    if args.metrics:
        rep = evaluate(x, z, labels, args.metrics_k, kl=est.kl_divergence_,
                       timings={"p": 1e3 * est.timings_["p"],
                                "coord": 1e3 * est.timings_["coord"]},
                       floor=args.floor)
        write_reports_tsv(os.path.join(out, "metrics.tsv"), {"embed": rep})
    if args.svg:
        render_svg(z, os.path.join(out, "plot.svg"), labels=labels,
                   resolution=args.res if screen else None,
                   radius=args.radius, opacity=args.opacity)
    t_out = time.perf_counter() - t0

    extra = [
        ("kl_final", est.kl_divergence_),
        ("beta", ",".join(repr(float(b)) for b in est.beta_)),
        ("time_p_s", f"{est.timings_['p']:.6f}"),
        ("time_coord_s", f"{est.timings_['coord']:.6f}"),
        ("time_output_s", f"{t_out:.6f}"),
    ]
    atomic_write(os.path.join(out, "manifest.txt"), _manifest(args, est, digest, x, extra))
    return 0


def bench_command(args):
    x, _, digest = load_input(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise CLIError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    if "exact" in methods and x.shape[0] > EXACT_MAX_ITEMS:
        raise CLIError(
            f"the exact method is limited to {EXACT_MAX_ITEMS} items, got {x.shape[0]}"
        )
    out = _out_dir(args)
    table = benchmark([make_estimator(args, m) for m in methods], x, repeats=args.repeats,
                      names=methods)
    atomic_write(os.path.join(out, "timing.tsv"), table.to_tsv())
    atomic_write(os.path.join(out, "timing.txt"), table.to_text())
    extra = [("repeats", args.repeats), ("methods", ",".join(methods))]
    atomic_write(os.path.join(out, "manifest.txt"),
                 _manifest(args, make_estimator(args), digest, x, extra))
    sys.stdout.write(table.to_text())
    return 0


def metrics_command(args):
    z, labels = read_coords(args.coords)
    x = None
    if args.input or args.synth:
        x, in_labels, _ = load_input(args)
        if x.shape[0] != z.shape[0]:
            raise CLIError(f"input has {x.shape[0]} items but coords has {z.shape[0]}")
        if labels is None:
            labels = in_labels
    if x is None and labels is None:
        raise CLIError("nothing to score: give --in/--synth or a labeled coords file")
    out = _out_dir(args)
    rep = evaluate(x, z, labels, args.metrics_k, floor=args.floor)
    write_reports_tsv(os.path.join(out, "metrics.tsv"), {"metrics": rep})
    atomic_write(os.path.join(out, "metrics.txt"), rep.to_text())
    sys.stdout.write(rep.to_text())
    return 0


def render_command(args):
    z, labels = read_coords(args.coords)
    out = _out_dir(args)
    render_svg(z, os.path.join(out, "plot.svg"), labels=labels, resolution=args.res,
               radius=args.radius, opacity=args.opacity)
    return 0


COMMANDS = {
    "embed": embed_command,
    "bench": bench_command,
    "metrics": metrics_command,
    "render": render_command,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        sys.stderr.write("pixelsne: error: --threads must be >= 1\n")
        return 1
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        msg = f"file not found: {exc.filename}" if exc.filename else str(exc)
        sys.stderr.write(f"pixelsne: error: {msg}\n")
    except Exception as exc:  # noqa: BLE001 - every failure becomes a one-line diagnostic
        msg = " ".join(str(exc).split()) or type(exc).__name__
        sys.stderr.write(f"pixelsne: error: {msg}\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
