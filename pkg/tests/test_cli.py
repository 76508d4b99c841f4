import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pixelsne.cli import main, read_coords
from pixelsne.ingest import make_gaussian_mixture, write_binary


@pytest.fixture(scope="module")
def labeled_tsv(tmp_path_factory):
    x, labels = make_gaussian_mixture(3, 120, 6, seed=0)
    path = tmp_path_factory.mktemp("data") / "data.tsv"
    with open(path, "w") as fh:
        for row, lab in zip(x, labels):
            fh.write("\t".join(f"{v:.6f}" for v in row) + f"\tc{lab}\n")
    return path


def embed(path, out, *extra):
    return main(["embed", "--in", str(path), "--label-col", "last", "--perplexity", "8",
                 "--iters", "40", "--out", str(out), *extra])


def test_embed_pixelsne(labeled_tsv, tmp_path):
    out = tmp_path / "out"
    assert embed(labeled_tsv, out, "--method", "pixelsne", "--knn", "rp", "--res", "512x256",
                 "--seed", "7", "--svg", "--metrics", "--metrics-k", "1,5") == 0
    lines = (out / "coords.tsv").read_text().splitlines()
    assert len(lines) == 120
    fields = [line.split("\t") for line in lines]
    assert [int(f[0]) for f in fields] == list(range(120))
    xy = np.array([[float(f[1]), float(f[2])] for f in fields])
    assert np.all(xy >= 0) and np.all(xy < [512, 256])
    assert fields[0][3] == "c0"
    for name in ("manifest.txt", "metrics.tsv", "timing.tsv", "plot.svg"):
        assert (out / name).is_file()
    manifest = (out / "manifest.txt").read_text()
    assert "input_digest=sha256:" in manifest and "seed=7" in manifest
    ET.parse(out / "plot.svg")
    metrics = (out / "metrics.tsv").read_text()
    assert "precision\t5" in metrics and "accuracy\t1" in metrics


def test_embed_bhsne_unconstrained(labeled_tsv, tmp_path):
    assert embed(labeled_tsv, tmp_path, "--method", "bhsne", "--no-pca") == 0
    z, labels = read_coords(tmp_path / "coords.tsv")
    assert z.shape == (120, 2) and labels is not None
    assert z.min() < 0


def test_embed_is_reproducible(labeled_tsv, tmp_path):
    embed(labeled_tsv, tmp_path / "a", "--seed", "3")
    embed(labeled_tsv, tmp_path / "b", "--seed", "3")
    assert (tmp_path / "a" / "coords.tsv").read_bytes() == (tmp_path / "b" / "coords.tsv").read_bytes()


def test_embed_binary_and_synth(tmp_path):
    x, _ = make_gaussian_mixture(2, 60, 4, seed=1)
    write_binary(tmp_path / "x.bin", x)
    assert main(["embed", "--in", str(tmp_path / "x.bin"), "--format", "binary",
                 "--perplexity", "5", "--iters", "10", "--out", str(tmp_path / "b")]) == 0
    assert main(["embed", "--synth", "gaussians:2:60:4", "--perplexity", "5", "--iters", "10",
                 "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "coords.tsv").read_text().splitlines()) == 60


def test_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.tsv"
    assert main(["embed", "--in", str(missing), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert str(missing) in err and err.count("\n") == 1
    assert not (tmp_path / "o" / "coords.tsv").exists()


def test_runtime_failure_writes_no_coords(tmp_path, capsys):
    # perplexity too large for the item count
    assert main(["embed", "--synth", "gaussians:2:20:3", "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("pixelsne: error:")
    assert not (tmp_path / "coords.tsv").exists()


@pytest.mark.parametrize("argv", [
    ["embed", "--in", "x.tsv", "--res", "512"],
    ["embed", "--in", "x.tsv", "--method", "umap"],
    ["embed", "--in", "x.tsv", "--pca", "10", "--no-pca"],
    ["embed"],
    ["embed", "--in", "x.tsv", "--threads", "0"],
])
def test_bad_flags_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        code = main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_bench(tmp_path, capsys):
    assert main(["bench", "--synth", "gaussians:3:150:5", "--methods", "bhsne,pixelsne",
                 "--repeats", "2", "--perplexity", "5", "--iters", "20",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "timing.tsv").read_text().splitlines()
    assert len(rows) == 3
    assert rows[0].split("\t")[1:] == ["p_mean_s", "p_std_s", "coord_mean_s", "coord_std_s",
                                        "total_mean_s", "total_std_s"]
    assert "pixelsne" in capsys.readouterr().out


def test_bench_refuses_large_exact(tmp_path, capsys):
    assert main(["bench", "--synth", "gaussians:2:5001:3", "--methods", "exact",
                 "--out", str(tmp_path)]) == 1
    assert "5000" in capsys.readouterr().err


def test_metrics_and_render_commands(labeled_tsv, tmp_path, capsys):
    embed(labeled_tsv, tmp_path)
    assert main(["metrics", "--in", str(labeled_tsv), "--label-col", "last",
                 "--coords", str(tmp_path / "coords.tsv"), "--metrics-k", "1,3",
                 "--out", str(tmp_path / "m")]) == 0
    assert "precision@3=" in capsys.readouterr().out
    assert (tmp_path / "m" / "metrics.tsv").is_file()
    assert main(["render", "--coords", str(tmp_path / "coords.tsv"), "--res", "512x512",
                 "--out", str(tmp_path / "r")]) == 0
    root = ET.parse(tmp_path / "r" / "plot.svg").getroot()
    assert len(list(root.iter("{http://www.w3.org/2000/svg}circle"))) == 120


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pixelsne.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "pixelsne" in res.stdout
