import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pixelsne.render import PALETTE, render_svg, svg_document

NS = "{http://www.w3.org/2000/svg}"


def circles(path):
    return list(ET.parse(path).getroot().iter(NS + "circle"))


def test_three_labeled_points(tmp_path):
    path = tmp_path / "p.svg"
    render_svg(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 1.0]]), path, labels=["a", "b", "c"])
    cs = circles(path)
    assert len(cs) == 3
    assert len({c.get("fill") for c in cs}) == 3


def test_unlabeled_single_color(tmp_path):
    path = tmp_path / "p.svg"
    render_svg(np.random.default_rng(0).normal(size=(20, 2)), path)
    assert {c.get("fill") for c in circles(path)} == {PALETTE[0]}


def test_large_plot_is_well_formed(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "big.svg"
    render_svg(rng.uniform(0, 512, size=(10000, 2)), path, labels=rng.integers(0, 30, 10000),
               resolution=(512, 512), radius=0.8, opacity=0.5)
    cs = circles(path)
    assert len(cs) == 10000
    # 30 labels cycle over the 20 colors
    assert len({c.get("fill") for c in cs}) == 20


def test_y_axis_points_up_and_screen_extent():
    svg = svg_document(np.array([[0.0, 0.0], [100.0, 500.0]]), resolution=(512, 512))
    root = ET.fromstring(svg)
    assert root.get("viewBox") == "0 0 512 512"
    lo, hi = root.iter(NS + "circle")
    assert float(lo.get("cy")) == 512.0
    assert float(hi.get("cy")) == 12.0
    assert float(hi.get("cx")) == 100.0


def test_data_bounds_when_unconstrained():
    svg = svg_document(np.array([[-10.0, -5.0], [10.0, 5.0]]))
    w, h = (float(v) for v in ET.fromstring(svg).get("viewBox").split()[2:])
    assert w > 20 and h > 10


def test_radius_and_opacity(tmp_path):
    path = tmp_path / "p.svg"
    render_svg(np.zeros((2, 2)) + [[0, 0], [1, 1]], path, radius=3, opacity=0.25)
    root = ET.parse(path).getroot()
    assert next(root.iter(NS + "g")).get("fill-opacity") == "0.25"
    assert {c.get("r") for c in circles(path)} == {"3"}
    with pytest.raises(ValueError):
        render_svg(np.zeros((2, 2)), path, radius=0)
    with pytest.raises(ValueError):
        render_svg(np.zeros((2, 2)), path, opacity=1.5)


def test_rejects_bad_coordinates(tmp_path):
    with pytest.raises(ValueError):
        render_svg(np.array([[0.0, np.nan], [1.0, 1.0]]), tmp_path / "p.svg")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        render_svg(np.zeros((2, 2)), tmp_path / "missing" / "p.svg")
