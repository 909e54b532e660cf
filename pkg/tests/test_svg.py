import xml.etree.ElementTree as ET

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_games.svg import Panel, Series, render_svg, write_svg


def test_render_is_valid_xml(tmp_path):
    x = np.linspace(0, 1, 11)
    p1 = Panel("a", "x", "y", [Series(x, x ** 2, "sq", markers=True), Series(x, x, "id", dashed=True)])
    p2 = Panel("b & c", "N", "gap", [Series(x + 1, np.exp(-x), "e")], logx=True, logy=True, note="n<1")
    path = tmp_path / "f.svg"
    write_svg(path, [p1, p2], title="two panels")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    assert root.get("width") == "840"
    text = path.read_text()
    assert "b &amp; c" in text and "n&lt;1" in text


def test_nan_gaps_are_tolerated():
    x = np.arange(5.0)
    y = np.array([1.0, np.nan, 2.0, np.inf, 3.0])
    ET.fromstring(render_svg(Panel(series=[Series(x, y, "gappy")])))


def test_deterministic():
    x = np.linspace(-2, 2, 7)
    p = Panel("t", series=[Series(x, np.sin(x), "s")])
    assert render_svg(p) == render_svg(p)


@settings(max_examples=40, deadline=None)
@given(ys=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30),
       logy=st.booleans())
def test_any_series_renders(ys, logy):
    y = np.array(ys)
    x = np.arange(len(y), dtype=float) + 1
    svg = render_svg(Panel(series=[Series(x, y, "y")], logy=logy))
    ET.fromstring(svg)
