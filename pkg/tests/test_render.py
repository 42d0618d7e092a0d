from app.services.circ_io import parse_circ
from app.services.geometry import generate_geometry
from app.services.render import isometric, render_svg

T_CIRC = "init 2 A\ncnot 2 1\nmeasure 1 Z\n"


def test_circuit_only_svg():
    svg = render_svg(parse_circ(T_CIRC))
    assert svg.startswith('<?xml version="1.0"')
    assert '<g class="circuit">' in svg
    assert '<g class="geometry">' not in svg
    assert "|A&gt;" in svg
    assert svg.rstrip().endswith("</svg>")


def test_svg_with_geometry_and_title():
    circuit = parse_circ(T_CIRC)
    svg = render_svg(circuit, generate_geometry(circuit), title="t <gate>")
    assert '<g class="geometry">' in svg
    assert "t &lt;gate&gt;" in svg
    # one green injection point, two red configurable ports
    assert svg.count('fill="#2ca02c"') == 1
    assert svg.count('fill="#d62728"') == 2


def test_conditional_measurements_are_labelled():
    svg = render_svg(parse_circ("init 2 A\ncnot 2 1\nmeasure 1 Z\nmeasure 2 ZX(1)\n"))
    assert ">ZX(1)</text>" in svg


def test_isometric_projection():
    assert isometric(0, 0, 0) == (0.0, 0.0)
    u, v = isometric(0, 0, 2)
    assert (u, v) == (0.0, -2.0)
    assert isometric(1, 1, 0)[0] == 0.0
