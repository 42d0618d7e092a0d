"""Static SVG drawing of an ICM circuit next to its geometry.

The circuit panel reads left to right: init column, CNOT array, measurement column.
The geometry panel is an isometric wireframe with primal strands dark, dual strands
blue, configuration points red and injection points green.
"""

import html
import logging
import math
from typing import List, Optional, Tuple

from app.services.circuit import Circuit, Cnot, InitBasis, MeasBasis
from app.services.geometry import CONFIGURABLE, GeometryDesc

logger = logging.getLogger(__name__)

MARGIN = 40
ROW = 24
COLUMN = 20
LABEL = 36
SCALE = 10
PRIMAL = "#222"
DUAL = "#1f5fbf"
CONFIG = "#d62728"
INJECT = "#2ca02c"

_INIT_LABELS = {InitBasis.ZERO: "|0>", InitBasis.PLUS: "|+>", InitBasis.A: "|A>", InitBasis.Y: "|Y>"}


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _measure_label(circuit: Circuit, q: int) -> str:
    m = circuit.measurements[q]
    if m.basis == MeasBasis.EMPTY:
        return ""
    if m.basis.conditional:
        return f"{m.basis.value}({','.join(str(d) for d in m.deps)})"
    return m.basis.value


def circuit_panel(circuit: Circuit, left: float, top: float) -> Tuple[List[str], float, float]:
    """SVG elements of the circuit diagram plus the panel's width and height."""
    parts = []
    width = 2 * LABEL + COLUMN * (len(circuit.gates) + 1)
    height = ROW * max(circuit.qubit_count, 1)
    wire_start, wire_end = left + LABEL, left + width - LABEL

    def y_of(q: int) -> float:
        return top + ROW * (q - 0.5)

    for q in range(1, circuit.qubit_count + 1):
        y = y_of(q)
        parts.append(f'<line x1="{_fmt(wire_start)}" y1="{_fmt(y)}" x2="{_fmt(wire_end)}" y2="{_fmt(y)}" '
                     f'stroke="#999" stroke-width="1"/>\n')
        init = _INIT_LABELS.get(circuit.inits[q], "")
        if init:
            parts.append(f'<text x="{_fmt(wire_start - 4)}" y="{_fmt(y + 4)}" font-size="11" '
                         f'text-anchor="end">{html.escape(init)}</text>\n')
        label = _measure_label(circuit, q)
        if label:
            parts.append(f'<text x="{_fmt(wire_end + 4)}" y="{_fmt(y + 4)}" font-size="11">{label}</text>\n')

    for index, gate in enumerate(circuit.gates, start=1):
        x = wire_start + COLUMN * index
        if isinstance(gate, Cnot):
            yc, yt = y_of(gate.control), y_of(gate.target)
            parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(yc)}" x2="{_fmt(x)}" y2="{_fmt(yt)}" '
                         f'stroke="{PRIMAL}" stroke-width="1.5"/>\n')
            parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(yc)}" r="3" fill="{PRIMAL}"/>\n')
            parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(yt)}" r="6" fill="white" stroke="{PRIMAL}"/>\n')
            parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(yt - 6)}" x2="{_fmt(x)}" y2="{_fmt(yt + 6)}" '
                         f'stroke="{PRIMAL}"/>\n')
        else:
            for q in gate.qubits:
                y = y_of(q)
                parts.append(f'<rect x="{_fmt(x - 8)}" y="{_fmt(y - 8)}" width="16" height="16" '
                             f'fill="white" stroke="{PRIMAL}"/>\n')
                parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y + 4)}" font-size="8" '
                             f'text-anchor="middle">{gate.name[:4]}</text>\n')
    return parts, width, height


def isometric(x: int, y: int, z: int) -> Tuple[float, float]:
    """Project lattice coordinates: x and y recede at 30 degrees, z points up."""
    return (x - y) * math.cos(math.pi / 6), (x + y) * math.sin(math.pi / 6) - z


def geometry_panel(geometry: GeometryDesc, left: float, top: float) -> Tuple[List[str], float, float]:
    if not geometry.points:
        return [], 0.0, 0.0
    projected = {p.id: isometric(p.x, p.y, p.z) for p in geometry.points}
    us = [u for u, _ in projected.values()]
    vs = [v for _, v in projected.values()]
    u0, v0 = min(us), min(vs)
    width, height = SCALE * (max(us) - u0), SCALE * (max(vs) - v0)

    def at(pid: int) -> Tuple[float, float]:
        u, v = projected[pid]
        return left + SCALE * (u - u0), top + SCALE * (v - v0)

    dual = set(geometry.dual)
    parts = []
    for s in geometry.segments:
        (x1, y1), (x2, y2) = at(s.a), at(s.b)
        colour = DUAL if s.a in dual else PRIMAL
        parts.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                     f'stroke="{colour}" stroke-width="1.5"/>\n')
    for c in geometry.config_points:
        x, y = at(c.point_id)
        colour = CONFIG if c.state == CONFIGURABLE else INJECT
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{colour}"/>\n')
    return parts, width, height


def render_svg(circuit: Circuit, geometry: Optional[GeometryDesc] = None, title: str = "") -> str:
    """One SVG document with the circuit on top and the geometry below."""
    header = 20 if title else 0
    circuit_parts, cw, ch = circuit_panel(circuit, MARGIN, MARGIN + header)
    geometry_parts, gw, gh = ([], 0.0, 0.0)
    if geometry is not None:
        geometry_parts, gw, gh = geometry_panel(geometry, MARGIN, MARGIN + header + ch + MARGIN)
    width = 2 * MARGIN + max(cw, gw)
    height = 2 * MARGIN + header + ch + (MARGIN + gh if geometry_parts else 0)

    parts = ['<?xml version="1.0" encoding="UTF-8"?>\n',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
             f'viewBox="0 0 {_fmt(width)} {_fmt(height)}" font-family="Arial, sans-serif">\n',
             '<rect width="100%" height="100%" fill="white"/>\n']
    if title:
        parts.append(f'<text x="{_fmt(width / 2)}" y="{MARGIN}" font-size="14" text-anchor="middle">{html.escape(title)}</text>\n')
    parts.append('<g class="circuit">\n')
    parts.extend(circuit_parts)
    parts.append('</g>\n')
    if geometry_parts:
        parts.append('<g class="geometry">\n')
        parts.extend(geometry_parts)
        parts.append('</g>\n')
    parts.append('</svg>\n')
    logger.debug(f"Rendered SVG {_fmt(width)}x{_fmt(height)}")
    return "".join(parts)
