"""Canonical three-dimensional geometry of ICM circuits for defect-based surface codes.

Time runs along +x. Every qubit is a pair of primal strands at z = 0 and z = 2 on
its own row, y = 12 * (qubit - 1). Each CNOT is the primal-primal braid template
placed at x = 6 * slot: the control input turns back in a loop towards the target,
the target input turns back towards the control, both outputs are bridged and a
dual loop threads the two turns. Ports of consecutive templates on one qubit are
joined by straight x-wires.

Templates of CNOTs between non-adjacent rows, and qubits idling across another
CNOT's bridge, produce primal crossings. Resolving them needs routing that this
generator does not attempt.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

from app.services.circuit import (
    Circuit,
    Cnot,
    InitBasis,
    MeasBasis,
    ValidationReport,
    validate_icm,
)
from app.services.errors import GeometryError
from app.services.helpers import strip_comment

logger = logging.getLogger(__name__)

ROW_PITCH = 12
SLOT_PITCH = 6
STRAND_GAP = 2
CONFIGURABLE = "configurable"
INJECT_STATES = {"A": "injectA", "Y": "injectY"}
_STATE_TOKENS = {v: k for k, v in INJECT_STATES.items()}


@dataclass(frozen=True)
class LatticePoint:
    id: int
    x: int
    y: int
    z: int

    @property
    def coords(self) -> Tuple[int, int, int]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Segment:
    a: int
    b: int


@dataclass(frozen=True)
class ConfigPoint:
    point_id: int
    io: str
    state: str = CONFIGURABLE


class IoChoice(Enum):
    MEASURE_X = "MeasureX"
    MEASURE_Z = "MeasureZ"
    INIT_X = "InitX"
    INIT_Z = "InitZ"
    KEEP_INJECTION = "KeepInjection"


@dataclass
class GeometryDesc:
    """Points, segments and configuration points of one geometric description.

    ``dual`` lists the ids of dual-strand points; everything else is primal.
    ``bijectivity`` maps circuit elements ("init q", "meas q", "cnot k") to the
    point ids realizing them.
    """
    points: List[LatticePoint] = field(default_factory=list)
    segments: List[Segment] = field(default_factory=list)
    config_points: List[ConfigPoint] = field(default_factory=list)
    dual: List[int] = field(default_factory=list)
    bijectivity: Dict[str, List[int]] = field(default_factory=dict)
    parity_offset: int = 0

    @property
    def config_count(self) -> int:
        return len(self.config_points)

    @property
    def injection_count(self) -> int:
        return sum(1 for c in self.config_points if c.state != CONFIGURABLE)

    def point(self, point_id: int) -> LatticePoint:
        if not 1 <= point_id <= len(self.points):
            raise GeometryError(f"unknown point {point_id}")
        return self.points[point_id - 1]

    def config(self, point_id: int) -> Optional[ConfigPoint]:
        return next((c for c in self.config_points if c.point_id == point_id), None)

    def incident(self, point_id: int) -> List[int]:
        """Indices of the segments touching a point."""
        return [i for i, s in enumerate(self.segments) if point_id in (s.a, s.b)]


class _GeometryBuilder:
    def __init__(self, circuit: Circuit, parity_offset: int):
        self.circuit = circuit
        self.offset = parity_offset
        self.geometry = GeometryDesc(parity_offset=parity_offset)
        self.first_use: Dict[int, int] = {}
        self.last_use: Dict[int, int] = {}
        self.open_ends: Dict[int, Tuple[int, int]] = {}
        for slot, gate in enumerate(circuit.gates):
            for q in gate.qubits:
                self.first_use.setdefault(q, slot)
                self.last_use[q] = slot

    def point(self, x: int, y: int, z: int, owner: str, dual: bool = False) -> int:
        geometry = self.geometry
        pid = len(geometry.points) + 1
        geometry.points.append(LatticePoint(pid, x + self.offset, y + self.offset, z + self.offset))
        geometry.bijectivity.setdefault(owner, []).append(pid)
        if dual:
            geometry.dual.append(pid)
        return pid

    def segments(self, pairs):
        self.geometry.segments.extend(Segment(a, b) for a, b in pairs)

    def _ends(self, x: int, y: int, owner: str) -> Tuple[int, int]:
        return self.point(x, y, 0, owner), self.point(x, y, STRAND_GAP, owner)

    def _config(self, x: int, y: int, io: str, state: str, owner: str, e0: int, e1: int):
        pid = self.point(x, y, STRAND_GAP // 2, owner)
        self.geometry.config_points.append(ConfigPoint(pid, io, state))
        return [(e0, pid), (e1, pid)]

    def open_port(self, q: int, x: int, owner: str, first: bool):
        """Input strand ends of qubit q at x plus the segments that still need emitting."""
        y = ROW_PITCH * (q - 1)
        if not first:
            e0, e1 = self._ends(x, y, owner)
            p0, p1 = self.open_ends.pop(q)
            return e0, e1, [(p0, e0), (p1, e1)]
        label = f"init {q}"
        e0, e1 = self._ends(x, y, label)
        basis = self.circuit.inits[q]
        if basis == InitBasis.ZERO:
            return e0, e1, [(e0, e1)]
        if basis == InitBasis.PLUS:
            return e0, e1, []
        state = CONFIGURABLE if basis == InitBasis.EMPTY else INJECT_STATES[basis.value]
        return e0, e1, self._config(x, y, "i", state, label, e0, e1)

    def close_port(self, q: int, x: int, owner: str, last: bool):
        y = ROW_PITCH * (q - 1)
        if not last:
            e0, e1 = self._ends(x, y, owner)
            self.open_ends[q] = (e0, e1)
            return e0, e1, []
        label = f"meas {q}"
        e0, e1 = self._ends(x, y, label)
        basis = self.circuit.measurements[q].basis
        if basis == MeasBasis.Z:
            return e0, e1, [(e0, e1)]
        if basis == MeasBasis.X:
            return e0, e1, []
        return e0, e1, self._config(x, y, "o", CONFIGURABLE, label, e0, e1)

    def template(self, slot: int, gate: Cnot):
        c, t = gate.control, gate.target
        x = SLOT_PITCH * slot
        yc, yt = ROW_PITCH * (c - 1), ROW_PITCH * (t - 1)
        s = 1 if yt > yc else -1
        label = f"cnot {slot + 1}"

        c0, c1, c_struct = self.open_port(c, x, label, self.first_use[c] == slot)
        l0, l1 = self._ends(x, yc + 6 * s, label)
        n0, n1 = self._ends(x, yt - 4 * s, label)
        t0, t1, t_struct = self.open_port(t, x, label, self.first_use[t] == slot)
        o0, o1, o_struct = self.close_port(c, x + 2, label, self.last_use[c] == slot)
        p0, p1, p_struct = self.close_port(t, x + 2, label, self.last_use[t] == slot)
        loop = [
            self.point(x - 1, yt - 3 * s, 1, label, dual=True),
            self.point(x - 1, yc + 5 * s, 1, label, dual=True),
            self.point(x + 1, yc + 5 * s, 1, label, dual=True),
            self.point(x + 1, yc + 5 * s, -1, label, dual=True),
            self.point(x + 3, yc + 5 * s, -1, label, dual=True),
            self.point(x + 3, yc + 5 * s, 1, label, dual=True),
            self.point(x + 3, yt - 3 * s, 1, label, dual=True),
        ]

        self.segments(c_struct)
        self.segments([(l0, l1), (c0, l0), (c1, l1), (n0, n1)])
        self.segments(t_struct)
        self.segments([(n0, t0), (n1, t1)])
        self.segments(o_struct)
        self.segments(p_struct)
        self.segments([(o0, p0), (o1, p1)])
        self.segments(list(zip(loop, loop[1:])))
        # Closing edge listed first-to-last.
        self.segments([(loop[0], loop[-1])])

    def idle(self, q: int, end: int):
        i0, i1, i_struct = self.open_port(q, 0, f"init {q}", True)
        o0, o1, o_struct = self.close_port(q, end, f"meas {q}", True)
        self.segments(i_struct)
        self.segments([(i0, o0), (i1, o1)])
        self.segments(o_struct)

    def build(self) -> GeometryDesc:
        for slot, gate in enumerate(self.circuit.gates):
            self.template(slot, gate)
        end = SLOT_PITCH * max(len(self.circuit.gates) - 1, 0) + 2
        for q in range(1, self.circuit.qubit_count + 1):
            if q not in self.first_use:
                self.idle(q, end)
        return self.geometry


def generate_geometry(circuit: Circuit, parity_offset: int = 0) -> GeometryDesc:
    """Lay out an ICM circuit as primal strand pairs with one braid template per CNOT.

    With ``parity_offset`` 1 every coordinate is shifted by one, putting primal
    endpoints on the odd lattice and dual endpoints on the even one.

    Raises:
        GeometryError: the circuit is not in ICM form.
    """
    report = validate_icm(circuit)
    if not report.ok:
        raise GeometryError(f"circuit is not in ICM form: {'; '.join(report.violations)}")
    if parity_offset not in (0, 1):
        raise GeometryError(f"parity offset must be 0 or 1, got {parity_offset}")
    geometry = _GeometryBuilder(circuit, parity_offset).build()
    logger.info(
        f"Generated geometry: {geometry.config_count} config points, "
        f"{len(geometry.points)} points, {len(geometry.segments)} segments"
    )
    return geometry


def validate_geometry(geometry: GeometryDesc) -> ValidationReport:
    """Check lattice structure; violations are reported, never raised."""
    report = ValidationReport()
    points = geometry.points
    count = len(points)
    for index, p in enumerate(points, start=1):
        if p.id != index:
            report.add(f"point ids are not dense: position {index} holds id {p.id}")
    known = range(1, count + 1)

    config_ids = [c.point_id for c in geometry.config_points]
    dual = set(geometry.dual)
    for pid in sorted(set(config_ids) | dual):
        if pid not in known:
            report.add(f"reference to unknown point {pid}")
    if len(set(config_ids)) != len(config_ids):
        report.add("a point is listed as configuration point twice")
    for pid in dual.intersection(config_ids):
        report.add(f"point {pid} is both dual and a configuration point")

    degree = {pid: 0 for pid in known}
    for s in geometry.segments:
        if s.a not in known or s.b not in known:
            report.add(f"segment {s.a},{s.b} references an unknown point")
            continue
        degree[s.a] += 1
        degree[s.b] += 1
        a, b = points[s.a - 1].coords, points[s.b - 1].coords
        if sum(1 for u, v in zip(a, b) if u != v) != 1:
            report.add(f"segment {s.a},{s.b} is not axis-aligned")
        if (s.a in dual) != (s.b in dual):
            report.add(f"segment {s.a},{s.b} joins a primal and a dual strand")

    offset = geometry.parity_offset
    for p in points:
        if p.id in config_ids:
            continue
        parity = (1 - offset) if p.id in dual else offset
        if any((c - parity) % 2 for c in p.coords):
            kind = "dual" if p.id in dual else "primal"
            report.add(f"{kind} point {p.id} {p.coords} is off its parity lattice")
        if degree.get(p.id) == 0:
            report.add(f"point {p.id} has no segment")
        elif p.id in dual and degree[p.id] != 2:
            report.add(f"dual point {p.id} does not lie on a closed loop")

    for c in geometry.config_points:
        if c.point_id not in known:
            continue
        if c.io not in ("i", "o"):
            report.add(f"configuration point {c.point_id} has io type {c.io!r}")
        if c.state != CONFIGURABLE and (c.state not in _STATE_TOKENS or c.io != "i"):
            report.add(f"configuration point {c.point_id} has invalid state {c.state}")
        incident = geometry.incident(c.point_id)
        if len(incident) != 2:
            report.add(f"configuration point {c.point_id} has {len(incident)} segments, expected 2")
            continue
        ends = []
        for i in incident:
            s = geometry.segments[i]
            ends.append(s.b if s.a == c.point_id else s.a)
        if any(e in dual for e in ends):
            report.add(f"configuration point {c.point_id} closes a dual strand")
        if all(e in known for e in ends):
            a, b = points[ends[0] - 1].coords, points[ends[1] - 1].coords
            here = points[c.point_id - 1].coords
            if any(2 * h != u + v for h, u, v in zip(here, a, b)):
                report.add(f"configuration point {c.point_id} is not the midpoint of points {ends[0]},{ends[1]}")

    if geometry.bijectivity:
        owners: Dict[int, List[str]] = {}
        for label, ids in geometry.bijectivity.items():
            if not ids:
                report.add(f"circuit element {label!r} has no geometry")
            for pid in ids:
                owners.setdefault(pid, []).append(label)
        for pid in known:
            found = owners.get(pid, [])
            if not found:
                report.add(f"point {pid} belongs to no circuit element")
            elif len(found) > 1:
                report.add(f"point {pid} belongs to several circuit elements: {found}")
        for pid in sorted(set(owners) - set(known)):
            report.add(f"circuit element table references unknown point {pid}")
    return report


def _renumber(geometry: GeometryDesc, removed: int, segments: List[Segment]) -> GeometryDesc:
    def new_id(pid: int) -> int:
        return pid - 1 if pid > removed else pid

    return GeometryDesc(
        points=[LatticePoint(new_id(p.id), p.x, p.y, p.z) for p in geometry.points if p.id != removed],
        segments=[Segment(new_id(s.a), new_id(s.b)) for s in segments],
        config_points=[replace(c, point_id=new_id(c.point_id))
                       for c in geometry.config_points if c.point_id != removed],
        dual=[new_id(d) for d in geometry.dual if d != removed],
        bijectivity={label: [new_id(p) for p in ids if p != removed]
                     for label, ids in geometry.bijectivity.items()},
        parity_offset=geometry.parity_offset,
    )


def configure_io(geometry: GeometryDesc, point_id: int, choice, state: str = "A") -> GeometryDesc:
    """Fix the role of a configurable input or output.

    X choices delete the point with both of its segments, leaving two disjoint strand
    ends. Z choices replace the two segments by one joining the strand ends.
    KeepInjection keeps an input point and marks it as an |A> or |Y> injection.

    Raises:
        GeometryError: unknown or non-configurable point, or a choice that does
            not fit its io type.
    """
    choice = IoChoice(choice)
    config = geometry.config(point_id)
    if config is None:
        raise GeometryError(f"point {point_id} is not a configuration point")
    if config.state != CONFIGURABLE:
        raise GeometryError(f"point {point_id} is already fixed as {config.state}")
    wants_input = choice in (IoChoice.INIT_X, IoChoice.INIT_Z, IoChoice.KEEP_INJECTION)
    if wants_input != (config.io == "i"):
        side = "output" if config.io == "o" else "input"
        raise GeometryError(f"{choice.value} is not valid on {side} point {point_id}")

    if choice == IoChoice.KEEP_INJECTION:
        if state not in INJECT_STATES:
            raise GeometryError(f"injection state must be A or Y, got {state!r}")
        retyped = [replace(c, state=INJECT_STATES[state]) if c.point_id == point_id else c
                   for c in geometry.config_points]
        return replace(geometry, config_points=retyped, points=list(geometry.points),
                       segments=list(geometry.segments), dual=list(geometry.dual),
                       bijectivity={k: list(v) for k, v in geometry.bijectivity.items()})

    incident = geometry.incident(point_id)
    if len(incident) != 2:
        raise GeometryError(f"configuration point {point_id} has {len(incident)} segments, expected 2")
    segments = list(geometry.segments)
    if choice in (IoChoice.MEASURE_Z, IoChoice.INIT_Z):
        ends = [s.b if s.a == point_id else s.a for s in (segments[i] for i in incident)]
        segments[incident[0]] = Segment(ends[0], ends[1])
        del segments[incident[1]]
    else:
        for i in reversed(incident):
            del segments[i]
    logger.debug(f"Configured point {point_id} as {choice.value}")
    return _renumber(geometry, point_id, segments)


def serialize_geometry(geometry: GeometryDesc) -> str:
    """`.geom` text: counts, config id list, segments, coordinates, io types, sidecar.

    The sidecar lines start with `#`: the dual point list, the circuit element
    table and, when it is not zero, the parity offset.
    """
    lines = [str(geometry.config_count), str(len(geometry.points)), str(len(geometry.segments))]
    if geometry.config_points:
        lines.append(",".join(str(c.point_id) for c in geometry.config_points))
    lines.extend(f"{s.a},{s.b}" for s in geometry.segments)
    lines.extend(f"{p.id},{p.x},{p.y},{p.z}" for p in geometry.points)
    for c in geometry.config_points:
        suffix = f",{_STATE_TOKENS[c.state]}" if c.state != CONFIGURABLE else ""
        lines.append(f"{c.point_id},{c.io}{suffix}")
    if geometry.points:
        lines.append(f"# dual : {','.join(str(d) for d in geometry.dual)}")
        lines.extend(f"# {label} : {','.join(str(p) for p in ids)}"
                     for label, ids in geometry.bijectivity.items())
    if geometry.parity_offset:
        lines.append(f"# parity : {geometry.parity_offset}")
    return "".join(line + "\n" for line in lines)


def _ints(text: str, expected: Optional[int], line: int) -> List[int]:
    fields = [f.strip() for f in text.split(",")]
    if expected is not None and len(fields) != expected:
        raise GeometryError(f"expected {expected} comma-separated integers, got {text!r}", line)
    try:
        return [int(f) for f in fields]
    except ValueError:
        raise GeometryError(f"malformed line {text!r}", line)


def parse_geometry(text: str) -> GeometryDesc:
    """Inverse of serialize_geometry.

    Without a `# dual` sidecar line, dual points are recognized by their parity.

    Raises:
        GeometryError: malformed line, count mismatch or dangling point reference.
    """
    body: List[Tuple[int, str]] = []
    sidecar: List[Tuple[int, str, str]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            label, sep, ids = stripped[1:].partition(":")
            if sep:
                sidecar.append((number, label.strip(), ids.strip()))
            continue
        line = strip_comment(raw)
        if line:
            body.append((number, line))
    if len(body) < 3:
        raise GeometryError("missing count header", body[-1][0] if body else 1)

    config_count, point_count, segment_count = (_ints(line, 1, n)[0] for n, line in body[:3])
    rest = body[3:]
    expected = (1 if config_count else 0) + segment_count + point_count + config_count
    if len(rest) != expected:
        raise GeometryError(
            f"header announces {config_count}/{point_count}/{segment_count} but the body holds "
            f"{len(rest)} lines ({expected} expected)", body[2][0]
        )

    cursor = 0
    config_ids: List[int] = []
    if config_count:
        number, line = rest[0]
        config_ids = _ints(line, config_count, number)
        cursor = 1
    known = range(1, point_count + 1)

    segments = []
    for number, line in rest[cursor:cursor + segment_count]:
        a, b = _ints(line, 2, number)
        for pid in (a, b):
            if pid not in known:
                raise GeometryError(f"segment references unknown point {pid}", number)
        segments.append(Segment(a, b))
    cursor += segment_count

    points = []
    for index, (number, line) in enumerate(rest[cursor:cursor + point_count], start=1):
        pid, x, y, z = _ints(line, 4, number)
        if pid != index:
            raise GeometryError(f"point ids must run 1..{point_count} in order, got {pid}", number)
        points.append(LatticePoint(pid, x, y, z))
    cursor += point_count

    config_points = []
    for pid, (number, line) in zip(config_ids, rest[cursor:]):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (2, 3) or fields[1] not in ("i", "o"):
            raise GeometryError(f"expected 'id,i|o[,A|Y]', got {line!r}", number)
        if _ints(fields[0], 1, number)[0] != pid:
            raise GeometryError(f"io line for {fields[0]} does not follow the id list order", number)
        if pid not in known:
            raise GeometryError(f"configuration point {pid} does not exist", number)
        state = CONFIGURABLE
        if len(fields) == 3:
            if fields[2] not in INJECT_STATES:
                raise GeometryError(f"unknown injection state {fields[2]!r}", number)
            state = INJECT_STATES[fields[2]]
        config_points.append(ConfigPoint(pid, fields[1], state))

    offset = 0
    dual: Optional[List[int]] = None
    bijectivity: Dict[str, List[int]] = {}
    for number, label, ids in sidecar:
        values = _ints(ids, None, number) if ids else []
        if label == "parity":
            offset = values[0] if values else 0
        elif label == "dual":
            dual = values
        else:
            bijectivity[label] = values
        for pid in values if label != "parity" else []:
            if pid not in known:
                raise GeometryError(f"sidecar {label!r} references unknown point {pid}", number)
    if dual is None:
        fixed = set(config_ids)
        dual = [p.id for p in points
                if p.id not in fixed and all((c - offset) % 2 == 1 for c in p.coords)]
    return GeometryDesc(points, segments, config_points, dual, bijectivity, offset)
