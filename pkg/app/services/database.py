"""Decomposition database: parse, validate, serialize and query gate entries.

Entry grammar::

    =NAME
    icm | nicm | icmdist
    <ancilla count>
    <body>

icm/icmdist bodies are an init row, `c control target...` fanout rows and a
measurement row. nicm bodies are a token grid with one line per qubit and one
column per time step. A trailing backslash continues a line; `#` starts a comment.
"""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from app.services.circuit import Circuit, Cnot, InitBasis, MeasBasis, Measurement, NamedGate
from app.services.errors import DatabaseError
from app.services.helpers import strip_comment, suggest_name

logger = logging.getLogger(__name__)

DEFAULT_DATABASE = Path(__file__).resolve().parent.parent / "data" / "decompositions.db"

INIT_TOKENS = {
    "ZERO": InitBasis.ZERO,
    "PLUS": InitBasis.PLUS,
    "AA": InitBasis.A,
    "YY": InitBasis.Y,
    "EMPTY": InitBasis.EMPTY,
}
MEAS_TOKENS = {
    "MZ": MeasBasis.Z,
    "MX": MeasBasis.X,
    "MA": MeasBasis.A,
    "MY": MeasBasis.Y,
    "MZX": MeasBasis.ZX,
    "MXZ": MeasBasis.XZ,
    "EMPTY": MeasBasis.EMPTY,
}
GATE_TOKENS = ("TGATE", "TDAG", "HGATE", "PGATE", "PDAG", "XGATE", "ZGATE")
GRID_TOKENS = frozenset(("WIRE", "CTRL", "TGT", "MX", "MZ") + GATE_TOKENS)
VOCABULARY = frozenset(GRID_TOKENS | set(INIT_TOKENS) | set(MEAS_TOKENS))

_INIT_NAMES = {v: k for k, v in INIT_TOKENS.items()}
_MEAS_NAMES = {v: k for k, v in MEAS_TOKENS.items()}


class DecompKind(Enum):
    ICM = "icm"
    NICM = "nicm"
    ICMDIST = "icmdist"


@dataclass(frozen=True)
class GridMeasure:
    """Measurement token inside an nicm grid (e.g. the MX of `TGATE MX`)."""
    row: int
    basis: MeasBasis


@dataclass(frozen=True)
class DecompEntry:
    name: str
    kind: DecompKind
    ancilla_count: int
    init_row: Optional[Tuple[InitBasis, ...]] = None
    rows: Tuple[Tuple[int, ...], ...] = ()
    meas_row: Optional[Tuple[MeasBasis, ...]] = None
    grid: Tuple[Tuple[str, ...], ...] = ()

    @property
    def width(self) -> int:
        if self.kind == DecompKind.NICM:
            return len(self.grid)
        return len(self.init_row)

    @property
    def arity(self) -> int:
        return self.width - self.ancilla_count

    @property
    def inputs(self) -> List[int]:
        """1-based columns left configurable on the init row."""
        if self.kind == DecompKind.NICM:
            return list(range(1, self.arity + 1))
        return [i for i, b in enumerate(self.init_row, start=1) if b == InitBasis.EMPTY]

    @property
    def outputs(self) -> List[int]:
        if self.kind == DecompKind.NICM:
            return list(range(1, self.arity + 1))
        return [i for i, b in enumerate(self.meas_row, start=1) if b == MeasBasis.EMPTY]

    @property
    def cnots(self) -> List[Cnot]:
        return [cnot for row in self.rows for cnot in expand_fanout(row)]

    def grid_ops(self) -> List[object]:
        """Walk the nicm grid column by column.

        Returns Cnot, NamedGate and GridMeasure items over entry rows 1..width.
        """
        ops: List[object] = []
        steps = len(self.grid[0]) if self.grid else 0
        for step in range(steps):
            column = [row[step] for row in self.grid]
            ctrl = [r for r, token in enumerate(column, start=1) if token == "CTRL"]
            tgt = [r for r, token in enumerate(column, start=1) if token == "TGT"]
            emitted = False
            for r, token in enumerate(column, start=1):
                if token == "WIRE":
                    continue
                if token in ("CTRL", "TGT"):
                    if not emitted:
                        ops.append(Cnot(ctrl[0], tgt[0]))
                        emitted = True
                elif token in ("MX", "MZ"):
                    ops.append(GridMeasure(r, MEAS_TOKENS[token]))
                else:
                    ops.append(NamedGate(token, (r,)))
        return ops

    def to_circuit(self) -> Circuit:
        """Circuit form of an icm/icmdist entry.

        Conditional measurements depend on every fixed Z measurement of the entry.
        """
        if self.kind == DecompKind.NICM:
            raise DatabaseError(f"{self.name}: nicm entries have no ICM circuit form")
        anchors = tuple(i for i, b in enumerate(self.meas_row, start=1) if b == MeasBasis.Z)
        measurements = {
            i: Measurement(b, anchors if b.conditional else ())
            for i, b in enumerate(self.meas_row, start=1)
        }
        return Circuit(
            qubit_count=self.width,
            inits=dict(enumerate(self.init_row, start=1)),
            gates=tuple(self.cnots),
            measurements=measurements,
        )


def expand_fanout(row: Tuple[int, ...]) -> List[Cnot]:
    """Expand `c control target...` into one CNOT per target, in listed order."""
    if len(row) < 2:
        raise DatabaseError(f"fanout row {row} needs a control and at least one target")
    control, targets = row[0], row[1:]
    if control in targets:
        raise DatabaseError(f"fanout row {row}: control {control} is also a target")
    if len(set(targets)) != len(targets):
        raise DatabaseError(f"fanout row {row}: duplicate target")
    return [Cnot(control, t) for t in targets]


@dataclass(frozen=True)
class Database:
    entries: Dict[str, DecompEntry] = field(default_factory=dict)

    @property
    def source_order(self) -> List[str]:
        return list(self.entries)

    def __contains__(self, name: str) -> bool:
        return self.find(name) is not None

    def __len__(self) -> int:
        return len(self.entries)

    def find(self, name: str) -> Optional[DecompEntry]:
        """Exact lookup first, then case-insensitive."""
        if name in self.entries:
            return self.entries[name]
        for key, entry in self.entries.items():
            if key.lower() == name.lower():
                return entry
        return None

    def get(self, name: str) -> DecompEntry:
        entry = self.find(name)
        if entry is None:
            hint = suggest_name(name, self.source_order)
            message = f"no database entry named {name!r}"
            if hint:
                message += f" (did you mean {hint!r}?)"
            raise DatabaseError(message)
        return entry

    def with_entry(self, entry: DecompEntry, force: bool = False) -> "Database":
        if entry.name in self.entries and not force:
            raise DatabaseError(f"entry {entry.name!r} already exists")
        entries = dict(self.entries)
        entries[entry.name] = entry
        return Database(entries)


def _logical_lines(text: str) -> List[Tuple[int, str]]:
    """Strip comments, join continuations and drop blank lines."""
    lines: List[Tuple[int, str]] = []
    pending = ""
    start = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not pending:
            start = number
        if line.endswith("\\"):
            pending += line[:-1] + " "
            continue
        line = (pending + line).strip()
        pending = ""
        if line:
            lines.append((start, line))
    if pending.strip():
        lines.append((start, pending.strip()))
    return lines


def _parse_tokens(tokens: List[str], table: Dict[str, object], what: str, line: int) -> tuple:
    values = []
    for token in tokens:
        if token not in table:
            raise DatabaseError(f"unknown {what} token {token!r}", line)
        values.append(table[token])
    return tuple(values)


def _parse_entry(name: str, header_line: int, body: List[Tuple[int, str]]) -> DecompEntry:
    if len(body) < 2:
        raise DatabaseError(f"entry {name!r} is missing its kind or ancilla count", header_line)
    kind_line, kind_text = body[0]
    try:
        kind = DecompKind(kind_text)
    except ValueError:
        raise DatabaseError(f"unknown entry kind {kind_text!r}", kind_line)
    count_line, count_text = body[1]
    try:
        ancilla_count = int(count_text)
    except ValueError:
        raise DatabaseError(f"ancilla count must be an integer, got {count_text!r}", count_line)
    if ancilla_count < 0:
        raise DatabaseError("ancilla count must be nonnegative", count_line)
    rows = body[2:]

    if kind == DecompKind.NICM:
        if not rows:
            raise DatabaseError(f"nicm entry {name!r} has no grid", count_line)
        grid = tuple(tuple(text.split()) for _, text in rows)
        for (line, _), row in zip(rows, grid):
            if len(row) != len(grid[0]):
                raise DatabaseError(f"grid row has {len(row)} tokens, expected {len(grid[0])}", line)
        for step in range(len(grid[0])):
            column = [row[step] for row in grid]
            if column.count("CTRL") > 1 or column.count("TGT") > 1 or \
                    column.count("CTRL") != column.count("TGT"):
                raise DatabaseError(f"time step {step + 1} needs exactly one CTRL with one TGT", rows[0][0])
        if ancilla_count >= len(grid):
            raise DatabaseError(f"ancilla count {ancilla_count} leaves no operand rows", count_line)
        return DecompEntry(name=name, kind=kind, ancilla_count=ancilla_count, grid=grid)

    if len(rows) < 2:
        raise DatabaseError(f"{kind.value} entry {name!r} needs init and measurement rows", count_line)
    init_line, init_text = rows[0]
    meas_line, meas_text = rows[-1]
    init_row = _parse_tokens(init_text.split(), INIT_TOKENS, "initialization", init_line)
    meas_row = _parse_tokens(meas_text.split(), MEAS_TOKENS, "measurement", meas_line)
    if len(init_row) != len(meas_row):
        raise DatabaseError(
            f"init row has {len(init_row)} columns but measurement row has {len(meas_row)}", meas_line
        )
    width = len(init_row)
    fanouts = []
    for line, text in rows[1:-1]:
        tokens = text.split()
        if tokens[0] != "c":
            raise DatabaseError(f"expected a `c` fanout row, got {tokens[0]!r}", line)
        try:
            row = tuple(int(t) for t in tokens[1:])
        except ValueError:
            raise DatabaseError(f"fanout row qubits must be integers: {text!r}", line)
        if any(q < 1 or q > width for q in row):
            raise DatabaseError(f"fanout row references a qubit outside 1..{width}", line)
        try:
            expand_fanout(row)
        except DatabaseError as e:
            raise DatabaseError(str(e), line)
        fanouts.append(row)

    inputs = sum(1 for b in init_row if b == InitBasis.EMPTY)
    outputs = sum(1 for b in meas_row if b == MeasBasis.EMPTY)
    arity = width - ancilla_count
    if kind == DecompKind.ICM and not (inputs == outputs == arity):
        raise DatabaseError(
            f"icm entry {name!r}: {ancilla_count} ancillae do not match {inputs} inputs / {outputs} outputs "
            f"over {width} columns", count_line
        )
    if kind == DecompKind.ICMDIST and not (inputs == 0 and outputs == arity):
        raise DatabaseError(
            f"icmdist entry {name!r}: {ancilla_count} ancillae do not match {outputs} outputs "
            f"over {width} columns", count_line
        )
    return DecompEntry(
        name=name,
        kind=kind,
        ancilla_count=ancilla_count,
        init_row=init_row,
        rows=tuple(fanouts),
        meas_row=meas_row,
    )


def parse_database(text: str) -> Database:
    """Parse database text.

    Raises:
        DatabaseError: malformed entry, unknown token or duplicate name, with its line.
    """
    entries: Dict[str, DecompEntry] = {}
    lines = _logical_lines(text)
    chunks: List[Tuple[int, str, List[Tuple[int, str]]]] = []
    for line, content in lines:
        if content.startswith("="):
            name = content[1:].strip()
            if not name or len(name.split()) != 1:
                raise DatabaseError(f"bad entry name {content!r}", line)
            chunks.append((line, name, []))
        elif not chunks:
            raise DatabaseError(f"content before the first entry: {content!r}", line)
        else:
            chunks[-1][2].append((line, content))

    for line, name, body in chunks:
        if name in entries:
            raise DatabaseError(f"duplicate entry name {name!r}", line)
        entries[name] = _parse_entry(name, line, body)

    for line, name, body in chunks:
        entry = entries[name]
        for token in {t for row in entry.grid for t in row}:
            if token in GRID_TOKENS:
                continue
            if token not in entries:
                raise DatabaseError(f"entry {name!r}: unknown token {token!r}", line)
            if entries[token].arity != 1:
                raise DatabaseError(f"entry {name!r}: grid token {token!r} is not a one-qubit entry", line)
    logger.debug(f"Parsed {len(entries)} database entries")
    return Database(entries)


def serialize_entry(entry: DecompEntry) -> str:
    lines = [f"={entry.name}", entry.kind.value, str(entry.ancilla_count)]
    if entry.kind == DecompKind.NICM:
        lines.extend(" ".join(row) for row in entry.grid)
    else:
        lines.append(" ".join(_INIT_NAMES[b] for b in entry.init_row))
        lines.extend("c " + " ".join(str(q) for q in row) for row in entry.rows)
        lines.append(" ".join(_MEAS_NAMES[b] for b in entry.meas_row))
    return "\n".join(lines) + "\n"


def serialize_database(db: Database) -> str:
    """Canonical text: single spaces, no continuations, one blank line between entries."""
    return "\n".join(serialize_entry(db.entries[name]) for name in db.source_order)


def database_path(path: Optional[str] = None) -> str:
    return path or os.getenv("ICM_DATABASE") or str(DEFAULT_DATABASE)


def load_database(path: Optional[str] = None) -> Database:
    """Read the database at `path`, `ICM_DATABASE`, or the shipped seed database."""
    path = database_path(path)
    logger.info(f"Loading decomposition database from {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_database(f.read())
