"""Text formats for circuits: gate-list input files and `.circ` ICM listings."""

import logging
import re
from typing import Dict, List, Tuple

from app.services.circuit import (
    Circuit,
    Cnot,
    GateOp,
    InitBasis,
    MeasBasis,
    Measurement,
    NamedGate,
    order_measurements,
)
from app.services.errors import CircuitError
from app.services.helpers import strip_comment

logger = logging.getLogger(__name__)

_INIT_TOKENS = {b.value: b for b in (InitBasis.ZERO, InitBasis.PLUS, InitBasis.A, InitBasis.Y)}
_MEASURE_RE = re.compile(r"^(X|Z|ZX|XZ)(?:\(([\d,\s]*)\))?$")


def _qubit(token: str, line: int) -> int:
    try:
        q = int(token)
    except ValueError:
        raise CircuitError(f"qubit id must be an integer, got {token!r}", line)
    if q < 1:
        raise CircuitError(f"qubit ids start at 1, got {q}", line)
    return q


def parse_gate_list(text: str) -> Circuit:
    """Parse the `name qubit...` input format into a pre-ICM circuit.

    `cnot c t` becomes a CNOT; any other name becomes a named gate resolved later
    against the database. Qubit count is the largest id mentioned.
    """
    gates: List[GateOp] = []
    qubit_count = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        name, operands = tokens[0], [_qubit(t, number) for t in tokens[1:]]
        if not operands:
            raise CircuitError(f"gate {name} has no qubits", number)
        if len(set(operands)) != len(operands):
            raise CircuitError(f"gate {name} repeats a qubit", number)
        if name.lower() == "cnot":
            if len(operands) != 2:
                raise CircuitError("cnot takes exactly two qubits", number)
            gates.append(Cnot(*operands))
        else:
            gates.append(NamedGate(name, tuple(operands)))
        qubit_count = max(qubit_count, *operands)
    return Circuit(qubit_count=qubit_count, gates=tuple(gates))


def format_gate_list(circuit: Circuit) -> str:
    lines = []
    for gate in circuit.gates:
        if isinstance(gate, Cnot):
            lines.append(f"cnot {gate.control} {gate.target}")
        else:
            lines.append(" ".join([gate.name] + [str(q) for q in gate.qubits]))
    return "".join(line + "\n" for line in lines)


def _format_measurement(measurement: Measurement) -> str:
    basis = measurement.basis
    if basis in (MeasBasis.X, MeasBasis.Z):
        return basis.value
    if basis.conditional:
        return f"{basis.value}({','.join(str(d) for d in sorted(measurement.deps))})"
    raise CircuitError(f"measurement basis {basis.value} has no .circ spelling")


def emit_circ(circuit: Circuit) -> str:
    """Serialize an ICM circuit as `.circ` text.

    Inits come first in qubit order, then the CNOT array, then measurements in
    schedule order. Empty inits and measurements are configurable I/O and are not listed.
    """
    lines = []
    for q, basis in sorted(circuit.inits.items()):
        if basis != InitBasis.EMPTY:
            lines.append(f"init {q} {basis.value}")
    for index, gate in enumerate(circuit.gates):
        if not isinstance(gate, Cnot):
            raise CircuitError(f"cannot emit non-CNOT gate {gate.name} at index {index}")
        lines.append(f"cnot {gate.control} {gate.target}")
    for q, measurement in order_measurements(circuit):
        lines.append(f"measure {q} {_format_measurement(measurement)}")
    return "".join(line + "\n" for line in lines)


def parse_circ(text: str) -> Circuit:
    """Parse `.circ` text. Unlisted qubits are configurable inputs/outputs."""
    inits: Dict[int, InitBasis] = {}
    measurements: Dict[int, Measurement] = {}
    gates: List[Cnot] = []
    qubit_count = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        tokens = line.split(None, 2)
        command = tokens[0]
        if command == "init" and len(tokens) == 3:
            q = _qubit(tokens[1], number)
            if tokens[2] not in _INIT_TOKENS:
                raise CircuitError(f"unknown init basis {tokens[2]!r}", number)
            if q in inits:
                raise CircuitError(f"qubit {q} initialized twice", number)
            inits[q] = _INIT_TOKENS[tokens[2]]
            qubit_count = max(qubit_count, q)
        elif command == "cnot" and len(tokens) == 3:
            c, t = _qubit(tokens[1], number), _qubit(tokens[2], number)
            if c == t:
                raise CircuitError(f"CNOT control equals target ({c})", number)
            gates.append(Cnot(c, t))
            qubit_count = max(qubit_count, c, t)
        elif command == "measure" and len(tokens) == 3:
            q = _qubit(tokens[1], number)
            match = _MEASURE_RE.match(tokens[2].replace(" ", ""))
            if not match:
                raise CircuitError(f"unknown measurement basis {tokens[2]!r}", number)
            deps: Tuple[int, ...] = ()
            if match.group(2):
                deps = tuple(_qubit(d, number) for d in match.group(2).split(",") if d)
            if q in measurements:
                raise CircuitError(f"qubit {q} measured twice", number)
            measurements[q] = Measurement(MeasBasis(match.group(1)), deps)
            qubit_count = max(qubit_count, q, *deps)
        else:
            raise CircuitError(f"unrecognized line {line!r}", number)
    logger.debug(f"Parsed .circ with {qubit_count} qubits and {len(gates)} CNOTs")
    return Circuit(qubit_count=qubit_count, inits=inits, gates=tuple(gates), measurements=measurements)
