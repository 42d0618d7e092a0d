"""Rewrite engine: nicm expansion, ICM conversion and distillation inlining."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from app.services.circuit import (
    PRIMITIVE_GATES,
    Block,
    BlockKind,
    Circuit,
    Cnot,
    GateOp,
    InitBasis,
    MeasBasis,
    Measurement,
    NamedGate,
)
from app.services.database import Database, DecompEntry, DecompKind, GridMeasure
from app.services.errors import ConversionError, DatabaseError, DistillationError
from app.services.frame import derive_schedule
from app.services.helpers import GENERATOR_TOKENS, env_choice, env_int

logger = logging.getLogger(__name__)

TELEPORT_MODES = ("simple", "det")

# Frame rule of each teleportation entry: (kind, role-ordered entry columns, CNOTs before firing).
BLOCK_LAYOUTS = {
    "TGATE": [(BlockKind.T, (1, 2), 1)],
    "TDAG": [(BlockKind.TDAG, (1, 2), 1)],
    "TGATE_DET": [(BlockKind.T_DET, (1, 2, 3, 4, 5, 6), 6)],
    "TDAG_DET": [(BlockKind.TDAG_DET, (1, 2, 3, 4, 5, 6), 6)],
    "PGATE": [(BlockKind.P, (1, 2), 1)],
    "PDAG": [(BlockKind.PDAG, (1, 2), 1)],
    "HGATE": [(BlockKind.P, (1, 2), 1), (BlockKind.SQRTX, (2, 3), 2), (BlockKind.P, (3, 4), 3)],
}

DISTILLERS = {
    InitBasis.A: ("AA", BlockKind.DIST_A),
    InitBasis.Y: ("YY", BlockKind.DIST_Y),
}


@dataclass(frozen=True)
class ConversionOptions:
    teleport_mode: str = "simple"
    distillation_rounds: int = 0
    duplicate_distillers: int = 1

    def __post_init__(self):
        if self.teleport_mode not in TELEPORT_MODES:
            raise ValueError(f"teleport mode must be one of {TELEPORT_MODES}, got {self.teleport_mode!r}")
        if self.distillation_rounds < 0:
            raise ValueError("distillation rounds must be >= 0")
        if self.duplicate_distillers < 1:
            raise ValueError("duplicate distillers must be >= 1")

    @classmethod
    def from_env(cls) -> "ConversionOptions":
        return cls(
            teleport_mode=env_choice("ICM_TELEPORT_MODE", "simple", list(TELEPORT_MODES)),
            distillation_rounds=env_int("ICM_DISTILLATION_ROUNDS", 0),
            duplicate_distillers=env_int("ICM_DUPLICATE_DISTILLERS", 1),
        )

    def entry_name(self, gate: str) -> str:
        if self.teleport_mode == "det" and gate in ("TGATE", "TDAG"):
            return f"{gate}_DET"
        return gate


class AncillaAllocator:
    """Hands out fresh qubit ids after the highest id in use."""

    def __init__(self, next_id: int):
        self.next_id = next_id

    def allocate(self, count: int = 1) -> List[int]:
        ids = list(range(self.next_id, self.next_id + count))
        self.next_id += count
        return ids

    @property
    def qubit_count(self) -> int:
        return self.next_id - 1


def _primitive_name(name: str) -> Optional[str]:
    upper = name.upper()
    return upper if upper in PRIMITIVE_GATES else None


def expand_nicm(circuit: Circuit, db: Database) -> Circuit:
    """Replace every nicm gate by its grid until only primitives remain.

    Entry rows map onto the gate's operands in order; extra rows are ancillae
    prepared in |0> and measured in Z.

    Raises:
        ConversionError: missing entry, arity mismatch or substitution cycle.
    """
    allocator = AncillaAllocator(circuit.qubit_count + 1)
    inits = dict(circuit.inits)
    measurements = dict(circuit.measurements)
    out: List[GateOp] = []

    def expand(gate: GateOp, stack: Tuple[str, ...]):
        if isinstance(gate, Cnot):
            out.append(gate)
            return
        primitive = _primitive_name(gate.name)
        if primitive:
            if len(gate.qubits) != 1:
                raise ConversionError(f"{primitive} acts on one qubit, got {len(gate.qubits)}")
            out.append(NamedGate(primitive, gate.qubits))
            return
        try:
            entry = db.get(gate.name)
        except DatabaseError as e:
            raise ConversionError(f"unknown gate {gate.name!r}: {e}")
        if entry.kind != DecompKind.NICM:
            raise ConversionError(f"gate {gate.name!r} has a {entry.kind.value} entry, expected nicm")
        if entry.name in stack:
            raise ConversionError(f"substitution cycle: {' -> '.join(stack + (entry.name,))}")
        if entry.arity != len(gate.qubits):
            raise ConversionError(
                f"{entry.name} takes {entry.arity} qubits, got {len(gate.qubits)}"
            )
        rows = list(gate.qubits)
        for q in allocator.allocate(entry.ancilla_count):
            inits[q] = InitBasis.ZERO
            measurements[q] = Measurement(MeasBasis.Z)
            rows.append(q)
        for op in entry.grid_ops():
            if isinstance(op, GridMeasure):
                raise ConversionError(f"{entry.name} measures inside a gate decomposition")
            if isinstance(op, Cnot):
                out.append(Cnot(rows[op.control - 1], rows[op.target - 1]))
            else:
                expand(NamedGate(op.name, tuple(rows[r - 1] for r in op.qubits)), stack + (entry.name,))

    for gate in circuit.gates:
        expand(gate, ())
    logger.info(f"Expanded {len(circuit.gates)} gates into {len(out)} primitives")
    return Circuit(
        qubit_count=allocator.qubit_count,
        inits=inits,
        gates=tuple(out),
        measurements=measurements,
        inputs=circuit.inputs,
        outputs=circuit.outputs,
    )


class _Builder:
    """Mutable workspace for assembling an ICM circuit."""

    def __init__(self, db: Database, opts: ConversionOptions, qubit_count: int):
        self.db = db
        self.opts = opts
        self.allocator = AncillaAllocator(qubit_count + 1)
        self.inits: Dict[int, InitBasis] = {}
        self.measurements: Dict[int, Measurement] = {}
        self.gates: List[Cnot] = []
        self.blocks: List[Block] = []

    def instantiate(self, entry: DecompEntry, bound: Dict[int, int]) -> Dict[int, int]:
        """Place an icm/icmdist entry, binding some columns to existing qubits.

        Returns the column -> qubit map. Unbound columns get fresh ids in column order
        and take the entry's init; every column but the outputs takes its measurement.
        """
        columns = {}
        fresh = iter(self.allocator.allocate(entry.width - len(bound)))
        for col in range(1, entry.width + 1):
            columns[col] = bound[col] if col in bound else next(fresh)
        for col, basis in enumerate(entry.init_row, start=1):
            if col not in bound or basis != InitBasis.EMPTY:
                self.inits[columns[col]] = basis
        for col, basis in enumerate(entry.meas_row, start=1):
            if basis != MeasBasis.EMPTY:
                self.measurements[columns[col]] = Measurement(basis)
        start = len(self.gates)
        self.gates.extend(Cnot(columns[g.control], columns[g.target]) for g in entry.cnots)
        for kind, roles, fired_after in BLOCK_LAYOUTS.get(entry.name, []):
            self.blocks.append(Block(kind, tuple(columns[c] for c in roles), start + fired_after))
        return columns

    def teleport(self, gate: str, wire: int) -> int:
        """Apply a one-qubit primitive to `wire`; returns the wire carrying the result."""
        if gate in ("XGATE", "ZGATE"):
            self.blocks.append(Block(BlockKind(gate), (wire,), len(self.gates)))
            return wire
        name = self.opts.entry_name(gate)
        try:
            entry = self.db.get(name)
        except DatabaseError as e:
            raise ConversionError(f"no ICM implementation for {gate}: {e}")
        if entry.kind != DecompKind.ICM or entry.arity != 1:
            raise ConversionError(f"{name} must be a one-qubit icm entry")
        if name not in BLOCK_LAYOUTS:
            raise ConversionError(f"{name} has no frame rule")
        layout_width = max(c for _, roles, _ in BLOCK_LAYOUTS[name] for c in roles)
        if layout_width != entry.width:
            raise ConversionError(f"{name} has {entry.width} columns, its frame rule expects {layout_width}")
        columns = self.instantiate(entry, {entry.inputs[0]: wire})
        return columns[entry.outputs[0]]

    def apply_measurement_entry(self, token: str, wire: int) -> int:
        """Rewrite an intermediate measurement (MA, MY) through its nicm entry."""
        try:
            entry = self.db.get(token)
        except DatabaseError as e:
            raise DistillationError(f"no entry for measurement {token}: {e}")
        measured = False
        for op in entry.grid_ops():
            if isinstance(op, GridMeasure):
                self.measurements[wire] = Measurement(op.basis)
                measured = True
            elif isinstance(op, NamedGate):
                primitive = _primitive_name(op.name)
                if primitive is None:
                    raise DistillationError(f"{token} uses non-primitive gate {op.name}")
                wire = self.teleport(primitive, wire)
            else:
                raise DistillationError(f"{token} must act on a single qubit")
        if not measured:
            raise DistillationError(f"{token} entry does not end in a measurement")
        return wire


def convert_to_icm(circuit: Circuit, db: Database, opts: ConversionOptions) -> Circuit:
    """Replace every one-qubit primitive by its teleportation block.

    CNOTs are kept; the data wire moves to each block's output qubit. X and Z
    become Pauli-frame steps. Distillation is not applied here.

    Raises:
        ConversionError: a gate has no ICM implementation.
    """
    builder = _Builder(db, opts, circuit.qubit_count)
    builder.inits.update(circuit.inits)
    current = {q: q for q in range(1, circuit.qubit_count + 1)}
    for index, gate in enumerate(circuit.gates):
        if isinstance(gate, Cnot):
            builder.gates.append(Cnot(current[gate.control], current[gate.target]))
            continue
        primitive = _primitive_name(gate.name)
        if primitive is None:
            raise ConversionError(f"unconvertible gate {gate.name!r} at index {index}")
        q = gate.qubits[0]
        current[q] = builder.teleport(primitive, current[q])

    for q, m in circuit.measurements.items():
        builder.measurements[current[q]] = m
    icm = Circuit(
        qubit_count=builder.allocator.qubit_count,
        inits=builder.inits,
        gates=tuple(builder.gates),
        measurements=builder.measurements,
        inputs=circuit.inputs,
        outputs=tuple(current[q] for q in circuit.outputs),
        blocks=tuple(builder.blocks),
    )
    logger.info(
        f"Converted {len(circuit.gates)} gates on {circuit.qubit_count} qubits into "
        f"{len(icm.gates)} CNOTs on {icm.qubit_count} qubits"
    )
    return derive_schedule(icm)


def _distill_site(builder: _Builder, site: int, basis: InitBasis, copies: int):
    name, kind = DISTILLERS[basis]
    try:
        entry = builder.db.get(name)
    except DatabaseError as e:
        raise DistillationError(f"distillation of {basis.value} states needs entry {name}: {e}")
    if entry.kind != DecompKind.ICMDIST or len(entry.outputs) != 1:
        raise DistillationError(f"{name} must be an icmdist entry with one output")
    output_col = entry.outputs[0]

    outputs = []
    for copy in range(copies):
        bound = {output_col: site} if copies == 1 else {}
        columns = builder.instantiate(entry, bound)
        measured = []
        for col, token in enumerate(entry.meas_row, start=1):
            if token in (MeasBasis.A, MeasBasis.Y):
                measured.append(builder.apply_measurement_entry(f"M{token.value}", columns[col]))
            elif token != MeasBasis.EMPTY:
                measured.append(columns[col])
        builder.blocks.append(Block(kind, tuple(measured) + (columns[output_col],), len(builder.gates)))
        outputs.append(columns[output_col])

    if copies > 1:
        builder.inits[site] = InitBasis.ZERO
        for source in outputs:
            builder.gates.append(Cnot(source, site))
            builder.measurements[source] = Measurement(MeasBasis.XZ)
        builder.blocks.append(Block(BlockKind.JOIN, tuple(outputs) + (site,), len(builder.gates)))


def inline_distillation(icm: Circuit, db: Database, opts: ConversionOptions) -> Circuit:
    """Replace injected |A>/|Y> states by distillation circuits, round by round.

    Each round distills every |A> and |Y> initialization present, including those
    introduced by the previous round. The distiller prefix runs before the
    existing CNOT array. States still injected after the last round are recorded
    as the circuit's injection sites.

    Raises:
        DistillationError: a required distillation or measurement entry is missing.
    """
    circuit = icm
    for round_index in range(opts.distillation_rounds):
        sites = [q for q, b in sorted(circuit.inits.items()) if b in DISTILLERS]
        if not sites:
            break
        builder = _Builder(db, opts, circuit.qubit_count)
        builder.inits.update(circuit.inits)
        builder.measurements.update(circuit.measurements)
        for site in sites:
            _distill_site(builder, site, circuit.inits[site], opts.duplicate_distillers)

        shift = len(builder.gates)
        blocks = builder.blocks + [Block(b.kind, b.qubits, b.position + shift) for b in circuit.blocks]
        circuit = Circuit(
            qubit_count=builder.allocator.qubit_count,
            inits=builder.inits,
            gates=tuple(builder.gates) + circuit.gates,
            measurements=builder.measurements,
            inputs=circuit.inputs,
            outputs=circuit.outputs,
            blocks=tuple(blocks),
        )
        logger.info(
            f"Distillation round {round_index + 1}: {len(sites)} sites, "
            f"{circuit.qubit_count} qubits, {len(circuit.gates)} CNOTs"
        )

    if opts.distillation_rounds:
        injections = tuple(q for q, b in sorted(circuit.inits.items()) if b in DISTILLERS)
        circuit = Circuit(
            qubit_count=circuit.qubit_count,
            inits=circuit.inits,
            gates=circuit.gates,
            measurements=circuit.measurements,
            inputs=circuit.inputs,
            outputs=circuit.outputs,
            blocks=circuit.blocks,
            injections=injections,
        )
    return derive_schedule(circuit)


def expand_controlled_u(gate: NamedGate, abc: Optional[Sequence[Sequence[str]]],
                        phase: Optional[str] = None) -> Circuit:
    """Controlled-U as C, CNOT, B, CNOT, A on the target.

    `abc` holds the generator sequences (A, B, C) with U = e^{ia} A X B X C and
    ABC = I; `phase` names the one-qubit gate that restores e^{ia} on the control.
    """
    if not abc or len(abc) != 3:
        raise ConversionError(f"{gate.name}: controlled expansion needs A, B and C sequences")
    if len(gate.qubits) != 2:
        raise ConversionError(f"{gate.name}: controlled expansion needs (control, target)")
    control, target = gate.qubits
    a, b, c = abc

    def gates(sequence: Sequence[str]) -> List[GateOp]:
        try:
            return [NamedGate(GENERATOR_TOKENS[name], (target,)) for name in sequence]
        except KeyError as e:
            raise ConversionError(f"{gate.name}: unknown generator {e.args[0]!r}")

    ops: List[GateOp] = gates(c) + [Cnot(control, target)] + gates(b) + [Cnot(control, target)] + gates(a)
    if phase:
        ops.append(NamedGate(phase, (control,)))
    return Circuit(qubit_count=max(control, target), gates=tuple(ops))


class IcmCompiler:
    """Runs the rewrite stages with options taken from the environment."""

    def __init__(self, db: Database, opts: Optional[ConversionOptions] = None):
        self.db = db
        self.opts = opts or ConversionOptions.from_env()

    def process_raw(self, circuit: Circuit) -> Circuit:
        return expand_nicm(circuit, self.db)

    def convert(self, circuit: Circuit) -> Circuit:
        icm = convert_to_icm(circuit, self.db, self.opts)
        if self.opts.distillation_rounds:
            icm = inline_distillation(icm, self.db, self.opts)
        return icm
