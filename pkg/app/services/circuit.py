"""Circuit model shared by every compiler stage.

A circuit is a fixed set of 1-based qubits, each with one initialization and one
measurement annotation, and an ordered gate list. Pre-ICM circuits carry named gates;
ICM circuits carry CNOTs only plus the block program used for Pauli-frame tracking.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import networkx as nx

from app.services.errors import CircuitError, ScheduleCycleError

logger = logging.getLogger(__name__)


class InitBasis(Enum):
    ZERO = "0"
    PLUS = "+"
    A = "A"
    Y = "Y"
    EMPTY = "EMPTY"


class MeasBasis(Enum):
    X = "X"
    Z = "Z"
    ZX = "ZX"
    XZ = "XZ"
    A = "A"
    Y = "Y"
    EMPTY = "EMPTY"

    @property
    def conditional(self) -> bool:
        return self in (MeasBasis.ZX, MeasBasis.XZ)


ICM_INITS = frozenset(InitBasis)
ICM_MEASUREMENTS = frozenset({MeasBasis.X, MeasBasis.Z, MeasBasis.ZX, MeasBasis.XZ, MeasBasis.EMPTY})

T_GATES = frozenset({"TGATE", "TDAG"})
PRIMITIVE_GATES = frozenset({"TGATE", "TDAG", "HGATE", "PGATE", "PDAG", "XGATE", "ZGATE"})


class BlockKind(Enum):
    """Frame-tracking rule attached to a group of qubits of an ICM circuit."""
    P = "P"
    PDAG = "PDAG"
    SQRTX = "SQRTX"
    T = "T"
    TDAG = "TDAG"
    T_DET = "T_DET"
    TDAG_DET = "TDAG_DET"
    DIST_A = "DIST_A"
    DIST_Y = "DIST_Y"
    JOIN = "JOIN"
    XGATE = "XGATE"
    ZGATE = "ZGATE"


@dataclass(frozen=True)
class Measurement:
    basis: MeasBasis
    deps: Tuple[int, ...] = ()


EMPTY_MEASUREMENT = Measurement(MeasBasis.EMPTY)


@dataclass(frozen=True)
class Cnot:
    control: int
    target: int

    @property
    def qubits(self) -> Tuple[int, int]:
        return (self.control, self.target)


@dataclass(frozen=True)
class NamedGate:
    name: str
    qubits: Tuple[int, ...]


GateOp = Union[Cnot, NamedGate]


@dataclass(frozen=True)
class Block:
    """A teleportation or distillation group.

    ``qubits`` is role-ordered (data input first, output last) and ``position``
    is the number of gates executed before the block's frame rule fires.
    """
    kind: BlockKind
    qubits: Tuple[int, ...]
    position: int


@dataclass(frozen=True)
class Circuit:
    qubit_count: int
    inits: Dict[int, InitBasis] = field(default_factory=dict)
    gates: Tuple[GateOp, ...] = ()
    measurements: Dict[int, Measurement] = field(default_factory=dict)
    inputs: Optional[Tuple[int, ...]] = None
    outputs: Optional[Tuple[int, ...]] = None
    blocks: Tuple[Block, ...] = ()
    injections: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.qubit_count < 0:
            raise CircuitError(f"negative qubit count {self.qubit_count}")
        qubits = range(1, self.qubit_count + 1)
        for q in list(self.inits) + list(self.measurements):
            if q not in qubits:
                raise CircuitError(f"qubit {q} outside 1..{self.qubit_count}")
        for index, gate in enumerate(self.gates):
            for q in gate.qubits:
                if q not in qubits:
                    raise CircuitError(f"gate {index} references unknown qubit {q}")
            if isinstance(gate, Cnot) and gate.control == gate.target:
                raise CircuitError(f"gate {index}: CNOT control equals target ({gate.control})")
            if isinstance(gate, NamedGate) and len(set(gate.qubits)) != len(gate.qubits):
                raise CircuitError(f"gate {index}: {gate.name} repeats a qubit")

        inits = {q: self.inits.get(q, InitBasis.EMPTY) for q in qubits}
        measurements = {q: self.measurements.get(q, EMPTY_MEASUREMENT) for q in qubits}
        object.__setattr__(self, "inits", inits)
        object.__setattr__(self, "measurements", measurements)
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "injections", tuple(self.injections))
        if self.inputs is None:
            object.__setattr__(self, "inputs", tuple(q for q in qubits if inits[q] == InitBasis.EMPTY))
        if self.outputs is None:
            object.__setattr__(
                self, "outputs", tuple(q for q in qubits if measurements[q].basis == MeasBasis.EMPTY)
            )

    @property
    def schedule(self) -> List[Tuple[int, int]]:
        """Dependency edges (earlier, later) of the measurement partial order."""
        return [(d, q) for q, m in sorted(self.measurements.items()) for d in m.deps]

    @property
    def is_icm(self) -> bool:
        return all(isinstance(g, Cnot) for g in self.gates)

    def measured_qubits(self) -> List[int]:
        return [q for q, m in sorted(self.measurements.items()) if m.basis != MeasBasis.EMPTY]


IcmCircuit = Circuit


@dataclass(frozen=True)
class CircuitStats:
    t_count: int
    t_depth: int
    qubit_count: int
    gate_count: int

    def summary(self) -> str:
        return (f"t_count={self.t_count} t_depth={self.t_depth} "
                f"qubits={self.qubit_count} gates={self.gate_count}")


@dataclass
class ValidationReport:
    ok: bool = True
    violations: List[str] = field(default_factory=list)

    def add(self, violation: str):
        self.ok = False
        self.violations.append(violation)


def pre_icm_circuit(qubit_count: int, gates) -> Circuit:
    """Circuit whose qubits are all configurable inputs and outputs."""
    return Circuit(qubit_count=qubit_count, gates=tuple(gates))


def measurement_graph(circuit: Circuit) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(circuit.measured_qubits())
    graph.add_edges_from(circuit.schedule)
    return graph


def validate_icm(circuit: Circuit) -> ValidationReport:
    """Check the ICM contract: CNOT-only interior, ICM bases, acyclic schedule."""
    report = ValidationReport()
    for index, gate in enumerate(circuit.gates):
        if not isinstance(gate, Cnot):
            report.add(f"non-CNOT interior gate at index {index} ({gate.name})")
    for q, basis in sorted(circuit.inits.items()):
        if basis not in ICM_INITS:
            report.add(f"qubit {q}: initialization {basis.value} is not an ICM basis")
    for q, measurement in sorted(circuit.measurements.items()):
        if measurement.basis not in ICM_MEASUREMENTS:
            report.add(f"qubit {q}: measurement {measurement.basis.value} is not an ICM basis")
        for d in measurement.deps:
            if circuit.measurements.get(d, EMPTY_MEASUREMENT).basis == MeasBasis.EMPTY:
                report.add(f"qubit {q}: depends on unmeasured qubit {d}")

    graph = measurement_graph(circuit)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = [edge[0] for edge in nx.find_cycle(graph)]
        report.add(f"measurement schedule has a cycle through qubits {cycle}")
    return report


def order_measurements(circuit: Circuit) -> List[Tuple[int, Measurement]]:
    """Time-order the measurements.

    Qubits are grouped by dependency generation; inside one generation the lower id
    goes first. This is one valid linear extension of the dependency order but not
    the smallest-id-first Kahn order: a low id whose dependency sits in a later
    generation waits for that whole generation. Empty (configurable output)
    measurements are not listed.

    Raises:
        ScheduleCycleError: the dependency edges contain a cycle.
    """
    graph = measurement_graph(circuit)
    try:
        generations = list(nx.topological_generations(graph))
    except nx.NetworkXUnfeasible:
        cycle = [edge[0] for edge in nx.find_cycle(graph)]
        logger.error(f"Measurement schedule cycle: {cycle}")
        raise ScheduleCycleError(cycle)
    ordered = []
    for generation in generations:
        for q in sorted(generation):
            if circuit.measurements.get(q, EMPTY_MEASUREMENT).basis != MeasBasis.EMPTY:
                ordered.append((q, circuit.measurements[q]))
    return ordered


def compute_stats(circuit: Circuit) -> CircuitStats:
    """T-count and T-depth by a single chain scan.

    A TGATE/TDAG named gate adds one to its qubit's T-depth. In ICM form the first
    CNOT leaving an |A> ancilla is a T coupling and advances both qubits past their
    common maximum. Every other gate synchronizes its qubits to their maximum.
    """
    depth = [0] * (circuit.qubit_count + 1)
    used = set()
    t_count = 0
    for gate in circuit.gates:
        if isinstance(gate, Cnot):
            c, t = gate.control, gate.target
            level = max(depth[c], depth[t])
            if circuit.inits[c] == InitBasis.A and c not in used:
                t_count += 1
                level += 1
            depth[c] = depth[t] = level
            used.update((c, t))
        elif gate.name in T_GATES:
            t_count += 1
            depth[gate.qubits[0]] += 1
            used.add(gate.qubits[0])
        else:
            level = max(depth[q] for q in gate.qubits)
            for q in gate.qubits:
                depth[q] = level
            used.update(gate.qubits)
    return CircuitStats(
        t_count=t_count,
        t_depth=max(depth) if circuit.qubit_count else 0,
        qubit_count=circuit.qubit_count,
        gate_count=len(circuit.gates),
    )


def relabel(circuit: Circuit, mapping: Dict[int, int]) -> Circuit:
    """Rename qubits with a bijection onto 1..qubit_count."""
    if sorted(mapping) != list(range(1, circuit.qubit_count + 1)) or \
            sorted(mapping.values()) != list(range(1, circuit.qubit_count + 1)):
        raise CircuitError("relabeling must be a permutation of 1..qubit_count")

    def gate(g: GateOp) -> GateOp:
        if isinstance(g, Cnot):
            return Cnot(mapping[g.control], mapping[g.target])
        return NamedGate(g.name, tuple(mapping[q] for q in g.qubits))

    return Circuit(
        qubit_count=circuit.qubit_count,
        inits={mapping[q]: b for q, b in circuit.inits.items()},
        gates=tuple(gate(g) for g in circuit.gates),
        measurements={
            mapping[q]: Measurement(m.basis, tuple(mapping[d] for d in m.deps))
            for q, m in circuit.measurements.items()
        },
        inputs=tuple(mapping[q] for q in circuit.inputs),
        outputs=tuple(mapping[q] for q in circuit.outputs),
        blocks=tuple(Block(b.kind, tuple(mapping[q] for q in b.qubits), b.position) for b in circuit.blocks),
        injections=tuple(mapping[q] for q in circuit.injections),
    )
