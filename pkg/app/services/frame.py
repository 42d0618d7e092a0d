"""Pauli-frame tracking for ICM circuits.

The block program of an ICM circuit says which qubits form each teleportation or
distillation group. Walking the CNOT array with a per-qubit (x, z) record and firing
each block's rule gives the readout corrections, the realized basis of every
conditional measurement, the Simple-mode T blocks that still owe a P correction and
the distillations that were rejected. Unknown outcomes propagate as None.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, FrozenSet, List, Mapping, Optional, Set, Tuple

from app.services.circuit import Block, BlockKind, Circuit, Cnot, MeasBasis, Measurement

logger = logging.getLogger(__name__)

Bit = Optional[int]

_DISTILLERS = frozenset({BlockKind.DIST_A, BlockKind.DIST_Y})


def _xor(*bits: Bit) -> Bit:
    value = 0
    for bit in bits:
        if bit is None:
            return None
        value ^= bit
    return value


def simplex_rows(length: int) -> List[int]:
    """Check rows of a length 2^k - 1 distiller: positions whose index has bit b set.

    Bitmasks carry position j at bit j - 1.
    """
    return [sum(1 << (j - 1) for j in range(1, length + 1) if j >> b & 1)
            for b in range(length.bit_length())]


@lru_cache(maxsize=None)
def code_space(length: int) -> FrozenSet[int]:
    """Outcome patterns with a trivial syndrome (even overlap with every check row)."""
    rows = simplex_rows(length)
    return frozenset(
        word for word in range(1 << length)
        if all(bin(word & row).count("1") % 2 == 0 for row in rows)
    )


def syndrome_ok(outcomes: List[int]) -> bool:
    mask = sum(bit << i for i, bit in enumerate(outcomes))
    return mask in code_space(len(outcomes))


def distiller_correction(kind: BlockKind, parity):
    """Readout frame (x, z) of a distiller output given the parity of its outcomes.

    The |A> distiller leaves X Z^parity on its output, the |Y> distiller Z^(1+parity).
    Works elementwise on numpy arrays of parities.
    """
    if kind == BlockKind.DIST_A:
        return 1, parity
    return 0, 1 ^ parity


@dataclass
class FrameResult:
    x: Dict[int, Bit] = field(default_factory=dict)
    z: Dict[int, Bit] = field(default_factory=dict)
    bases: Dict[int, Optional[MeasBasis]] = field(default_factory=dict)
    effective: Dict[int, Bit] = field(default_factory=dict)
    pending: List[int] = field(default_factory=list)
    rejected: List[int] = field(default_factory=list)
    join_failed: bool = False

    def correction(self, qubit: int) -> Tuple[Bit, Bit]:
        return self.x.get(qubit, 0), self.z.get(qubit, 0)

    @property
    def success(self) -> bool:
        return not self.pending and not self.rejected and not self.join_failed


class FrameWalk:
    """One pass over the CNOT array with partially known outcomes."""

    def __init__(self, circuit: Circuit, outcomes: Mapping[int, int]):
        self.circuit = circuit
        self.outcomes = outcomes
        qubits = range(1, circuit.qubit_count + 1)
        self.result = FrameResult(x={q: 0 for q in qubits}, z={q: 0 for q in qubits})
        self.distill_ok: Dict[int, Optional[bool]] = {}
        governed = {q for b in circuit.blocks if b.kind in (BlockKind.T_DET, BlockKind.TDAG_DET)
                    for q in b.qubits[1:5]}
        governed |= {q for b in circuit.blocks if b.kind == BlockKind.JOIN for q in b.qubits[:-1]}
        for q, m in circuit.measurements.items():
            if m.basis == MeasBasis.EMPTY:
                continue
            if not m.basis.conditional:
                self.result.bases[q] = m.basis
            elif q not in governed:
                self.result.bases[q] = self._parity_basis(m)

    def _parity_basis(self, measurement: Measurement) -> Optional[MeasBasis]:
        parity = _xor(*(self.outcomes.get(d) for d in measurement.deps))
        if parity is None:
            return None
        first, second = (MeasBasis.Z, MeasBasis.X) if measurement.basis == MeasBasis.ZX else (MeasBasis.X, MeasBasis.Z)
        return first if parity else second

    def effective(self, q: int) -> Bit:
        """Raw outcome corrected by the frame component that flips it."""
        basis = self.result.bases.get(q)
        raw = self.outcomes.get(q)
        if basis is None or raw is None:
            return None
        component = self.result.x[q] if basis == MeasBasis.Z else self.result.z[q]
        return _xor(raw, component)

    def flip(self, q: int, dx: Bit = 0, dz: Bit = 0):
        self.result.x[q] = _xor(self.result.x[q], dx)
        self.result.z[q] = _xor(self.result.z[q], dz)

    def cnot(self, gate: Cnot):
        x, z = self.result.x, self.result.z
        x[gate.target] = _xor(x[gate.target], x[gate.control])
        z[gate.control] = _xor(z[gate.control], z[gate.target])

    def fire(self, block: Block):
        kind, qs = block.kind, block.qubits
        if kind in (BlockKind.XGATE, BlockKind.ZGATE):
            self.flip(qs[0], int(kind == BlockKind.XGATE), int(kind == BlockKind.ZGATE))
        elif kind in (BlockKind.P, BlockKind.PDAG):
            m = self.effective(qs[0])
            self.flip(qs[1], m, _xor(m, int(kind == BlockKind.PDAG)))
        elif kind == BlockKind.SQRTX:
            m = self.effective(qs[0])
            self.flip(qs[1], _xor(1, m), m)
        elif kind in (BlockKind.T, BlockKind.TDAG):
            m = self.effective(qs[0])
            self.flip(qs[1], m, 0)
            if m is not None and m != int(kind == BlockKind.TDAG):
                self.result.pending.append(qs[1])
        elif kind in (BlockKind.T_DET, BlockKind.TDAG_DET):
            self._fire_deterministic(block)
        elif kind in _DISTILLERS:
            self._fire_distiller(block)
        elif kind == BlockKind.JOIN:
            self._fire_join(block)

    def _fire_deterministic(self, block: Block):
        w, q2, q3, q4, q5, out = block.qubits
        dagger = int(block.kind == BlockKind.TDAG_DET)
        e = self.effective(w)
        c = _xor(e, dagger)
        bases = self.result.bases
        if c is None:
            for q in (q2, q3, q4, q5):
                bases[q] = None
            self.flip(out, None, None)
            return
        bases[q2] = bases[q5] = MeasBasis.Z if c else MeasBasis.X
        bases[q3] = bases[q4] = MeasBasis.X if c else MeasBasis.Z
        o2, o3, o4, o5 = (self.effective(q) for q in (q2, q3, q4, q5))
        if c:
            self.flip(out, _xor(e, o2, o5), _xor(e, o2, o3, o4, dagger))
        else:
            self.flip(out, _xor(e, o3, o4), _xor(o2, o5))

    def _fire_distiller(self, block: Block):
        measured, out = block.qubits[:-1], block.qubits[-1]
        outcomes = [self.effective(q) for q in measured]
        if any(o is None for o in outcomes):
            self.distill_ok[out] = None
            self.flip(out, None, None)
            return
        self.flip(out, *distiller_correction(block.kind, sum(outcomes) % 2))
        ok = syndrome_ok(outcomes) and not any(q in self.result.pending for q in measured)
        self.distill_ok[out] = ok
        if not ok:
            self.result.rejected.append(out)

    def _fire_join(self, block: Block):
        sources, out = block.qubits[:-1], block.qubits[-1]
        status = [self.distill_ok.get(s, True) for s in sources]
        bases = self.result.bases
        if any(ok is None for ok in status):
            for s in sources:
                bases[s] = None
            self.flip(out, None, None)
            return
        chosen = next((s for s, ok in zip(sources, status) if ok), None)
        if chosen is None:
            self.result.join_failed = True
        else:
            # A surviving copy covers the rejected ones.
            self.result.rejected = [q for q in self.result.rejected if q not in sources]
        for s in sources:
            bases[s] = MeasBasis.X if s == chosen else MeasBasis.Z
        parity = _xor(*(self.effective(s) for s in sources if s != chosen))
        self.flip(out, parity, self.effective(chosen) if chosen is not None else 0)

    def run(self) -> FrameResult:
        blocks = sorted(self.circuit.blocks, key=lambda b: b.position)
        index = 0
        gates = self.circuit.gates
        for position in range(len(gates) + 1):
            while index < len(blocks) and blocks[index].position == position:
                self.fire(blocks[index])
                index += 1
            if position < len(gates):
                self.cnot(gates[position])
        for q in self.result.bases:
            self.result.effective[q] = self.effective(q)
        return self.result


def evaluate_frame(circuit: Circuit, outcomes: Mapping[int, int]) -> FrameResult:
    """Evaluate the block program of `circuit` against raw measurement outcomes."""
    return FrameWalk(circuit, outcomes).run()


def derive_schedule(circuit: Circuit) -> Circuit:
    """Attach measurement dependencies implied by the block program.

    Each qubit carries the set of measured qubits its X and Z frame components
    may depend on; the set only grows, so the edges are conservative.
    """
    xd: Dict[int, Set[int]] = {q: set() for q in range(1, circuit.qubit_count + 1)}
    zd: Dict[int, Set[int]] = {q: set() for q in range(1, circuit.qubit_count + 1)}
    deps: Dict[int, Set[int]] = {}
    syndrome: Dict[int, Set[int]] = {}

    def both(q: int) -> Set[int]:
        return {q} | xd[q] | zd[q]

    blocks = sorted(circuit.blocks, key=lambda b: b.position)
    index = 0
    for position in range(len(circuit.gates) + 1):
        while index < len(blocks) and blocks[index].position == position:
            block = blocks[index]
            index += 1
            kind, qs = block.kind, block.qubits
            if kind in (BlockKind.P, BlockKind.PDAG, BlockKind.T, BlockKind.TDAG):
                source = {qs[0]} | xd[qs[0]]
                if kind in (BlockKind.T, BlockKind.TDAG):
                    deps[qs[0]] = set(xd[qs[0]])
                xd[qs[1]] |= source
                if kind in (BlockKind.P, BlockKind.PDAG):
                    zd[qs[1]] |= source
            elif kind == BlockKind.SQRTX:
                source = {qs[0]} | zd[qs[0]]
                xd[qs[1]] |= source
                zd[qs[1]] |= source
            elif kind in (BlockKind.T_DET, BlockKind.TDAG_DET):
                anchor = {qs[0]} | xd[qs[0]]
                gathered = set(anchor)
                for q in qs[1:5]:
                    deps[q] = set(anchor)
                    gathered |= both(q)
                xd[qs[5]] |= gathered
                zd[qs[5]] |= gathered
            elif kind in _DISTILLERS:
                gathered = set()
                for q in qs[:-1]:
                    gathered |= {q} | zd[q]
                syndrome[qs[-1]] = gathered
                xd[qs[-1]] |= gathered
                zd[qs[-1]] |= gathered
            elif kind == BlockKind.JOIN:
                checks = set()
                for s in qs[:-1]:
                    checks |= syndrome.get(s, set())
                gathered = set(checks)
                for s in qs[:-1]:
                    deps[s] = set(checks)
                    gathered |= both(s)
                xd[qs[-1]] |= gathered
                zd[qs[-1]] |= gathered
        if position < len(circuit.gates):
            gate = circuit.gates[position]
            xd[gate.target] |= xd[gate.control]
            zd[gate.control] |= zd[gate.target]

    measurements = dict(circuit.measurements)
    for q, found in deps.items():
        m = measurements[q]
        if m.basis == MeasBasis.EMPTY:
            continue
        measurements[q] = Measurement(m.basis, tuple(sorted(found - {q})))
    return replace(circuit, measurements=measurements)
