"""Dense state-vector oracle for checking decompositions and teleportation blocks.

The state is kept as a rank-n tensor with one axis per live qubit; measured qubits
are projected out so their axes disappear.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np

from app.services.circuit import BlockKind, Circuit, Cnot, InitBasis, MeasBasis, order_measurements
from app.services.errors import NonUnitaryResult, QubitBudgetExceeded, SimulationError, ZeroProbabilityError
from app.services.frame import FrameResult, evaluate_frame
from app.services.helpers import GATE_MATRICES, TOKEN_GENERATORS, env_int

logger = logging.getLogger(__name__)

MAX_QUBITS = 16
ZERO_PROBABILITY = 1e-12
UNITARY_TOL = 1e-9

INIT_STATES = {
    InitBasis.ZERO: np.array([1, 0], dtype=complex),
    InitBasis.PLUS: np.array([1, 1], dtype=complex) / np.sqrt(2),
    InitBasis.A: np.array([1, np.exp(1j * np.pi / 4)], dtype=complex) / np.sqrt(2),
    InitBasis.Y: np.array([1, 1j], dtype=complex) / np.sqrt(2),
}

# Rotation taking each measurement basis onto Z.
BASIS_CHANGES = {
    MeasBasis.Z: [],
    MeasBasis.X: ["H"],
    MeasBasis.A: ["T", "H"],
    MeasBasis.Y: ["P", "H"],
}


class StateVector:
    """Amplitudes over a list of labelled qubits, first label most significant."""

    def __init__(self, tensor: np.ndarray, qubits: List[int]):
        self.tensor = tensor
        self.qubits = list(qubits)

    @classmethod
    def from_vector(cls, vector, qubits: List[int]) -> "StateVector":
        vector = np.asarray(vector, dtype=complex)
        if vector.size != 2 ** len(qubits):
            raise SimulationError(f"state has {vector.size} amplitudes, expected {2 ** len(qubits)}")
        return cls(vector.reshape((2,) * len(qubits)), qubits)

    def axis(self, q: int) -> int:
        try:
            return self.qubits.index(q)
        except ValueError:
            raise SimulationError(f"qubit {q} is not live")

    def append(self, q: int, amplitudes: np.ndarray):
        self.tensor = np.multiply.outer(self.tensor, amplitudes)
        self.qubits.append(q)

    def apply(self, matrix: np.ndarray, q: int):
        axis = self.axis(q)
        self.tensor = np.moveaxis(np.tensordot(matrix, self.tensor, axes=([1], [axis])), 0, axis)

    def cnot(self, control: int, target: int):
        c, t = self.axis(control), self.axis(target)
        index = [slice(None)] * self.tensor.ndim
        index[c] = 1
        index = tuple(index)
        flipped = np.flip(self.tensor[index], axis=t - (t > c)).copy()
        self.tensor = self.tensor.copy()
        self.tensor[index] = flipped

    def probability(self, q: int, outcome: int) -> float:
        branch = np.take(self.tensor, outcome, axis=self.axis(q))
        return float(np.sum(np.abs(branch) ** 2))

    def project(self, q: int, outcome: int) -> float:
        """Keep the `outcome` branch of a Z measurement; returns its probability."""
        axis = self.axis(q)
        branch = np.take(self.tensor, outcome, axis=axis)
        probability = float(np.sum(np.abs(branch) ** 2))
        if probability < ZERO_PROBABILITY:
            raise ZeroProbabilityError(q, outcome)
        self.tensor = branch / np.sqrt(probability)
        self.qubits.pop(axis)
        return probability

    def vector(self, order: Optional[List[int]] = None) -> np.ndarray:
        order = self.qubits if order is None else order
        axes = [self.axis(q) for q in order]
        if sorted(axes) != list(range(self.tensor.ndim)):
            raise SimulationError(f"readout order {order} does not cover live qubits {self.qubits}")
        return np.transpose(self.tensor, axes).reshape(-1)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.tensor) ** 2)))


def basis_vector(index: int, qubits: int) -> np.ndarray:
    vector = np.zeros(2 ** qubits, dtype=complex)
    vector[index] = 1
    return vector


@dataclass
class SimulationResult:
    state: np.ndarray
    acceptance: float
    outcomes: Dict[int, int]
    frame: Optional[FrameResult] = None


class Simulator:
    """Simulates circuits on at most `ICM_MAX_QUBITS` (never more than 16) qubits."""

    def __init__(self, seed: Optional[int] = None):
        self.max_qubits = min(env_int("ICM_MAX_QUBITS", MAX_QUBITS), MAX_QUBITS)
        self.rng = np.random.default_rng(env_int("ICM_SEED", 0) if seed is None else seed)

    def prepare(self, circuit: Circuit, input_state=None) -> StateVector:
        if circuit.qubit_count > self.max_qubits:
            raise QubitBudgetExceeded(circuit.qubit_count, self.max_qubits)
        inputs = list(circuit.inputs)
        if input_state is None:
            input_state = basis_vector(0, len(inputs))
        state = StateVector.from_vector(input_state, inputs)
        for q, basis in sorted(circuit.inits.items()):
            if q in inputs:
                continue
            if basis == InitBasis.EMPTY:
                basis = InitBasis.ZERO
            state.append(q, INIT_STATES[basis])
        return state

    def _preferred(self, circuit: Circuit, q: int, known: Mapping[int, int]) -> int:
        """Outcome the trivial policy asks for: block success, otherwise 0."""
        for block in circuit.blocks:
            if block.kind in (BlockKind.T, BlockKind.TDAG) and block.qubits[0] == q:
                x = evaluate_frame(circuit, known).x.get(q) or 0
                return int(block.kind == BlockKind.TDAG) ^ x
        return 0

    def simulate(self, circuit: Circuit, input_state=None, outcomes: Optional[Mapping[int, int]] = None,
                 frame: bool = True, policy: str = "trivial") -> SimulationResult:
        """Run a circuit, post-selecting assigned outcomes.

        Unassigned outcomes follow `policy`: "trivial" takes the block-success
        outcome (0 elsewhere) unless it is impossible, "sample" draws from the
        Born rule. With `frame` on, tracked Pauli corrections are applied to the
        outputs at readout.

        Raises:
            QubitBudgetExceeded: too many qubits for a dense simulation.
            ZeroProbabilityError: an assigned outcome cannot occur.
        """
        assigned = dict(outcomes or {})
        measured = set(circuit.measured_qubits())
        stray = sorted(set(assigned) - measured)
        if stray:
            raise SimulationError(f"outcomes assigned to unmeasured qubits {stray}")
        state = self.prepare(circuit, input_state)

        for index, gate in enumerate(circuit.gates):
            if isinstance(gate, Cnot):
                state.cnot(gate.control, gate.target)
            elif gate.name in TOKEN_GENERATORS:
                state.apply(GATE_MATRICES[TOKEN_GENERATORS[gate.name]], gate.qubits[0])
            else:
                raise SimulationError(f"cannot simulate gate {gate.name} at index {index}")

        known: Dict[int, int] = {}
        acceptance = 1.0
        for q, measurement in order_measurements(circuit):
            basis = measurement.basis
            if basis.conditional:
                basis = evaluate_frame(circuit, known).bases.get(q)
                if basis is None:
                    raise SimulationError(f"basis of qubit {q} is not determined by earlier outcomes")
            for name in BASIS_CHANGES[basis]:
                state.apply(GATE_MATRICES[name], q)
            if q in assigned:
                outcome = assigned[q]
            elif policy == "sample":
                outcome = int(self.rng.random() < state.probability(q, 1))
            else:
                outcome = self._preferred(circuit, q, known)
                if state.probability(q, outcome) < ZERO_PROBABILITY:
                    outcome ^= 1
            acceptance *= state.project(q, outcome)
            known[q] = outcome

        result = evaluate_frame(circuit, known) if circuit.blocks else None
        if frame and result is not None:
            for q in circuit.outputs:
                x, z = result.correction(q)
                if x is None or z is None:
                    raise SimulationError(f"frame of output {q} is undetermined")
                if x:
                    state.apply(GATE_MATRICES["X"], q)
                if z:
                    state.apply(GATE_MATRICES["Z"], q)
        return SimulationResult(state.vector(list(circuit.outputs)), acceptance, known, result)

    def circuit_unitary(self, circuit: Circuit, outcomes: Optional[Mapping[int, int]] = None,
                        frame: bool = True) -> np.ndarray:
        """Matrix from the circuit inputs to its outputs under fixed outcomes.

        Outcomes not given are fixed once by a trivial-policy run on the uniform
        superposition, then every computational-basis input is simulated with them.

        Raises:
            NonUnitaryResult: the post-selected map is not unitary.
        """
        n_in, n_out = len(circuit.inputs), len(circuit.outputs)
        if n_in != n_out:
            raise NonUnitaryResult(f"circuit maps {n_in} inputs to {n_out} outputs")
        dim = 2 ** n_in
        reference = self.simulate(circuit, np.ones(dim) / np.sqrt(dim), outcomes, frame=frame)
        fixed = dict(reference.outcomes)

        columns = []
        acceptances = []
        for index in range(dim):
            try:
                run = self.simulate(circuit, basis_vector(index, n_in), fixed, frame=frame)
            except ZeroProbabilityError:
                columns.append(np.zeros(dim, dtype=complex))
                acceptances.append(0.0)
                continue
            columns.append(run.state * np.sqrt(run.acceptance))
            acceptances.append(run.acceptance)
        mean = float(np.mean(acceptances))
        if mean < ZERO_PROBABILITY:
            raise NonUnitaryResult("every basis input was rejected")
        matrix = np.array(columns).T / np.sqrt(mean)
        error = float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim))))
        if error > UNITARY_TOL:
            raise NonUnitaryResult(f"post-selected map deviates from unitary by {error:.3g}")
        logger.debug(f"circuit_unitary: {dim}x{dim}, acceptance {mean:.4f}")
        return matrix
