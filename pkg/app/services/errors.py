"""Exception hierarchy shared by the compiler services."""

from typing import Optional, Sequence


class IcmError(Exception):
    """Base class for every error raised by the compiler."""


class CircuitError(IcmError):
    """Ill-formed circuit or unparsable circuit text."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScheduleCycleError(IcmError):
    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(q) for q in self.cycle)
        super().__init__(f"measurement schedule contains a cycle: {path}")


class DatabaseError(IcmError):
    """Malformed decomposition database text or a failed lookup."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RecognitionError(IcmError):
    """Malformed unitary specification."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NotRepresentable(IcmError):
    def __init__(self, name: str, max_len: int):
        self.name = name
        self.max_len = max_len
        super().__init__(f"{name}: no generator sequence of length <= {max_len} matches")


class ApproximationUnavailable(IcmError, NotImplementedError):
    """Raised by the default approximation hook."""


class ConversionError(IcmError):
    pass


class DistillationError(IcmError):
    pass


class GeometryError(IcmError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SimulationError(IcmError):
    pass


class QubitBudgetExceeded(SimulationError):
    def __init__(self, qubits: int, limit: int):
        self.qubits = qubits
        self.limit = limit
        super().__init__(f"circuit needs {qubits} qubits, simulator limit is {limit}")


class ZeroProbabilityError(SimulationError):
    def __init__(self, qubit: int, outcome: int):
        self.qubit = qubit
        self.outcome = outcome
        super().__init__(f"post-selecting outcome {outcome} on qubit {qubit} has zero probability")


class NonUnitaryResult(SimulationError):
    pass
