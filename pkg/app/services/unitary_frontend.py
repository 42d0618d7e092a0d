"""Gate recognition for the `decompose` command.

Reads single-qubit unitary specifications and finds exact Clifford+T spellings by a
breadth-first search over generator products. Anything not found within the length
bound goes to the approximation hook.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from app.services.database import DecompEntry, DecompKind
from app.services.errors import ApproximationUnavailable, NotRepresentable, RecognitionError
from app.services.helpers import (
    GATE_MATRICES,
    GENERATOR_TOKENS,
    canonical_phase,
    env_float,
    env_int,
    phase_distance,
    sequence_matrix,
    strip_comment,
)

logger = logging.getLogger(__name__)

GENERATORS = ("H", "P", "Pdag", "T", "Tdag", "X", "Z")
UNITARITY_TOL = 1e-9


@dataclass(eq=False)
class UnitarySpec:
    name: str
    matrix: np.ndarray


@dataclass
class RecognitionResult:
    sequence: List[str] = field(default_factory=list)
    phase: complex = 1.0
    residual: float = 0.0

    def matrix(self) -> np.ndarray:
        return self.phase * sequence_matrix(self.sequence)


def unitarity_error(matrix: np.ndarray) -> float:
    """Max-norm of U^dagger U - I."""
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))))


def _polar_entry(line: str, number: int) -> complex:
    tokens = line.split()
    sign = 1.0
    if tokens and tokens[0] in ("-", "+"):
        sign = -1.0 if tokens[0] == "-" else 1.0
        tokens = tokens[1:]
    if len(tokens) != 2:
        raise RecognitionError(f"expected '[-] radius angle', got {line!r}", number)
    try:
        radius, angle = float(tokens[0]), float(tokens[1])
    except ValueError:
        raise RecognitionError(f"non-numeric matrix entry {line!r}", number)
    return sign * radius * complex(math.cos(angle), math.sin(angle))


def parse_unitary_specs(text: str) -> List[UnitarySpec]:
    """Parse a unitary specification file.

    The first line is the number of gates; each gate is a name line followed by the
    four matrix entries in row-major order, written in polar form with angles in
    radians and an optional sign token before the radius.

    Raises:
        RecognitionError: count mismatch, malformed entry or non-unitary matrix.
    """
    lines = [(n, strip_comment(raw)) for n, raw in enumerate(text.splitlines(), start=1)]
    lines = [(n, line) for n, line in lines if line]
    if not lines:
        return []
    header_line, header = lines[0]
    try:
        count = int(header)
    except ValueError:
        raise RecognitionError(f"gate count must be an integer, got {header!r}", header_line)

    body = lines[1:]
    if len(body) != 5 * count:
        raise RecognitionError(
            f"header announces {count} gates but the body holds {len(body)} lines "
            f"({5 * count} expected)", header_line
        )
    specs = []
    for index in range(count):
        name_line, name = body[5 * index]
        if len(name.split()) != 1:
            raise RecognitionError(f"gate name must be a single token, got {name!r}", name_line)
        entries = [_polar_entry(line, n) for n, line in body[5 * index + 1:5 * index + 5]]
        matrix = np.array(entries, dtype=complex).reshape(2, 2)
        error = unitarity_error(matrix)
        if error > UNITARITY_TOL:
            raise RecognitionError(f"{name} is not unitary (|U^dagger U - I| = {error:.3g})", name_line)
        specs.append(UnitarySpec(name, matrix))
    return specs


def _key(matrix: np.ndarray) -> Tuple[float, ...]:
    canonical = canonical_phase(matrix)
    return tuple(np.round(canonical.view(float).ravel(), 8) + 0.0)


def _match(sequence: List[str], matrix: np.ndarray, target: np.ndarray, tol: float) -> Optional[RecognitionResult]:
    residual = phase_distance(matrix, target)
    if residual > tol:
        return None
    overlap = np.trace(matrix.conj().T @ target)
    return RecognitionResult(list(sequence), complex(overlap / abs(overlap)), residual)


def recognize_unitary(spec: UnitarySpec, max_len: int = 12, tol: float = 1e-9) -> RecognitionResult:
    """Shortest generator sequence equal to the spec's matrix up to global phase.

    Sequences are explored in order of length and, within one length, in generator
    order H < P < Pdag < T < Tdag < X < Z. Each matrix keeps its first spelling.

    Raises:
        NotRepresentable: nothing of length <= max_len matches within tol.
    """
    target = spec.matrix
    identity = np.eye(2, dtype=complex)
    found = _match([], identity, target, tol)
    if found:
        return found

    seen = {_key(identity)}
    frontier: List[Tuple[List[str], np.ndarray]] = [([], identity)]
    for length in range(1, max_len + 1):
        next_frontier = []
        for sequence, matrix in frontier:
            for name in GENERATORS:
                product = GATE_MATRICES[name] @ matrix
                key = _key(product)
                if key in seen:
                    continue
                seen.add(key)
                candidate = sequence + [name]
                found = _match(candidate, product, target, tol)
                if found:
                    logger.debug(f"Recognized {spec.name} as {candidate} after {len(seen)} products")
                    return found
                next_frontier.append((candidate, product))
        frontier = next_frontier
        if not frontier:
            break
    raise NotRepresentable(spec.name, max_len)


def emit_nicm_entry(name: str, result: RecognitionResult) -> DecompEntry:
    """Single-qubit nicm entry spelling the sequence in application order."""
    tokens = tuple(GENERATOR_TOKENS[g] for g in result.sequence) or ("WIRE",)
    return DecompEntry(name=name, kind=DecompKind.NICM, ancilla_count=0, grid=(tokens,))


def approximation_hook(spec: UnitarySpec, epsilon: float) -> List[str]:
    """Approximate synthesis entry point; no algorithm is bundled."""
    raise ApproximationUnavailable(
        f"{spec.name}: approximate synthesis to epsilon={epsilon} is not available"
    )


class UnitaryRecognizer:
    """Recognition with configurable bounds and a pluggable approximation hook."""

    def __init__(self, hook: Optional[Callable[[UnitarySpec, float], List[str]]] = None):
        self.max_len = env_int("ICM_RECOGNITION_MAX_LEN", 12)
        self.tol = env_float("ICM_RECOGNITION_TOL", 1e-9)
        self.hook = hook or approximation_hook

    def approximate(self, spec: UnitarySpec, epsilon: float) -> RecognitionResult:
        """Run the hook and hold its answer to the epsilon contract."""
        sequence = list(self.hook(spec, epsilon))
        for name in sequence:
            if name not in GENERATORS:
                raise RecognitionError(f"{spec.name}: approximation returned unknown generator {name!r}")
        matrix = sequence_matrix(sequence)
        residual = phase_distance(matrix, spec.matrix)
        if residual > epsilon:
            raise RecognitionError(
                f"{spec.name}: approximation residual {residual:.3g} exceeds epsilon {epsilon}"
            )
        overlap = np.trace(matrix.conj().T @ spec.matrix)
        return RecognitionResult(sequence, complex(overlap / abs(overlap)), residual)

    def recognize(self, spec: UnitarySpec, epsilon: Optional[float] = None) -> RecognitionResult:
        try:
            return recognize_unitary(spec, self.max_len, self.tol)
        except NotRepresentable:
            if epsilon is None:
                raise
            logger.warning(f"{spec.name} has no exact spelling; trying the approximation hook")
            try:
                return self.approximate(spec, epsilon)
            except ApproximationUnavailable as e:
                logger.error(f"Approximation failed: {e}")
                raise NotRepresentable(spec.name, self.max_len)

    def decompose(self, specs: List[UnitarySpec], epsilon: Optional[float] = None) -> List[DecompEntry]:
        entries = []
        for spec in specs:
            result = self.recognize(spec, epsilon)
            logger.info(f"{spec.name}: {' '.join(result.sequence) or '(identity)'}, residual {result.residual:.2e}")
            entries.append(emit_nicm_entry(spec.name, result))
        return entries
