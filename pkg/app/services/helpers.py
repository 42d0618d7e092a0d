from difflib import get_close_matches
import os

import numpy as np

_W = np.exp(1j * np.pi / 4)

GATE_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "P": np.array([[1, 0], [0, 1j]], dtype=complex),
    "Pdag": np.array([[1, 0], [0, -1j]], dtype=complex),
    "T": np.array([[1, 0], [0, _W]], dtype=complex),
    "Tdag": np.array([[1, 0], [0, np.conj(_W)]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "SQRTX": np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex) / 2,
}

# Database token spelling of each generator.
GENERATOR_TOKENS = {
    "H": "HGATE",
    "P": "PGATE",
    "Pdag": "PDAG",
    "T": "TGATE",
    "Tdag": "TDAG",
    "X": "XGATE",
    "Z": "ZGATE",
}
TOKEN_GENERATORS = {v: k for k, v in GENERATOR_TOKENS.items()}


def suggest_name(name: str, known: list) -> str | None:
    """Return the known name closest to a mistyped one, if any."""
    normalized = name.strip().upper()
    for option in known:
        if option.upper() == normalized:
            return option

    matches = get_close_matches(normalized, [opt.upper() for opt in known], n=1, cutoff=0.6)
    if matches:
        for opt in known:
            if opt.upper() == matches[0]:
                return opt
    return None


def env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {value!r}")


def env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {value!r}")


def env_choice(name: str, default: str, choices: list) -> str:
    """Read an env var restricted to a set of case-insensitive choices."""
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    for choice in choices:
        if choice.lower() == value.strip().lower():
            return choice
    raise ValueError(f"{name} must be one of {choices}, got {value!r}")


def strip_comment(line: str) -> str:
    """Drop a trailing '#' comment and surrounding whitespace."""
    index = line.find("#")
    if index >= 0:
        line = line[:index]
    return line.strip()


def sequence_matrix(sequence: list) -> np.ndarray:
    """Matrix of a generator sequence applied left to right (first element acts first)."""
    matrix = np.eye(2, dtype=complex)
    for name in sequence:
        matrix = GATE_MATRICES[name] @ matrix
    return matrix


def canonical_phase(matrix: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Rotate the global phase so the first nonzero entry is real and positive."""
    for value in matrix.ravel():
        if abs(value) > tol:
            return matrix * (abs(value) / value)
    return matrix


def phase_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """|tr(U^dagger V)| / d, equal to 1 when U and V agree up to global phase."""
    return float(abs(np.trace(u.conj().T @ v)) / u.shape[0])


def phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max-norm distance between U and V after aligning their global phases."""
    overlap = np.trace(u.conj().T @ v)
    phase = overlap / abs(overlap) if abs(overlap) > 1e-12 else 1.0
    return float(np.max(np.abs(u * phase - v)))
