"""Command handlers behind the `icmc` entrypoint.

Handlers read their inputs, call the services, write output files and return the
process exit code: 0 on success, 1 when validation, verification, recognition or
conversion fails, 2 on I/O or parse errors.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.services.circ_io import emit_circ, format_gate_list, parse_circ, parse_gate_list
from app.services.circuit import (
    PRIMITIVE_GATES,
    Circuit,
    NamedGate,
    compute_stats,
    pre_icm_circuit,
    validate_icm,
)
from app.services.database import Database, DecompKind, database_path, load_database, serialize_database
from app.services.distillation import DistillationEstimator, fit_slope
from app.services.errors import (
    CircuitError,
    ConversionError,
    DatabaseError,
    GeometryError,
    IcmError,
    RecognitionError,
)
from app.services.geometry import generate_geometry, parse_geometry, serialize_geometry, validate_geometry
from app.services.helpers import GATE_MATRICES, env_choice, env_int, phase_fidelity, strip_comment
from app.services.icm_transform import (
    TELEPORT_MODES,
    ConversionOptions,
    IcmCompiler,
    convert_to_icm,
    expand_nicm,
)
from app.services.render import render_svg
from app.services.simulator import Simulator
from app.services.unitary_frontend import UnitaryRecognizer, parse_unitary_specs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_IO = 2
FIDELITY_TOL = 1e-9
SLOPE_TOLERANCE = 0.3


def _controlled(u: np.ndarray) -> np.ndarray:
    matrix = np.eye(4, dtype=complex)
    matrix[2:, 2:] = u
    return matrix


def _toffoli() -> np.ndarray:
    matrix = np.eye(8, dtype=complex)
    matrix[6:, 6:] = GATE_MATRICES["X"]
    return matrix


# Analytic targets for the seed entries, keyed by entry name.
REFERENCE_UNITARIES: Dict[str, Tuple[str, np.ndarray]] = {
    "TGATE": ("T", GATE_MATRICES["T"]),
    "TDAG": ("Tdag", GATE_MATRICES["Tdag"]),
    "TGATE_DET": ("T", GATE_MATRICES["T"]),
    "TDAG_DET": ("Tdag", GATE_MATRICES["Tdag"]),
    "PGATE": ("P", GATE_MATRICES["P"]),
    "PDAG": ("Pdag", GATE_MATRICES["Pdag"]),
    "HGATE": ("H", GATE_MATRICES["H"]),
    "XGATE": ("X", GATE_MATRICES["X"]),
    "ZGATE": ("Z", GATE_MATRICES["Z"]),
    "toffoli": ("Toffoli", _toffoli()),
    "CV": ("CV", _controlled(GATE_MATRICES["SQRTX"])),
}


@dataclass
class PipelineConfig:
    """Merged command-line and environment settings for one invocation."""
    database: Optional[str] = None
    input_path: Optional[str] = None
    output_stem: Optional[str] = None
    distillation_rounds: int = 0
    duplicate_distillers: int = 1
    teleport_mode: str = "simple"
    epsilon: Optional[float] = None
    seed: int = 0
    trials: int = 10000
    force: bool = False
    kind: str = "Y"
    ps: List[float] = field(default_factory=list)
    expect: Optional[str] = None

    def __post_init__(self):
        if self.distillation_rounds < 0:
            raise ValueError("distillation rounds must be >= 0")
        if self.duplicate_distillers < 1:
            raise ValueError("duplicate distillers must be >= 1")
        if self.teleport_mode not in TELEPORT_MODES:
            raise ValueError(f"teleport mode must be one of {TELEPORT_MODES}")

    @classmethod
    def from_env(cls, **overrides) -> "PipelineConfig":
        """Environment defaults with explicitly given values on top."""
        values = dict(
            distillation_rounds=env_int("ICM_DISTILLATION_ROUNDS", 0),
            duplicate_distillers=env_int("ICM_DUPLICATE_DISTILLERS", 1),
            teleport_mode=env_choice("ICM_TELEPORT_MODE", "simple", list(TELEPORT_MODES)),
            seed=env_int("ICM_SEED", 0),
            trials=env_int("ICM_TRIALS", 10000),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def options(self) -> ConversionOptions:
        return ConversionOptions(self.teleport_mode, self.distillation_rounds, self.duplicate_distillers)

    def output(self, suffix: str) -> Path:
        if self.output_stem:
            return Path(f"{self.output_stem}{suffix}")
        if not self.input_path:
            raise ValueError("an output stem or an input file is required")
        return Path(self.input_path).with_suffix(suffix)


def _read(path: Optional[str]) -> str:
    if not path:
        raise FileNotFoundError("no input file given")
    return Path(path).read_text()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"Wrote {path}")


def run(handler: Callable[[PipelineConfig], int], config: PipelineConfig) -> int:
    """Call a handler and translate exceptions into exit codes."""
    try:
        return handler(config)
    except (OSError, CircuitError, DatabaseError, RecognitionError, ValueError) as e:
        logger.error(f"{handler.__name__}: {e}")
        return EXIT_IO
    except IcmError as e:
        logger.error(f"{handler.__name__}: {e}")
        return EXIT_FAILED


def decompose(config: PipelineConfig) -> int:
    """Recognize a unitary specification file and add nicm entries to the database."""
    db = load_database(config.database)
    specs = parse_unitary_specs(_read(config.input_path))
    if not specs:
        logger.info("No gates to decompose; database unchanged")
        return EXIT_OK
    recognizer = UnitaryRecognizer()
    for entry in recognizer.decompose(specs, config.epsilon):
        try:
            db = db.with_entry(entry, force=config.force)
        except DatabaseError as e:
            logger.error(f"{e}; use --force to replace it")
            return EXIT_FAILED
    target = config.output(".db") if config.output_stem else Path(database_path(config.database))
    _write(target, serialize_database(db))
    print(f"added {len(specs)} entries to {target}")
    return EXIT_OK


def _check_names(text: str, db: Database):
    """Report the first gate name the database cannot resolve, with its line."""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        name = line.split()[0]
        if name.lower() == "cnot" or name.upper() in PRIMITIVE_GATES:
            continue
        if name not in db:
            try:
                db.get(name)
            except DatabaseError as e:
                raise CircuitError(f"unknown gate {name!r}: {e}", line=number)


def processraw(config: PipelineConfig) -> int:
    """Expand nicm gates until only primitives and CNOTs remain."""
    db = load_database(config.database)
    text = _read(config.input_path)
    circuit = parse_gate_list(text)
    _check_names(text, db)
    expanded = IcmCompiler(db, config.options).process_raw(circuit)
    _write(config.output(".raw"), format_gate_list(expanded))
    print(compute_stats(expanded).summary())
    return EXIT_OK


def convertft(config: PipelineConfig) -> int:
    """Primitive circuit to `.circ`, `.geom` and `.svg`."""
    db = load_database(config.database)
    circuit = parse_gate_list(_read(config.input_path))
    icm = IcmCompiler(db, config.options).convert(circuit)
    report = validate_icm(icm)
    if not report.ok:
        for violation in report.violations:
            logger.error(f"ICM violation: {violation}")
        return EXIT_FAILED
    geometry = generate_geometry(icm)
    geometry_report = validate_geometry(geometry)
    for violation in geometry_report.violations:
        logger.warning(f"Geometry: {violation}")
    _write(config.output(".circ"), emit_circ(icm))
    _write(config.output(".geom"), serialize_geometry(geometry))
    _write(config.output(".svg"), render_svg(icm, geometry))
    print(compute_stats(icm).summary())
    return EXIT_OK


def render(config: PipelineConfig) -> int:
    """SVG for an existing `.circ` file and, when present, its `.geom` sibling."""
    circuit = parse_circ(_read(config.input_path))
    geom_path = Path(config.input_path).with_suffix(".geom")
    geometry = None
    if geom_path.exists():
        try:
            geometry = parse_geometry(geom_path.read_text())
        except GeometryError as e:
            logger.error(f"render: {geom_path}: {e}")
            return EXIT_IO
    _write(config.output(".svg"), render_svg(circuit, geometry, title=Path(config.input_path).stem))
    return EXIT_OK


def entry_circuit(db: Database, name: str, mode: str) -> Circuit:
    """Circuit realizing one database entry on fresh qubits 1..arity."""
    if name.upper().endswith("_DET"):
        name, mode = name[:-4], "det"
    entry = db.get(name)
    if entry.kind == DecompKind.ICMDIST or entry.name in ("MA", "MY"):
        raise ConversionError(f"{entry.name} is not a unitary gate; verify distillation instead")
    gate = NamedGate(entry.name, tuple(range(1, entry.arity + 1)))
    circuit = pre_icm_circuit(entry.arity, [gate])
    if entry.name.upper() in PRIMITIVE_GATES:
        return convert_to_icm(circuit, db, ConversionOptions(teleport_mode=mode))
    return expand_nicm(circuit, db)


def _verify_unitary(label: str, unitary: np.ndarray, expected: Optional[np.ndarray]) -> bool:
    if expected is None:
        identity = np.eye(unitary.shape[0])
        if phase_fidelity(unitary, identity) >= 1 - FIDELITY_TOL:
            print(f"{label}: identity, PASS")
        else:
            print(f"{label}: unitary {unitary.shape[0]}x{unitary.shape[1]}, PASS")
        return True
    if unitary.shape != expected.shape:
        print(f"{label}: dimension {unitary.shape[0]} does not match {expected.shape[0]}, FAIL")
        return False
    fidelity = phase_fidelity(unitary, expected)
    passed = fidelity >= 1 - FIDELITY_TOL
    print(f"{label}: fidelity {fidelity:.6f}, {'PASS' if passed else 'FAIL'}")
    return passed


def _verify_distillation(config: PipelineConfig) -> bool:
    db = load_database(config.database)
    estimator = DistillationEstimator(db, seed=config.seed, trials=config.trials)
    ps = config.ps or [0.002, 0.005, 0.01]
    kind, copies = config.kind.upper(), config.duplicate_distillers
    values = []
    for p in ps:
        if copies == 1:
            estimate = estimator.distillation_infidelity(kind, p)
            values.append(estimate.infidelity)
            print(f"{kind} p={p:g}: infidelity {estimate.infidelity:.3e}, acceptance {estimate.acceptance:.4f}")
        else:
            failure = estimator.duplicate_failure_probability(kind, p, copies)
            values.append(failure)
            print(f"{kind} x{copies} p={p:g}: failure {failure:.3e}")
    if len(ps) < 2:
        passed = copies > 1 or values[0] < ps[0]
        print(f"{kind}: {'PASS' if passed else 'FAIL'}")
        return passed
    expected = 3.0 if copies == 1 else float(copies)
    slope = fit_slope(ps, values)
    passed = abs(slope - expected) <= SLOPE_TOLERANCE
    print(f"{kind}: slope {slope:.2f} (expected {expected:.1f}), {'PASS' if passed else 'FAIL'}")
    return passed


def verify(config: PipelineConfig) -> int:
    """Check an entry, a circuit file or a distiller against its analytic target.

    `input_path` is a circuit file (`.circ` or gate list), a database entry name,
    or the word `distillation`.
    """
    target = config.input_path or ""
    if target == "distillation":
        return EXIT_OK if _verify_distillation(config) else EXIT_FAILED

    simulator = Simulator(seed=config.seed)
    if Path(target).is_file():
        text = Path(target).read_text()
        circuit = parse_circ(text) if target.endswith(".circ") else parse_gate_list(text)
        if not circuit.is_icm:
            circuit = expand_nicm(circuit, load_database(config.database))
        label = Path(target).stem
        expected = REFERENCE_UNITARIES[config.expect][1] if config.expect in REFERENCE_UNITARIES else None
    else:
        db = load_database(config.database)
        circuit = entry_circuit(db, target, config.teleport_mode)
        label, expected = REFERENCE_UNITARIES.get(target, (target, None))
        if config.expect in REFERENCE_UNITARIES:
            expected = REFERENCE_UNITARIES[config.expect][1]
    unitary = simulator.circuit_unitary(circuit)
    return EXIT_OK if _verify_unitary(label, unitary, expected) else EXIT_FAILED


COMMANDS: Dict[str, Callable[[PipelineConfig], int]] = {
    "decompose": decompose,
    "processraw": processraw,
    "convertft": convertft,
    "verify": verify,
    "render": render,
}
