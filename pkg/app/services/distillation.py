"""Monte-Carlo estimates of distillation quality under injected-state Z errors.

A Z error on the |A> or |Y> state consumed by one of the distiller's teleported
gates only flips that qubit's X outcome, so a noiseless simulation of the distiller,
tabulated by outcome pattern, covers every error pattern: the output is the branch
of the true outcomes while syndrome check and correction see the flipped record.
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.services.circuit import BlockKind, InitBasis
from app.services.database import Database, DecompKind
from app.services.errors import DistillationError
from app.services.frame import code_space, distiller_correction
from app.services.helpers import GATE_MATRICES, env_int
from app.services.simulator import BASIS_CHANGES, INIT_STATES, StateVector

logger = logging.getLogger(__name__)

KINDS = {
    "A": ("AA", BlockKind.DIST_A, InitBasis.A),
    "Y": ("YY", BlockKind.DIST_Y, InitBasis.Y),
}
MAX_P = 0.05
NEGLIGIBLE = 1e-15


@dataclass
class DistillationEstimate:
    kind: str
    p: float
    infidelity: float
    acceptance: float


@dataclass
class BranchTable:
    """Unnormalized output amplitudes per outcome pattern of a noiseless distiller."""
    kind: str
    length: int
    patterns: np.ndarray
    amplitudes: np.ndarray
    accepted: np.ndarray
    parity: np.ndarray
    target: np.ndarray


def _strata(n: int, p: float) -> List[Tuple[int, float]]:
    return [(w, math.comb(n, w) * p ** w * (1 - p) ** (n - w)) for w in range(n + 1)]


def fit_slope(ps: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log(value) against log(p) by least squares."""
    if any(v <= 0 for v in values):
        raise DistillationError("slope fit needs strictly positive values")
    return float(np.polyfit(np.log(ps), np.log(values), 1)[0])


class DistillationEstimator:
    """Stratified Monte-Carlo over error weight, deterministic for a seed.

    Each weight class gets an equal share of the trials; classes with no more
    patterns than their share are enumerated exactly, the rest are sampled.
    """

    def __init__(self, db: Database, seed: Optional[int] = None, trials: Optional[int] = None):
        self.db = db
        self.seed = env_int("ICM_SEED", 0) if seed is None else seed
        self.trials = env_int("ICM_TRIALS", 10000) if trials is None else trials
        self.tables: Dict[str, BranchTable] = {}

    def branch_table(self, kind: str) -> BranchTable:
        if kind in self.tables:
            return self.tables[kind]
        if kind not in KINDS:
            raise DistillationError(f"unknown distillation kind {kind!r}, expected A or Y")
        name, block_kind, target_basis = KINDS[kind]
        entry = self.db.get(name)
        if entry.kind != DecompKind.ICMDIST or len(entry.outputs) != 1:
            raise DistillationError(f"{name} must be an icmdist entry with one output")
        output = entry.outputs[0]
        measured = [c for c in range(1, entry.width + 1) if c != output]

        state = StateVector(np.ones(()), [])
        for col, basis in enumerate(entry.init_row, start=1):
            if basis not in INIT_STATES:
                raise DistillationError(f"{name}: column {col} is not a prepared state")
            state.append(col, INIT_STATES[basis])
        for gate in entry.cnots:
            state.cnot(gate.control, gate.target)
        for col in measured:
            for gate in BASIS_CHANGES[entry.meas_row[col - 1]]:
                state.apply(GATE_MATRICES[gate], col)

        length = len(measured)
        amplitudes = state.vector(measured + [output]).reshape(2 ** length, 2)
        # Row index has column `measured[0]` as its most significant bit.
        patterns = np.array([
            sum(((index >> (length - 1 - i)) & 1) << i for i in range(length))
            for index in range(2 ** length)
        ])
        space = code_space(length)
        accepted = np.array([mask in space for mask in range(2 ** length)])
        parity = np.array([bin(mask).count("1") % 2 for mask in range(2 ** length)])
        table = BranchTable(kind, length, patterns, amplitudes, accepted, parity, INIT_STATES[target_basis])
        self.tables[kind] = table
        logger.info(f"Built {kind} branch table over {length} outcomes")
        return table

    def _pattern_stats(self, table: BranchTable, error: int) -> Tuple[float, float]:
        """(acceptance, accepted fidelity mass) for one error bitmask."""
        observed = table.patterns ^ error
        accept = table.accepted[observed]
        rows = table.amplitudes[accept]
        if rows.shape[0] == 0:
            return 0.0, 0.0
        parity = table.parity[observed[accept]]
        _, block_kind, _ = KINDS[table.kind]
        x, z = distiller_correction(block_kind, parity)
        x = np.broadcast_to(x, parity.shape)
        corrected = np.where(x[:, None] == 1, rows[:, ::-1], rows)
        corrected = corrected * np.stack([np.ones_like(z), np.where(z == 1, -1, 1)], axis=1)
        overlap = corrected @ table.target.conj()
        return float(np.sum(np.abs(rows) ** 2)), float(np.sum(np.abs(overlap) ** 2))

    def _stratum(self, table: BranchTable, weight: int, quota: int, rng: np.random.Generator) -> Tuple[float, float]:
        n = table.length
        if math.comb(n, weight) <= quota:
            errors = [sum(1 << i for i in positions) for positions in combinations(range(n), weight)]
        else:
            errors = [sum(1 << int(i) for i in rng.choice(n, weight, replace=False)) for _ in range(quota)]
        stats = np.array([self._pattern_stats(table, e) for e in errors])
        return float(stats[:, 0].mean()), float(stats[:, 1].mean())

    def _check(self, p: float, trials: int):
        if not 0 <= p <= MAX_P:
            raise DistillationError(f"p must lie in [0, {MAX_P}], got {p}")
        if trials < 1000:
            raise DistillationError(f"at least 1000 trials are needed, got {trials}")

    def _weights(self, table: BranchTable, p: float, trials: int):
        rng = np.random.default_rng(self.seed)
        quota = max(trials // (table.length + 1), 1)
        for weight, probability in _strata(table.length, p):
            if probability < NEGLIGIBLE and weight > 0:
                continue
            yield weight, probability, self._stratum(table, weight, quota, rng)

    def distillation_infidelity(self, kind: str, p: float, trials: Optional[int] = None) -> DistillationEstimate:
        """Post-selected output infidelity and acceptance rate at injected error rate p.

        Raises:
            DistillationError: bad parameters or no accepted trials.
        """
        trials = self.trials if trials is None else trials
        self._check(p, trials)
        table = self.branch_table(kind)
        acceptance = good = 0.0
        for _, probability, (accepted, fidelity) in self._weights(table, p, trials):
            acceptance += probability * accepted
            good += probability * fidelity
        if acceptance <= 0.0:
            raise DistillationError(f"no accepted trials for {kind} at p={p}")
        infidelity = max(0.0, 1.0 - good / acceptance)
        logger.info(f"{kind} distillation at p={p}: infidelity {infidelity:.3e}, acceptance {acceptance:.4f}")
        return DistillationEstimate(kind, p, infidelity, acceptance)

    def duplicate_failure_probability(self, kind: str, p: float, copies: int,
                                      trials: Optional[int] = None) -> float:
        """Probability that all `copies` distillers joined on one site reject.

        The copies share no qubits and draw their injection errors independently,
        and the join only fails when every copy is rejected, so the failure
        probability is the single-copy rejection rate to the power `copies`.
        """
        if copies < 1:
            raise DistillationError("copies must be >= 1")
        trials = self.trials if trials is None else trials
        self._check(p, trials)
        table = self.branch_table(kind)
        reject = sum(probability * (1.0 - accepted)
                     for _, probability, (accepted, _) in self._weights(table, p, trials))
        return max(reject, 0.0) ** copies

    def sweep(self, kind: str, ps: Sequence[float], copies: int = 1) -> Tuple[List[float], float]:
        """Values over a p sweep plus their log-log slope.

        With one copy the values are output infidelities, otherwise failure-to-produce
        probabilities of the duplicated distillers.
        """
        if copies == 1:
            values = [self.distillation_infidelity(kind, p).infidelity for p in ps]
        else:
            values = [self.duplicate_failure_probability(kind, p, copies) for p in ps]
        return values, fit_slope(ps, values)
