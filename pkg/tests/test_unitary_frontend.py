import math

import numpy as np
import pytest

from app.services.errors import NotRepresentable, RecognitionError
from app.services.helpers import GATE_MATRICES, phase_fidelity, sequence_matrix
from app.services.unitary_frontend import (
    UnitaryRecognizer,
    UnitarySpec,
    emit_nicm_entry,
    parse_unitary_specs,
    recognize_unitary,
)

R = 1 / math.sqrt(2)

HADAMARD_SPEC = f"""1
Hadamard
{R} 0
{R} 0
{R} 0
- {R} 0
"""


def test_parse_hadamard_spec():
    [spec] = parse_unitary_specs(HADAMARD_SPEC)
    assert spec.name == "Hadamard"
    assert np.allclose(spec.matrix, GATE_MATRICES["H"])


def test_empty_spec_file_has_no_gates():
    assert parse_unitary_specs("") == []
    assert parse_unitary_specs("# nothing\n\n") == []


def test_count_mismatch_is_reported():
    with pytest.raises(RecognitionError) as e:
        parse_unitary_specs("2" + HADAMARD_SPEC[1:])
    assert e.value.line == 1


def test_non_unitary_spec_is_rejected():
    with pytest.raises(RecognitionError):
        parse_unitary_specs("1\nBad\n1 0\n1 0\n0 0\n1 0\n")


def test_malformed_entry_is_rejected():
    with pytest.raises(RecognitionError) as e:
        parse_unitary_specs("1\nBad\n1 0\nx 0\n0 0\n1 0\n")
    assert e.value.line == 4


def test_recognize_hadamard_and_emit_entry():
    [spec] = parse_unitary_specs(HADAMARD_SPEC)
    result = recognize_unitary(spec)
    assert result.sequence == ["H"]
    entry = emit_nicm_entry(spec.name, result)
    assert entry.grid == (("HGATE",),)
    assert entry.ancilla_count == 0


def test_recognize_up_to_global_phase():
    spec = UnitarySpec("phasedT", np.exp(0.3j) * GATE_MATRICES["T"])
    result = recognize_unitary(spec)
    assert result.sequence == ["T"]
    assert np.allclose(result.matrix(), spec.matrix)


def test_recognize_identity_gives_wire():
    result = recognize_unitary(UnitarySpec("id", np.eye(2, dtype=complex)))
    assert result.sequence == []
    assert emit_nicm_entry("id", result).grid == (("WIRE",),)


def test_recognize_longer_product():
    target = sequence_matrix(["H", "T", "H"])
    result = recognize_unitary(UnitarySpec("sqrtT", target))
    assert len(result.sequence) <= 3
    assert phase_fidelity(sequence_matrix(result.sequence), target) == pytest.approx(1.0)


def test_rotation_outside_clifford_t_is_not_representable():
    theta = 0.1
    rz = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    with pytest.raises(NotRepresentable) as e:
        recognize_unitary(UnitarySpec("Rz", rz), max_len=4)
    assert e.value.name == "Rz"


def test_default_hook_is_unavailable(monkeypatch):
    monkeypatch.setenv("ICM_RECOGNITION_MAX_LEN", "3")
    rz = np.diag([1, np.exp(0.1j)])
    with pytest.raises(NotRepresentable):
        UnitaryRecognizer().recognize(UnitarySpec("Rz", rz), epsilon=1e-3)


def test_custom_hook_within_epsilon(monkeypatch):
    monkeypatch.setenv("ICM_RECOGNITION_MAX_LEN", "3")
    near_t = np.diag([1, np.exp(1j * (math.pi / 4 + 1e-3))])
    recognizer = UnitaryRecognizer(hook=lambda spec, eps: ["T"])
    result = recognizer.recognize(UnitarySpec("nearT", near_t), epsilon=1e-2)
    assert result.sequence == ["T"]
    assert 0 < result.residual <= 1e-2


def test_custom_hook_outside_epsilon_fails(monkeypatch):
    monkeypatch.setenv("ICM_RECOGNITION_MAX_LEN", "3")
    near_t = np.diag([1, np.exp(1j * (math.pi / 4 + 1e-1))])
    recognizer = UnitaryRecognizer(hook=lambda spec, eps: ["T"])
    with pytest.raises(RecognitionError):
        recognizer.recognize(UnitarySpec("nearT", near_t), epsilon=1e-6)


def test_decompose_many():
    specs = [UnitarySpec("S", GATE_MATRICES["P"]), UnitarySpec("Flip", GATE_MATRICES["X"])]
    entries = UnitaryRecognizer().decompose(specs)
    assert [e.grid for e in entries] == [(("PGATE",),), (("XGATE",),)]
