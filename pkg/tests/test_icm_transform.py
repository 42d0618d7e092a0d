import pytest

from app.services.circ_io import emit_circ, parse_gate_list
from app.services.circuit import BlockKind, InitBasis, MeasBasis, NamedGate, compute_stats, validate_icm
from app.services.database import load_database, parse_database
from app.services.errors import ConversionError
from app.services.icm_transform import (
    ConversionOptions,
    IcmCompiler,
    convert_to_icm,
    expand_controlled_u,
    expand_nicm,
    inline_distillation,
)


@pytest.fixture
def db():
    return load_database()


def test_teleported_t_listing(db):
    icm = convert_to_icm(parse_gate_list("TGATE 1\n"), db, ConversionOptions())
    assert emit_circ(icm) == "init 2 A\ncnot 2 1\nmeasure 1 Z\n"
    assert icm.inputs == (1,)
    assert icm.outputs == (2,)


def test_cnots_follow_the_moved_wires(db):
    icm = convert_to_icm(parse_gate_list("PGATE 1\ncnot 1 2\n"), db, ConversionOptions())
    assert emit_circ(icm) == "init 3 Y\ncnot 3 1\ncnot 3 2\nmeasure 1 Z\n"


def test_pauli_gates_cost_no_qubits(db):
    icm = convert_to_icm(parse_gate_list("XGATE 1\nZGATE 1\n"), db, ConversionOptions())
    assert icm.qubit_count == 1
    assert icm.gates == ()
    assert [b.kind for b in icm.blocks] == [BlockKind.XGATE, BlockKind.ZGATE]


def test_expand_toffoli(db):
    raw = expand_nicm(parse_gate_list("toffoli 1 2 3\n"), db)
    assert raw.qubit_count == 3
    assert len(raw.gates) == 16
    assert compute_stats(raw).t_count == 7


def test_expand_nicm_errors(db):
    with pytest.raises(ConversionError):
        expand_nicm(parse_gate_list("FROB 1\n"), db)
    with pytest.raises(ConversionError):
        expand_nicm(parse_gate_list("toffoli 1 2\n"), db)
    with pytest.raises(ConversionError):
        expand_nicm(parse_gate_list("HGATE 1 2\n"), db)


def test_expand_nicm_detects_cycles():
    looped = parse_database("=LOOP\nnicm\n0\nLOOP\n")
    with pytest.raises(ConversionError) as e:
        expand_nicm(parse_gate_list("LOOP 1\n"), looped)
    assert "LOOP -> LOOP" in str(e.value)


def test_convert_rejects_nicm_gates(db):
    with pytest.raises(ConversionError):
        convert_to_icm(parse_gate_list("toffoli 1 2 3\n"), db, ConversionOptions())


def test_one_round_of_a_distillation(db):
    icm = convert_to_icm(parse_gate_list("TGATE 1\n"), db, ConversionOptions())
    distilled = inline_distillation(icm, db, ConversionOptions(distillation_rounds=1))
    assert distilled.qubit_count >= 16
    assert validate_icm(distilled).ok
    assert distilled.inits[2] == InitBasis.PLUS
    assert len(distilled.injections) == 15
    assert all(distilled.inits[q] == InitBasis.A for q in distilled.injections)
    assert [b.kind for b in distilled.blocks].count(BlockKind.DIST_A) == 1
    assert distilled.gates[-1] == icm.gates[-1]


def test_second_round_distills_the_injections(db):
    icm = convert_to_icm(parse_gate_list("PGATE 1\n"), db, ConversionOptions())
    once = inline_distillation(icm, db, ConversionOptions(distillation_rounds=1))
    twice = inline_distillation(icm, db, ConversionOptions(distillation_rounds=2))
    assert len(once.injections) == 7
    assert len(twice.injections) == 49
    assert validate_icm(twice).ok


def test_duplicated_distillers_are_joined(db):
    icm = convert_to_icm(parse_gate_list("PGATE 1\n"), db, ConversionOptions())
    joined = inline_distillation(icm, db, ConversionOptions(distillation_rounds=1, duplicate_distillers=2))
    [join] = [b for b in joined.blocks if b.kind == BlockKind.JOIN]
    *sources, site = join.qubits
    assert site == 2
    assert joined.inits[site] == InitBasis.ZERO
    assert all(joined.measurements[s].basis == MeasBasis.XZ for s in sources)
    assert all(joined.measurements[s].deps for s in sources)
    assert validate_icm(joined).ok


def test_options_from_environment(monkeypatch):
    monkeypatch.setenv("ICM_TELEPORT_MODE", "DET")
    monkeypatch.setenv("ICM_DISTILLATION_ROUNDS", "2")
    monkeypatch.setenv("ICM_DUPLICATE_DISTILLERS", "3")
    assert ConversionOptions.from_env() == ConversionOptions("det", 2, 3)
    monkeypatch.setenv("ICM_TELEPORT_MODE", "fast")
    with pytest.raises(ValueError):
        ConversionOptions.from_env()


def test_options_validate():
    with pytest.raises(ValueError):
        ConversionOptions(distillation_rounds=-1)
    with pytest.raises(ValueError):
        ConversionOptions(duplicate_distillers=0)


def test_compiler_runs_distillation_when_asked(db):
    compiler = IcmCompiler(db, ConversionOptions(distillation_rounds=1))
    icm = compiler.convert(compiler.process_raw(parse_gate_list("TGATE 1\n")))
    assert icm.injections


def test_expand_controlled_u_errors():
    gate = NamedGate("CU", (1, 2))
    with pytest.raises(ConversionError):
        expand_controlled_u(gate, None)
    with pytest.raises(ConversionError):
        expand_controlled_u(NamedGate("CU", (1, 2, 3)), ([], [], []))
    with pytest.raises(ConversionError):
        expand_controlled_u(gate, (["Q"], [], []))
