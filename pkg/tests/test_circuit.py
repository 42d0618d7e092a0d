import random

import pytest

from app.services.circ_io import emit_circ, format_gate_list, parse_circ, parse_gate_list
from app.services.circuit import (
    Circuit,
    Cnot,
    InitBasis,
    MeasBasis,
    Measurement,
    NamedGate,
    compute_stats,
    order_measurements,
    relabel,
    validate_icm,
)
from app.services.database import load_database
from app.services.errors import CircuitError, ScheduleCycleError
from app.services.icm_transform import ConversionOptions, convert_to_icm, expand_nicm


def test_defaults_fill_configurable_io():
    c = Circuit(qubit_count=2, inits={2: InitBasis.A}, gates=(Cnot(2, 1),),
                measurements={1: Measurement(MeasBasis.Z)})
    assert c.inits[1] == InitBasis.EMPTY
    assert c.inputs == (1,)
    assert c.outputs == (2,)
    assert c.measured_qubits() == [1]


def test_ill_formed_circuits_raise():
    with pytest.raises(CircuitError):
        Circuit(qubit_count=1, gates=(Cnot(1, 2),))
    with pytest.raises(CircuitError):
        Circuit(qubit_count=2, gates=(Cnot(1, 1),))
    with pytest.raises(CircuitError):
        Circuit(qubit_count=1, inits={3: InitBasis.ZERO})


def test_validate_reports_named_gate():
    c = Circuit(qubit_count=1, gates=(NamedGate("TGATE", (1,)),))
    report = validate_icm(c)
    assert not report.ok
    assert report.violations == ["non-CNOT interior gate at index 0 (TGATE)"]


def test_validate_reports_dependency_on_unmeasured_qubit():
    c = Circuit(qubit_count=2, measurements={1: Measurement(MeasBasis.ZX, (2,))})
    assert any("unmeasured qubit 2" in v for v in validate_icm(c).violations)


def test_order_measurements_respects_dependencies():
    c = Circuit(qubit_count=4, measurements={
        1: Measurement(MeasBasis.ZX, (3,)),
        2: Measurement(MeasBasis.Z),
        3: Measurement(MeasBasis.X, (4,)),
        4: Measurement(MeasBasis.Z),
    })
    assert [q for q, _ in order_measurements(c)] == [2, 4, 3, 1]


def test_order_measurements_detects_cycle():
    c = Circuit(qubit_count=2, measurements={
        1: Measurement(MeasBasis.ZX, (2,)),
        2: Measurement(MeasBasis.XZ, (1,)),
    })
    assert not validate_icm(c).ok
    with pytest.raises(ScheduleCycleError) as e:
        order_measurements(c)
    assert sorted(e.value.cycle) == [1, 2]


def test_stats_of_controlled_v():
    db = load_database()
    raw = expand_nicm(Circuit(qubit_count=2, gates=(NamedGate("CV", (1, 2)),)), db)
    stats = compute_stats(raw)
    assert (stats.t_count, stats.t_depth) == (3, 2)

    icm = convert_to_icm(raw, db, ConversionOptions())
    icm_stats = compute_stats(icm)
    assert (icm_stats.t_count, icm_stats.t_depth) == (3, 2)


def test_stats_summary():
    stats = compute_stats(parse_gate_list("TGATE 1\nTGATE 1\ncnot 1 2\n"))
    assert stats.summary() == "t_count=2 t_depth=2 qubits=2 gates=3"


def test_relabel_requires_permutation():
    c = Circuit(qubit_count=2, gates=(Cnot(1, 2),))
    swapped = relabel(c, {1: 2, 2: 1})
    assert swapped.gates == (Cnot(2, 1),)
    with pytest.raises(CircuitError):
        relabel(c, {1: 1, 2: 1})


def test_parse_gate_list():
    c = parse_gate_list("# comment\ntoffoli 1 2 3\ncnot 3 1  # trailing\n\nHGATE 2\n")
    assert c.qubit_count == 3
    assert c.gates == (NamedGate("toffoli", (1, 2, 3)), Cnot(3, 1), NamedGate("HGATE", (2,)))
    assert format_gate_list(c) == "toffoli 1 2 3\ncnot 3 1\nHGATE 2\n"


def test_parse_gate_list_errors_carry_line():
    with pytest.raises(CircuitError) as e:
        parse_gate_list("HGATE 1\ncnot 1\n")
    assert e.value.line == 2
    with pytest.raises(CircuitError):
        parse_gate_list("HGATE x\n")


def test_parse_circ_reads_conditional_measurements():
    c = parse_circ("init 2 A\ncnot 2 1\nmeasure 1 Z\nmeasure 2 ZX(1)\n")
    assert c.measurements[2] == Measurement(MeasBasis.ZX, (1,))
    assert c.inits[1] == InitBasis.EMPTY
    assert emit_circ(c) == "init 2 A\ncnot 2 1\nmeasure 1 Z\nmeasure 2 ZX(1)\n"


def test_parse_circ_rejects_unknown_basis():
    with pytest.raises(CircuitError) as e:
        parse_circ("init 1 Q\n")
    assert e.value.line == 1


def test_emitted_circ_is_a_fixed_point():
    db = load_database()
    raw = parse_gate_list("TGATE 1\nHGATE 1\ncnot 1 2\nTDAG 2\n")
    icm = convert_to_icm(raw, db, ConversionOptions(teleport_mode="det"))
    text = emit_circ(icm)
    assert emit_circ(parse_circ(text)) == text


def _random_primitive_circuit(rng: random.Random) -> str:
    qubits = rng.randint(1, 5)
    lines = []
    for _ in range(rng.randint(0, 20)):
        if qubits > 1 and rng.random() < 0.3:
            c, t = rng.sample(range(1, qubits + 1), 2)
            lines.append(f"cnot {c} {t}")
        else:
            name = rng.choice(["TGATE", "TDAG", "HGATE", "PGATE", "PDAG"])
            lines.append(f"{name} {rng.randint(1, qubits)}")
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("mode", ["simple", "det"])
def test_random_circuits_stay_in_icm_form_and_resource_bounds(mode):
    db = load_database()
    rng = random.Random(7)
    for _ in range(100):
        raw = parse_gate_list(_random_primitive_circuit(rng))
        icm = convert_to_icm(raw, db, ConversionOptions(teleport_mode=mode))
        assert validate_icm(icm).ok
        names = [g.name for g in raw.gates if isinstance(g, NamedGate)]
        t = sum(1 for n in names if n in ("TGATE", "TDAG"))
        h = names.count("HGATE")
        p = sum(1 for n in names if n in ("PGATE", "PDAG"))
        assert icm.qubit_count <= raw.qubit_count + 5 * t + 3 * h + p + 1
        assert len(icm.gates) <= 6 * len(raw.gates)

        order = [q for q, _ in order_measurements(icm)]
        position = {q: i for i, q in enumerate(order)}
        for earlier, later in icm.schedule:
            assert position[earlier] < position[later]


def test_order_measurements_goes_generation_by_generation():
    c = Circuit(qubit_count=5, measurements={
        1: Measurement(MeasBasis.ZX, (2,)),
        2: Measurement(MeasBasis.Z),
        3: Measurement(MeasBasis.ZX, (4,)),
        4: Measurement(MeasBasis.ZX, (5,)),
        5: Measurement(MeasBasis.Z),
    })
    assert [q for q, _ in order_measurements(c)] == [2, 5, 1, 4, 3]


def _shuffled(circuit: Circuit, rng: random.Random) -> Circuit:
    labels = list(range(1, circuit.qubit_count + 1))
    rng.shuffle(labels)
    return relabel(circuit, dict(zip(range(1, circuit.qubit_count + 1), labels)))


def test_stats_do_not_depend_on_labels():
    db = load_database()
    rng = random.Random(11)
    for _ in range(100):
        raw = parse_gate_list(_random_primitive_circuit(rng))
        icm = convert_to_icm(raw, db, ConversionOptions())
        assert compute_stats(_shuffled(raw, rng)) == compute_stats(raw)
        assert compute_stats(_shuffled(icm, rng)) == compute_stats(icm)


@pytest.mark.parametrize("mode", ["simple", "det"])
def test_conversion_keeps_t_count_and_depth(mode):
    db = load_database()
    rng = random.Random(13)
    for _ in range(100):
        raw = parse_gate_list(_random_primitive_circuit(rng))
        before = compute_stats(raw)
        after = compute_stats(convert_to_icm(raw, db, ConversionOptions(teleport_mode=mode)))
        assert (after.t_count, after.t_depth) == (before.t_count, before.t_depth)
