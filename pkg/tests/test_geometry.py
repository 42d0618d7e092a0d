import pytest

from app.services.circuit import Circuit, Cnot, InitBasis, MeasBasis, Measurement, NamedGate
from app.services.database import load_database
from app.services.errors import GeometryError
from app.services.geometry import (
    CONFIGURABLE,
    LatticePoint,
    Segment,
    configure_io,
    generate_geometry,
    parse_geometry,
    serialize_geometry,
    validate_geometry,
)
from app.services.icm_transform import ConversionOptions, convert_to_icm, expand_nicm

TABLE_POINTS = [
    (0, 0, 0), (0, 0, 2), (0, 0, 1), (0, 6, 0), (0, 6, 2), (0, 8, 0), (0, 8, 2),
    (0, 12, 0), (0, 12, 2), (0, 12, 1), (2, 0, 0), (2, 0, 2), (2, 0, 1), (2, 12, 0),
    (2, 12, 2), (2, 12, 1), (-1, 9, 1), (-1, 5, 1), (1, 5, 1), (1, 5, -1), (3, 5, -1),
    (3, 5, 1), (3, 9, 1),
]
TABLE_SEGMENTS = [
    (1, 3), (2, 3), (4, 5), (1, 4), (2, 5), (6, 7), (8, 10), (9, 10), (6, 8), (7, 9),
    (11, 13), (12, 13), (14, 16), (15, 16), (11, 14), (12, 15), (17, 18), (18, 19),
    (19, 20), (20, 21), (21, 22), (22, 23), (17, 23),
]


def cnot_geometry():
    return generate_geometry(Circuit(qubit_count=2, gates=(Cnot(1, 2),)))


def t_gate_circuit():
    return Circuit(
        qubit_count=2,
        inits={2: InitBasis.A},
        gates=(Cnot(2, 1),),
        measurements={1: Measurement(MeasBasis.Z)},
    )


def test_primal_cnot_matches_table():
    g = cnot_geometry()
    assert [p.coords for p in g.points] == TABLE_POINTS
    assert [(s.a, s.b) for s in g.segments] == TABLE_SEGMENTS
    assert [(c.point_id, c.io) for c in g.config_points] == [(3, "i"), (10, "i"), (13, "o"), (16, "o")]
    assert g.dual == list(range(17, 24))
    assert validate_geometry(g).ok


def test_primal_cnot_serialization_header():
    lines = serialize_geometry(cnot_geometry()).splitlines()
    assert lines[:4] == ["4", "23", "23", "3,10,13,16"]
    assert lines[4] == "1,3"
    assert lines[27] == "1,0,0,0"
    assert lines[50:54] == ["3,i", "10,i", "13,o", "16,o"]


def test_empty_circuit_geometry():
    g = generate_geometry(Circuit(qubit_count=0))
    assert serialize_geometry(g) == "0\n0\n0\n"
    assert parse_geometry("0\n0\n0\n") == g


def test_t_gate_geometry_structure():
    g = generate_geometry(t_gate_circuit())
    assert g.injection_count == 1
    assert g.config_count == 3
    assert [c.state for c in g.config_points].count(CONFIGURABLE) == 2
    assert sum(1 for label in g.bijectivity if label.startswith("cnot")) == 1
    # Z measurement of the data qubit closes its strands with one joining segment.
    meas = g.bijectivity["meas 1"]
    assert len(meas) == 2
    assert Segment(meas[0], meas[1]) in g.segments
    assert validate_geometry(g).ok


def test_t_gate_round_trip():
    g = generate_geometry(t_gate_circuit())
    text = serialize_geometry(g)
    assert "3,i,A" in text
    parsed = parse_geometry(text)
    assert parsed == g
    assert serialize_geometry(parsed) == text


def test_round_trip_without_sidecar_infers_duals():
    text = serialize_geometry(cnot_geometry())
    core = "".join(line + "\n" for line in text.splitlines() if not line.startswith("#"))
    parsed = parse_geometry(core)
    assert parsed.dual == list(range(17, 24))
    assert parsed.bijectivity == {}
    assert validate_geometry(parsed).ok


def test_diagonal_segment_is_reported():
    g = cnot_geometry()
    g.segments.append(Segment(1, 9))
    report = validate_geometry(g)
    assert not report.ok
    assert any("not axis-aligned" in v for v in report.violations)


def test_moved_configuration_point_is_reported():
    g = cnot_geometry()
    g.points[2] = LatticePoint(3, 0, 0, 2)
    report = validate_geometry(g)
    assert not report.ok
    assert any("midpoint" in v for v in report.violations)


def test_parity_violation_is_reported():
    g = cnot_geometry()
    g.points[16] = LatticePoint(17, 0, 9, 1)
    report = validate_geometry(g)
    assert any("parity lattice" in v for v in report.violations)


def test_validation_is_translation_invariant():
    g = cnot_geometry()
    g.points = [LatticePoint(p.id, p.x + 2, p.y - 4, p.z + 6) for p in g.points]
    assert validate_geometry(g).ok


def test_odd_parity_offset():
    g = generate_geometry(t_gate_circuit(), parity_offset=1)
    assert g.points[0].coords == (1, 13, 1)
    assert validate_geometry(g).ok
    assert parse_geometry(serialize_geometry(g)) == g


def test_bijectivity_gap_is_reported():
    g = cnot_geometry()
    g.bijectivity["cnot 1"].remove(17)
    report = validate_geometry(g)
    assert any("belongs to no circuit element" in v for v in report.violations)


def test_measure_z_joins_strands():
    g = configure_io(cnot_geometry(), 3, "MeasureZ")
    assert g.config_count == 3
    assert len(g.points) == 22
    assert len(g.segments) == 22
    assert g.segments[0] == Segment(1, 2)
    assert [c.point_id for c in g.config_points] == [9, 12, 15]
    assert validate_geometry(g).ok


def test_measure_z_preserves_other_structure():
    before = cnot_geometry()
    after = parse_geometry(serialize_geometry(configure_io(before, 3, "MeasureZ")))
    assert [p.coords for p in after.points] == [p.coords for p in before.points if p.id != 3]
    assert after.segments[1:] == [Segment(a - (a > 3), b - (b > 3)) for a, b in TABLE_SEGMENTS[2:]]


def test_measure_x_deletes_point_and_segments():
    g = configure_io(cnot_geometry(), 3, "MeasureX")
    assert len(g.segments) == 21
    assert len(g.points) == 22
    assert validate_geometry(g).ok


def test_keep_injection_on_input():
    g = configure_io(cnot_geometry(), 10, "KeepInjection", state="Y")
    assert g.config(10).state == "injectY"
    assert "10,i,Y" in serialize_geometry(g)


def test_keep_injection_on_output_fails():
    with pytest.raises(GeometryError):
        configure_io(cnot_geometry(), 13, "KeepInjection")


def test_configure_unknown_point_fails():
    with pytest.raises(GeometryError):
        configure_io(cnot_geometry(), 4, "MeasureX")
    with pytest.raises(GeometryError):
        configure_io(cnot_geometry(), 99, "InitZ")


def test_generate_rejects_named_gates():
    with pytest.raises(GeometryError):
        generate_geometry(Circuit(qubit_count=1, gates=(NamedGate("TGATE", (1,)),)))


def test_parse_rejects_dangling_reference():
    with pytest.raises(GeometryError):
        parse_geometry("1\n1\n1\n1\n1,2\n1,0,0,1\n1,i\n")


def test_parse_rejects_count_mismatch():
    with pytest.raises(GeometryError):
        parse_geometry("0\n2\n0\n1,0,0,0\n")


def test_compiled_circuit_geometry_counts():
    db = load_database()
    raw = expand_nicm(Circuit(qubit_count=2, gates=(NamedGate("CV", (1, 2)),)), db)
    icm = convert_to_icm(raw, db, ConversionOptions())
    g = generate_geometry(icm)
    expected_config = sum(1 for b in icm.inits.values() if b != InitBasis.ZERO and b != InitBasis.PLUS)
    expected_config += sum(1 for m in icm.measurements.values()
                           if m.basis == MeasBasis.EMPTY or m.basis.conditional)
    assert g.config_count == expected_config
    assert g.injection_count == sum(1 for b in icm.inits.values() if b in (InitBasis.A, InitBasis.Y))
    assert sum(1 for label in g.bijectivity if label.startswith("cnot")) == len(icm.gates)
    assert validate_geometry(g).ok
