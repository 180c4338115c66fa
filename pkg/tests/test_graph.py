"""Knowledge graph: loading, closures (vs the walk oracle), signature matrix."""

import itertools

import pytest
import yaml

from loopfdi.errors import ParseError, UnknownResidual, ValidationError
from loopfdi.graph import (
    build_signature_matrix,
    default_config_text,
    dependency_closure,
    load_system_config,
    validate_graph,
)

from oracles import graph_tables, walk_closure

GOLDEN_ACTIVE = frozenset({"r1", "r2", "r3", "r5", "r6"})


def _doc():
    return yaml.safe_load(default_config_text())


def test_default_load_inventory(graph):
    assert set(graph.physical_sensor_ids()) == {"ft_103", "tc_114", "tc_116", "tc_117", "tc_119"}
    assert set(graph.virtual_sensor_ids()) == {"vf_102", "vt_101", "vt_102", "vt_103", "vt_104"}
    assert graph.residual_ids() == ["r1", "r2", "r3", "r4", "r5", "r6"]
    assert graph.fault_ids() == [f"F{i}" for i in range(1, 10)]


def test_r1_r2_share_the_declared_sensor_list(graph):
    expected = ("ft_103", "tc_114", "tc_117", "vf_102", "tc_119", "tc_116")
    assert graph.residuals["r1"].direct_sensors == expected
    assert graph.residuals["r2"].direct_sensors == expected


def test_empty_sensor_list_rejected():
    doc = _doc()
    doc["sensors"] = []
    with pytest.raises(ValidationError):
        load_system_config(yaml.safe_dump(doc))


def test_dangling_sensor_reference_names_the_id():
    doc = _doc()
    doc["residuals"][0]["direct_sensors"][1] = "tc_999"
    with pytest.raises(ValidationError) as err:
        load_system_config(yaml.safe_dump(doc))
    assert "tc_999" in str(err.value)
    assert err.value.offending_id == "tc_999"


def test_duplicate_sensor_id_rejected():
    doc = _doc()
    doc["sensors"].append(dict(doc["sensors"][0]))
    with pytest.raises(ValidationError) as err:
        load_system_config(yaml.safe_dump(doc))
    assert "ft_103" in str(err.value)


def test_virtual_of_virtual_rejected():
    doc = _doc()
    doc["virtual_sensors"]["vt_101"]["inputs"] = ["vf_102", "tc_119", "tc_116"]
    with pytest.raises(ValidationError) as err:
        load_system_config(yaml.safe_dump(doc))
    assert "vf_102" in str(err.value)


def test_malformed_document_is_a_parse_error():
    with pytest.raises(ParseError):
        load_system_config(":\n  - ][")
    with pytest.raises(ParseError):
        load_system_config("schema_version: 99\nsensors: []\n")


def test_unknown_residual_closure(graph):
    with pytest.raises(UnknownResidual):
        dependency_closure(graph, "r9")


def test_closure_r3_expands_vt_101(graph):
    phys, comps = dependency_closure(graph, "r3")
    assert phys >= {"ft_103", "tc_117", "tc_119", "tc_116"}
    assert "tc_114" not in phys        # its twin vt_101 replaces it
    assert "economizer" in comps
    assert "purification_line" in comps  # via vt_101's solution


def test_closure_r4_excludes_tc_117(graph):
    phys, _ = dependency_closure(graph, "r4")
    assert "tc_117" not in phys
    assert phys == frozenset({"ft_103", "tc_114", "tc_119", "tc_116"})


def test_closure_monotone_over_direct_physicals(graph):
    for rid in graph.residual_ids():
        phys, comps = dependency_closure(graph, rid)
        direct_phys = {
            s for s in graph.residuals[rid].direct_sensors
            if s in graph.physical_sensor_ids()
        }
        assert phys >= direct_phys
        assert comps >= graph.residuals[rid].component_ids


def test_closures_match_walk_oracle(graph):
    tables = graph_tables(graph)
    for rid in graph.residual_ids():
        phys, comps = dependency_closure(graph, rid)
        o_phys, o_comps = walk_closure(*tables, rid)
        assert phys == frozenset(o_phys)
        assert comps == frozenset(o_comps)


def test_signature_f6_is_the_golden_set(graph, matrix):
    assert matrix.rows["F6"] == GOLDEN_ACTIVE


def test_signature_f7_excludes_heat_balance(graph, matrix):
    # the pure heat balance has no conductance term
    assert matrix.rows["F7"] == frozenset({"r2", "r3", "r4", "r5", "r6"})


def test_signatures_non_empty_and_pairwise_distinct(matrix):
    rows = list(matrix.rows.values())
    assert all(rows)
    for a, b in itertools.combinations(matrix.rows, 2):
        assert matrix.rows[a] != matrix.rows[b], (a, b)


def test_signature_closure_duality(graph, matrix):
    # F in consistent faults of residual r  <=>  r in signature(F)
    for fid, fault in graph.faults.items():
        for rid in graph.residual_ids():
            phys, comps = dependency_closure(graph, rid)
            direct = set(graph.residuals[rid].direct_sensors)
            implicated = fault.target in phys or fault.target in comps or fault.target in direct
            assert implicated == (rid in matrix.rows[fid])


def test_load_is_deterministic():
    text = default_config_text()
    m1 = build_signature_matrix(load_system_config(text))
    m2 = build_signature_matrix(load_system_config(text))
    assert m1.rows == m2.rows
    assert m1.residual_order == m2.residual_order


def test_validate_default_config_is_clean(graph):
    assert validate_graph(graph) == []


def test_validate_flags_duplicate_signatures():
    doc = _doc()
    # retarget F9 onto F7's component: identical rows
    for fault in doc["faults"]:
        if fault["id"] == "F9":
            fault["target"] = "economizer"
    g = load_system_config(yaml.safe_dump(doc))
    kinds = [d.kind for d in validate_graph(g)]
    assert "AmbiguityWarning" in kinds
    warn = [d for d in validate_graph(g) if d.kind == "AmbiguityWarning"][0]
    assert set(warn.subject_ids) == {"F7", "F9"}


def test_validate_flags_empty_signature_and_unreachable_sensor():
    doc = _doc()
    doc["components"].append({"id": "isolated_unit", "description": "attached to nothing"})
    doc["faults"].append(
        {
            "id": "F10",
            "name": "ComponentFault-isolated_unit.body:none:none",
            "target": "isolated_unit",
            "kind": "component_degradation",
        }
    )
    doc["sensors"].append(
        {
            "id": "tc_150",
            "kind": "physical",
            "quantity": "temperature",
            "component": "cold_trap",
            "description": "spare thermocouple",
        }
    )
    g = load_system_config(yaml.safe_dump(doc))
    kinds = {d.kind for d in validate_graph(g)}
    assert "EmptySignatureWarning" in kinds
    assert "UnreachableSensorWarning" in kinds


def test_vocabulary_contains_all_identifier_classes(graph):
    vocab = graph.vocabulary()
    assert {"ft_103", "vt_101", "r1", "F6", "economizer"} <= vocab
    assert "economizer-heat-balance_r" in vocab
    assert "SensorFault-economizer.hot:temp:out" in vocab
