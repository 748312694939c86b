import json
import math

import numpy as np
import pytest

from app.exceptions import ParseError, TopologyError, ValidationError
from app.models.network import (
    load_network, network_to_dict, parse_network, save_network, with_horizon, with_inputs,
)
from app.models.schedule import GroupSchedule, load_schedule
from tests.networks import DATA_DIR, pipe_network_data, reduced_network_data


def test_canonical_network_shape(canonical):
    assert [n.id for n in canonical.calc_nodes] == ["J2", "J3", "J4", "D6"]
    assert [n.id for n in canonical.fixed_nodes] == ["R1", "T5"]
    assert canonical.element_ids == ("P1", "P2", "P3", "P4", "G1")
    assert canonical.horizon == 24
    assert canonical.n_pumps_total == 2
    assert canonical.pump_groups[0].pump_ids == ("G1#1", "G1#2")


def test_tank_area_from_diameter(canonical):
    tank = canonical.tanks[0]
    assert tank.area == pytest.approx(math.pi * 15.0 ** 2 / 4.0)
    assert tank.diameter == pytest.approx(15.0)
    assert canonical.tank_initial_head(tank) == pytest.approx(232.5)
    assert canonical.tank_head_bounds(tank) == pytest.approx((230.5, 235.0))


def test_incidence_signs(canonical):
    inc = canonical.incidence
    lc = inc.lambda_c.toarray()
    lf = inc.lambda_f.toarray()
    assert lc.shape == (4, 5)
    assert lf.shape == (2, 5)

    p2 = inc.element_index("P2")
    assert lc[inc.calc_index("J3"), p2] == -1.0
    assert lc[inc.calc_index("J4"), p2] == 1.0

    p1 = inc.element_index("P1")
    assert lf[inc.fixed_index("R1"), p1] == -1.0
    assert lc[inc.calc_index("J2"), p1] == 1.0

    # every element has exactly one from end and one to end
    both = np.vstack([lc, lf])
    assert np.all(both.sum(axis=0) == 0.0)
    assert np.all(np.abs(both).sum(axis=0) == 2.0)


def test_demand_matrix_follows_calc_nodes(canonical):
    demands = canonical.demand_matrix()
    assert demands.shape == (4, 24)
    assert np.all(demands[:3] == 0.0)
    assert demands[3, 0] == pytest.approx(29.89)


def test_inputs_are_read_only(canonical):
    with pytest.raises(ValueError):
        canonical.inputs.demands[0, 0] = 1.0


def test_network_dict_round_trip(canonical):
    assert parse_network(network_to_dict(canonical)) == canonical


def test_network_file_round_trip(reduced, tmp_path):
    path = str(tmp_path / "reduced.json")
    save_network(reduced, path)
    assert load_network(path) == reduced


def test_with_horizon_truncates(canonical):
    short = with_horizon(canonical, 3)
    assert short.horizon == 3
    assert short.inputs.demands.shape == (1, 3)
    assert short.inputs.tariff.tolist() == [0.1, 0.1, 0.1]
    with pytest.raises(ValidationError):
        with_horizon(canonical, 25)


def test_with_inputs_replaces_series(reduced):
    changed = with_inputs(reduced, demands=[[1.0, 2.0]], tariff=[0.5, 0.5])
    assert changed.inputs.demand_of("D4").tolist() == [1.0, 2.0]
    assert changed.inputs.tariff.tolist() == [0.5, 0.5]
    assert reduced.inputs.demand_of("D4").tolist() == [20.0, 24.0]


def test_load_network_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_network(str(path))


def test_load_network_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_network(str(tmp_path / "missing.json"))


def _expect_validation(data, field=None, error=ValidationError):
    with pytest.raises(error) as excinfo:
        parse_network(data)
    if field:
        assert excinfo.value.field_path.startswith(field)
    return excinfo.value


def test_duplicate_node_id():
    data = pipe_network_data()
    data["nodes"].append({"id": "D2", "kind": "connection", "elevation": 0.0})
    _expect_validation(data, "nodes[2].id")


def test_unknown_endpoint():
    data = pipe_network_data()
    data["pipes"][0]["to_node"] = "X9"
    _expect_validation(data, "pipes[0].to_node", TopologyError)


def test_disconnected_node():
    data = pipe_network_data()
    data["nodes"].append({"id": "J3", "kind": "connection", "elevation": 0.0})
    _expect_validation(data, error=TopologyError)


def test_component_without_fixed_head():
    data = pipe_network_data()
    data["nodes"] += [
        {"id": "J3", "kind": "connection", "elevation": 0.0},
        {"id": "J4", "kind": "connection", "elevation": 0.0},
    ]
    data["pipes"].append({"id": "P2", "from_node": "J3", "to_node": "J4", "resistance": 0.1})
    error = _expect_validation(data, error=TopologyError)
    assert "J3" in str(error)


def test_demand_only_at_demand_nodes():
    data = reduced_network_data()
    data["inputs"]["demands"]["J2"] = [1.0, 1.0]
    _expect_validation(data, "inputs.demands.J2")


def test_tariff_length_must_match_horizon():
    data = pipe_network_data()
    data["inputs"]["tariff"] = [0.1, 0.2]
    _expect_validation(data, "inputs")


def test_negative_demand_rejected():
    data = pipe_network_data()
    data["inputs"]["demands"]["D2"] = [-1.0]
    _expect_validation(data, "inputs.demands")


def test_non_positive_resistance():
    data = pipe_network_data()
    data["pipes"][0]["resistance"] = 0.0
    _expect_validation(data, "pipes[0].resistance")


def test_head_curve_must_open_downwards():
    data = reduced_network_data()
    data["pump_groups"][0]["model"]["head_coeffs"] = [0.01, -0.02, 45.0]
    _expect_validation(data, "pump_groups[0].model")


def test_speed_order():
    data = reduced_network_data()
    data["pump_groups"][0]["model"]["s_min"] = 1.1
    _expect_validation(data, "pump_groups[0].model")


def test_tank_needs_exactly_one_size():
    data = reduced_network_data()
    data["tanks"][0]["area"] = 100.0
    _expect_validation(data, "tanks[0]")


def test_tank_initial_level_within_limits():
    data = reduced_network_data()
    data["tanks"][0]["level_init"] = 6.0
    _expect_validation(data, "tanks[0]")


def test_tank_node_without_entry():
    data = reduced_network_data()
    data["tanks"] = []
    _expect_validation(data, "tanks")


def test_separator_characters_rejected_in_ids():
    data = pipe_network_data()
    data["pipes"][0]["id"] = "P#1"
    _expect_validation(data, "pipes[0].id")


def test_schema_version_required():
    data = pipe_network_data()
    del data["schema_version"]
    _expect_validation(data, "schema_version")


def test_flat_schedule_fixture(canonical):
    schedule = load_schedule(f"{DATA_DIR}/flat_schedule.json", canonical)
    flat = GroupSchedule.flat(canonical)
    assert np.array_equal(schedule.n_active, flat.n_active)
    assert np.allclose(schedule.speed, flat.speed)
    assert schedule.controls_at(0) == [(2, 1.0)]


def test_schedule_rejects_too_many_pumps(reduced):
    data = {"groups": {"G1": {"n_active": [2, 1], "speed": [1.0, 1.0]}}}
    with pytest.raises(ValidationError) as excinfo:
        GroupSchedule.from_dict(data, reduced)
    assert excinfo.value.field_path == "groups.G1[0]"


def test_schedule_rejects_speed_out_of_range(reduced):
    data = {"groups": {"G1": {"n_active": [1, 1], "speed": [1.0, 1.5]}}}
    with pytest.raises(ValidationError):
        GroupSchedule.from_dict(data, reduced)


def test_schedule_off_group_needs_zero_speed(reduced):
    data = {"groups": {"G1": {"n_active": [0, 1], "speed": [0.8, 1.0]}}}
    with pytest.raises(ValidationError):
        GroupSchedule.from_dict(data, reduced)


def test_schedule_horizon_must_match(reduced):
    data = {"groups": {"G1": {"n_active": [1], "speed": [1.0]}}}
    with pytest.raises(ValidationError):
        GroupSchedule.from_dict(data, reduced)


def test_schedule_missing_group(reduced):
    with pytest.raises(ValidationError):
        GroupSchedule.from_dict({"groups": {}}, reduced)


def test_schedule_dict_round_trip(reduced, tmp_path):
    schedule = GroupSchedule(("G1",), np.array([[1, 0]]), np.array([[0.9, 0.0]]))
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(schedule.to_dict()))
    loaded = load_schedule(str(path), reduced)
    assert loaded.n_active.tolist() == [[1, 0]]
    assert loaded.speed.tolist() == [[0.9, 0.0]]
