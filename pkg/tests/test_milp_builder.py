import itertools
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from app.exceptions import AuditError
from app.models.milp import VariableKey, VariableKind, RowTag
from app.models.network import parse_network
from app.models.schedule import GroupSchedule
from app.services.linearizer import linearizer, pipe_pwl_error, pump_pwl_error
from app.services.milp_builder import (
    MilpBuilder, build_layout, build_objective, expected_row_counts, milp_builder,
    row_pair_counts, snap_simulation,
)
from app.services.milp_solver import LpStatus, solve_lp
from app.services.simulator import simulator
from tests.networks import fuzzed_network_data


def _pipeline(network, config=None):
    sim = simulator.simulate_eps(network, GroupSchedule.flat(network))
    linearized = linearizer.linearize(network, sim, config)
    problem = milp_builder.build(network, linearized)
    return sim, linearized, problem


@pytest.fixture(scope="module")
def canonical_build(canonical):
    return _pipeline(canonical)


@pytest.fixture(scope="module")
def covering_build(canonical):
    """Pipe breakpoints wide enough for every simulated flow."""
    return _pipeline(canonical, {"BREAKPOINT_COVERAGE": 1.5})


@pytest.fixture(scope="module")
def canonical_k1_build(canonical_k1):
    return _pipeline(canonical_k1)


def _rows(problem, sense, family):
    tags = problem.eq_tags if sense == "eq" else problem.ub_tags
    return [i for i, tag in enumerate(tags) if tag.family == family]


def test_canonical_layout_size(canonical, canonical_build):
    _, _, problem = canonical_build
    assert problem.n_columns == 1560
    assert len(problem.integer) == 22 * 24
    assert problem.n_eq == 552
    assert problem.n_ub == 2234


def test_single_step_layout(canonical_k1, canonical_k1_build):
    _, _, problem = canonical_k1_build
    assert problem.n_columns == 65
    assert len(problem.integer) == 22
    assert problem.n_eq == 23
    assert problem.n_ub == 93
    assert ("ub", "final_tank_level") not in problem.family_counts()


def test_smallest_network_layout(pipe_only):
    layout = build_layout(pipe_only)
    assert len(layout) == 8
    assert [key.kind for key in layout.keys] == [
        VariableKind.H_C, VariableKind.Q_PIPE] + [VariableKind.WW] * 3 + [VariableKind.BB] * 3
    _, _, problem = _pipeline(pipe_only)
    assert problem.n_eq == 4
    assert problem.n_ub == 6
    assert np.all(problem.c == 0.0)


def test_layout_is_a_bijection(canonical_build):
    _, _, problem = canonical_build
    layout = problem.layout
    names = layout.names
    assert len(set(names)) == len(names)
    for column in (0, 17, 640, len(layout) - 1):
        key = layout.key(column)
        assert VariableKey.from_name(key.name) == key
        assert layout.index(*key) == column
    assert layout.index("n_pump", "G1#2", 0, 5) in set(layout.integer_columns.tolist())
    assert names[layout.index("AA", "G1#2", 4, 24)] == "AA:G1#2:4:24"


def test_column_order_is_kind_element_segment_step(canonical_build):
    _, _, problem = canonical_build
    keys = problem.layout.keys
    assert keys[0] == VariableKey(VariableKind.H_C, "J2", 0, 1)
    assert keys[1] == VariableKey(VariableKind.H_C, "J2", 0, 2)
    assert keys[-1] == VariableKey(VariableKind.AA, "G1#2", 4, 24)


def test_family_counts_match_census(canonical, canonical_build):
    _, _, problem = canonical_build
    expected = {k: v for k, v in expected_row_counts(canonical).items() if v}
    assert problem.family_counts() == expected
    assert row_pair_counts(canonical) == {"pipe_segment_bounds": 288, "pump_box": 192}


def test_audit_rejects_wrong_census(canonical_k1, canonical_k1_build):
    _, linearized, problem = canonical_k1_build
    builder = MilpBuilder(canonical_k1, linearized)
    truncated = problem.__class__(
        c=problem.c, a_eq=problem.a_eq, b_eq=problem.b_eq, a_ub=problem.a_ub,
        b_ub=problem.b_ub, lb=problem.lb, ub=problem.ub, integer=problem.integer,
        layout=problem.layout, eq_tags=problem.eq_tags[:-1], ub_tags=problem.ub_tags,
    )
    with pytest.raises(AuditError) as excinfo:
        builder.audit(truncated)
    assert excinfo.value.family == "pump_segment_selection"


def test_objective_prices_power_only(canonical, canonical_build):
    _, _, problem = canonical_build
    layout = problem.layout
    power = set(layout.columns("P_pump").tolist())
    for column in np.flatnonzero(problem.c):
        assert column in power
    for column in power:
        key = layout.key(column)
        assert problem.c[column] == pytest.approx(canonical.inputs.tariff[key.k - 1])


def test_integer_columns_are_binary(canonical_build):
    _, _, problem = canonical_build
    assert np.all(problem.lb[problem.integer] == 0.0)
    assert np.all(problem.ub[problem.integer] == 1.0)


def test_symmetry_rows_keep_high_units_first(canonical_build):
    _, _, problem = canonical_build
    layout = problem.layout
    rows = _rows(problem, "ub", "symmetry_breaking")
    assert len(rows) == 24
    row = problem.a_ub.getrow(rows[0]).toarray().ravel()
    assert row[layout.index("n_pump", "G1#1", 0, 1)] == 1.0
    assert row[layout.index("n_pump", "G1#2", 0, 1)] == -1.0
    assert problem.b_ub[rows[0]] == 0.0


def test_tank_heads_enter_at_start_of_step(canonical_build):
    _, _, problem = canonical_build
    layout = problem.layout
    rows = [i for i, tag in enumerate(problem.eq_tags)
            if tag.family == "pipe_headloss" and tag.element == "P3"]
    first = problem.a_eq.getrow(rows[0]).toarray().ravel()
    second = problem.a_eq.getrow(rows[1]).toarray().ravel()
    tank_columns = layout.columns("h_t")
    assert np.all(first[tank_columns] == 0.0)
    # P3 runs J4 -> T5, so the tank head of step 1 enters the step-2 row negated
    assert second[layout.index("h_t", "T5", 0, 1)] == -1.0
    assert problem.b_eq[rows[0]] == pytest.approx(232.5)


def test_final_level_rows(canonical_build):
    _, _, problem = canonical_build
    rows = _rows(problem, "ub", "final_tank_level")
    assert len(rows) == 2
    assert problem.ub_tags[rows[0]] == RowTag("final_tank_level", "T5", 24)
    assert sorted(problem.b_ub[rows].tolist()) == pytest.approx([0.1, 0.1])


def test_final_level_offset_shifts_rows(canonical):
    sim = simulator.simulate_eps(canonical, GroupSchedule.flat(canonical))
    linearized = linearizer.linearize(canonical, sim)
    problem = milp_builder.build(canonical, linearized, final_level_offset=0.5)
    rows = _rows(problem, "ub", "final_tank_level")
    assert problem.b_ub[rows].tolist() == pytest.approx([0.6, -0.4])
    assert problem.meta["final_level_offset"] == 0.5


def test_big_u_constants_positive(canonical_build):
    _, _, problem = canonical_build
    assert problem.big_u.u_power > 0
    assert problem.big_u.u_pump > 0
    assert problem.big_u.u_dom > 0


def _residuals(problem, x):
    eq = problem.a_eq @ x - problem.b_eq
    ub = np.maximum(problem.a_ub @ x - problem.b_ub, 0.0)
    by_family = {}
    for tags, values in ((problem.eq_tags, np.abs(eq)), (problem.ub_tags, ub)):
        for tag, value in zip(tags, values):
            by_family[tag.family] = max(by_family.get(tag.family, 0.0), float(value))
    return by_family


def test_snapped_simulation_satisfies_exact_rows(canonical, covering_build):
    sim, linearized, problem = covering_build
    x = snap_simulation(problem, canonical, linearized, sim)
    residuals = _residuals(problem, x)

    exact = ("node_balance", "tank_dynamics", "pipe_segment_flow", "pipe_segment_selection",
             "pump_segment_speed", "pump_segment_flow", "pump_segment_selection",
             "pipe_segment_bounds", "pump_speed_box", "pump_flow_box", "pump_domain",
             "symmetry_breaking", "pump_power_gate")
    for family in exact:
        assert residuals[family] <= 1e-6, family

    pipe_error = max(pipe_pwl_error(linearized.pipes[p.id]) for p in canonical.pipes)
    assert residuals["pipe_headloss"] <= 1.01 * pipe_error + 1e-6

    model = canonical.pump_groups[0].model
    pump_error = pump_pwl_error(model, linearized.pumps["G1"], n_points=100)
    assert residuals["pump_characteristic"] <= 1.05 * pump_error + 1e-2


def test_power_rows_gate_on_status(canonical_k1, canonical_k1_build):
    _, linearized, problem = canonical_k1_build
    layout = problem.layout
    tangent = linearized.tangents["G1"]
    q, s, p, n = (layout.index(kind, "G1#2", 0, 1)
                  for kind in ("q_pump", "s_pump", "P_pump", "n_pump"))
    rows = [i for i, tag in enumerate(problem.ub_tags)
            if tag.family in ("pump_power_tangent", "pump_power_gate") and tag.element == "G1#2"]

    def worst(values):
        x = np.zeros(problem.n_columns)
        for column, value in values.items():
            x[column] = value
        return float(np.max(problem.a_ub[rows] @ x - problem.b_ub[rows]))

    on_power = tangent.evaluate(20.0, 1.0)
    assert worst({q: 20.0, s: 1.0, n: 1.0, p: on_power}) <= 1e-9
    assert worst({q: 20.0, s: 1.0, n: 1.0, p: on_power + 1.0}) > 0.5
    # a stopped unit may not draw power
    assert worst({n: 0.0, p: 1.0}) > 0.5
    assert worst({n: 0.0, p: 0.0}) <= 1e-9


def test_objective_scales_with_step_length(canonical_build, canonical):
    _, _, problem = canonical_build
    layout = problem.layout
    c = build_objective(layout, canonical.inputs.tariff, dt_hours=0.5)
    column = layout.index("P_pump", "G1#1", 0, 8)
    assert c[column] == pytest.approx(0.5 * canonical.inputs.tariff[7])
    assert np.count_nonzero(c) == len(layout.columns("P_pump"))


def test_census_holds_on_fuzzed_networks():
    rng = np.random.default_rng(20240611)
    for _ in range(50):
        network = parse_network(fuzzed_network_data(rng))
        K = network.horizon
        sim = SimpleNamespace(horizon=K, dt_hours=1.0,
                              flow_of=lambda element_id: np.full(K, 15.0))
        problem = milp_builder.build(network, linearizer.linearize(network, sim))

        expected = {k: v for k, v in expected_row_counts(network).items() if v}
        assert problem.family_counts() == expected, network.name
        units = network.n_pumps_total
        assert problem.n_columns == K * (len(network.calc_nodes) + len(network.tanks)
                                         + 7 * len(network.pipes) + 16 * units)
        assert len(problem.integer) == K * (3 * len(network.pipes) + 5 * units)


def _unit_columns(layout, pump_id):
    return {kind: layout.index(kind, pump_id, 0, 1)
            for kind in ("q_pump", "s_pump", "P_pump", "n_pump")}


def test_stopped_unit_carries_nothing(canonical_k1_build):
    _, _, problem = canonical_k1_build
    layout = problem.layout
    low = _unit_columns(layout, "G1#1")
    lb, ub = problem.lb.copy(), problem.ub.copy()
    ub[low["n_pump"]] = 0.0
    for kind in ("q_pump", "s_pump", "P_pump"):
        c = np.zeros(problem.n_columns)
        c[low[kind]] = -1.0
        solution = solve_lp(replace(problem, c=c), lb, ub)
        assert solution.status == LpStatus.OPTIMAL
        assert -solution.objective <= 1e-7, kind


def test_running_unit_sits_on_its_plane(canonical_k1, canonical_k1_build):
    _, linearized, problem = canonical_k1_build
    layout = problem.layout
    pwl = linearized.pumps["G1"]
    tangent = linearized.tangents["G1"]
    group = canonical_k1.pump_groups[0]
    unit = _unit_columns(layout, "G1#2")
    aa = [layout.index("AA", "G1#2", i, 1) for i in range(1, pwl.n_planes + 1)]
    rng = np.random.default_rng(3)

    solved = 0
    for plane in range(pwl.n_planes):
        lb, ub = problem.lb.copy(), problem.ub.copy()
        ub[layout.index("n_pump", "G1#1", 0, 1)] = 0.0
        lb[unit["n_pump"]] = 1.0
        for i, column in enumerate(aa):
            lb[column] = ub[column] = float(i == plane)
        c = np.zeros(problem.n_columns)
        c[[unit["q_pump"], unit["s_pump"]]] = rng.uniform(-1.0, 1.0, 2)
        solution = solve_lp(replace(problem, c=c), lb, ub)
        if solution.status != LpStatus.OPTIMAL:
            continue
        solved += 1
        x = solution.x
        q, s, p = x[unit["q_pump"]], x[unit["s_pump"]], x[unit["P_pump"]]
        gain = (x[layout.index("h_c", group.to_node, 0, 1)]
                - x[layout.index("h_c", group.from_node, 0, 1)])
        assert np.all(pwl.domain_rows(plane, q, s) <= 1e-7)
        assert p == pytest.approx(tangent.evaluate(q, s), abs=1e-6)
        assert gain == pytest.approx(pwl.plane_value(plane, q, s), abs=1e-6)
    assert solved > 0


def test_gated_rows_are_slack_for_a_stopped_unit(canonical_k1, canonical_k1_build):
    _, linearized, problem = canonical_k1_build
    layout = problem.layout
    builder = MilpBuilder(canonical_k1, linearized)
    group = canonical_k1.pump_groups[0]
    gated = ("pump_power_tangent", "pump_power_gate", "pump_speed_box", "pump_flow_box",
             "pump_characteristic", "pump_domain")
    rows = [i for i, tag in enumerate(problem.ub_tags)
            if tag.family in gated and tag.element == "G1#1"]
    heads = [layout.index("h_c", node, 0, 1) for node in (group.from_node, group.to_node)]

    for values in itertools.product((builder.head_low, builder.head_high), repeat=2):
        x = np.zeros(problem.n_columns)
        x[heads] = values
        assert float(np.max(problem.a_ub[rows] @ x - problem.b_ub[rows])) <= 1e-9


def test_gated_rows_use_their_own_constants(canonical_k1_build):
    _, linearized, problem = canonical_k1_build
    layout = problem.layout
    n = layout.index("n_pump", "G1#2", 0, 1)
    tangent = linearized.tangents["G1"]

    def n_coefficients(family):
        rows = [i for i, tag in enumerate(problem.ub_tags)
                if tag.family == family and tag.element == "G1#2"]
        return problem.a_ub[rows].toarray()[:, n]

    assert sorted(n_coefficients("pump_power_tangent")) == pytest.approx(
        sorted([tangent.c, -tangent.c]))
    assert np.all(np.abs(n_coefficients("pump_characteristic")) <= problem.big_u.u_pump)
    assert np.all(n_coefficients("pump_domain") == 0.0)
    domain = [i for i, tag in enumerate(problem.ub_tags) if tag.family == "pump_domain"]
    assert np.all(problem.b_ub[domain] == 0.0)


def test_root_relaxation_prices_pumping(reduced):
    _, _, problem = _pipeline(reduced)
    solution = solve_lp(problem)
    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective > 1e-3
