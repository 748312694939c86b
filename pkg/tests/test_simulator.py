from dataclasses import replace

import numpy as np
import pytest

from app.exceptions import DomainError, InfeasibleHydraulics, NoPositiveRoot, ValidationError
from app.models.network import Tank, parse_network
from app.models.schedule import GroupSchedule
from app.services.simulator import (
    element_head_gain, group_head, group_power, intercept_flow, simulator, tank_step_factor,
)
from tests.networks import pipe_network_data, reduced_network_data


@pytest.fixture
def model(canonical):
    return canonical.pump_groups[0].model


def test_element_gain_is_single_pump_head(model):
    # n parallel pumps at n q each lift like one pump at q
    assert element_head_gain(model, 40.0, 2, 1.1) == pytest.approx(group_head(model, 20.0, 1, 1.1))
    assert group_head(model, 0.0, 1, 1.0) == pytest.approx(45.0)


def test_intercept_flow_zeroes_the_head(model):
    for n, s in ((1, 1.0), (2, 0.8), (3, 1.2)):
        q = intercept_flow(model, n, s)
        assert q > 0
        assert group_head(model, q, n, s) == pytest.approx(0.0, abs=1e-9)
    assert intercept_flow(model, 2, 1.0) == pytest.approx(2.0 * intercept_flow(model, 1, 1.0))


def test_intercept_flow_requires_negative_quadratic(model):
    with pytest.raises(NoPositiveRoot):
        intercept_flow(replace(model, A=0.01), 1, 1.0)


def test_group_power_affinity(model):
    single = model.power_curve(20.0)
    assert group_power(model, 20.0, 1, 1.0) == pytest.approx(single)
    # two pumps at speed 0.9 share 36 L/s: 2 * 0.9^3 * P(20)
    assert group_power(model, 36.0, 2, 0.9) == pytest.approx(2 * 0.9 ** 3 * single)


def test_group_power_domain(model):
    with pytest.raises(DomainError):
        group_power(model, -5.0, 1, 1.0)
    with pytest.raises(DomainError):
        group_power(model, 100.0, 1, 1.0)
    with pytest.raises(ValueError):
        group_power(model, 10.0, 0, 1.0)


def test_group_head_scaling_identity(model):
    rng = np.random.default_rng(11)
    for _ in range(200):
        varied = replace(model, A=-rng.uniform(1e-3, 0.1), B=rng.uniform(-0.5, 0.5),
                         C=rng.uniform(10.0, 80.0))
        q, n, s = rng.uniform(0.0, 120.0), int(rng.integers(1, 5)), rng.uniform(0.5, 1.3)
        scaled = group_head(varied, q, n, s) / (n * n * s * s)
        assert scaled == pytest.approx(group_head(varied, q / (n * s), 1, 1.0),
                                       rel=1e-10, abs=1e-10)


def test_reversed_pipe_carries_negated_flow():
    data = pipe_network_data()
    forward = simulator.solve_steady_state(parse_network(data), [200.0], [10.0], [])
    data["pipes"][0].update(from_node="D2", to_node="R1")
    backward = simulator.solve_steady_state(parse_network(data), [200.0], [10.0], [])
    assert backward.flows[0] == pytest.approx(-forward.flows[0])
    np.testing.assert_allclose(backward.heads, forward.heads, atol=1e-9)


def test_tank_step_factor():
    tank = Tank(node_id="T", area=100.0, level_min=0.0, level_max=5.0, level_init=1.0)
    assert tank_step_factor(tank, 1.0) == pytest.approx(0.036)
    assert tank_step_factor(tank, 0.5) == pytest.approx(0.018)


def test_single_pipe_steady_state(pipe_only):
    state = simulator.solve_steady_state(pipe_only, [200.0], [10.0], [])
    assert state.flows[0] == pytest.approx(10.0)
    assert state.heads[0] == pytest.approx(200.0 - 0.001 * 100.0)
    assert state.residual <= 1e-8


def test_no_pump_simulation_costs_nothing(pipe_only):
    result = simulator.simulate_eps(pipe_only, GroupSchedule.flat(pipe_only))
    assert result.cost == 0.0
    assert result.power.shape == (0, 1)
    assert result.head_of("D2")[0] == pytest.approx(199.9)


@pytest.fixture(scope="module")
def flat_run(canonical):
    return simulator.simulate_eps(canonical, GroupSchedule.flat(canonical))


def test_flat_run_satisfies_mass_balance(canonical, flat_run):
    lc = canonical.incidence.lambda_c
    demands = canonical.demand_matrix()
    for k in range(canonical.horizon):
        np.testing.assert_allclose(lc @ flat_run.flows[:, k], demands[:, k], atol=1e-7)


def test_flat_run_satisfies_energy_balance(canonical, flat_run):
    """Pipes lose R|q|q; the group gains its characteristic head, tanks at start-of-step heads."""
    for k in range(canonical.horizon):
        for pipe in canonical.pipes:
            q = flat_run.flow_of(pipe.id)[k]
            drop = flat_run.head_of(pipe.from_node)[k] - flat_run.head_of(pipe.to_node)[k]
            assert drop == pytest.approx(pipe.resistance * q * abs(q), abs=1e-6)
        group = canonical.pump_groups[0]
        q = flat_run.flow_of(group.id)[k]
        lift = flat_run.head_of(group.to_node)[k] - flat_run.head_of(group.from_node)[k]
        assert lift == pytest.approx(element_head_gain(group.model, q, 2, 1.0), abs=1e-6)


def test_flat_run_tank_integration(canonical, flat_run):
    tank = canonical.tanks[0]
    factor = tank_step_factor(tank, 1.0)
    previous = canonical.tank_initial_head(tank)
    for k in range(canonical.horizon):
        inflow = flat_run.flow_of("P3")[k]
        assert flat_run.head_of("T5")[k] == pytest.approx(previous)
        assert flat_run.tank_heads[0, k] == pytest.approx(previous + factor * inflow)
        previous = flat_run.tank_heads[0, k]
    np.testing.assert_allclose(flat_run.tank_levels[0], flat_run.tank_heads[0] - 230.0)


def test_flat_run_cost(canonical, flat_run):
    tariff = canonical.inputs.tariff
    expected = sum(tariff[k] * flat_run.power[0, k] for k in range(canonical.horizon))
    assert flat_run.cost == pytest.approx(expected)
    assert np.all(flat_run.power > 0)
    assert flat_run.step_cost.shape == (24,)


def test_flat_run_frame_and_dict(flat_run):
    frame = flat_run.to_frame()
    assert len(frame) == 24
    for column in ("k", "tariff", "head_J2", "head_T5", "flow_G1", "tank_level_T5",
                   "n_active_G1", "speed_G1", "power_G1", "cost"):
        assert column in frame.columns
    data = flat_run.to_dict()
    assert data["cost"] == pytest.approx(flat_run.cost)
    assert data["groups"] == ["G1"]


def test_reduced_network_fills_tank(reduced):
    result = simulator.simulate_eps(reduced, GroupSchedule.flat(reduced))
    inflow = result.flow_of("P1")
    assert np.all(inflow > 0)
    assert result.flow_of("G1") == pytest.approx(inflow + np.array([20.0, 24.0]))
    assert not result.level_violations


def test_demand_without_supply_is_infeasible():
    data = reduced_network_data()
    # the pump is the only path from the reservoir; drop the tank
    data["nodes"] = [n for n in data["nodes"] if n["id"] != "T3"]
    data["pipes"] = [p for p in data["pipes"] if p["id"] != "P1"]
    data["tanks"] = []
    network = parse_network(data)
    with pytest.raises(InfeasibleHydraulics) as excinfo:
        simulator.simulate_eps(network, GroupSchedule.off(network))
    assert excinfo.value.timestep == 1
    assert "step 1" in str(excinfo.value)


def test_speed_without_running_pump_rejected(reduced):
    with pytest.raises(ValidationError):
        simulator.solve_steady_state(reduced, reduced.initial_fixed_heads(), [0.0, 20.0],
                                     [(0, 1.0)])


def test_idle_group_carries_no_flow(reduced):
    schedule = GroupSchedule(("G1",), np.array([[0, 1]]), np.array([[0.0, 1.0]]))
    result = simulator.simulate_eps(reduced, schedule)
    assert result.flow_of("G1")[0] == 0.0
    assert result.power[0, 0] == 0.0
    # the tank supplies the demand on its own
    assert result.flow_of("P1")[0] == pytest.approx(-20.0, abs=1e-6)
    assert result.tank_heads[0, 0] < reduced.tank_initial_head(reduced.tanks[0])
