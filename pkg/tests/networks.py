import copy
import os

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')
CANONICAL_PATH = os.path.join(DATA_DIR, 'canonical_network.json')

PUMP_MODEL = {
    "power_coeffs": [-2e-05, -0.0015, 0.4, 3.0],
    "head_coeffs": [-0.0185, -0.02, 45.0],
    "s_min": 0.7,
    "s_max": 1.2,
    "q_nominal": 22.0,
    "s_nominal": 1.0,
}


def reduced_network_data(horizon=2):
    """One pump lifting from a reservoir into a junction feeding a tank and a demand."""
    demand = [20.0, 24.0, 18.0, 26.0]
    tariff = [0.10, 0.30, 0.30, 0.10]
    return {
        "schema_version": "1.0",
        "name": "reduced-one-pump-one-tank",
        "nodes": [
            {"id": "R1", "kind": "reservoir", "elevation": 200.0},
            {"id": "J2", "kind": "connection", "elevation": 195.0},
            {"id": "T3", "kind": "tank", "elevation": 230.0},
            {"id": "D4", "kind": "demand", "elevation": 200.0},
        ],
        "pipes": [
            {"id": "P1", "from_node": "J2", "to_node": "T3", "resistance": 0.002},
            {"id": "P2", "from_node": "J2", "to_node": "D4", "resistance": 0.003},
        ],
        "pump_groups": [
            {"id": "G1", "from_node": "R1", "to_node": "J2", "n_pumps": 1,
             "model": copy.deepcopy(PUMP_MODEL)},
        ],
        "tanks": [
            {"node": "T3", "diameter": 15.0, "level_min": 0.5, "level_max": 5.0,
             "level_init": 2.5, "final_level_tolerance": 0.1},
        ],
        "inputs": {
            "horizon": horizon,
            "dt_hours": 1.0,
            "demands": {"D4": demand[:horizon]},
            "tariff": tariff[:horizon],
        },
    }


def pipe_network_data():
    """A reservoir feeding one demand through one pipe, single step."""
    return {
        "schema_version": "1.0",
        "name": "single-pipe",
        "nodes": [
            {"id": "R1", "kind": "reservoir", "elevation": 200.0},
            {"id": "D2", "kind": "demand", "elevation": 180.0},
        ],
        "pipes": [
            {"id": "P1", "from_node": "R1", "to_node": "D2", "resistance": 0.001},
        ],
        "inputs": {
            "horizon": 1,
            "dt_hours": 1.0,
            "demands": {"D2": [10.0]},
            "tariff": [0.1],
        },
    }



def fuzzed_network_data(rng):
    """A random chain of junctions behind one or two pump groups, with an optional tank."""
    horizon = int(rng.integers(1, 5))
    chain = [f"J{i}" for i in range(2, 2 + int(rng.integers(1, 4)))]
    with_tank = bool(rng.integers(0, 2))

    nodes = [{"id": "R1", "kind": "reservoir", "elevation": 200.0}]
    nodes += [{"id": j, "kind": "connection", "elevation": float(rng.uniform(185.0, 200.0))}
              for j in chain]
    nodes.append({"id": "D9", "kind": "demand", "elevation": 195.0})

    path = chain + ["D9"]
    pipes = [{"id": f"P{i}", "from_node": a, "to_node": b,
              "resistance": float(rng.uniform(1e-3, 5e-3))}
             for i, (a, b) in enumerate(zip(path[:-1], path[1:]), start=1)]

    groups = [{"id": f"G{g}", "from_node": "R1", "to_node": chain[0],
               "n_pumps": int(rng.integers(1, 4)), "model": copy.deepcopy(PUMP_MODEL)}
              for g in range(1, int(rng.integers(1, 3)) + 1)]

    tanks = []
    if with_tank:
        nodes.append({"id": "T8", "kind": "tank", "elevation": 230.0})
        pipes.append({"id": f"P{len(pipes) + 1}", "from_node": chain[-1], "to_node": "T8",
                      "resistance": 0.002})
        tanks.append({"node": "T8", "diameter": 15.0, "level_min": 0.5, "level_max": 5.0,
                      "level_init": 2.5, "final_level_tolerance": 0.1})

    return {
        "schema_version": "1.0",
        "name": "fuzzed-chain",
        "nodes": nodes,
        "pipes": pipes,
        "pump_groups": groups,
        "tanks": tanks,
        "inputs": {
            "horizon": horizon,
            "dt_hours": 1.0,
            "demands": {"D9": rng.uniform(10.0, 30.0, horizon).round(3).tolist()},
            "tariff": rng.uniform(0.05, 0.3, horizon).round(3).tolist(),
        },
    }
