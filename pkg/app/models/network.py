"""
Network model: nodes, pipes, pump groups, tanks and time-series inputs.

A Network is immutable once loaded; its incidence structure is built at
construction time and shared read-only.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import networkx as nx
import numpy as np
import pydantic
import scipy.sparse as sp

from app.exceptions import ParseError, ValidationError, TopologyError
from app.models.schema import SCHEMA_VERSION, NetworkFile, NodeKind

logger = logging.getLogger(__name__)

FIXED_KINDS = (NodeKind.RESERVOIR, NodeKind.TANK)


def _readonly(values, dtype=float):
    array = np.array(values, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    elevation: float

    @property
    def is_fixed_head(self):
        return self.kind in FIXED_KINDS


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    resistance: float


@dataclass(frozen=True)
class PumpModel:
    """Power curve P(x) = a3 x^3 + a2 x^2 + a1 x + a0 and head curve coefficients."""
    a3: float
    a2: float
    a1: float
    a0: float
    A: float
    B: float
    C: float
    s_min: float
    s_max: float
    q_nominal: float
    s_nominal: float = 1.0

    @property
    def power_coeffs(self):
        return (self.a3, self.a2, self.a1, self.a0)

    @property
    def head_coeffs(self):
        return (self.A, self.B, self.C)

    def power_curve(self, x):
        return ((self.a3 * x + self.a2) * x + self.a1) * x + self.a0


@dataclass(frozen=True)
class PumpGroup:
    id: str
    from_node: str
    to_node: str
    n_pumps: int
    model: PumpModel

    @property
    def pump_ids(self):
        """Ids of the individual units, ``<group>#1`` .. ``<group>#n``."""
        return tuple(f"{self.id}#{u}" for u in range(1, self.n_pumps + 1))


@dataclass(frozen=True)
class Tank:
    node_id: str
    area: float
    level_min: float
    level_max: float
    level_init: float
    final_level_tolerance: float = 0.0

    @property
    def diameter(self):
        return 2.0 * np.sqrt(self.area / np.pi)


@dataclass(frozen=True, eq=False)
class TimeSeriesInput:
    horizon: int
    dt_hours: float
    demand_nodes: Tuple[str, ...]
    demands: np.ndarray
    tariff: np.ndarray

    def demand_of(self, node_id):
        if node_id in self.demand_nodes:
            return self.demands[self.demand_nodes.index(node_id)]
        return np.zeros(self.horizon)

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesInput):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.dt_hours == other.dt_hours
            and self.demand_nodes == other.demand_nodes
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.tariff, other.tariff)
        )


@dataclass(frozen=True, eq=False)
class IncidenceStructure:
    """Signed node-element incidence: -1 at the from node, +1 at the to node."""
    calc_nodes: Tuple[str, ...]
    fixed_nodes: Tuple[str, ...]
    elements: Tuple[str, ...]
    lambda_c: sp.csr_matrix
    lambda_f: sp.csr_matrix

    def calc_index(self, node_id):
        return self.calc_nodes.index(node_id)

    def fixed_index(self, node_id):
        return self.fixed_nodes.index(node_id)

    def element_index(self, element_id):
        return self.elements.index(element_id)


@dataclass(frozen=True)
class Network:
    name: str
    nodes: Tuple[Node, ...]
    pipes: Tuple[Pipe, ...]
    pump_groups: Tuple[PumpGroup, ...]
    tanks: Tuple[Tank, ...]
    inputs: TimeSeriesInput
    incidence: IncidenceStructure = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "incidence", build_incidence(self))

    @property
    def horizon(self):
        return self.inputs.horizon

    @property
    def calc_nodes(self):
        return tuple(n for n in self.nodes if not n.is_fixed_head)

    @property
    def fixed_nodes(self):
        return tuple(n for n in self.nodes if n.is_fixed_head)

    @property
    def element_ids(self):
        return tuple(p.id for p in self.pipes) + tuple(g.id for g in self.pump_groups)

    @property
    def n_pumps_total(self):
        return sum(g.n_pumps for g in self.pump_groups)

    def node(self, node_id) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def tank_at(self, node_id) -> Optional[Tank]:
        for tank in self.tanks:
            if tank.node_id == node_id:
                return tank
        return None

    def tank_head_bounds(self, tank):
        elevation = self.node(tank.node_id).elevation
        return elevation + tank.level_min, elevation + tank.level_max

    def tank_initial_head(self, tank):
        return self.node(tank.node_id).elevation + tank.level_init

    def demand_matrix(self):
        """Demand per calculated node and step, [n_c x K] in L/s."""
        return np.vstack(
            [self.inputs.demand_of(n.id) for n in self.calc_nodes]
        ) if self.calc_nodes else np.zeros((0, self.horizon))

    def initial_fixed_heads(self):
        """Reservoir heads and initial tank heads in fixed-node order."""
        heads = []
        for node in self.fixed_nodes:
            if node.kind == NodeKind.TANK:
                heads.append(self.tank_initial_head(self.tank_at(node.id)))
            else:
                heads.append(node.elevation)
        return np.array(heads, dtype=float)

    def element_endpoints(self):
        """(id, from_node, to_node) for pipes then pump groups."""
        return [(p.id, p.from_node, p.to_node) for p in self.pipes] + \
            [(g.id, g.from_node, g.to_node) for g in self.pump_groups]

    def replace(self, **changes):
        """Copy with some fields replaced; the incidence is rebuilt."""
        return replace(self, **changes)


def build_incidence(network) -> IncidenceStructure:
    """Build the calculated-node and fixed-node incidence matrices.

    Args:
        network (Network): A validated network.

    Returns:
        IncidenceStructure: lambda_c [calc x elements] and lambda_f [fixed x elements].
    """
    calc = tuple(n.id for n in network.nodes if not n.is_fixed_head)
    fixed = tuple(n.id for n in network.nodes if n.is_fixed_head)
    endpoints = network.element_endpoints()
    calc_pos = {node_id: i for i, node_id in enumerate(calc)}
    fixed_pos = {node_id: i for i, node_id in enumerate(fixed)}

    rows_c, cols_c, vals_c = [], [], []
    rows_f, cols_f, vals_f = [], [], []
    for e, (_, from_node, to_node) in enumerate(endpoints):
        for node_id, sign in ((from_node, -1.0), (to_node, 1.0)):
            if node_id in calc_pos:
                rows_c.append(calc_pos[node_id])
                cols_c.append(e)
                vals_c.append(sign)
            elif node_id in fixed_pos:
                rows_f.append(fixed_pos[node_id])
                cols_f.append(e)
                vals_f.append(sign)

    n_e = len(endpoints)
    lambda_c = sp.coo_matrix((vals_c, (rows_c, cols_c)), shape=(len(calc), n_e)).tocsr()
    lambda_f = sp.coo_matrix((vals_f, (rows_f, cols_f)), shape=(len(fixed), n_e)).tocsr()
    return IncidenceStructure(
        calc_nodes=calc,
        fixed_nodes=fixed,
        elements=tuple(e[0] for e in endpoints),
        lambda_c=lambda_c,
        lambda_f=lambda_f,
    )


def _format_loc(loc):
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def _check_references(spec: NetworkFile):
    """Unique ids, element endpoints and tank/demand references."""
    kinds = {}
    for i, node in enumerate(spec.nodes):
        if node.id in kinds:
            raise ValidationError(f"duplicate node id {node.id}", field_path=f"nodes[{i}].id")
        kinds[node.id] = node.kind

    element_ids = set()
    elements = [("pipes", i, p) for i, p in enumerate(spec.pipes)] + \
        [("pump_groups", i, g) for i, g in enumerate(spec.pump_groups)]
    for section, i, element in elements:
        if element.id in element_ids or element.id in kinds:
            raise ValidationError(f"duplicate id {element.id}", field_path=f"{section}[{i}].id")
        element_ids.add(element.id)
        for end in ("from_node", "to_node"):
            if getattr(element, end) not in kinds:
                raise TopologyError(
                    f"element {element.id} references unknown node {getattr(element, end)}",
                    field_path=f"{section}[{i}].{end}",
                )

    tank_nodes = set()
    for i, tank in enumerate(spec.tanks):
        if kinds.get(tank.node) != NodeKind.TANK:
            raise ValidationError(f"{tank.node} is not a tank node", field_path=f"tanks[{i}].node")
        if tank.node in tank_nodes:
            raise ValidationError(f"duplicate tank entry for {tank.node}", field_path=f"tanks[{i}].node")
        tank_nodes.add(tank.node)
    for node_id, kind in kinds.items():
        if kind == NodeKind.TANK and node_id not in tank_nodes:
            raise ValidationError(f"tank node {node_id} has no tank entry", field_path="tanks")

    for node_id in spec.inputs.demands:
        if kinds.get(node_id) != NodeKind.DEMAND:
            raise ValidationError(
                f"demands are only allowed at demand nodes, got {node_id}",
                field_path=f"inputs.demands.{node_id}",
            )


def check_topology(network):
    """Reject nodes without elements and components without a fixed head."""
    graph = nx.MultiGraph()
    graph.add_nodes_from(n.id for n in network.nodes)
    for element_id, from_node, to_node in network.element_endpoints():
        graph.add_edge(from_node, to_node, key=element_id)

    for node in network.nodes:
        if graph.degree(node.id) == 0:
            raise TopologyError(f"disconnected node {node.id}", field_path="nodes")

    fixed = {n.id for n in network.fixed_nodes}
    for component in nx.connected_components(graph):
        if not component & fixed:
            members = ", ".join(sorted(component))
            raise TopologyError(f"no fixed-head node reachable from {members}", field_path="nodes")


def _from_spec(spec: NetworkFile) -> Network:
    nodes = tuple(Node(id=n.id, kind=n.kind, elevation=n.elevation) for n in spec.nodes)
    pipes = tuple(
        Pipe(id=p.id, from_node=p.from_node, to_node=p.to_node, resistance=p.resistance)
        for p in spec.pipes
    )
    groups = []
    for g in spec.pump_groups:
        m = g.model
        a3, a2, a1, a0 = m.power_coeffs
        A, B, C = m.head_coeffs
        model = PumpModel(a3=a3, a2=a2, a1=a1, a0=a0, A=A, B=B, C=C,
                          s_min=m.s_min, s_max=m.s_max,
                          q_nominal=m.q_nominal, s_nominal=m.s_nominal)
        groups.append(PumpGroup(id=g.id, from_node=g.from_node, to_node=g.to_node,
                                n_pumps=g.n_pumps, model=model))
    tanks = tuple(
        Tank(node_id=t.node, area=t.resolved_area, level_min=t.level_min,
             level_max=t.level_max, level_init=t.level_init,
             final_level_tolerance=t.final_level_tolerance)
        for t in spec.tanks
    )

    # Demand rows follow node file order
    demand_nodes = tuple(n.id for n in spec.nodes if n.id in spec.inputs.demands)
    K = spec.inputs.horizon
    demands = np.array([spec.inputs.demands[n] for n in demand_nodes], dtype=float).reshape(
        len(demand_nodes), K)
    demands.flags.writeable = False
    inputs = TimeSeriesInput(
        horizon=K,
        dt_hours=spec.inputs.dt_hours,
        demand_nodes=demand_nodes,
        demands=demands,
        tariff=_readonly(spec.inputs.tariff),
    )
    return Network(name=spec.name, nodes=nodes, pipes=pipes, pump_groups=tuple(groups),
                   tanks=tanks, inputs=inputs)


def parse_network(data: Dict) -> Network:
    """Validate a decoded network document and build the Network.

    Raises:
        ValidationError: A field violates the schema or a model invariant.
        TopologyError: A node has no element, an element references an
            unknown node, or a component has no fixed-head node.
    """
    try:
        spec = NetworkFile.model_validate(data)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        raise ValidationError(first["msg"], field_path=_format_loc(first["loc"])) from e

    _check_references(spec)
    network = _from_spec(spec)
    check_topology(network)
    return network


def load_network(path) -> Network:
    """Load and validate a network file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read network file {path}: {e}") from e

    network = parse_network(data)
    logger.info(
        f"Loaded network {network.name}: {len(network.nodes)} nodes, "
        f"{len(network.pipes)} pipes, {len(network.pump_groups)} pump groups, "
        f"{len(network.tanks)} tanks, K={network.horizon}"
    )
    return network


def network_to_dict(network: Network) -> Dict:
    """Serialize a Network to the version 1.0 file layout."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": network.name,
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "elevation": n.elevation} for n in network.nodes
        ],
        "pipes": [
            {"id": p.id, "from_node": p.from_node, "to_node": p.to_node,
             "resistance": p.resistance}
            for p in network.pipes
        ],
        "pump_groups": [
            {
                "id": g.id, "from_node": g.from_node, "to_node": g.to_node,
                "n_pumps": g.n_pumps,
                "model": {
                    "power_coeffs": list(g.model.power_coeffs),
                    "head_coeffs": list(g.model.head_coeffs),
                    "s_min": g.model.s_min, "s_max": g.model.s_max,
                    "q_nominal": g.model.q_nominal, "s_nominal": g.model.s_nominal,
                },
            }
            for g in network.pump_groups
        ],
        "tanks": [
            {"node": t.node_id, "area": t.area, "level_min": t.level_min,
             "level_max": t.level_max, "level_init": t.level_init,
             "final_level_tolerance": t.final_level_tolerance}
            for t in network.tanks
        ],
        "inputs": {
            "horizon": network.inputs.horizon,
            "dt_hours": network.inputs.dt_hours,
            "demands": {
                node_id: network.inputs.demands[i].tolist()
                for i, node_id in enumerate(network.inputs.demand_nodes)
            },
            "tariff": network.inputs.tariff.tolist(),
        },
    }


def save_network(network: Network, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network_to_dict(network), f, indent=2)


def with_inputs(network: Network, demands=None, tariff=None, demand_nodes=None) -> Network:
    """Copy of ``network`` with replaced demand and/or tariff series."""
    inputs = network.inputs
    new_demands = inputs.demands if demands is None else np.asarray(demands, dtype=float)
    new_demands = np.array(new_demands, dtype=float).reshape(-1, inputs.horizon)
    new_demands.flags.writeable = False
    new_tariff = inputs.tariff if tariff is None else _readonly(tariff)
    new_inputs = replace(
        inputs,
        demand_nodes=inputs.demand_nodes if demand_nodes is None else tuple(demand_nodes),
        demands=new_demands,
        tariff=new_tariff,
    )
    return network.replace(inputs=new_inputs)


def with_horizon(network: Network, horizon: int) -> Network:
    """Truncate the inputs to the first ``horizon`` steps."""
    if not 1 <= horizon <= network.horizon:
        raise ValidationError(f"horizon {horizon} outside [1, {network.horizon}]",
                              field_path="inputs.horizon")
    inputs = network.inputs
    demands = np.array(inputs.demands[:, :horizon], dtype=float)
    demands.flags.writeable = False
    new_inputs = replace(inputs, horizon=horizon, demands=demands,
                         tariff=_readonly(inputs.tariff[:horizon]))
    return network.replace(inputs=new_inputs)
