"""
MILP builder: variable layout, objective, constraint families, bounds and audit.
"""
import logging
from typing import Dict, List, NamedTuple

import numpy as np
import scipy.sparse as sp

from app.exceptions import AuditError
from app.models.milp import (
    VariableKind, VariableKey, VariableLayout, RowTag, BigUConfig, MilpProblem,
)
from app.models.schema import NodeKind
from app.services.linearizer import max_pump_head
from app.services.simulator import tank_step_factor

logger = logging.getLogger(__name__)

PIPE_SEGMENTS = 3
PUMP_PLANES = 4

K_ = VariableKind


class MilpPump(NamedTuple):
    """One unit of a pump group; ``unit`` is 1-based."""
    id: str
    group: object
    unit: int


def milp_pumps(network) -> List[MilpPump]:
    return [MilpPump(pump_id, group, u + 1)
            for group in network.pump_groups
            for u, pump_id in enumerate(group.pump_ids)]


def build_layout(network, linearized=None) -> VariableLayout:
    """Deterministic column catalog: kinds, then elements, segments and steps."""
    K = network.horizon
    calc = [n.id for n in network.calc_nodes]
    tanks = [t.node_id for t in network.tanks]
    pipes = [p.id for p in network.pipes]
    pumps = [p.id for p in milp_pumps(network)]

    def n_segments(pipe_id):
        if linearized is not None and pipe_id in linearized.pipes:
            return linearized.pipes[pipe_id].n_segments
        return PIPE_SEGMENTS

    elements = {
        K_.H_C: calc, K_.H_T: tanks, K_.Q_PIPE: pipes,
        K_.Q_PUMP: pumps, K_.S_PUMP: pumps, K_.P_PUMP: pumps, K_.N_PUMP: pumps,
        K_.WW: pipes, K_.BB: pipes, K_.QQ: pumps, K_.SS: pumps, K_.AA: pumps,
    }
    keys = []
    for kind in VariableKind:
        for element in elements[kind]:
            if kind in (K_.WW, K_.BB):
                segments = range(1, n_segments(element) + 1)
            elif kind in (K_.QQ, K_.SS, K_.AA):
                segments = range(1, PUMP_PLANES + 1)
            else:
                segments = (0,)
            for i in segments:
                for k in range(1, K + 1):
                    keys.append(VariableKey(kind, element, i, k))
    return VariableLayout(keys)


def build_objective(layout, tariff, dt_hours=1.0) -> np.ndarray:
    """Cost vector: T(k) * dt on every power column, zero elsewhere."""
    c = np.zeros(layout.size)
    for column in layout.columns(K_.P_PUMP):
        key = layout.key(column)
        c[column] = tariff[key.k - 1] * dt_hours
    return c


def expected_row_counts(network) -> Dict:
    """Closed-form row census per (sense, family)."""
    K = network.horizon
    n_n = len(network.calc_nodes)
    n_t = len(network.tanks)
    n_p = len(network.pipes)
    n_pump = network.n_pumps_total
    n_sym = sum(g.n_pumps - 1 for g in network.pump_groups)
    return {
        ("eq", "node_balance"): n_n * K,
        ("eq", "tank_dynamics"): n_t * K,
        ("eq", "pipe_segment_flow"): n_p * K,
        ("eq", "pipe_segment_selection"): n_p * K,
        ("eq", "pipe_headloss"): n_p * K,
        ("eq", "pump_segment_speed"): n_pump * K,
        ("eq", "pump_segment_flow"): n_pump * K,
        ("eq", "pump_segment_selection"): n_pump * K,
        ("ub", "pump_power_tangent"): 2 * n_pump * K,
        ("ub", "pump_power_gate"): 2 * n_pump * K,
        ("ub", "pipe_segment_bounds"): 2 * PIPE_SEGMENTS * n_p * K,
        ("ub", "pump_speed_box"): 2 * PUMP_PLANES * n_pump * K,
        ("ub", "pump_flow_box"): 2 * PUMP_PLANES * n_pump * K,
        ("ub", "pump_characteristic"): 2 * n_pump * K,
        ("ub", "pump_domain"): 3 * PUMP_PLANES * n_pump * K,
        ("ub", "symmetry_breaking"): n_sym * K,
        ("ub", "final_tank_level"): 2 * n_t if K > 1 else 0,
    }


def row_pair_counts(network) -> Dict:
    """Two-sided families counted as row pairs."""
    K = network.horizon
    return {
        "pipe_segment_bounds": PIPE_SEGMENTS * len(network.pipes) * K,
        "pump_box": PUMP_PLANES * network.n_pumps_total * K,
    }


def head_bounds(network):
    """Safe [low, high] range for every head column."""
    low = min(n.elevation for n in network.nodes)
    fixed = []
    for node in network.fixed_nodes:
        if node.kind == NodeKind.TANK:
            fixed.append(network.tank_head_bounds(network.tank_at(node.id))[1])
        else:
            fixed.append(node.elevation)
    gain = sum(max_pump_head(g.model, g.model.s_max) for g in network.pump_groups)
    return low, max(fixed) + gain


def size_big_u(network, linearized, factor=2.0) -> BigUConfig:
    """Big-U constants sized from the tangents, head range and domain rows."""
    low, high = head_bounds(network)
    u_power, u_pump, u_dom = 1.0, high - low, 1.0
    for group in network.pump_groups:
        model = group.model
        tangent = linearized.tangents[group.id]
        pwl = linearized.pumps[group.id]
        corners = [(0.0, 0.0)] + [(q, s) for q in (0.0, pwl.q_max)
                                  for s in (model.s_min, model.s_max)]
        u_power = max(u_power, max(abs(tangent.evaluate(q, s)) for q, s in corners))
        u_pump = max(u_pump, max_pump_head(model, model.s_max))
        rows = pwl.domains.reshape(-1, 3)
        u_dom = max(u_dom, float(np.max(
            np.abs(rows[:, 0]) * pwl.q_max + np.abs(rows[:, 1]) * pwl.s_max + np.abs(rows[:, 2])
        )))
    return BigUConfig(u_power=factor * u_power, u_pump=factor * u_pump, u_dom=factor * u_dom)


class _RowBlock:
    """COO accumulator of one constraint sense."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = []
        self.tags = []

    def add(self, coeffs, rhs, tag):
        entries = [(col, val) for col, val in sorted(coeffs.items()) if val != 0.0]
        if not entries:
            raise AuditError(f"empty row {tag}", family=tag.family)
        row = len(self.rhs)
        for col, val in entries:
            self.rows.append(row)
            self.cols.append(col)
            self.vals.append(float(val))
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    def matrix(self, n_columns):
        return sp.coo_matrix((self.vals, (self.rows, self.cols)),
                             shape=(len(self.rhs), n_columns)).tocsr()


def _accumulate(target, coeffs, factor=1.0):
    for col, val in coeffs.items():
        target[col] = target.get(col, 0.0) + factor * val


class MilpBuilder:
    """Assembles the scheduling MILP of one network and its surrogates."""

    def __init__(self, network, linearized, big_u_factor=2.0, final_level_offset=0.0):
        self.network = network
        self.linearized = linearized
        self.K = network.horizon
        self.dt = network.inputs.dt_hours
        self.final_level_offset = float(final_level_offset)
        self.pumps = milp_pumps(network)
        self.layout = build_layout(network, linearized)
        self.big_u = size_big_u(network, linearized, big_u_factor)
        self.head_low, self.head_high = head_bounds(network)
        self.eq = _RowBlock()
        self.ub = _RowBlock()
        self.lb = np.zeros(self.layout.size)
        self.ubound = np.zeros(self.layout.size)

    def col(self, kind, element, segment, k):
        return self.layout.index(kind, element, segment, k)

    def head_terms(self, node_id, k):
        """Coefficients and constant of the head of ``node_id`` in step ``k``.

        Tank heads enter step k at their start-of-step value: the initial
        head for k = 1, the column h_t(k-1) afterwards.
        """
        node = self.network.node(node_id)
        if node.kind == NodeKind.RESERVOIR:
            return {}, node.elevation
        if node.kind == NodeKind.TANK:
            if k == 1:
                return {}, self.network.tank_initial_head(self.network.tank_at(node_id))
            return {self.col(K_.H_T, node_id, 0, k - 1): 1.0}, 0.0
        return {self.col(K_.H_C, node_id, 0, k): 1.0}, 0.0

    def inflow_terms(self, node_id, k):
        """Signed element flows into ``node_id`` at step ``k``."""
        coeffs = {}
        for pipe in self.network.pipes:
            if pipe.to_node == node_id:
                _accumulate(coeffs, {self.col(K_.Q_PIPE, pipe.id, 0, k): 1.0})
            if pipe.from_node == node_id:
                _accumulate(coeffs, {self.col(K_.Q_PIPE, pipe.id, 0, k): -1.0})
        for pump in self.pumps:
            if pump.group.to_node == node_id:
                _accumulate(coeffs, {self.col(K_.Q_PUMP, pump.id, 0, k): 1.0})
            if pump.group.from_node == node_id:
                _accumulate(coeffs, {self.col(K_.Q_PUMP, pump.id, 0, k): -1.0})
        return coeffs

    # Constraint families

    def add_node_balance(self, k):
        """Mass balance at every calculated node."""
        for node in self.network.calc_nodes:
            demand = float(self.network.inputs.demand_of(node.id)[k - 1])
            self.eq.add(self.inflow_terms(node.id, k), demand, RowTag("node_balance", node.id, k))

    def add_tank_dynamics(self):
        """Level integration rows plus the two-sided final level rows."""
        for tank in self.network.tanks:
            factor = tank_step_factor(tank, self.dt)
            h_init = self.network.tank_initial_head(tank)
            for k in range(1, self.K + 1):
                coeffs = {self.col(K_.H_T, tank.node_id, 0, k): 1.0}
                _accumulate(coeffs, self.inflow_terms(tank.node_id, k), -factor)
                if k == 1:
                    rhs = h_init
                else:
                    coeffs[self.col(K_.H_T, tank.node_id, 0, k - 1)] = -1.0
                    rhs = 0.0
                self.eq.add(coeffs, rhs, RowTag("tank_dynamics", tank.node_id, k))

            if self.K > 1:
                first = self.col(K_.H_T, tank.node_id, 0, 1)
                last = self.col(K_.H_T, tank.node_id, 0, self.K)
                delta = tank.final_level_tolerance
                tag = RowTag("final_tank_level", tank.node_id, self.K)
                self.ub.add({last: 1.0, first: -1.0}, self.final_level_offset + delta, tag)
                self.ub.add({first: 1.0, last: -1.0}, delta - self.final_level_offset, tag)

    def add_pipe_pwl(self, pipe, k):
        pwl = self.linearized.pipes[pipe.id]
        q = self.col(K_.Q_PIPE, pipe.id, 0, k)
        ww = [self.col(K_.WW, pipe.id, i, k) for i in range(1, pwl.n_segments + 1)]
        bb = [self.col(K_.BB, pipe.id, i, k) for i in range(1, pwl.n_segments + 1)]

        for i in range(pwl.n_segments):
            lo, hi = pwl.breakpoints[i], pwl.breakpoints[i + 1]
            tag = RowTag("pipe_segment_bounds", pipe.id, k)
            self.ub.add({bb[i]: lo, ww[i]: -1.0}, 0.0, tag)
            self.ub.add({ww[i]: 1.0, bb[i]: -hi}, 0.0, tag)

        flow = {q: 1.0}
        for w in ww:
            flow[w] = -1.0
        self.eq.add(flow, 0.0, RowTag("pipe_segment_flow", pipe.id, k))
        self.eq.add({b: 1.0 for b in bb}, 1.0, RowTag("pipe_segment_selection", pipe.id, k))

        from_coeffs, from_const = self.head_terms(pipe.from_node, k)
        to_coeffs, to_const = self.head_terms(pipe.to_node, k)
        headloss = {}
        _accumulate(headloss, from_coeffs)
        _accumulate(headloss, to_coeffs, -1.0)
        for i in range(pwl.n_segments):
            _accumulate(headloss, {ww[i]: -pwl.slopes[i], bb[i]: -pwl.intercepts[i]})
        self.eq.add(headloss, to_const - from_const, RowTag("pipe_headloss", pipe.id, k))

    def head_range(self, node_id, k):
        """[low, high] of the head of ``node_id`` in step ``k`` under the column bounds."""
        coeffs, const = self.head_terms(node_id, k)
        if not coeffs:
            return const, const
        (column, _), = coeffs.items()
        low, high = self.column_bounds(self.layout.key(column))
        return low + const, high + const

    def gain_range(self, group, k):
        """[low, high] of the head gain h_to - h_from across ``group``."""
        to_low, to_high = self.head_range(group.to_node, k)
        from_low, from_high = self.head_range(group.from_node, k)
        return to_low - from_high, to_high - from_low

    def add_pump_block(self, pump, k):
        """Power, segment selection, box, characteristic and domain rows of one unit.

        Every gated row takes the smallest U that leaves it slack with the
        unit off, where q = s = P = 0, every qq, ss, AA is 0 and the heads
        range over their bounds.
        """
        group = pump.group
        model = group.model
        tangent = self.linearized.tangents[group.id]
        pwl = self.linearized.pumps[group.id]

        q = self.col(K_.Q_PUMP, pump.id, 0, k)
        s = self.col(K_.S_PUMP, pump.id, 0, k)
        p = self.col(K_.P_PUMP, pump.id, 0, k)
        n = self.col(K_.N_PUMP, pump.id, 0, k)
        qq = [self.col(K_.QQ, pump.id, i, k) for i in range(1, PUMP_PLANES + 1)]
        ss = [self.col(K_.SS, pump.id, i, k) for i in range(1, PUMP_PLANES + 1)]
        aa = [self.col(K_.AA, pump.id, i, k) for i in range(1, PUMP_PLANES + 1)]

        tag = RowTag("pump_power_tangent", pump.id, k)
        u_above, u_below = tangent.c, -tangent.c
        self.ub.add({q: tangent.m_q, s: tangent.m_s, p: -1.0, n: u_above},
                    u_above - tangent.c, tag)
        self.ub.add({q: -tangent.m_q, s: -tangent.m_s, p: 1.0, n: u_below},
                    u_below + tangent.c, tag)

        tag = RowTag("pump_power_gate", pump.id, k)
        self.ub.add({p: -1.0}, 0.0, tag)
        self.ub.add({p: 1.0, n: -self.power_cap(group)}, 0.0, tag)

        speed = {s: 1.0}
        flow = {q: 1.0}
        selection = {n: -1.0}
        for i in range(PUMP_PLANES):
            speed[ss[i]] = -1.0
            flow[qq[i]] = -1.0
            selection[aa[i]] = 1.0
        self.eq.add(speed, 0.0, RowTag("pump_segment_speed", pump.id, k))
        self.eq.add(flow, 0.0, RowTag("pump_segment_flow", pump.id, k))
        self.eq.add(selection, 0.0, RowTag("pump_segment_selection", pump.id, k))

        for i in range(PUMP_PLANES):
            tag = RowTag("pump_speed_box", pump.id, k)
            self.ub.add({aa[i]: model.s_min, ss[i]: -1.0}, 0.0, tag)
            self.ub.add({ss[i]: 1.0, aa[i]: -model.s_max}, 0.0, tag)
        for i in range(PUMP_PLANES):
            tag = RowTag("pump_flow_box", pump.id, k)
            self.ub.add({qq[i]: -1.0}, 0.0, tag)
            self.ub.add({qq[i]: 1.0, aa[i]: -pwl.q_max}, 0.0, tag)

        # Head gain across the unit equals the active plane
        to_coeffs, to_const = self.head_terms(group.to_node, k)
        from_coeffs, from_const = self.head_terms(group.from_node, k)
        gain = {}
        _accumulate(gain, to_coeffs)
        _accumulate(gain, from_coeffs, -1.0)
        gain_const = to_const - from_const
        plane = {}
        for i in range(PUMP_PLANES):
            _accumulate(plane, {ss[i]: pwl.dd[i], qq[i]: pwl.ee[i], aa[i]: pwl.ff[i]})

        gain_low, gain_high = self.gain_range(group, k)
        tag = RowTag("pump_characteristic", pump.id, k)
        upper = {n: gain_high}
        _accumulate(upper, gain)
        _accumulate(upper, plane, -1.0)
        self.ub.add(upper, gain_high - gain_const, tag)
        lower = {n: -gain_low}
        _accumulate(lower, gain, -1.0)
        _accumulate(lower, plane)
        self.ub.add(lower, -gain_low + gain_const, tag)

        # Off-state domain rows read 0 <= 0, so U_dom drops out
        for i in range(PUMP_PLANES):
            for m_qq, m_ss, c in pwl.domains[i]:
                self.ub.add({qq[i]: m_qq, ss[i]: m_ss, aa[i]: c}, 0.0,
                            RowTag("pump_domain", pump.id, k))

    def power_cap(self, group):
        """Largest tangent power over the group's speed and flow box."""
        tangent = self.linearized.tangents[group.id]
        pwl = self.linearized.pumps[group.id]
        model = group.model
        corners = [(q, s) for q in (0.0, pwl.q_max) for s in (model.s_min, model.s_max)]
        return max(max(tangent.evaluate(q, s) for q, s in corners), 0.0)

    def add_symmetry_breaking(self, group, k):
        """Unit j may run only if unit j+1 runs."""
        ids = group.pump_ids
        for j in range(len(ids) - 1):
            self.ub.add({self.col(K_.N_PUMP, ids[j], 0, k): 1.0,
                         self.col(K_.N_PUMP, ids[j + 1], 0, k): -1.0},
                        0.0, RowTag("symmetry_breaking", group.id, k))

    def column_bounds(self, key):
        kind = key.kind
        if kind == K_.H_C:
            return self.head_low, self.head_high
        if kind == K_.H_T:
            return self.network.tank_head_bounds(self.network.tank_at(key.element))
        if kind == K_.Q_PIPE:
            q2 = self.linearized.pipes[key.element].breakpoints[-1]
            return -q2, q2
        if kind == K_.WW:
            bp = self.linearized.pipes[key.element].breakpoints
            return min(bp[key.segment - 1], 0.0), max(bp[key.segment], 0.0)
        if kind in (K_.BB, K_.N_PUMP, K_.AA):
            return 0.0, 1.0
        group = self._pump_group(key.element)
        pwl = self.linearized.pumps[group.id]
        if kind in (K_.Q_PUMP, K_.QQ):
            return 0.0, pwl.q_max
        if kind in (K_.S_PUMP, K_.SS):
            return 0.0, group.model.s_max
        return 0.0, self.big_u.u_power

    def set_bounds(self):
        for column, key in enumerate(self.layout.keys):
            self.lb[column], self.ubound[column] = self.column_bounds(key)

    def _pump_group(self, pump_id):
        group_id = pump_id.split("#")[0]
        for group in self.network.pump_groups:
            if group.id == group_id:
                return group
        raise KeyError(pump_id)

    def audit(self, problem):
        """Compare constructed row counts with the closed-form census."""
        expected = expected_row_counts(self.network)
        actual = problem.family_counts()
        for key in sorted(set(expected) | set(actual)):
            if expected.get(key, 0) != actual.get(key, 0):
                sense, family = key
                raise AuditError(
                    f"{sense} family {family}: built {actual.get(key, 0)} rows, "
                    f"expected {expected.get(key, 0)}",
                    family=family,
                )

    def build(self) -> MilpProblem:
        for k in range(1, self.K + 1):
            self.add_node_balance(k)
        self.add_tank_dynamics()
        for k in range(1, self.K + 1):
            for pipe in self.network.pipes:
                self.add_pipe_pwl(pipe, k)
            for pump in self.pumps:
                self.add_pump_block(pump, k)
            for group in self.network.pump_groups:
                self.add_symmetry_breaking(group, k)
        self.set_bounds()

        n = self.layout.size
        problem = MilpProblem(
            c=build_objective(self.layout, self.network.inputs.tariff, self.dt),
            a_eq=self.eq.matrix(n),
            b_eq=np.array(self.eq.rhs),
            a_ub=self.ub.matrix(n),
            b_ub=np.array(self.ub.rhs),
            lb=self.lb.copy(),
            ub=self.ubound.copy(),
            integer=self.layout.integer_columns,
            layout=self.layout,
            eq_tags=tuple(self.eq.tags),
            ub_tags=tuple(self.ub.tags),
            big_u=self.big_u,
            meta={
                "network": self.network.name,
                "horizon": self.K,
                "dt_hours": self.dt,
                "final_level_offset": self.final_level_offset,
            },
        )
        self.audit(problem)
        return problem


def snap_simulation(problem, network, linearized, sim) -> np.ndarray:
    """Map a simulation onto the MILP columns.

    Running units of a group are the highest-numbered ones; each carries an
    equal share of the group flow and power. Segments and planes are picked
    by membership of the simulated point.
    """
    layout = problem.layout
    x = np.zeros(layout.size)
    col = layout.index
    n_p = len(network.pipes)
    for k in range(1, network.horizon + 1):
        for i, node_id in enumerate(sim.calc_nodes):
            x[col(K_.H_C, node_id, 0, k)] = sim.heads[i, k - 1]
        for t, tank_id in enumerate(sim.tank_ids):
            x[col(K_.H_T, tank_id, 0, k)] = sim.tank_heads[t, k - 1]
        for pipe in network.pipes:
            q = sim.flow_of(pipe.id)[k - 1]
            pwl = linearized.pipes[pipe.id]
            segment = pwl.segment_of(q) + 1
            x[col(K_.Q_PIPE, pipe.id, 0, k)] = q
            x[col(K_.WW, pipe.id, segment, k)] = q
            x[col(K_.BB, pipe.id, segment, k)] = 1.0
        for g, group in enumerate(network.pump_groups):
            n_on = int(sim.schedule.n_active[g, k - 1])
            if n_on == 0:
                continue
            speed = float(sim.schedule.speed[g, k - 1])
            q_unit = float(sim.flows[n_p + g, k - 1]) / n_on
            p_unit = float(sim.power[g, k - 1]) / n_on
            pwl = linearized.pumps[group.id]
            hits = pwl.domains_containing(q_unit, speed, tol=1e-9)
            plane = (hits[0] if hits else 0) + 1
            for pump_id in group.pump_ids[group.n_pumps - n_on:]:
                x[col(K_.Q_PUMP, pump_id, 0, k)] = q_unit
                x[col(K_.S_PUMP, pump_id, 0, k)] = speed
                x[col(K_.P_PUMP, pump_id, 0, k)] = p_unit
                x[col(K_.N_PUMP, pump_id, 0, k)] = 1.0
                x[col(K_.QQ, pump_id, plane, k)] = q_unit
                x[col(K_.SS, pump_id, plane, k)] = speed
                x[col(K_.AA, pump_id, plane, k)] = 1.0
    return x


class ProblemBuilder:
    """Service wrapper holding the builder tunables."""

    def __init__(self, app=None):
        self.app = app
        self.big_u_factor = 2.0

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.big_u_factor = float(app.config.get('BIG_U_FACTOR', self.big_u_factor))

    def build(self, network, linearized, final_level_offset=0.0) -> MilpProblem:
        """Assemble and audit the MILP.

        Raises:
            AuditError: A constraint family has the wrong number of rows.
        """
        builder = MilpBuilder(network, linearized, big_u_factor=self.big_u_factor,
                              final_level_offset=final_level_offset)
        problem = builder.build()
        logger.info(
            f"Built MILP for {network.name}: {problem.n_columns} columns "
            f"({len(problem.integer)} integer), {problem.n_eq} equality rows, "
            f"{problem.n_ub} inequality rows"
        )
        return problem


milp_builder = ProblemBuilder()
