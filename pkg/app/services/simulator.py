"""
Nonlinear hydraulic simulator: steady-state Newton solves and extended-period runs.
"""
import logging
import warnings
from typing import NamedTuple, Optional

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, MatrixRankWarning

from app.exceptions import (
    HydraulicError, NonConvergence, SingularJacobian, InfeasibleHydraulics,
    DomainError, NoPositiveRoot, ValidationError,
)
from app.models.schedule import SimulationResult

logger = logging.getLogger(__name__)

# Slack on the power-curve domain test, in normalized flow units.
DOMAIN_SLACK = 1e-9
REGULARIZATION_RETRIES = 3


def group_head(model, q, n, s):
    """Head of a pump group, H = A q^2 + B q n s + C n^2 s^2."""
    return model.A * q * q + model.B * q * n * s + model.C * n * n * s * s


def element_head_gain(model, q, n, s):
    """Head gain across a group element of ``n`` parallel pumps."""
    return group_head(model, q, n, s) / (n * n)


def intercept_flow(model, n, s):
    """Positive flow at which the group head is zero.

    Args:
        model (PumpModel): The pump model.
        n (int): Number of running pumps.
        s (float): Relative speed.

    Returns:
        float: The intercept flow in L/s.

    Raises:
        NoPositiveRoot: The head curve has no zero at positive flow.
    """
    A, B, C = model.A, model.B, model.C
    disc = B * B - 4.0 * A * C
    if A >= 0 or disc < 0:
        raise NoPositiveRoot(f"head curve (A={A}, B={B}, C={C}) has no positive root")
    r = (-B - np.sqrt(disc)) / (2.0 * A)
    if not r > 0:
        raise NoPositiveRoot(f"head curve (A={A}, B={B}, C={C}) has no positive root")

    q = n * s * r
    # One Newton polish on the unscaled quadratic
    slope = 2.0 * A * q + B * n * s
    if slope != 0:
        q -= group_head(model, q, n, s) / slope
    return float(q)


def group_power(model, q, n, s):
    """Power of a group, n s^3 P(q / (n s)).

    Raises:
        DomainError: The per-unit normalized flow lies outside [0, intercept].
    """
    if n < 1 or s <= 0:
        raise ValueError(f"group_power needs n >= 1 and s > 0, got n={n}, s={s}")
    x = q / (n * s)
    limit = intercept_flow(model, 1, 1.0)
    if x < -DOMAIN_SLACK or x > limit + DOMAIN_SLACK:
        raise DomainError(f"normalized flow {x:.6g} outside [0, {limit:.6g}]")
    return n * s ** 3 * model.power_curve(x)


def tank_step_factor(tank, dt_hours):
    """Head change per L/s of net inflow over one step, in m."""
    return dt_hours * 3600.0 / (1000.0 * tank.area)


class SteadyState(NamedTuple):
    heads: np.ndarray
    flows: np.ndarray
    active: np.ndarray
    iterations: int
    residual: float


class HydraulicSimulator:
    """Newton solver on the mixed head/flow system of a network."""

    def __init__(self, app=None):
        self.app = app
        self.tol = 1e-8
        self.max_iter = 50
        self.max_halvings = 10
        self.flow_regularization = 1e-6

        if app:
            self.init_app(app)

    def init_app(self, app):
        """Read the Newton tunables from the app configuration."""
        self.app = app
        self.tol = float(app.config.get('NEWTON_TOL', self.tol))
        self.max_iter = int(app.config.get('NEWTON_MAX_ITER', self.max_iter))
        self.max_halvings = int(app.config.get('NEWTON_MAX_HALVINGS', self.max_halvings))
        self.flow_regularization = float(app.config.get('FLOW_REGULARIZATION',
                                                        self.flow_regularization))
        logger.debug(f"Hydraulic simulator configured: tol={self.tol}, max_iter={self.max_iter}")

    # Steady state

    def _active_mask(self, network, group_controls):
        n_p = len(network.pipes)
        active = np.ones(n_p + len(network.pump_groups), dtype=bool)
        for g, (group, (n, s)) in enumerate(zip(network.pump_groups, group_controls)):
            if s > 0 and n < 1:
                raise ValidationError(f"group {group.id} has speed {s} with no pump running")
            active[n_p + g] = n >= 1 and s > 0
        return active

    def _floating_nodes(self, network, active, demand_column):
        """Calculated nodes with no active path to a fixed-head node."""
        graph = nx.Graph()
        graph.add_nodes_from(n.id for n in network.nodes)
        for e, (_, from_node, to_node) in enumerate(network.element_endpoints()):
            if active[e]:
                graph.add_edge(from_node, to_node)

        fixed = {n.id for n in network.fixed_nodes}
        calc_ids = network.incidence.calc_nodes
        floating = np.zeros(len(calc_ids), dtype=bool)
        for component in nx.connected_components(graph):
            if component & fixed:
                continue
            for node_id in component:
                i = calc_ids.index(node_id)
                if demand_column[i] > 0:
                    raise InfeasibleHydraulics(
                        f"node {node_id} has demand {demand_column[i]:.6g} but no active "
                        f"path to a fixed-head node"
                    )
                floating[i] = True
        return floating

    def solve_steady_state(self, network, fixed_heads, demand_column, group_controls,
                           warm_start: Optional[SteadyState] = None) -> SteadyState:
        """Solve one steady state of the network.

        Args:
            network (Network): The network.
            fixed_heads (array): Heads of the fixed nodes, in incidence order.
            demand_column (array): Demand per calculated node, L/s.
            group_controls (list): ``(n, s)`` per pump group.
            warm_start (SteadyState, optional): Previous state to start from.

        Returns:
            SteadyState: Heads of the calculated nodes and element flows.
        """
        incidence = network.incidence
        if len(incidence.fixed_nodes) == 0:
            raise InfeasibleHydraulics("network has no fixed-head node")

        fixed_heads = np.asarray(fixed_heads, dtype=float)
        demand_column = np.asarray(demand_column, dtype=float)
        n_c = len(incidence.calc_nodes)
        n_e = len(incidence.elements)
        n_p = len(network.pipes)

        active = self._active_mask(network, group_controls)
        floating = self._floating_nodes(network, active, demand_column)
        node_keep = np.flatnonzero(~floating)
        element_keep = np.flatnonzero(active)

        lc = incidence.lambda_c[node_keep][:, element_keep].tocsr()
        lf = incidence.lambda_f[:, element_keep].tocsr()
        d = demand_column[node_keep]
        fixed_term = lf.T @ fixed_heads

        is_pipe = element_keep < n_p
        pipe_r = np.zeros(len(element_keep))
        pumps = []
        for pos, e in enumerate(element_keep):
            if e < n_p:
                pipe_r[pos] = network.pipes[e].resistance
            else:
                group = network.pump_groups[e - n_p]
                n, s = group_controls[e - n_p]
                pumps.append((pos, group.model, n, s))

        def residual(h, q):
            gain = pipe_r * q * np.abs(q)
            for pos, model, n, s in pumps:
                gain[pos] = -element_head_gain(model, q[pos], n, s)
            f1 = gain + lc.T @ h + fixed_term
            f2 = lc @ q - d
            return np.concatenate([f1, f2])

        def jacobian_diag(q, eps):
            diag = 2.0 * pipe_r * np.maximum(np.abs(q), eps)
            for pos, model, n, s in pumps:
                slope = -(2.0 * model.A * q[pos] + model.B * n * s) / (n * n)
                diag[pos] = max(slope, 2.0 * abs(model.A) * eps / (n * n))
            return diag

        # Initial guess
        h = np.full(len(node_keep), float(np.mean(fixed_heads)))
        q = np.where(is_pipe, 1.0, 0.0)
        for pos, model, n, s in pumps:
            q[pos] = n * s * model.q_nominal
        if warm_start is not None:
            h = warm_start.heads[node_keep].copy()
            reuse = warm_start.active[element_keep]
            q = np.where(reuse, warm_start.flows[element_keep], q)

        m = len(element_keep)
        res = residual(h, q)
        norm_inf = float(np.max(np.abs(res))) if res.size else 0.0
        iterations = 0
        while norm_inf > self.tol:
            if iterations >= self.max_iter:
                raise NonConvergence(
                    f"Newton did not converge in {self.max_iter} iterations "
                    f"(residual {norm_inf:.3e})"
                )
            step = self._newton_step(lc, q, res, jacobian_diag)
            dq, dh = step[:m], step[m:]

            merit = np.linalg.norm(res)
            lam = 1.0
            for _ in range(self.max_halvings + 1):
                q_trial = q + lam * dq
                h_trial = h + lam * dh
                res_trial = residual(h_trial, q_trial)
                if np.linalg.norm(res_trial) < merit:
                    break
                lam /= 2.0
            q, h, res = q_trial, h_trial, res_trial
            norm_inf = float(np.max(np.abs(res)))
            iterations += 1
            logger.debug(f"Newton iteration {iterations}: residual {norm_inf:.3e}, step {lam:g}")

        heads = np.array([n.elevation for n in network.calc_nodes], dtype=float)
        heads[node_keep] = h
        flows = np.zeros(n_e)
        flows[element_keep] = q
        return SteadyState(heads=heads, flows=flows, active=active,
                           iterations=iterations, residual=norm_inf)

    def _newton_step(self, lc, q, res, jacobian_diag):
        eps = self.flow_regularization
        for attempt in range(REGULARIZATION_RETRIES):
            diag = sp.diags(jacobian_diag(q, eps))
            if lc.shape[0] == 0:
                jac = diag.tocsr()
            else:
                jac = sp.bmat([[diag, lc.T], [lc, None]], format='csr')
            with warnings.catch_warnings():
                warnings.simplefilter('error', MatrixRankWarning)
                try:
                    step = np.atleast_1d(spsolve(jac, -res))
                except (MatrixRankWarning, RuntimeError):
                    step = None
            if step is not None and np.all(np.isfinite(step)):
                return step
            eps *= 100.0
            logger.debug(f"Singular Newton system, retrying with regularization {eps:g}")
        raise SingularJacobian("Newton system singular after regularization retries")

    # Extended period

    def simulate_eps(self, network, schedule) -> SimulationResult:
        """Run the schedule over the horizon with explicit tank updates.

        Step k is solved with the tank heads reached at the end of step k-1;
        its net tank inflow then advances the tank head,
        h_t(k) = h_t(k-1) + c_t q_t(k) with h_t(0) the initial head.
        """
        schedule.validate(network)
        incidence = network.incidence
        K = network.horizon
        dt = network.inputs.dt_hours
        tariff = np.asarray(network.inputs.tariff, dtype=float)
        demands = network.demand_matrix()

        n_groups = len(network.pump_groups)
        n_p = len(network.pipes)
        tank_rows = [incidence.fixed_index(t.node_id) for t in network.tanks]
        factors = np.array([tank_step_factor(t, dt) for t in network.tanks])
        bounds = [network.tank_head_bounds(t) for t in network.tanks]
        elevations = np.array([network.node(t.node_id).elevation for t in network.tanks])

        heads = np.zeros((len(incidence.calc_nodes), K))
        fixed_heads = np.zeros((len(incidence.fixed_nodes), K))
        flows = np.zeros((len(incidence.elements), K))
        tank_heads = np.zeros((len(network.tanks), K))
        power = np.zeros((n_groups, K))
        step_cost = np.zeros(K)
        level_violations = []
        power_domain_flags = []

        current_fixed = network.initial_fixed_heads()
        state = None
        for k in range(K):
            controls = schedule.controls_at(k)
            try:
                state = self.solve_steady_state(network, current_fixed, demands[:, k],
                                                controls, warm_start=state)
            except HydraulicError as e:
                raise e.at_timestep(k + 1)

            heads[:, k] = state.heads
            fixed_heads[:, k] = current_fixed
            flows[:, k] = state.flows

            for i, tank in enumerate(network.tanks):
                inflow = incidence.lambda_f[tank_rows[i]] @ state.flows
                new_head = current_fixed[tank_rows[i]] + factors[i] * float(inflow[0])
                tank_heads[i, k] = new_head
                current_fixed[tank_rows[i]] = new_head
                low, high = bounds[i]
                if new_head < low - 1e-9 or new_head > high + 1e-9:
                    level = new_head - elevations[i]
                    level_violations.append((tank.node_id, k + 1, level))
                    logger.warning(f"Tank {tank.node_id} level {level:.3f} m outside "
                                   f"[{tank.level_min}, {tank.level_max}] at step {k + 1}")

            for g, group in enumerate(network.pump_groups):
                n, s = controls[g]
                if n < 1 or s <= 0:
                    continue
                q = state.flows[n_p + g]
                try:
                    power[g, k] = group_power(group.model, q, n, s)
                except DomainError:
                    limit = intercept_flow(group.model, n, s)
                    clipped = min(max(q, 0.0), limit)
                    power[g, k] = group_power(group.model, clipped, n, s)
                    power_domain_flags.append((group.id, k + 1, q))
                    logger.warning(f"Group {group.id} flow {q:.3f} L/s outside the power curve "
                                   f"domain at step {k + 1}; clipped to {clipped:.3f}")

            step_cost[k] = tariff[k] * dt * float(np.sum(power[:, k]))

        result = SimulationResult(
            calc_nodes=incidence.calc_nodes,
            fixed_nodes=incidence.fixed_nodes,
            elements=incidence.elements,
            group_ids=tuple(g.id for g in network.pump_groups),
            tank_ids=tuple(t.node_id for t in network.tanks),
            heads=heads,
            fixed_heads=fixed_heads,
            flows=flows,
            tank_heads=tank_heads,
            tank_levels=tank_heads - elevations[:, None],
            power=power,
            step_cost=step_cost,
            tariff=tariff,
            dt_hours=dt,
            schedule=schedule,
            level_violations=level_violations,
            power_domain_flags=power_domain_flags,
        )
        logger.info(f"Simulated {K} steps of {network.name}: cost {result.cost:.4f}")
        return result


simulator = HydraulicSimulator()
