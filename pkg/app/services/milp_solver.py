"""
MILP solver: LP relaxations, branch-and-bound, the enumeration oracle and
schedule extraction.
"""
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from app.exceptions import (
    FractionalBinary, Infeasible, NumericalFailure, ScheduleError, SolverError,
    TooManyBinaries,
)
from app.models.milp import VariableKind
from app.models.schedule import GroupSchedule

logger = logging.getLogger(__name__)

LP_METHODS = ("highs-ds", "highs-ipm")
GAP_EPS = 1e-9


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class MipStatus(str, Enum):
    OPTIMAL_WITHIN_GAP = "optimal_within_gap"
    INFEASIBLE = "infeasible"
    GAP_NOT_REACHED = "gap_not_reached"


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    objective: float
    x: Optional[np.ndarray]
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class MipResult:
    """Outcome of a MILP solve.

    ``objective`` is the incumbent value (UB) and ``bound`` the best proven
    lower bound (LB); ``gap = (UB - LB) / max(|UB|, 1e-9)``.
    """
    status: MipStatus
    x: Optional[np.ndarray]
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    backend: str = "embedded"

    def to_dict(self):
        return {
            "status": self.status.value,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "time": self.wall_time,
            "backend": self.backend,
        }


def relative_gap(upper, lower):
    if not math.isfinite(upper):
        return math.inf
    return max(upper - lower, 0.0) / max(abs(upper), GAP_EPS)


def solve_lp(problem, lb=None, ub=None) -> LpSolution:
    """Solve the continuous relaxation of ``problem`` under the given column bounds.

    Raises:
        NumericalFailure: HiGHS failed with both the dual simplex and the
            interior-point method.
    """
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    if np.any(lb > ub):
        return LpSolution(LpStatus.INFEASIBLE, math.inf, None)

    kwargs = {"bounds": np.column_stack([lb, ub])}
    if problem.n_eq:
        kwargs.update(A_eq=problem.a_eq, b_eq=problem.b_eq)
    if problem.n_ub:
        kwargs.update(A_ub=problem.a_ub, b_ub=problem.b_ub)

    messages = []
    for method in LP_METHODS:
        res = linprog(problem.c, method=method, **kwargs)
        if res.status == 0:
            return LpSolution(LpStatus.OPTIMAL, float(res.fun), np.asarray(res.x), int(res.nit))
        if res.status == 2:
            return LpSolution(LpStatus.INFEASIBLE, math.inf, None, int(res.nit))
        if res.status == 3:
            return LpSolution(LpStatus.UNBOUNDED, -math.inf, None, int(res.nit))
        logger.debug(f"linprog {method} returned status {res.status}: {res.message}")
        messages.append(f"{method}: {res.message}")
    raise NumericalFailure("LP relaxation failed: " + "; ".join(messages))


def fractional_columns(x, columns, tol):
    """Integer columns whose value is more than ``tol`` from an integer."""
    values = x[columns]
    return columns[np.abs(values - np.round(values)) > tol]


def _branch_column(x, candidates):
    """Most fractional candidate; ties go to the smallest column index."""
    values = x[candidates]
    fractionality = np.minimum(values - np.floor(values), np.ceil(values) - values)
    return int(candidates[int(np.argmax(fractionality))])


def _status_columns(problem):
    """N_PUMP columns grouped by (group id, step), highest-numbered unit first."""
    layout = problem.layout
    if layout is None:
        return {}
    units: Dict[Tuple[str, int], list] = {}
    for col in layout.columns(VariableKind.N_PUMP):
        key = layout.key(col)
        group_id, unit = key.element.rsplit("#", 1)
        units.setdefault((group_id, key.k), []).append((int(unit), int(col)))
    return {slot: [col for _, col in sorted(cols, reverse=True)] for slot, cols in units.items()}


def status_fixing(problem, running) -> Dict[int, float]:
    """Fix every status column from per-(group, step) unit counts.

    ``running`` maps (group id, step) to the number of running units; the
    highest-numbered units are switched on first.
    """
    fixing = {}
    for slot, cols in _status_columns(problem).items():
        n_on = int(running.get(slot, 0))
        for j, col in enumerate(cols):
            fixing[col] = 1.0 if j < n_on else 0.0
    return fixing


def rounded_up_statuses(problem, x, tol=1e-6) -> Dict[int, float]:
    """Status fixing that runs ``ceil(sum_j n_j)`` units of every group and step."""
    running = {slot: math.ceil(float(np.sum(x[cols])) - tol)
               for slot, cols in _status_columns(problem).items()}
    return status_fixing(problem, running)


def schedule_statuses(problem, network, schedule) -> Dict[int, float]:
    """Status fixing taken from a group schedule, e.g. a simulated one."""
    running = {(group.id, k + 1): int(schedule.n_active[g, k])
               for g, group in enumerate(network.pump_groups)
               for k in range(schedule.horizon)}
    return status_fixing(problem, running)


class _Node:
    __slots__ = ("bound", "depth", "changes", "x")

    def __init__(self, bound, depth, changes, x):
        self.bound = bound
        self.depth = depth
        self.changes = changes
        self.x = x


class BranchAndBound:
    """Best-bound LP branch-and-bound over the integer columns of one problem.

    Node LPs are solved eagerly when a node is branched, so every queued
    node carries its own relaxation value. The queue is ordered by bound,
    then deeper first, then creation order. Pump status columns are
    branched on before segment and plane selectors.

    ``fixings`` are partial integer assignments ({column: value}), typically
    pump statuses of a simulated schedule; each is tried at the root by
    fixing it, re-solving and diving over the remaining integer columns.
    """

    def __init__(self, problem, gap=0.05, time_limit=300.0, integrality_tol=1e-6,
                 dive_every=50, fixings=()):
        if not 0.0 <= gap < 1.0:
            raise ValueError(f"gap target must lie in [0, 1), got {gap}")
        self.problem = problem
        self.gap_target = float(gap)
        self.time_limit = float(time_limit)
        self.tol = float(integrality_tol)
        self.dive_every = int(dive_every)
        self.integer = np.asarray(problem.integer, dtype=int)
        self.fixings = [dict(f) for f in fixings]
        self.priority = np.array(sorted(c for cols in _status_columns(problem).values()
                                        for c in cols), dtype=int)

        self.incumbent = None
        self.upper = math.inf
        self.lower = -math.inf
        self.nodes = 0
        self._queue = []
        self._seq = itertools.count()
        self._tried_roundings = set()

    def _bounds(self, changes):
        lb = self.problem.lb.copy()
        ub = self.problem.ub.copy()
        for col, lo, hi in changes:
            lb[col] = max(lb[col], lo)
            ub[col] = min(ub[col], hi)
        return lb, ub

    def _cutoff(self):
        if not math.isfinite(self.upper):
            return self.upper
        return self.upper - 1e-9 * max(1.0, abs(self.upper))

    def _push(self, node):
        heapq.heappush(self._queue, (node.bound, -node.depth, next(self._seq), node))

    def _offer(self, x, source):
        objective = self.problem.objective(x)
        if objective < self._cutoff():
            self.incumbent = np.array(x, dtype=float)
            self.upper = objective
            logger.debug(f"New incumbent {objective:.6g} from {source} after {self.nodes} nodes")

    def _solve_fixed(self, values, lb, ub):
        """LP in the continuous columns with every integer column fixed."""
        lb, ub = lb.copy(), ub.copy()
        fixed = np.clip(values, lb[self.integer], ub[self.integer])
        lb[self.integer] = fixed
        ub[self.integer] = fixed
        return solve_lp(self.problem, lb, ub)

    def _round(self, node):
        lb, ub = self._bounds(node.changes)
        rounded = np.round(node.x[self.integer])
        key = rounded.tobytes()
        if key in self._tried_roundings:
            return
        self._tried_roundings.add(key)
        lp = self._solve_fixed(rounded, lb, ub)
        if lp.status == LpStatus.OPTIMAL:
            self._offer(lp.x, "rounding")

    def _dive(self, node, fix_integral=False, source="diving"):
        """Fix the least fractional column one at a time until integral or infeasible.

        With ``fix_integral`` every column already at an integer value is
        fixed along with it.
        """
        changes = list(node.changes)
        x = node.x
        for _ in range(len(self.integer) + 1):
            frac = fractional_columns(x, self.integer, self.tol)
            if len(frac) == 0:
                self._offer(x, source)
                return
            values = x[frac]
            distance = np.abs(values - np.round(values))
            col = int(frac[int(np.argmin(distance))])
            target = float(np.round(x[col]))
            changes.append((col, target, target))
            if fix_integral:
                for c in np.setdiff1d(self.integer, frac):
                    value = float(np.round(x[c]))
                    changes.append((int(c), value, value))
            lb, ub = self._bounds(changes)
            lp = solve_lp(self.problem, lb, ub)
            if lp.status != LpStatus.OPTIMAL or lp.objective >= self._cutoff():
                return
            x = lp.x

    def _try_fixings(self, root):
        """Re-solve the root with each status fixing and dive from it."""
        candidates = list(self.fixings)
        if len(self.priority):
            candidates.append(rounded_up_statuses(self.problem, root.x, self.tol))
        for i, fixing in enumerate(candidates):
            changes = tuple((int(col), float(v), float(v)) for col, v in sorted(fixing.items()))
            lb, ub = self._bounds(changes)
            lp = solve_lp(self.problem, lb, ub)
            if lp.status != LpStatus.OPTIMAL:
                logger.debug(f"Status fixing {i} has no feasible relaxation")
                continue
            self._dive(_Node(lp.objective, 0, changes, lp.x), fix_integral=True,
                       source=f"status fixing {i}")

    def _branch_target(self, node, frac):
        preferred = frac[np.isin(frac, self.priority)]
        return _branch_column(node.x, preferred if len(preferred) else frac)

    def _branch(self, node, col):
        value = node.x[col]
        children = (
            node.changes + ((col, -math.inf, math.floor(value)),),
            node.changes + ((col, math.ceil(value), math.inf),),
        )
        for changes in children:
            lb, ub = self._bounds(changes)
            lp = solve_lp(self.problem, lb, ub)
            if lp.status == LpStatus.UNBOUNDED:
                raise SolverError("LP relaxation is unbounded")
            if lp.status == LpStatus.OPTIMAL and lp.objective < self._cutoff():
                self._push(_Node(lp.objective, node.depth + 1, changes, lp.x))

    def _result(self, status, start):
        return MipResult(
            status=status,
            x=self.incumbent,
            objective=self.upper,
            bound=self.lower,
            gap=relative_gap(self.upper, self.lower),
            nodes=self.nodes,
            wall_time=time.perf_counter() - start,
        )

    def run(self) -> MipResult:
        """Search until the gap target, exhaustion or the time limit.

        Raises:
            Infeasible: No integer-feasible point exists.
        """
        start = time.perf_counter()
        root = solve_lp(self.problem)
        if root.status == LpStatus.INFEASIBLE:
            raise Infeasible("LP relaxation is infeasible")
        if root.status == LpStatus.UNBOUNDED:
            raise SolverError("LP relaxation is unbounded")
        self._push(_Node(root.objective, 0, (), root.x))
        self.lower = root.objective
        if len(fractional_columns(root.x, self.integer, self.tol)):
            self._try_fixings(root)

        while self._queue:
            bound, _, _, node = self._queue[0]
            self.lower = max(self.lower, min(bound, self.upper))
            if self.incumbent is not None and \
                    relative_gap(self.upper, self.lower) <= self.gap_target:
                return self._result(MipStatus.OPTIMAL_WITHIN_GAP, start)
            if time.perf_counter() - start > self.time_limit:
                logger.warning(
                    f"Time limit {self.time_limit:.0f}s reached after {self.nodes} nodes, "
                    f"gap {relative_gap(self.upper, self.lower):.4g}"
                )
                return self._result(MipStatus.GAP_NOT_REACHED, start)

            heapq.heappop(self._queue)
            if bound >= self._cutoff():
                continue
            self.nodes += 1

            frac = fractional_columns(node.x, self.integer, self.tol)
            if len(frac) == 0:
                self._offer(node.x, "relaxation")
                continue

            self._round(node)
            if self.nodes == 1 or (self.dive_every and self.nodes % self.dive_every == 0):
                self._dive(node)
            self._branch(node, self._branch_target(node, frac))

            if self.nodes % 100 == 0:
                logger.debug(
                    f"{self.nodes} nodes, {len(self._queue)} open, "
                    f"UB {self.upper:.6g}, LB {self.lower:.6g}"
                )

        if self.incumbent is None:
            raise Infeasible("no integer-feasible point exists")
        self.lower = self.upper
        return self._result(MipStatus.OPTIMAL_WITHIN_GAP, start)


def _solve_highs(problem, gap, time_limit):
    """Same problem through scipy.optimize.milp."""
    start = time.perf_counter()
    constraints = []
    if problem.n_eq:
        constraints.append(LinearConstraint(problem.a_eq, problem.b_eq, problem.b_eq))
    if problem.n_ub:
        constraints.append(LinearConstraint(problem.a_ub, -np.inf, problem.b_ub))
    res = milp(
        problem.c,
        integrality=problem.integrality,
        bounds=Bounds(problem.lb, problem.ub),
        constraints=constraints,
        options={"mip_rel_gap": gap, "time_limit": time_limit, "disp": False},
    )
    elapsed = time.perf_counter() - start
    nodes = int(getattr(res, "mip_node_count", 0) or 0)

    if res.status == 2:
        raise Infeasible(f"HiGHS: {res.message}")
    if res.x is None:
        if res.status == 1:
            logger.warning(f"HiGHS stopped without an incumbent: {res.message}")
            return MipResult(MipStatus.GAP_NOT_REACHED, None, math.inf, -math.inf, math.inf,
                             nodes, elapsed, backend="highs")
        raise NumericalFailure(f"HiGHS: {res.message}")

    upper = float(res.fun)
    lower = float(getattr(res, "mip_dual_bound", upper))
    status = MipStatus.OPTIMAL_WITHIN_GAP if res.status == 0 else MipStatus.GAP_NOT_REACHED
    if status == MipStatus.GAP_NOT_REACHED:
        logger.warning(f"HiGHS stopped before the gap target: {res.message}")
    return MipResult(status, np.asarray(res.x), upper, lower, relative_gap(upper, lower),
                     nodes, elapsed, backend="highs")


def solve_mip(problem, gap=0.05, time_limit=300.0, integrality_tol=1e-6, dive_every=50,
              backend="embedded", fixings=()) -> MipResult:
    """Solve ``problem`` to the relative gap ``gap``.

    Args:
        problem (MilpProblem): The problem.
        gap (float): Relative MIP gap target; 0 runs to proven optimality.
        time_limit (float): Seconds before returning the best incumbent.
        integrality_tol (float): Integrality tolerance of the embedded search.
        dive_every (int): Diving heuristic period in nodes.
        backend (str): ``embedded`` or ``highs``.
        fixings (list): Status fixings tried at the root by the embedded
            search; HiGHS runs its own heuristics.

    Returns:
        MipResult: The incumbent and bounds.

    Raises:
        Infeasible: No integer-feasible point exists.
        NumericalFailure: The LP engine broke down.
    """
    if backend == "highs":
        return _solve_highs(problem, gap, time_limit)
    if backend != "embedded":
        raise ValueError(f"unknown solver backend '{backend}'")
    return BranchAndBound(problem, gap=gap, time_limit=time_limit,
                          integrality_tol=integrality_tol, dive_every=dive_every,
                          fixings=fixings).run()


def _integer_domains(problem):
    domains = []
    for col in problem.integer:
        lo, hi = problem.lb[col], problem.ub[col]
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise TooManyBinaries(f"integer column {col} has an unbounded domain")
        domains.append(np.arange(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1, dtype=float))
    return domains


def _integer_rows(problem, position):
    """Rows touching integer columns only, keyed by the last enumeration position."""
    checks: Dict[int, list] = {}
    for matrix, rhs, sense in ((problem.a_eq, problem.b_eq, "eq"),
                               (problem.a_ub, problem.b_ub, "ub")):
        matrix = matrix.tocsr()
        for row in range(matrix.shape[0]):
            cols = matrix.indices[matrix.indptr[row]:matrix.indptr[row + 1]]
            if len(cols) == 0 or not all(c in position for c in cols):
                continue
            vals = matrix.data[matrix.indptr[row]:matrix.indptr[row + 1]]
            positions = np.array([position[c] for c in cols])
            checks.setdefault(int(positions.max()), []).append(
                (positions, vals, float(rhs[row]), sense))
    return checks


def enumerate_oracle(problem, max_binaries=24) -> MipResult:
    """Exact optimum by enumerating every integer assignment.

    Assignments are built depth-first in column order; a partial assignment
    is dropped as soon as a row over integer columns only is violated. Each
    complete assignment fixes the integer columns and solves the LP in the
    continuous ones.

    Raises:
        TooManyBinaries: More than ``max_binaries`` integer columns.
        Infeasible: No assignment admits a feasible continuous completion.
    """
    integer = np.asarray(problem.integer, dtype=int)
    if len(integer) > max_binaries:
        raise TooManyBinaries(
            f"{len(integer)} integer columns exceed the enumeration limit of {max_binaries}")

    start = time.perf_counter()
    domains = _integer_domains(problem)
    position = {int(c): i for i, c in enumerate(integer)}
    checks = _integer_rows(problem, position)

    best_x, best = None, math.inf
    leaves = 0
    values = np.zeros(len(integer))

    def consistent(depth):
        for positions, vals, rhs, sense in checks.get(depth, ()):
            lhs = float(vals @ values[positions])
            if sense == "eq" and abs(lhs - rhs) > 1e-9:
                return False
            if sense == "ub" and lhs > rhs + 1e-9:
                return False
        return True

    def visit(depth):
        nonlocal best_x, best, leaves
        if depth == len(integer):
            leaves += 1
            lb, ub = problem.lb.copy(), problem.ub.copy()
            lb[integer] = values
            ub[integer] = values
            lp = solve_lp(problem, lb, ub)
            if lp.status == LpStatus.OPTIMAL and lp.objective < best:
                best, best_x = lp.objective, lp.x
            return
        for value in domains[depth]:
            values[depth] = value
            if consistent(depth):
                visit(depth + 1)

    visit(0)
    if best_x is None:
        raise Infeasible(f"none of {leaves} integer assignments is feasible")
    logger.info(f"Enumeration oracle: {leaves} assignments, optimum {best:.6g}")
    return MipResult(MipStatus.OPTIMAL_WITHIN_GAP, best_x, best, best, 0.0, leaves,
                     time.perf_counter() - start, backend="oracle")


@dataclass(frozen=True, eq=False)
class ExtractedSchedule:
    """Per-pump and per-element trajectories read from a MILP solution.

    Pump arrays are (n_pump, K) in MILP pump order; ``heads`` maps node ids
    of calculated nodes and tanks to length-K arrays.
    """
    pump_ids: Tuple[str, ...]
    statuses: np.ndarray
    speeds: np.ndarray
    pump_flows: np.ndarray
    power: np.ndarray
    pipe_flows: Dict[str, np.ndarray]
    heads: Dict[str, np.ndarray]
    schedule: GroupSchedule

    def group_flow(self, group):
        rows = [self.pump_ids.index(p) for p in group.pump_ids]
        return self.pump_flows[rows].sum(axis=0)

    def group_power(self, group):
        rows = [self.pump_ids.index(p) for p in group.pump_ids]
        return self.power[rows].sum(axis=0)


def extract_schedule(result, problem, network, tol=1e-6) -> ExtractedSchedule:
    """Translate a MILP solution into pump statuses and a group schedule.

    A group runs ``sum_j n_j`` pumps at the mean speed of its running units.

    Raises:
        FractionalBinary: An integer column is further than ``tol`` from 0/1.
        ScheduleError: No incumbent, no layout, or a status vector breaking
            the unit priority order.
    """
    x = result.x if hasattr(result, "x") else result
    if x is None:
        raise ScheduleError("no incumbent to extract a schedule from")
    layout = problem.layout
    if layout is None:
        raise ScheduleError("problem carries no variable layout")
    x = np.asarray(x, dtype=float)

    for col in problem.integer:
        if abs(x[col] - round(x[col])) > tol:
            raise FractionalBinary(f"{layout.key(col).name} = {x[col]:.9g} is not integral")

    K = network.horizon
    pump_ids = tuple(p for g in network.pump_groups for p in g.pump_ids)

    def series(kind, element):
        return np.array([x[layout.index(kind, element, 0, k)] for k in range(1, K + 1)])

    statuses = np.array([np.round(series(VariableKind.N_PUMP, p)) for p in pump_ids],
                        dtype=int).reshape(len(pump_ids), K)
    speeds = np.array([series(VariableKind.S_PUMP, p) for p in pump_ids]).reshape(len(pump_ids), K)
    flows = np.array([series(VariableKind.Q_PUMP, p) for p in pump_ids]).reshape(len(pump_ids), K)
    power = np.array([series(VariableKind.P_PUMP, p) for p in pump_ids]).reshape(len(pump_ids), K)

    n_active = np.zeros((len(network.pump_groups), K), dtype=int)
    group_speed = np.zeros((len(network.pump_groups), K))
    for g, group in enumerate(network.pump_groups):
        rows = [pump_ids.index(p) for p in group.pump_ids]
        block = statuses[rows]
        if np.any(np.diff(block, axis=0) < 0):
            k = int(np.nonzero(np.any(np.diff(block, axis=0) < 0, axis=0))[0][0]) + 1
            raise ScheduleError(
                f"group {group.id} step {k}: status vector {block[:, k - 1].tolist()} "
                f"breaks the unit priority order")
        n_active[g] = block.sum(axis=0)
        for k in range(K):
            on = block[:, k] == 1
            if on.any():
                mean = float(speeds[rows][on, k].mean())
                group_speed[g, k] = min(max(mean, group.model.s_min), group.model.s_max)

    heads = {node.id: series(VariableKind.H_C, node.id) for node in network.calc_nodes}
    heads.update({t.node_id: series(VariableKind.H_T, t.node_id) for t in network.tanks})
    pipe_flows = {pipe.id: series(VariableKind.Q_PIPE, pipe.id) for pipe in network.pipes}

    schedule = GroupSchedule(tuple(g.id for g in network.pump_groups), n_active, group_speed)
    return ExtractedSchedule(pump_ids, statuses, speeds, flows, power, pipe_flows, heads,
                             schedule)


class MilpSolver:
    """Service wrapper holding the solver tunables."""

    def __init__(self, app=None):
        self.app = app
        self.backend = 'embedded'
        self.gap = 0.05
        self.time_limit = 300.0
        self.integrality_tol = 1e-6
        self.dive_every = 50
        self.oracle_max_binaries = 24

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.backend = app.config.get('SOLVER_BACKEND', self.backend)
        self.gap = float(app.config.get('MIP_GAP', self.gap))
        self.time_limit = float(app.config.get('TIME_LIMIT', self.time_limit))
        self.integrality_tol = float(app.config.get('INTEGRALITY_TOL', self.integrality_tol))
        self.dive_every = int(app.config.get('DIVE_EVERY', self.dive_every))
        self.oracle_max_binaries = int(app.config.get('ORACLE_MAX_BINARIES',
                                                      self.oracle_max_binaries))

    def solve(self, problem, gap=None, time_limit=None, backend=None, fixings=()) -> MipResult:
        gap = self.gap if gap is None else gap
        time_limit = self.time_limit if time_limit is None else time_limit
        backend = backend or self.backend
        logger.info(f"Solving MILP with {backend} backend: {len(problem.integer)} integer "
                    f"columns, gap target {gap}, time limit {time_limit:.0f}s")
        result = solve_mip(problem, gap=gap, time_limit=time_limit,
                           integrality_tol=self.integrality_tol, dive_every=self.dive_every,
                           backend=backend, fixings=fixings)
        logger.info(
            f"MILP {result.status.value}: objective {result.objective:.6g}, "
            f"bound {result.bound:.6g}, gap {result.gap:.4g}, {result.nodes} nodes, "
            f"{result.wall_time:.2f}s"
        )
        return result

    def enumerate(self, problem, max_binaries=None) -> MipResult:
        return enumerate_oracle(problem, max_binaries or self.oracle_max_binaries)

    def extract(self, result, problem, network) -> ExtractedSchedule:
        return extract_schedule(result, problem, network, tol=self.integrality_tol)


milp_solver = MilpSolver()
