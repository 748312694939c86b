"""
Scheduling pipeline: simulate, linearize, build, solve, re-simulate, report;
plus the batch runner over parameter grids.
"""
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import pydantic

from app.exceptions import ParseError, SchedulerError, ValidationError
from app.models.network import network_to_dict, parse_network, with_inputs
from app.models.schedule import GroupSchedule
from app.models.schema import BatchFile
from app.services import problem_io, reporting
from app.services.linearizer import linearizer
from app.services.milp_builder import milp_builder
from app.services.milp_solver import MipStatus, milp_solver, schedule_statuses
from app.services.simulator import simulator
from app.services.validator import validate_solution
from app.utils.helpers import log_error, write_csv, write_json

logger = logging.getLogger(__name__)


def _staged(stage, func, *args, **kwargs):
    """Run one pipeline stage, tagging package errors with its name."""
    try:
        return func(*args, **kwargs)
    except SchedulerError as e:
        raise e.with_stage(stage)


def perturb_demands(network, seed, scale=0.05):
    """Multiply every demand by independent N(1, scale) factors, floored at 0."""
    rng = np.random.default_rng(seed)
    demands = np.asarray(network.inputs.demands, dtype=float)
    factors = rng.normal(1.0, scale, size=demands.shape)
    return with_inputs(network, demands=np.maximum(demands * factors, 0.0))


def tank_level_mae(extracted, final, network):
    """Mean absolute tank level difference between the MILP and a simulation."""
    if not network.tanks:
        return 0.0
    errors = []
    for t, tank_id in enumerate(final.tank_ids):
        milp_level = extracted.heads[tank_id] - network.node(tank_id).elevation
        errors.append(np.abs(milp_level - final.tank_levels[t]))
    return float(np.mean(errors))


@dataclass(frozen=True, eq=False)
class RunReport:
    """Everything one optimization run produced."""
    network: object
    baseline: object
    linearized: object
    problem: object
    result: object
    extracted: object
    final: object
    validation: object

    @property
    def baseline_cost(self):
        return self.baseline.cost

    @property
    def optimized_cost(self):
        return float(self.result.objective)

    @property
    def resimulated_cost(self):
        return self.final.cost

    @property
    def percent_saving(self):
        if self.baseline_cost <= 0:
            return 0.0
        return 100.0 * (self.baseline_cost - self.resimulated_cost) / self.baseline_cost

    @property
    def tank_level_mae(self):
        return tank_level_mae(self.extracted, self.final, self.network)

    def to_dict(self):
        """Report body; run-to-run varying quantities such as wall time are left out."""
        return {
            "network": self.network.name,
            "horizon": self.network.horizon,
            "baseline_cost": self.baseline_cost,
            "optimized_cost": self.optimized_cost,
            "resimulated_cost": self.resimulated_cost,
            "percent_saving": self.percent_saving,
            "tank_level_mae": self.tank_level_mae,
            "solver": {
                "status": self.result.status.value,
                "backend": self.result.backend,
                "objective": self.result.objective,
                "bound": self.result.bound,
                "gap": self.result.gap,
            },
            "validation": self.validation.to_dict(),
            "operating_point": self.linearized.operating_point.to_dict(),
            "schedule": self.extracted.schedule.to_dict(),
            "level_violations": [list(v) for v in self.final.level_violations],
            "power_domain_flags": [list(v) for v in self.final.power_domain_flags],
        }


@dataclass(frozen=True)
class Scenario:
    id: str
    tank_elevation: Optional[float]
    level_offset: float
    demand_mean: Optional[float]
    tank_diameter: Optional[float]
    demand_profile: int = -1
    tariff_profile: int = -1

    def to_dict(self):
        return {
            "scenario": self.id,
            "tank_elevation": self.tank_elevation,
            "level_offset": self.level_offset,
            "demand_mean": self.demand_mean,
            "tank_diameter": self.tank_diameter,
            "demand_profile": self.demand_profile,
            "tariff_profile": self.tariff_profile,
        }


@dataclass(frozen=True)
class BatchSpec:
    """Parameter grids; the scenario set is their Cartesian product."""
    tank_elevation: Tuple[Optional[float], ...] = (None,)
    level_offset: Tuple[float, ...] = (0.0,)
    demand_mean: Tuple[Optional[float], ...] = (None,)
    tank_diameter: Tuple[Optional[float], ...] = (None,)
    demand_profiles: Tuple[Tuple[float, ...], ...] = ()
    tariff_profiles: Tuple[Tuple[float, ...], ...] = ()

    @property
    def size(self):
        return (len(self.tank_elevation) * len(self.level_offset) * len(self.demand_mean)
                * len(self.tank_diameter) * max(len(self.demand_profiles), 1)
                * max(len(self.tariff_profiles), 1))

    def scenarios(self) -> List[Scenario]:
        grids = itertools.product(
            self.tank_elevation, self.level_offset, self.demand_mean, self.tank_diameter,
            range(len(self.demand_profiles)) if self.demand_profiles else (-1,),
            range(len(self.tariff_profiles)) if self.tariff_profiles else (-1,),
        )
        return [Scenario(f"s{i + 1:03d}", *values) for i, values in enumerate(grids)]

    @classmethod
    def from_dict(cls, data):
        try:
            spec = BatchFile.model_validate(data)
        except pydantic.ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise ValidationError(first["msg"], field_path=loc or "batch") from e
        return cls(
            tank_elevation=tuple(spec.tank_elevation or (None,)),
            level_offset=tuple(spec.level_offset),
            demand_mean=tuple(spec.demand_mean or (None,)),
            tank_diameter=tuple(spec.tank_diameter or (None,)),
            demand_profiles=tuple(tuple(p) for p in spec.demand_profile or ()),
            tariff_profiles=tuple(tuple(p) for p in spec.tariff_profile or ()),
        )


def load_batch_spec(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read batch file {path}: {e}") from e
    return BatchSpec.from_dict(data)


def apply_scenario(network, scenario, spec):
    """Network variant of one scenario; unset parameters keep the network values."""
    nodes = network.nodes
    tanks = network.tanks
    tank_ids = {t.node_id for t in tanks}
    if scenario.tank_elevation is not None:
        nodes = tuple(replace(n, elevation=float(scenario.tank_elevation))
                      if n.id in tank_ids else n for n in nodes)
    if scenario.tank_diameter is not None:
        area = float(np.pi * scenario.tank_diameter ** 2 / 4.0)
        tanks = tuple(replace(t, area=area) for t in tanks)
    variant = network.replace(nodes=nodes, tanks=tanks)

    horizon = network.horizon
    demands = np.array(network.inputs.demands, dtype=float)
    if scenario.demand_profile >= 0:
        profile = np.asarray(spec.demand_profiles[scenario.demand_profile], dtype=float)
        if len(profile) != horizon:
            raise ValidationError(f"demand profile has {len(profile)} entries, expected {horizon}",
                                  field_path="demand_profile")
        demands = demands.mean(axis=1, keepdims=True) * profile / profile.mean()
    if scenario.demand_mean is not None:
        total = demands.sum(axis=0).mean()
        if total > 0:
            demands = demands * (scenario.demand_mean / total)
    tariff = None
    if scenario.tariff_profile >= 0:
        tariff = np.asarray(spec.tariff_profiles[scenario.tariff_profile], dtype=float)
        if len(tariff) != horizon:
            raise ValidationError(f"tariff profile has {len(tariff)} entries, expected {horizon}",
                                  field_path="tariff_profile")
    return with_inputs(variant, demands=demands, tariff=tariff)


def _scenario_values(network, scenario):
    """Scenario parameters with unset grids filled in from the network."""
    values = scenario.to_dict()
    if network.tanks:
        tank = network.tanks[0]
        values["tank_elevation"] = network.node(tank.node_id).elevation
        values["tank_diameter"] = tank.diameter
    values["demand_mean"] = float(np.asarray(network.inputs.demands).sum(axis=0).mean())
    return values


def _worker(task):
    """Pool entry point: configure the services of this process, then run."""
    from app import create_app
    create_app(dict(task[0], LOG_TO_FILE=False))
    return _run_scenario(task)


def _run_scenario(task):
    """One scenario, fully independent; failures become a summary row."""
    config, network_data, spec, scenario, out_dir = task
    network = parse_network(network_data)
    row = scenario.to_dict()
    try:
        variant = apply_scenario(network, scenario, spec)
        row.update(_scenario_values(variant, scenario))
        planner = PumpSchedulingPlanner(config)
        report = planner.optimize(variant, final_level_offset=scenario.level_offset)
        scenario_dir = os.path.join(out_dir, "scenarios", scenario.id)
        write_json(os.path.join(scenario_dir, "report.json"), report.to_dict())
        write_csv(os.path.join(scenario_dir, "schedule.csv"), reporting.schedule_frame(report))
        row.update({
            "solved": report.result.status == MipStatus.OPTIMAL_WITHIN_GAP,
            "status": report.result.status.value,
            "baseline_cost": report.baseline_cost,
            "optimized_cost": report.optimized_cost,
            "resimulated_cost": report.resimulated_cost,
            "percent_saving": report.percent_saving,
            "tank_level_mae": report.tank_level_mae,
            "gap": report.result.gap,
            "nodes": report.result.nodes,
            "wall_time": report.result.wall_time,
            "validation": report.validation.verdict,
            "error": "",
        })
    except Exception as e:
        log_error(f"Scenario {scenario.id} failed", e)
        row.update({"solved": False, "status": "error", "error": str(e)})
    return row


SUMMARY_COLUMNS = [
    "scenario", "tank_elevation", "level_offset", "demand_mean", "tank_diameter",
    "demand_profile", "tariff_profile", "solved", "status", "baseline_cost",
    "optimized_cost", "resimulated_cost", "percent_saving", "tank_level_mae", "gap",
    "nodes", "wall_time", "validation", "error",
]


@dataclass(frozen=True, eq=False)
class BatchSummary:
    frame: pd.DataFrame
    paths: Dict[str, str] = field(default_factory=dict)

    @property
    def total(self):
        return len(self.frame)

    @property
    def succeeded(self):
        return int(self.frame["solved"].sum())

    @property
    def success_rate(self):
        return self.succeeded / self.total if self.total else 0.0

    @property
    def partial_failure(self):
        return self.succeeded < self.total


class PumpSchedulingPlanner:
    """Runs the scheduling pipeline with the configured services."""

    def __init__(self, config=None):
        self.config = dict(config or {})

    def simulate(self, network, schedule=None):
        """EPS of ``network`` under ``schedule`` (default: all pumps on at s = 1)."""
        schedule = schedule or GroupSchedule.flat(network)
        return _staged("simulate", simulator.simulate_eps, network, schedule)

    def build(self, network, final_level_offset=0.0):
        """Baseline simulation, surrogates and MILP for ``network``."""
        baseline = self.simulate(network)
        linearized = _staged("linearize", linearizer.linearize, network, baseline, self.config)
        problem = _staged("build", milp_builder.build, network, linearized,
                          final_level_offset=final_level_offset)
        return baseline, linearized, problem

    def export(self, network, mps_path, final_level_offset=0.0):
        _, _, problem = self.build(network, final_level_offset)
        return _staged("build", problem_io.export_problem, problem, mps_path)

    def optimize(self, network, gap=None, time_limit=None, backend=None,
                 final_level_offset=0.0, export_mps=None) -> RunReport:
        """Full pipeline; percent saving is taken from the re-simulated cost."""
        logger.info(f"Optimizing {network.name} over {network.horizon} steps")
        baseline, linearized, problem = self.build(network, final_level_offset)
        if export_mps:
            _staged("build", problem_io.export_problem, problem, export_mps)

        fixings = [schedule_statuses(problem, network, baseline.schedule)]
        result = _staged("solve", milp_solver.solve, problem, gap=gap, time_limit=time_limit,
                         backend=backend, fixings=fixings)
        extracted = _staged("solve", milp_solver.extract, result, problem, network)
        validation = validate_solution(problem, result.x,
                                       tol=float(self.config.get('FEASIBILITY_TOL', 1e-6)))
        final = _staged("resimulate", simulator.simulate_eps, network, extracted.schedule)

        report = RunReport(network, baseline, linearized, problem, result, extracted, final,
                           validation)
        logger.info(
            f"Cost: baseline {report.baseline_cost:.4f}, MILP {report.optimized_cost:.4f}, "
            f"re-simulated {report.resimulated_cost:.4f} ({report.percent_saving:.2f}% saving), "
            f"tank level MAE {report.tank_level_mae:.3f} m"
        )
        return report

    def write_report(self, report, out_dir):
        """report.json, solution.json and the comparison CSVs."""
        def write():
            paths = reporting.emit_plots_data(report, out_dir)
            paths["report"] = write_json(os.path.join(out_dir, "report.json"), report.to_dict())
            paths["solution"] = problem_io.write_solution(
                os.path.join(out_dir, "solution.json"), report.problem, report.result)
            return paths
        return _staged("report", write)

    def batch(self, network, spec, out_dir, jobs=1) -> BatchSummary:
        """Run every scenario of ``spec``; failures are recorded and the batch continues."""
        scenarios = spec.scenarios()
        logger.info(f"Batch of {len(scenarios)} scenarios with {jobs} job(s)")
        network_data = network_to_dict(network)
        tasks = [(self.config, network_data, spec, s, out_dir) for s in scenarios]

        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_worker, tasks))
        else:
            rows = []
            for i, task in enumerate(tasks, start=1):
                rows.append(_run_scenario(task))
                logger.info(f"Scenario {i}/{len(tasks)} done")

        frame = pd.DataFrame(rows)
        for column in SUMMARY_COLUMNS:
            if column not in frame:
                frame[column] = np.nan
        frame = frame[SUMMARY_COLUMNS]
        frame["solved"] = frame["solved"].fillna(False).astype(bool)
        paths = reporting.emit_batch_data(frame, out_dir)
        summary = BatchSummary(frame, paths)
        logger.info(f"Batch finished: {summary.succeeded}/{summary.total} scenarios solved")
        return summary
