"""
Pump-group schedules and extended-period simulation results.
"""
import json
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import pandas as pd
import pydantic

from app.exceptions import ParseError, ValidationError
from app.models.schema import ScheduleFile, SCHEMA_VERSION


@dataclass(frozen=True, eq=False)
class GroupSchedule:
    """Per pump group and step: number of running pumps and their common speed."""
    group_ids: Tuple[str, ...]
    n_active: np.ndarray
    speed: np.ndarray

    @property
    def horizon(self):
        return self.n_active.shape[1]

    def controls_at(self, k):
        """(n, s) per group for 0-based step ``k``."""
        return [(int(self.n_active[g, k]), float(self.speed[g, k]))
                for g in range(len(self.group_ids))]

    def validate(self, network):
        """Check the schedule against the network's groups and horizon."""
        expected = tuple(g.id for g in network.pump_groups)
        if self.group_ids != expected:
            raise ValidationError(f"schedule groups {self.group_ids} do not match {expected}",
                                  field_path="groups")
        if self.n_active.shape != (len(expected), network.horizon):
            raise ValidationError(
                f"schedule horizon {self.horizon} does not match network horizon {network.horizon}",
                field_path="groups",
            )
        for g, group in enumerate(network.pump_groups):
            model = group.model
            for k in range(network.horizon):
                n, s = self.n_active[g, k], self.speed[g, k]
                path = f"groups.{group.id}[{k}]"
                if not 0 <= n <= group.n_pumps:
                    raise ValidationError(f"n_active {n} outside [0, {group.n_pumps}]", field_path=path)
                if n > 0 and not (model.s_min - 1e-9 <= s <= model.s_max + 1e-9):
                    raise ValidationError(
                        f"speed {s} outside [{model.s_min}, {model.s_max}]", field_path=path)
                if n == 0 and s != 0:
                    raise ValidationError(f"speed {s} must be 0 when the group is off",
                                          field_path=path)
        return self

    @classmethod
    def flat(cls, network, speed=1.0):
        """All pumps on at constant speed, the baseline operation."""
        n_groups = len(network.pump_groups)
        n_active = np.array([[g.n_pumps] * network.horizon for g in network.pump_groups],
                            dtype=int).reshape(n_groups, network.horizon)
        speeds = np.full((n_groups, network.horizon), float(speed))
        return cls(tuple(g.id for g in network.pump_groups), n_active, speeds)

    @classmethod
    def off(cls, network):
        n_groups = len(network.pump_groups)
        shape = (n_groups, network.horizon)
        return cls(tuple(g.id for g in network.pump_groups),
                   np.zeros(shape, dtype=int), np.zeros(shape))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "groups": {
                group_id: {
                    "n_active": self.n_active[g].tolist(),
                    "speed": self.speed[g].tolist(),
                }
                for g, group_id in enumerate(self.group_ids)
            },
        }

    @classmethod
    def from_dict(cls, data, network=None):
        try:
            spec = ScheduleFile.model_validate(data)
        except pydantic.ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise ValidationError(first["msg"], field_path=loc) from e

        if network is not None:
            group_ids = tuple(g.id for g in network.pump_groups)
            missing = [g for g in group_ids if g not in spec.groups]
            if missing:
                raise ValidationError(f"no schedule for groups {missing}", field_path="groups")
        else:
            group_ids = tuple(spec.groups)

        lengths = {len(spec.groups[g].get(key, [])) for g in group_ids
                   for key in ("n_active", "speed")}
        if len(lengths) > 1:
            raise ValidationError("schedule series have different lengths", field_path="groups")
        horizon = lengths.pop() if lengths else (network.horizon if network else 0)

        n_active = np.array([spec.groups[g]["n_active"] for g in group_ids],
                            dtype=float).reshape(len(group_ids), horizon)
        if not np.all(n_active == np.round(n_active)):
            raise ValidationError("n_active must be integral", field_path="groups")
        speed = np.array([spec.groups[g]["speed"] for g in group_ids],
                         dtype=float).reshape(len(group_ids), horizon)
        schedule = cls(group_ids, n_active.astype(int), speed)
        if network is not None:
            schedule.validate(network)
        return schedule


def load_schedule(path, network=None) -> GroupSchedule:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read schedule file {path}: {e}") from e
    return GroupSchedule.from_dict(data, network)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Heads, flows, tank heads, group power and cost of an EPS run.

    ``tank_heads[t, k]`` is the tank head after step ``k`` was advanced;
    ``fixed_heads[:, k]`` are the heads the step-``k`` solve was run with.
    """
    calc_nodes: Tuple[str, ...]
    fixed_nodes: Tuple[str, ...]
    elements: Tuple[str, ...]
    group_ids: Tuple[str, ...]
    tank_ids: Tuple[str, ...]
    heads: np.ndarray
    fixed_heads: np.ndarray
    flows: np.ndarray
    tank_heads: np.ndarray
    tank_levels: np.ndarray
    power: np.ndarray
    step_cost: np.ndarray
    tariff: np.ndarray
    dt_hours: float
    schedule: GroupSchedule
    level_violations: List[Tuple[str, int, float]] = field(default_factory=list)
    power_domain_flags: List[Tuple[str, int, float]] = field(default_factory=list)

    @property
    def horizon(self):
        return self.flows.shape[1]

    @property
    def cost(self):
        return float(np.sum(self.step_cost))

    def flow_of(self, element_id):
        return self.flows[self.elements.index(element_id)]

    def head_of(self, node_id):
        if node_id in self.calc_nodes:
            return self.heads[self.calc_nodes.index(node_id)]
        return self.fixed_heads[self.fixed_nodes.index(node_id)]

    def to_frame(self) -> pd.DataFrame:
        """One row per step: k, tariff, heads, flows, tank levels, power, cost."""
        data = {"k": np.arange(1, self.horizon + 1), "tariff": self.tariff}
        for i, node_id in enumerate(self.calc_nodes):
            data[f"head_{node_id}"] = self.heads[i]
        for i, node_id in enumerate(self.fixed_nodes):
            data[f"head_{node_id}"] = self.fixed_heads[i]
        for i, element_id in enumerate(self.elements):
            data[f"flow_{element_id}"] = self.flows[i]
        for i, tank_id in enumerate(self.tank_ids):
            data[f"tank_head_{tank_id}"] = self.tank_heads[i]
            data[f"tank_level_{tank_id}"] = self.tank_levels[i]
        for g, group_id in enumerate(self.group_ids):
            data[f"n_active_{group_id}"] = self.schedule.n_active[g]
            data[f"speed_{group_id}"] = self.schedule.speed[g]
            data[f"power_{group_id}"] = self.power[g]
        data["cost"] = self.step_cost
        return pd.DataFrame(data)

    def to_dict(self):
        return {
            "calc_nodes": list(self.calc_nodes),
            "fixed_nodes": list(self.fixed_nodes),
            "elements": list(self.elements),
            "groups": list(self.group_ids),
            "tanks": list(self.tank_ids),
            "heads": self.heads.tolist(),
            "fixed_heads": self.fixed_heads.tolist(),
            "flows": self.flows.tolist(),
            "tank_heads": self.tank_heads.tolist(),
            "tank_levels": self.tank_levels.tolist(),
            "power": self.power.tolist(),
            "step_cost": self.step_cost.tolist(),
            "cost": self.cost,
            "schedule": self.schedule.to_dict(),
            "level_violations": [list(v) for v in self.level_violations],
            "power_domain_flags": [list(v) for v in self.power_domain_flags],
        }
