"""
Pydantic schema of the network file (version 1.0).

Per-record invariants live here so that pydantic reports them with their
location; cross-record rules (unique ids, references, topology) are
checked by ``app.models.network``.
"""
import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = "1.0"

# Element ids end up in column names, so separators are excluded.
ID_PATTERN = r"^[A-Za-z0-9_.\-]+$"


class NodeKind(str, Enum):
    CONNECTION = "connection"
    DEMAND = "demand"
    RESERVOIR = "reservoir"
    TANK = "tank"


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NodeSpec(_Spec):
    id: str = Field(pattern=ID_PATTERN)
    kind: NodeKind
    elevation: float


class PipeSpec(_Spec):
    id: str = Field(pattern=ID_PATTERN)
    from_node: str
    to_node: str
    resistance: float = Field(gt=0)

    @model_validator(mode="after")
    def _no_self_loop(self):
        if self.from_node == self.to_node:
            raise ValueError(f"pipe {self.id} has from_node == to_node ({self.from_node})")
        return self


class PumpModelSpec(_Spec):
    """Cubic power curve (a3, a2, a1, a0) and quadratic head curve (A, B, C)."""

    power_coeffs: Tuple[float, float, float, float]
    head_coeffs: Tuple[float, float, float]
    s_min: float = Field(gt=0)
    s_max: float = Field(gt=0)
    q_nominal: float = Field(gt=0)
    s_nominal: float = 1.0

    @model_validator(mode="after")
    def _check_curves(self):
        A = self.head_coeffs[0]
        if not A < 0:
            raise ValueError(f"head coefficient A must be negative, got {A}")
        if not (0 < self.s_min < self.s_nominal <= self.s_max):
            raise ValueError(
                f"speeds must satisfy 0 < s_min < s_nominal <= s_max, got "
                f"{self.s_min}, {self.s_nominal}, {self.s_max}"
            )
        a3, a2, a1, a0 = self.power_coeffs
        x = self.q_nominal / self.s_nominal
        power = ((a3 * x + a2) * x + a1) * x + a0
        if not power > 0:
            raise ValueError(f"power at the nominal point must be positive, got {power}")
        return self


class PumpGroupSpec(_Spec):
    id: str = Field(pattern=ID_PATTERN)
    from_node: str
    to_node: str
    n_pumps: int = Field(ge=1)
    model: PumpModelSpec

    @model_validator(mode="after")
    def _no_self_loop(self):
        if self.from_node == self.to_node:
            raise ValueError(f"pump group {self.id} has from_node == to_node ({self.from_node})")
        return self


class TankSpec(_Spec):
    """Cylindrical tank; give either ``area`` or ``diameter``."""

    node: str
    area: Optional[float] = Field(default=None, gt=0)
    diameter: Optional[float] = Field(default=None, gt=0)
    level_min: float
    level_max: float
    level_init: float
    final_level_tolerance: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_levels(self):
        if (self.area is None) == (self.diameter is None):
            raise ValueError("exactly one of area or diameter is required")
        if not self.level_min < self.level_max:
            raise ValueError(
                f"level_min ({self.level_min}) must be below level_max ({self.level_max})"
            )
        if not self.level_min <= self.level_init <= self.level_max:
            raise ValueError(
                f"level_init ({self.level_init}) outside [{self.level_min}, {self.level_max}]"
            )
        return self

    @property
    def resolved_area(self) -> float:
        if self.area is not None:
            return self.area
        return math.pi * (self.diameter / 2.0) ** 2


class InputsSpec(_Spec):
    horizon: int = Field(ge=1)
    dt_hours: float = Field(gt=0)
    demands: Dict[str, List[float]] = Field(default_factory=dict)
    tariff: List[float]

    @field_validator("tariff")
    @classmethod
    def _positive_tariff(cls, value):
        if any(not t > 0 for t in value):
            raise ValueError("tariff entries must be positive")
        return value

    @field_validator("demands")
    @classmethod
    def _nonnegative_demands(cls, value):
        for node_id, series in value.items():
            if any(d < 0 for d in series):
                raise ValueError(f"demand at {node_id} must be non-negative")
        return value

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.tariff) != self.horizon:
            raise ValueError(f"tariff has {len(self.tariff)} entries, horizon is {self.horizon}")
        for node_id, series in self.demands.items():
            if len(series) != self.horizon:
                raise ValueError(
                    f"demand at {node_id} has {len(series)} entries, horizon is {self.horizon}"
                )
        return self


class NetworkFile(_Spec):
    schema_version: Literal["1.0"]
    name: str = "network"
    nodes: List[NodeSpec]
    pipes: List[PipeSpec] = Field(default_factory=list)
    pump_groups: List[PumpGroupSpec] = Field(default_factory=list)
    tanks: List[TankSpec] = Field(default_factory=list)
    inputs: InputsSpec


class ScheduleFile(_Spec):
    """Group schedule: per group, ``n_active`` and ``speed`` series."""

    schema_version: Literal["1.0"] = SCHEMA_VERSION
    groups: Dict[str, Dict[Literal["n_active", "speed"], List[float]]]


class BatchFile(_Spec):
    """Parameter grids of a batch run; omitted grids keep the network value."""

    schema_version: Literal["1.0"] = SCHEMA_VERSION
    tank_elevation: Optional[List[float]] = None
    level_offset: List[float] = Field(default_factory=lambda: [0.0])
    demand_mean: Optional[List[float]] = Field(default=None)
    tank_diameter: Optional[List[float]] = None
    demand_profile: Optional[List[List[float]]] = None
    tariff_profile: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _non_empty(self):
        for name in ("tank_elevation", "level_offset", "demand_mean", "tank_diameter",
                     "demand_profile", "tariff_profile"):
            grid = getattr(self, name)
            if grid is not None and len(grid) == 0:
                raise ValueError(f"grid {name} must have at least one entry")
        if self.demand_mean is not None and any(not d > 0 for d in self.demand_mean):
            raise ValueError("demand_mean entries must be positive")
        if self.tank_diameter is not None and any(not d > 0 for d in self.tank_diameter):
            raise ValueError("tank_diameter entries must be positive")
        return self
