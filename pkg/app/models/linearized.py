"""
Linear and piecewise-linear surrogates of the pump power, pipe headloss and
pump head characteristic.
"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class PowerTangent:
    """Tangent plane P ~ m_q q + m_s s + c at (q0, s0)."""
    m_q: float
    m_s: float
    c: float
    q0: float
    s0: float

    def evaluate(self, q, s):
        return self.m_q * q + self.m_s * s + self.c

    def to_dict(self):
        return {"m_q": self.m_q, "m_s": self.m_s, "c": self.c, "q0": self.q0, "s0": self.s0}


@dataclass(frozen=True, eq=False)
class PipePWL:
    """Three-segment odd approximation of R|q|q.

    ``breakpoints`` holds the four segment ends (-q2, -q1, q1, q2); segment
    ``i`` spans ``breakpoints[i]..breakpoints[i + 1]``.
    """
    resistance: float
    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def n_segments(self):
        return len(self.slopes)

    def segment_of(self, q):
        """Index of the segment containing ``q``, clipped to the outer segments."""
        i = int(np.searchsorted(self.breakpoints, q, side='right')) - 1
        return min(max(i, 0), self.n_segments - 1)

    def evaluate(self, q):
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, q, side='right') - 1,
                      0, self.n_segments - 1)
        return self.slopes[idx] * q + self.intercepts[idx]

    def to_dict(self):
        return {
            "resistance": self.resistance,
            "breakpoints": self.breakpoints.tolist(),
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
        }


@dataclass(frozen=True, eq=False)
class PumpPWL:
    """Four planes over a fan triangulation of the (q, s) operating quadrilateral.

    ``vertices`` maps ``p1``..``p4`` and ``pn`` to (s, q, H). Plane ``i``
    reads H = dd[i] s + ee[i] q + ff[i]; domain ``i`` is the set where all
    three rows m_qq q + m_ss s + c of ``domains[i]`` are <= 0.
    """
    vertices: Dict[str, np.ndarray]
    triangles: Tuple[Tuple[str, str, str], ...]
    dd: np.ndarray
    ee: np.ndarray
    ff: np.ndarray
    domains: np.ndarray
    q_max: float
    s_min: float
    s_max: float

    @property
    def n_planes(self):
        return len(self.dd)

    def plane_value(self, i, q, s):
        return self.dd[i] * s + self.ee[i] * q + self.ff[i]

    def domain_rows(self, i, q, s):
        rows = self.domains[i]
        return rows[:, 0] * q + rows[:, 1] * s + rows[:, 2]

    def domains_containing(self, q, s, tol=0.0):
        return [i for i in range(self.n_planes) if np.all(self.domain_rows(i, q, s) <= tol)]

    def evaluate(self, q, s):
        """Surrogate head at (q, s); NaN outside the quadrilateral."""
        hits = self.domains_containing(q, s, tol=1e-9)
        if not hits:
            return float('nan')
        return float(self.plane_value(hits[0], q, s))

    def to_dict(self):
        return {
            "vertices": {k: v.tolist() for k, v in self.vertices.items()},
            "triangles": [list(t) for t in self.triangles],
            "dd": self.dd.tolist(),
            "ee": self.ee.tolist(),
            "ff": self.ff.tolist(),
            "domains": self.domains.tolist(),
            "q_max": self.q_max,
            "s_min": self.s_min,
            "s_max": self.s_max,
        }


@dataclass(frozen=True)
class OperatingPoint:
    """Pipe breakpoints (q1, dh1, q2) and pump tangent points (q0, s0)."""
    pipes: Dict[str, Tuple[float, float, float]] = field(default_factory=dict)
    pumps: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def to_dict(self):
        return {
            "pipes": {k: {"q1": v[0], "dh1": v[1], "q2": v[2]} for k, v in self.pipes.items()},
            "pumps": {k: {"q0": v[0], "s0": v[1]} for k, v in self.pumps.items()},
        }


@dataclass(frozen=True)
class LinearizedModel:
    """Surrogates per pipe and per pump group, keyed by element id."""
    operating_point: OperatingPoint
    pipes: Dict[str, PipePWL]
    pumps: Dict[str, PumpPWL]
    tangents: Dict[str, PowerTangent]

    def to_dict(self):
        return {
            "operating_point": self.operating_point.to_dict(),
            "pipes": {k: v.to_dict() for k, v in self.pipes.items()},
            "pumps": {k: v.to_dict() for k, v in self.pumps.items()},
            "tangents": {k: v.to_dict() for k, v in self.tangents.items()},
        }
