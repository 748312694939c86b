"""
Linearizer: power tangents, pipe headloss segments and pump head planes.
"""
import logging

import numpy as np

from app.exceptions import InvalidBreakpoints, DegenerateGeometry, LinearizationError
from app.models.linearized import (
    PowerTangent, PipePWL, PumpPWL, OperatingPoint, LinearizedModel,
)
from app.services.simulator import group_head, intercept_flow

logger = logging.getLogger(__name__)

# Flows below this are treated as zero when picking breakpoints, L/s.
ZERO_FLOW = 1e-6
GEOMETRY_TOL = 1e-12

# Fan triangulation around the nominal vertex
TRIANGLES = (("p1", "p2", "pn"), ("p2", "p3", "pn"), ("p3", "p4", "pn"), ("p4", "p1", "pn"))


def power_at(model, q, s):
    """Single-pump power P(q, 1, s) expanded as a homogeneous cubic."""
    return model.a3 * q ** 3 + model.a2 * q ** 2 * s + model.a1 * q * s ** 2 + model.a0 * s ** 3


def linearize_power(model, q0, s0) -> PowerTangent:
    """Tangent plane of the single-pump power at (q0, s0).

    Raises:
        LinearizationError: q0 is not positive or s0 is outside the speed range.
    """
    if not q0 > 0:
        raise LinearizationError(f"linearization flow must be positive, got {q0}")
    if not model.s_min <= s0 <= model.s_max:
        raise LinearizationError(
            f"linearization speed {s0} outside [{model.s_min}, {model.s_max}]")

    a3, a2, a1, a0 = model.power_coeffs
    m_q = 3.0 * a3 * q0 ** 2 + 2.0 * a2 * s0 * q0 + a1 * s0 ** 2
    m_s = a2 * q0 ** 2 + 2.0 * a1 * q0 * s0 + 3.0 * a0 * s0 ** 2
    c = -2.0 * power_at(model, q0, s0)
    return PowerTangent(m_q=m_q, m_s=m_s, c=c, q0=float(q0), s0=float(s0))


def linearize_pipe(resistance, q1, q2) -> PipePWL:
    """Three-segment interpolation of R|q|q over [-q2, q2].

    The positive outer segment interpolates (q1, R q1^2) and (q2, R q2^2);
    the negative one is its mirror image through the origin.
    """
    if not (np.isfinite(q1) and np.isfinite(q2) and 0 < q1 < q2):
        raise InvalidBreakpoints(f"breakpoints must satisfy 0 < q1 < q2, got q1={q1}, q2={q2}")

    dh1 = resistance * q1 * q1
    dh2 = resistance * q2 * q2
    m_outer = (dh2 - dh1) / (q2 - q1)
    c_outer = (dh1 * q2 - dh2 * q1) / (q2 - q1)
    m_middle = (dh1 - (-dh1)) / (q1 - (-q1))

    return PipePWL(
        resistance=float(resistance),
        breakpoints=np.array([-q2, -q1, q1, q2], dtype=float),
        slopes=np.array([m_outer, m_middle, m_outer]),
        intercepts=np.array([-c_outer, 0.0, c_outer]),
    )


def pump_vertices(model):
    """Vertices (s, q, H) of the operating region of one pump."""
    s_min, s_max, s_n = model.s_min, model.s_max, model.s_nominal
    q_min_int = intercept_flow(model, 1, s_min)
    q_max_int = intercept_flow(model, 1, s_max)
    return {
        "p1": np.array([s_min, 0.0, group_head(model, 0.0, 1, s_min)]),
        "p2": np.array([s_max, 0.0, group_head(model, 0.0, 1, s_max)]),
        "p3": np.array([s_max, q_max_int, 0.0]),
        "p4": np.array([s_min, q_min_int, 0.0]),
        "pn": np.array([s_n, model.q_nominal, group_head(model, model.q_nominal, 1, s_n)]),
    }


def _plane(a, b, pn):
    normal = np.cross(a - pn, b - pn)
    n_s, n_q, n_h = normal
    scale = max(np.linalg.norm(a - pn) * np.linalg.norm(b - pn), 1.0)
    if abs(n_h) <= GEOMETRY_TOL * scale:
        raise DegenerateGeometry("triangle vertices project onto a line in the (q, s) plane")
    s_n, q_n, h_n = pn
    return -n_s / n_h, -n_q / n_h, h_n + (n_s * s_n + n_q * q_n) / n_h


def _half_planes(points):
    """Rows (m_qq, m_ss, c) with the triangle interior on the <= 0 side."""
    rows = []
    for j in range(3):
        u, v, w = points[j], points[(j + 1) % 3], points[(j + 2) % 3]
        dq, ds = v - u
        normal = np.array([ds, -dq])
        length = np.linalg.norm(normal)
        if length <= GEOMETRY_TOL:
            raise DegenerateGeometry("coincident projected vertices")
        normal /= length
        if normal @ (w - u) > 0:
            normal = -normal
        rows.append([normal[0], normal[1], -normal @ u])
    return rows


def pump_pwl_from_vertices(vertices, q_max, s_min, s_max) -> PumpPWL:
    """Planes and domains of the fan triangulation over the given vertices."""
    dd, ee, ff, domains = [], [], [], []
    for tri in TRIANGLES:
        a, b, pn = (vertices[name] for name in tri)
        projected = [np.array([p[1], p[0]]) for p in (a, b, pn)]
        u, v = projected[1] - projected[0], projected[2] - projected[0]
        area = u[0] * v[1] - u[1] * v[0]
        if abs(area) <= GEOMETRY_TOL:
            raise DegenerateGeometry(f"triangle {tri} is collinear in the (q, s) plane")
        d, e, f = _plane(a, b, pn)
        dd.append(d)
        ee.append(e)
        ff.append(f)
        domains.append(_half_planes(projected))

    return PumpPWL(
        vertices={k: np.array(v, dtype=float) for k, v in vertices.items()},
        triangles=TRIANGLES,
        dd=np.array(dd),
        ee=np.array(ee),
        ff=np.array(ff),
        domains=np.array(domains),
        q_max=float(q_max),
        s_min=float(s_min),
        s_max=float(s_max),
    )


def build_pump_pwl(model) -> PumpPWL:
    """Piecewise-planar head surface of one pump over its operating region."""
    vertices = pump_vertices(model)
    return pump_pwl_from_vertices(vertices, q_max=vertices["p3"][1],
                                  s_min=model.s_min, s_max=model.s_max)


def max_pump_head(model, s):
    """Largest single-pump head over q in [0, intercept] at speed ``s``."""
    q_star = -model.B * s / (2.0 * model.A)
    if q_star > 0:
        return float(group_head(model, q_star, 1, s))
    return float(group_head(model, 0.0, 1, s))


def in_quadrilateral(pwl, q, s, tol=0.0):
    return bool(pwl.domains_containing(q, s, tol=tol))


def pipe_pwl_error(pwl, n_points=10_000):
    """Largest |R|q|q - PWL(q)| on a dense grid over [-q2, q2]."""
    q = np.linspace(pwl.breakpoints[0], pwl.breakpoints[-1], n_points)
    exact = pwl.resistance * q * np.abs(q)
    return float(np.max(np.abs(exact - pwl.evaluate(q))))


def pump_pwl_error(model, pwl, n_points=200):
    """Largest |plane - H(q, 1, s)| on a dense grid inside the quadrilateral."""
    worst = 0.0
    for s in np.linspace(pwl.s_min, pwl.s_max, n_points):
        for q in np.linspace(0.0, pwl.q_max, n_points):
            value = pwl.evaluate(q, s)
            if np.isnan(value):
                continue
            worst = max(worst, abs(value - group_head(model, q, 1, s)))
    return worst


class Linearizer:
    """Picks operating points from a simulation and builds all surrogates."""

    def __init__(self, app=None):
        self.app = app
        self.reference_hour = 12.0
        self.margin = 2.0
        self.coverage = 0.0
        self.floor = 1.0
        self.power_point = None

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.reference_hour = float(app.config.get('REFERENCE_HOUR', self.reference_hour))
        self.margin = float(app.config.get('BREAKPOINT_MARGIN', self.margin))
        self.coverage = float(app.config.get('BREAKPOINT_COVERAGE', self.coverage))
        self.floor = float(app.config.get('BREAKPOINT_FLOOR', self.floor))
        self.power_point = self._parse_power_point(app.config.get('POWER_POINT'))

    @staticmethod
    def _parse_power_point(value):
        if not value:
            return None
        if isinstance(value, str):
            q0, s0 = (float(v) for v in value.split(","))
            return q0, s0
        q0, s0 = value
        return float(q0), float(s0)

    def _settings(self, config):
        config = config or {}
        return {
            'reference_hour': float(config.get('REFERENCE_HOUR', self.reference_hour)),
            'margin': float(config.get('BREAKPOINT_MARGIN', self.margin)),
            'coverage': float(config.get('BREAKPOINT_COVERAGE', self.coverage)),
            'floor': float(config.get('BREAKPOINT_FLOOR', self.floor)),
            'power_point': self._parse_power_point(config.get('POWER_POINT')) or self.power_point,
        }

    def reference_step(self, horizon, dt_hours, reference_hour):
        """0-based index of the step ending at ``reference_hour``."""
        k = int(round(reference_hour / dt_hours)) - 1
        return min(max(k, 0), horizon - 1)

    def select_operating_points(self, sim, network, config=None) -> OperatingPoint:
        """Breakpoints per pipe and tangent points per pump group.

        q1 is the pipe flow magnitude at the reference hour, falling back to
        the time-mean magnitude and then to the configured floor;
        q2 = max(margin * q1, coverage * max_k |q(k)|).
        """
        settings = self._settings(config)
        k_ref = self.reference_step(sim.horizon, sim.dt_hours, settings['reference_hour'])

        pipes = {}
        for pipe in network.pipes:
            magnitude = np.abs(sim.flow_of(pipe.id))
            q1 = float(magnitude[k_ref])
            if q1 <= ZERO_FLOW:
                q1 = float(np.mean(magnitude))
                if q1 <= ZERO_FLOW:
                    q1 = settings['floor']
                logger.debug(f"Pipe {pipe.id} idle at the reference hour; q1 set to {q1:.4g}")
            q2 = max(settings['margin'] * q1, settings['coverage'] * float(np.max(magnitude)))
            if not q2 > q1:
                q2 = settings['margin'] * q1
            pipes[pipe.id] = (q1, pipe.resistance * q1 * q1, q2)

        pumps = {}
        for group in network.pump_groups:
            model = group.model
            if settings['power_point'] is not None:
                pumps[group.id] = settings['power_point']
            else:
                pumps[group.id] = (model.q_nominal, model.s_nominal)

        return OperatingPoint(pipes=pipes, pumps=pumps)

    def linearize(self, network, sim, config=None) -> LinearizedModel:
        """Build every surrogate of ``network`` around points taken from ``sim``."""
        point = self.select_operating_points(sim, network, config)
        pipes = {
            pipe.id: linearize_pipe(pipe.resistance, point.pipes[pipe.id][0],
                                    point.pipes[pipe.id][2])
            for pipe in network.pipes
        }
        pumps = {}
        tangents = {}
        for group in network.pump_groups:
            pumps[group.id] = build_pump_pwl(group.model)
            q0, s0 = point.pumps[group.id]
            tangents[group.id] = linearize_power(group.model, q0, s0)

        logger.info(f"Linearized {len(pipes)} pipes and {len(pumps)} pump groups")
        return LinearizedModel(operating_point=point, pipes=pipes, pumps=pumps,
                               tangents=tangents)


linearizer = Linearizer()
