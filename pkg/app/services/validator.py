"""
Independent feasibility check of a MILP solution vector.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationReport:
    """Largest residual per constraint family plus bound and integrality checks.

    Row residuals are |a x - b| for equalities and max(a x - b, 0) for
    inequalities, divided by max(1, max_j |a_j|) of the row.
    """
    tol: float
    families: Dict[str, float]
    bound_violation: float
    integrality_violation: float
    fractional_columns: List[str] = field(default_factory=list)
    objective: float = 0.0

    @property
    def worst_family(self):
        if not self.families:
            return None
        return max(sorted(self.families), key=lambda f: self.families[f])

    @property
    def failing_families(self):
        return sorted(f for f, r in self.families.items() if r > self.tol)

    @property
    def passed(self):
        return (not self.failing_families
                and self.bound_violation <= self.tol
                and self.integrality_violation <= self.tol)

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def to_frame(self):
        rows = [{"check": family, "residual": residual, "ok": residual <= self.tol}
                for family, residual in sorted(self.families.items())]
        rows.append({"check": "bounds", "residual": self.bound_violation,
                     "ok": self.bound_violation <= self.tol})
        rows.append({"check": "integrality", "residual": self.integrality_violation,
                     "ok": self.integrality_violation <= self.tol})
        return pd.DataFrame(rows, columns=["check", "residual", "ok"])

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "tol": self.tol,
            "objective": self.objective,
            "families": dict(sorted(self.families.items())),
            "failing_families": self.failing_families,
            "bound_violation": self.bound_violation,
            "integrality_violation": self.integrality_violation,
            "fractional_columns": list(self.fractional_columns),
        }


def _row_scale(matrix):
    matrix = abs(matrix.tocsr())
    scale = np.asarray(matrix.max(axis=1).todense()).ravel() if matrix.shape[0] else np.zeros(0)
    return np.maximum(scale, 1.0)


def _family_max(residuals, tags, default, families):
    for i, residual in enumerate(residuals):
        family = tags[i].family if i < len(tags) else default
        families[family] = max(families.get(family, 0.0), float(residual))


def validate_solution(problem, x, tol=1e-6) -> ValidationReport:
    """Check ``x`` against every row, bound and integrality requirement of ``problem``.

    Never raises on an infeasible vector; the verdict is in the report.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n_columns,):
        raise ValueError(f"solution has {x.size} entries, problem has {problem.n_columns} columns")

    families: Dict[str, float] = {}
    if problem.n_eq:
        eq = np.abs(problem.a_eq @ x - problem.b_eq) / _row_scale(problem.a_eq)
        tags = problem.eq_tags if len(problem.eq_tags) == problem.n_eq else ()
        _family_max(eq, tags, "equality", families)
    if problem.n_ub:
        ub = np.maximum(problem.a_ub @ x - problem.b_ub, 0.0) / _row_scale(problem.a_ub)
        tags = problem.ub_tags if len(problem.ub_tags) == problem.n_ub else ()
        _family_max(ub, tags, "inequality", families)

    bound_violation = float(np.max(np.maximum(problem.lb - x, x - problem.ub), initial=0.0))
    bound_violation = max(bound_violation, 0.0)

    names = problem.column_names
    integrality = np.abs(x[problem.integer] - np.round(x[problem.integer]))
    fractional = [names[c] for c, v in zip(problem.integer, integrality) if v > tol]

    report = ValidationReport(
        tol=float(tol),
        families=families,
        bound_violation=bound_violation,
        integrality_violation=float(np.max(integrality, initial=0.0)),
        fractional_columns=fractional,
        objective=problem.objective(x),
    )
    if report.passed:
        logger.info(f"Solution PASS (objective {report.objective:.6g})")
    else:
        logger.warning(
            f"Solution FAIL: families {report.failing_families}, "
            f"bounds {report.bound_violation:.3g}, integrality {report.integrality_violation:.3g}"
        )
    return report
