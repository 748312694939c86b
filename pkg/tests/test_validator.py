from dataclasses import replace

import numpy as np
import pytest

from app.models.milp import MilpProblem, RowTag
from app.services.validator import validate_solution


@pytest.fixture
def tagged():
    """x0 + x1 = 2 (balance), 10 x1 - x2 <= 0 (gate), x1 binary, x2 in [0, 5]."""
    problem = MilpProblem.from_arrays(
        c=[1.0, 3.0, 0.5],
        a_eq=[[1.0, 1.0, 0.0]], b_eq=[2.0],
        a_ub=[[0.0, 10.0, -1.0]], b_ub=[0.0],
        lb=[0.0, 0.0, 0.0], ub=[np.inf, 1.0, 5.0],
        integer=[1],
    )
    return replace(problem, eq_tags=(RowTag("balance", "J", 1),),
                   ub_tags=(RowTag("gate", "G", 1),))


def test_feasible_point_passes(tagged):
    report = validate_solution(tagged, [2.0, 0.0, 0.0])
    assert report.passed
    assert report.verdict == "PASS"
    assert report.families == {"balance": 0.0, "gate": 0.0}
    assert report.objective == pytest.approx(2.0)


def test_residuals_are_row_normalized(tagged):
    # 10 * 1 - 5 = 5 over a row whose largest coefficient is 10
    report = validate_solution(tagged, [1.0, 1.0, 5.0])
    assert report.families["gate"] == pytest.approx(0.5)
    assert report.failing_families == ["gate"]
    assert report.worst_family == "gate"
    assert not report.passed


def test_bound_and_integrality_violations(tagged):
    report = validate_solution(tagged, [1.5, 0.5, 6.0])
    assert report.families["balance"] == 0.0
    assert report.bound_violation == pytest.approx(1.0)
    assert report.integrality_violation == pytest.approx(0.5)
    assert report.fractional_columns == ["x1"]
    assert report.verdict == "FAIL"


def test_untagged_rows_fall_back_to_sense():
    problem = MilpProblem.from_arrays(c=[0.0], a_eq=[[1.0]], b_eq=[1.0],
                                      a_ub=[[1.0]], b_ub=[0.5])
    report = validate_solution(problem, [1.0])
    assert report.families == {"equality": 0.0, "inequality": pytest.approx(0.5)}


def test_report_frame_and_dict(tagged):
    report = validate_solution(tagged, [1.0, 1.0, 5.0])
    frame = report.to_frame()
    assert frame["check"].tolist() == ["balance", "gate", "bounds", "integrality"]
    assert frame["ok"].tolist() == [True, False, True, True]
    data = report.to_dict()
    assert data["verdict"] == "FAIL"
    assert data["failing_families"] == ["gate"]


def test_solution_length_must_match(tagged):
    with pytest.raises(ValueError):
        validate_solution(tagged, [1.0, 1.0])
