import json

import numpy as np
import pytest

from app.exceptions import ParseError
from app.models.milp import MilpProblem
from app.models.network import with_horizon
from app.models.schedule import GroupSchedule
from app.services import problem_io
from app.services.linearizer import linearizer
from app.services.milp_builder import milp_builder
from app.services.milp_solver import MipStatus, solve_mip
from app.services.simulator import simulator


@pytest.fixture
def toy():
    """min x0 + 2 x1 - x2 with one equality, one inequality and mixed bounds."""
    return MilpProblem.from_arrays(
        c=[1.0, 2.0, -1.0, 0.0],
        a_eq=[[1.0, 1.0, 0.0, 0.0]], b_eq=[3.0],
        a_ub=[[0.0, 1.0, 1.0, -2.5]], b_ub=[4.0],
        lb=[-np.inf, 0.0, 0.0, 1.5],
        ub=[10.0, 1.0, np.inf, 1.5],
        integer=[1],
    )


@pytest.fixture(scope="module")
def k1_problem(canonical_k1):
    sim = simulator.simulate_eps(canonical_k1, GroupSchedule.flat(canonical_k1))
    linearized = linearizer.linearize(canonical_k1, sim)
    return milp_builder.build(canonical_k1, linearized)


def _assert_same(a, b, rtol=0.0):
    assert a.n_columns == b.n_columns
    assert np.allclose(a.c, b.c, rtol=rtol, atol=0.0)
    assert np.allclose(a.a_eq.toarray(), b.a_eq.toarray(), rtol=rtol, atol=0.0)
    assert np.allclose(a.b_eq, b.b_eq, rtol=rtol, atol=0.0)
    assert np.allclose(a.a_ub.toarray(), b.a_ub.toarray(), rtol=rtol, atol=0.0)
    assert np.allclose(a.b_ub, b.b_ub, rtol=rtol, atol=0.0)
    assert np.allclose(a.lb, b.lb, rtol=rtol, atol=0.0)
    assert np.allclose(a.ub, b.ub, rtol=rtol, atol=0.0)
    assert sorted(a.integer.tolist()) == sorted(b.integer.tolist())


def test_json_round_trip_keeps_provenance(k1_problem, tmp_path):
    path = problem_io.save_problem_json(k1_problem, str(tmp_path / "problem.json"))
    loaded = problem_io.load_problem(path)
    _assert_same(k1_problem, loaded)
    assert loaded.layout == k1_problem.layout
    assert loaded.eq_tags == k1_problem.eq_tags
    assert loaded.ub_tags == k1_problem.ub_tags
    assert loaded.big_u == k1_problem.big_u
    assert loaded.meta["horizon"] == 1


def test_json_infinite_bounds_become_null(toy):
    data = problem_io.problem_to_dict(toy)
    assert data["lb"][0] is None
    assert data["ub"][2] is None
    assert data["columns"] == ["x0", "x1", "x2", "x3"]
    restored = problem_io.problem_from_dict(json.loads(json.dumps(data)))
    assert restored.layout is None
    assert np.isneginf(restored.lb[0])
    assert np.isposinf(restored.ub[2])


def test_json_rejects_foreign_documents(toy):
    with pytest.raises(ParseError):
        problem_io.problem_from_dict({"format": "something-else"})
    data = problem_io.problem_to_dict(toy)
    data["c"] = data["c"][:-1]
    with pytest.raises(ParseError):
        problem_io.problem_from_dict(data)
    data = problem_io.problem_to_dict(toy)
    data["eq"]["rhs"] = []
    with pytest.raises(ParseError):
        problem_io.problem_from_dict(data)


def test_mps_sections(toy):
    lines = problem_io.mps_lines(toy, name="TOY")
    assert lines[0].split() == ["NAME", "TOY"]
    assert lines[-1] == "ENDATA"
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS"):
        assert section in lines
    assert any("'INTORG'" in line for line in lines)
    assert any("'INTEND'" in line for line in lines)
    assert " MI BND  x0" in lines
    assert " FX BND  x3  1.5" in lines


def test_mps_round_trip_toy(toy, tmp_path):
    path = problem_io.write_mps(toy, str(tmp_path / "toy.mps"))
    loaded = problem_io.load_problem(path)
    _assert_same(toy, loaded)


def test_mps_round_trip_schedule_problem(k1_problem, tmp_path):
    path = problem_io.write_mps(k1_problem, str(tmp_path / "k1.mps"))
    loaded = problem_io.read_mps(path)
    _assert_same(k1_problem, loaded)
    # names follow the layout scheme, so the catalog comes back
    assert loaded.layout == k1_problem.layout


def test_mps_greater_rows_are_negated():
    text = "\n".join([
        "NAME TINY",
        "ROWS",
        " N  OBJ",
        " G  R1",
        "COLUMNS",
        "    a  OBJ  1  R1  2",
        "    b  R1  1",
        "RHS",
        "    RHS  R1  4",
        "BOUNDS",
        " BV BND  b",
        " UP BND  a  7",
        "ENDATA",
    ])
    problem = problem_io.parse_mps(text)
    assert problem.n_ub == 1
    assert problem.a_ub.toarray().tolist() == [[-2.0, -1.0]]
    assert problem.b_ub.tolist() == [-4.0]
    assert problem.integer.tolist() == [1]
    assert problem.ub.tolist() == [7.0, 1.0]
    assert problem.layout is None


@pytest.mark.parametrize("text", [
    "NAME X\nRANGES\n    RNG  R1  1\nENDATA\n",
    "NAME X\nFOO\nENDATA\n",
    "NAME X\nOBJSENSE\n    MAX\nENDATA\n",
    "NAME X\nROWS\n N  OBJ\nCOLUMNS\n    a  OBJ  one\nENDATA\n",
    "NAME X\nROWS\n N  OBJ\nCOLUMNS\n    a  R9  1\nENDATA\n",
    "NAME X\nROWS\n N  OBJ\nCOLUMNS\n    a  OBJ  1\nBOUNDS\n UP BND  a  big\nENDATA\n",
])
def test_mps_parse_errors(text):
    with pytest.raises(ParseError):
        problem_io.parse_mps(text)


def test_unknown_problem_suffix(tmp_path):
    with pytest.raises(ParseError):
        problem_io.load_problem(str(tmp_path / "problem.lp"))


def test_export_writes_mps_and_json(k1_problem, tmp_path):
    mps_path, json_path = problem_io.export_problem(k1_problem, str(tmp_path / "out" / "k1.mps"))
    assert json_path.endswith("k1.json")
    from_mps = problem_io.load_problem(mps_path)
    from_json = problem_io.load_problem(json_path)
    assert from_mps.n_columns == from_json.n_columns == 65


def test_solution_documents(toy, tmp_path):
    x = np.array([2.0, 1.0, 0.5, 1.5])
    data = problem_io.solution_to_dict(toy, x, status="optimal_within_gap")
    assert data["objective"] == pytest.approx(2.0 + 2.0 - 0.5)
    assert np.array_equal(problem_io.solution_from_dict(data, toy), x)
    assert np.array_equal(problem_io.solution_from_dict(data["values"], toy), x)

    path = tmp_path / "solution.json"
    path.write_text(json.dumps(data))
    assert np.array_equal(problem_io.load_solution(str(path), toy), x)


def test_solution_names_must_match(toy):
    values = {"x0": 1.0, "x1": 0.0, "x2": 0.0}
    with pytest.raises(ParseError):
        problem_io.solution_from_dict(values, toy)
    values["x3"] = 1.5
    values["extra"] = 0.0
    with pytest.raises(ParseError):
        problem_io.solution_from_dict(values, toy)
    with pytest.raises(ParseError):
        problem_io.solution_from_dict([1.0, 2.0], toy)


@pytest.mark.slow
def test_reimported_problem_solves_to_the_same_objective(canonical, tmp_path):
    network = with_horizon(canonical, 6)
    sim = simulator.simulate_eps(network, GroupSchedule.flat(network))
    problem = milp_builder.build(network, linearizer.linearize(network, sim))
    mps_path, json_path = problem_io.export_problem(problem, str(tmp_path / "k6.mps"))

    direct = solve_mip(problem, gap=0.05, time_limit=600.0, backend="highs")
    assert direct.status == MipStatus.OPTIMAL_WITHIN_GAP
    for path in (mps_path, json_path):
        again = solve_mip(problem_io.load_problem(path), gap=0.05, time_limit=600.0,
                          backend="highs")
        assert again.objective == pytest.approx(direct.objective, rel=1e-9)
