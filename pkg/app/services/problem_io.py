"""
Problem and solution files: the JSON problem format with row provenance,
free-format MPS and solution JSON.
"""
import json
import logging
import math
import os
from dataclasses import asdict

import numpy as np
import scipy.sparse as sp

from app.exceptions import ParseError
from app.models.milp import BigUConfig, MilpProblem, RowTag, VariableLayout
from app.utils.helpers import atomic_write_text, write_json

logger = logging.getLogger(__name__)

PROBLEM_FORMAT = "pumpsched-milp"
PROBLEM_VERSION = "1.0"

OBJECTIVE_ROW = "COST"
MPS_SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA")


def _num(value):
    # shortest text that reads back as the same double
    return repr(float(value))


def _bound_out(value):
    return None if math.isinf(value) else float(value)


def _bound_in(value, default):
    return default if value is None else float(value)


def _layout_from_names(names):
    """Rebuild the column catalog when every name follows the layout scheme."""
    try:
        return VariableLayout.from_names(names)
    except ValueError:
        return None


# JSON problem format

def _block_to_dict(a, b, tags):
    coo = a.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return {
        "shape": list(a.shape),
        "rows": coo.row[order].tolist(),
        "cols": coo.col[order].tolist(),
        "vals": coo.data[order].tolist(),
        "rhs": np.asarray(b, dtype=float).tolist(),
        "tags": [[t.family, t.element, t.k] for t in tags],
    }


def _block_from_dict(data, n_columns):
    n_rows = int(data["shape"][0])
    a = sp.coo_matrix(
        (np.asarray(data["vals"], dtype=float),
         (np.asarray(data["rows"], dtype=int), np.asarray(data["cols"], dtype=int))),
        shape=(n_rows, n_columns),
    ).tocsr()
    rhs = np.asarray(data["rhs"], dtype=float)
    if len(rhs) != n_rows:
        raise ParseError(f"row block declares {n_rows} rows but carries {len(rhs)} right-hand sides")
    tags = tuple(RowTag(str(f), str(e), int(k)) for f, e, k in data.get("tags", []))
    return a, rhs, tags


def problem_to_dict(problem):
    """Serialize a MilpProblem with column names and row provenance."""
    return {
        "format": PROBLEM_FORMAT,
        "version": PROBLEM_VERSION,
        "meta": dict(problem.meta),
        "columns": problem.column_names,
        "integer": [int(i) for i in problem.integer],
        "c": problem.c.tolist(),
        "lb": [_bound_out(v) for v in problem.lb],
        "ub": [_bound_out(v) for v in problem.ub],
        "big_u": asdict(problem.big_u) if problem.big_u is not None else None,
        "eq": _block_to_dict(problem.a_eq, problem.b_eq, problem.eq_tags),
        "ineq": _block_to_dict(problem.a_ub, problem.b_ub, problem.ub_tags),
    }


def problem_from_dict(data):
    """Inverse of :func:`problem_to_dict`.

    Raises:
        ParseError: The document is not a problem file or is inconsistent.
    """
    if not isinstance(data, dict) or data.get("format") != PROBLEM_FORMAT:
        raise ParseError(f"not a {PROBLEM_FORMAT} document")

    try:
        names = [str(n) for n in data["columns"]]
        n = len(names)
        c = np.asarray(data["c"], dtype=float)
        lb = np.array([_bound_in(v, -np.inf) for v in data["lb"]])
        ub = np.array([_bound_in(v, np.inf) for v in data["ub"]])
        if not (len(c) == len(lb) == len(ub) == n):
            raise ParseError("column vectors disagree in length")
        a_eq, b_eq, eq_tags = _block_from_dict(data["eq"], n)
        a_ub, b_ub, ub_tags = _block_from_dict(data["ineq"], n)
        big_u = BigUConfig(**data["big_u"]) if data.get("big_u") else None
        integer = np.asarray(data["integer"], dtype=int)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed problem document: {e}") from e

    return MilpProblem(
        c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub, lb=lb, ub=ub,
        integer=integer, layout=_layout_from_names(names),
        eq_tags=eq_tags, ub_tags=ub_tags, big_u=big_u, meta=dict(data.get("meta", {})),
    )


def save_problem_json(problem, path):
    write_json(path, problem_to_dict(problem))
    logger.info(f"Wrote problem JSON to {path}")
    return path


def load_problem_json(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return problem_from_dict(data)


# MPS

def mps_lines(problem, name=None):
    """Free-format MPS lines of ``problem``; numbers read back bit for bit."""
    name = name or str(problem.meta.get("network", "PUMPSCHED"))
    columns = problem.column_names
    eq_rows = [f"E{i}" for i in range(problem.n_eq)]
    ub_rows = [f"L{i}" for i in range(problem.n_ub)]

    lines = [f"NAME          {name}", "OBJSENSE", "    MIN", "ROWS", f" N  {OBJECTIVE_ROW}"]
    lines.extend(f" E  {r}" for r in eq_rows)
    lines.extend(f" L  {r}" for r in ub_rows)

    lines.append("COLUMNS")
    a_eq = problem.a_eq.tocsc().sorted_indices()
    a_ub = problem.a_ub.tocsc().sorted_indices()
    is_integer = problem.integrality.astype(bool)
    in_marker = False
    marker = 0
    for j, column in enumerate(columns):
        if is_integer[j] != in_marker:
            kind = "'INTORG'" if is_integer[j] else "'INTEND'"
            lines.append(f"    MARKER{marker:04d}  'MARKER'  {kind}")
            marker += 1
            in_marker = bool(is_integer[j])

        entries = []
        if problem.c[j] != 0.0:
            entries.append((OBJECTIVE_ROW, problem.c[j]))
        for matrix, names in ((a_eq, eq_rows), (a_ub, ub_rows)):
            for ptr in range(matrix.indptr[j], matrix.indptr[j + 1]):
                entries.append((names[matrix.indices[ptr]], matrix.data[ptr]))
        if not entries:
            entries.append((OBJECTIVE_ROW, 0.0))
        lines.extend(f"    {column}  {row}  {_num(value)}" for row, value in entries)
    if in_marker:
        lines.append(f"    MARKER{marker:04d}  'MARKER'  'INTEND'")

    lines.append("RHS")
    for names, rhs in ((eq_rows, problem.b_eq), (ub_rows, problem.b_ub)):
        lines.extend(f"    RHS  {row}  {_num(value)}" for row, value in zip(names, rhs) if value != 0.0)

    lines.append("BOUNDS")
    for column, lo, hi in zip(columns, problem.lb, problem.ub):
        if lo == hi:
            lines.append(f" FX BND  {column}  {_num(lo)}")
            continue
        if math.isinf(lo):
            lines.append(f" MI BND  {column}")
        elif lo != 0.0 or hi < 0.0:
            lines.append(f" LO BND  {column}  {_num(lo)}")
        if not math.isinf(hi):
            lines.append(f" UP BND  {column}  {_num(hi)}")
    lines.append("ENDATA")
    return lines


def write_mps(problem, path, name=None):
    atomic_write_text(path, "\n".join(mps_lines(problem, name)) + "\n")
    logger.info(f"Wrote MPS file to {path} ({problem.n_columns} columns, "
                f"{problem.n_eq + problem.n_ub} rows)")
    return path


def _pairs(tokens, lineno):
    if len(tokens) % 2:
        raise ParseError(f"line {lineno}: expected name/value pairs")
    try:
        return [(tokens[i], float(tokens[i + 1])) for i in range(0, len(tokens), 2)]
    except ValueError as e:
        raise ParseError(f"line {lineno}: {e}") from e


def parse_mps(text):
    """Parse free-format MPS text into a MilpProblem.

    G rows are negated into <= rows. Columns whose names follow the layout
    scheme get their VariableLayout back; row provenance is not part of MPS.

    Raises:
        ParseError: Unknown sections, malformed lines or unsupported features.
    """
    section = None
    objective = None
    row_kind = {}
    row_order = []
    columns = {}
    column_order = []
    integer = set()
    in_marker = False
    coeffs = []
    rhs = {}
    bounds = {}

    def column_index(col):
        if col not in columns:
            columns[col] = len(column_order)
            column_order.append(col)
            if in_marker:
                integer.add(columns[col])
        return columns[col]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        tokens = line.split()

        if not raw[0].isspace():
            head = tokens[0].upper()
            if head not in MPS_SECTIONS:
                raise ParseError(f"line {lineno}: unknown section {tokens[0]}")
            if head == "ENDATA":
                break
            if head == "RANGES":
                raise ParseError(f"line {lineno}: RANGES section is not supported")
            section = head
            if head == "OBJSENSE" and len(tokens) > 1 and tokens[1].upper() != "MIN":
                raise ParseError(f"line {lineno}: only minimization problems are supported")
            continue

        if section == "OBJSENSE":
            if tokens[0].upper() not in ("MIN", "MINIMIZE"):
                raise ParseError(f"line {lineno}: only minimization problems are supported")
        elif section == "ROWS":
            kind, row = tokens[0].upper(), tokens[1]
            if kind == "N":
                objective = objective or row
            elif kind in ("E", "L", "G"):
                row_kind[row] = kind
                row_order.append(row)
            else:
                raise ParseError(f"line {lineno}: unknown row type {tokens[0]}")
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                in_marker = tokens[2] == "'INTORG'"
                continue
            j = column_index(tokens[0])
            for row, value in _pairs(tokens[1:], lineno):
                if row == objective:
                    coeffs.append((None, j, value))
                elif row in row_kind:
                    coeffs.append((row, j, value))
                else:
                    raise ParseError(f"line {lineno}: unknown row {row}")
        elif section == "RHS":
            body = tokens[1:] if len(tokens) % 2 else tokens
            for row, value in _pairs(body, lineno):
                if row != objective:
                    rhs[row] = value
        elif section == "BOUNDS":
            kind = tokens[0].upper()
            if len(tokens) < 3:
                raise ParseError(f"line {lineno}: malformed bound")
            j = column_index(tokens[2])
            try:
                value = float(tokens[3]) if len(tokens) > 3 else None
            except ValueError as e:
                raise ParseError(f"line {lineno}: {e}") from e
            lo, hi = bounds.get(j, (None, None))
            if kind == "LO":
                lo = value
            elif kind == "UP":
                hi = value
            elif kind == "FX":
                lo = hi = value
            elif kind == "FR":
                lo, hi = -np.inf, np.inf
            elif kind == "MI":
                lo = -np.inf
            elif kind == "PL":
                hi = np.inf
            elif kind == "BV":
                lo, hi = 0.0, 1.0
                integer.add(j)
            elif kind in ("LI", "UI"):
                integer.add(j)
                if kind == "LI":
                    lo = value
                else:
                    hi = value
            else:
                raise ParseError(f"line {lineno}: unknown bound type {tokens[0]}")
            bounds[j] = (lo, hi)
        else:
            raise ParseError(f"line {lineno}: data outside a section")

    n = len(column_order)
    c = np.zeros(n)
    eq_index = {}
    ub_index = {}
    for row in row_order:
        target = eq_index if row_kind[row] == "E" else ub_index
        target[row] = len(target)

    eq_entries, ub_entries = ([], [], []), ([], [], [])
    for row, j, value in coeffs:
        if row is None:
            c[j] += value
        elif row in eq_index:
            eq_entries[0].append(eq_index[row])
            eq_entries[1].append(j)
            eq_entries[2].append(value)
        else:
            sign = -1.0 if row_kind[row] == "G" else 1.0
            ub_entries[0].append(ub_index[row])
            ub_entries[1].append(j)
            ub_entries[2].append(sign * value)

    b_eq = np.array([rhs.get(row, 0.0) for row in eq_index])
    b_ub = np.array([(-1.0 if row_kind[row] == "G" else 1.0) * rhs.get(row, 0.0)
                     for row in ub_index])

    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for j, (lo, hi) in bounds.items():
        if lo is not None:
            lb[j] = lo
        if hi is not None:
            ub[j] = hi

    def matrix(entries, n_rows):
        rows, cols, vals = entries
        return sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n)).tocsr()

    return MilpProblem(
        c=c,
        a_eq=matrix(eq_entries, len(eq_index)), b_eq=b_eq,
        a_ub=matrix(ub_entries, len(ub_index)), b_ub=b_ub,
        lb=lb, ub=ub,
        integer=np.array(sorted(integer), dtype=int),
        layout=_layout_from_names(column_order),
    )


def read_mps(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    problem = parse_mps(text)
    logger.info(f"Read MPS file {path}: {problem.n_columns} columns, "
                f"{problem.n_eq} equality rows, {problem.n_ub} inequality rows")
    return problem


def load_problem(path):
    """Load a problem from ``.json`` or ``.mps``."""
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".json":
        return load_problem_json(path)
    if suffix == ".mps":
        return read_mps(path)
    raise ParseError(f"unknown problem file type '{suffix}' for {path}")


def export_problem(problem, mps_path):
    """Write the MPS file and the JSON problem next to it."""
    json_path = os.path.splitext(str(mps_path))[0] + ".json"
    write_mps(problem, mps_path)
    save_problem_json(problem, json_path)
    return mps_path, json_path


# Solutions

def solution_to_dict(problem, x, status=None, objective=None, gap=None, nodes=None,
                     wall_time=None):
    x = np.asarray(x, dtype=float)
    return {
        "status": status,
        "objective": objective if objective is not None else problem.objective(x),
        "gap": gap,
        "nodes": nodes,
        "time": wall_time,
        "values": dict(zip(problem.column_names, x.tolist())),
    }


def write_solution(path, problem, result):
    """Write a solver result as solution JSON."""
    status = getattr(result.status, "value", result.status)
    return write_json(path, solution_to_dict(
        problem, result.x, status=status, objective=result.objective, gap=result.gap,
        nodes=result.nodes, wall_time=result.wall_time,
    ))


def solution_from_dict(data, problem):
    """Column vector of ``problem`` from a solution document.

    The document is either ``{"values": {name: value}, ...}`` or a bare
    name-to-value mapping.
    """
    if not isinstance(data, dict):
        raise ParseError("solution document must be an object")
    values = data.get("values", data)
    if not isinstance(values, dict):
        raise ParseError("solution values must map column names to numbers")

    names = problem.column_names
    missing = [n for n in names if n not in values]
    if missing:
        raise ParseError(f"solution lacks {len(missing)} columns, first: {missing[0]}")
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise ParseError(f"solution names {len(unknown)} unknown columns, first: {unknown[0]}")
    try:
        return np.array([float(values[n]) for n in names])
    except (TypeError, ValueError) as e:
        raise ParseError(f"non-numeric solution value: {e}") from e


def load_solution(path, problem):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return solution_from_dict(data, problem)
