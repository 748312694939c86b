"""
MILP data model: column catalog, row provenance and the assembled problem.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp


class VariableKind(str, Enum):
    H_C = "h_c"
    H_T = "h_t"
    Q_PIPE = "q_pipe"
    Q_PUMP = "q_pump"
    S_PUMP = "s_pump"
    P_PUMP = "P_pump"
    N_PUMP = "n_pump"
    WW = "ww"
    BB = "BB"
    QQ = "qq"
    SS = "ss"
    AA = "AA"


# Column order of the layout
KIND_ORDER = tuple(VariableKind)
INTEGER_KINDS = frozenset({VariableKind.N_PUMP, VariableKind.BB, VariableKind.AA})


class VariableKey(NamedTuple):
    kind: VariableKind
    element: str
    segment: int
    k: int

    @property
    def name(self):
        return f"{self.kind.value}:{self.element}:{self.segment}:{self.k}"

    @classmethod
    def from_name(cls, name):
        kind, element, segment, k = name.split(":")
        return cls(VariableKind(kind), element, int(segment), int(k))


class VariableLayout:
    """Bijective catalog (kind, element, segment, k) <-> column index.

    ``segment`` is 0 for unsegmented kinds and 1-based otherwise; ``k`` is
    the 1-based time step.
    """

    def __init__(self, keys):
        self.keys: List[VariableKey] = list(keys)
        self._index: Dict[VariableKey, int] = {key: i for i, key in enumerate(self.keys)}
        if len(self._index) != len(self.keys):
            raise ValueError("duplicate variable keys in layout")

    def __len__(self):
        return len(self.keys)

    @property
    def size(self):
        return len(self.keys)

    def index(self, kind, element, segment, k):
        return self._index[VariableKey(VariableKind(kind), element, segment, k)]

    def key(self, column) -> VariableKey:
        return self.keys[column]

    def columns(self, kind) -> np.ndarray:
        kind = VariableKind(kind)
        return np.array([i for i, key in enumerate(self.keys) if key.kind == kind], dtype=int)

    @property
    def integer_columns(self) -> np.ndarray:
        return np.array([i for i, key in enumerate(self.keys) if key.kind in INTEGER_KINDS],
                        dtype=int)

    @property
    def names(self):
        return [key.name for key in self.keys]

    @classmethod
    def from_names(cls, names):
        return cls(VariableKey.from_name(n) for n in names)

    def __eq__(self, other):
        return isinstance(other, VariableLayout) and self.keys == other.keys


class RowTag(NamedTuple):
    family: str
    element: str
    k: int


@dataclass(frozen=True)
class BigUConfig:
    u_power: float
    u_pump: float
    u_dom: float


@dataclass(frozen=True, eq=False)
class MilpProblem:
    """min c x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub,  x_i integer for i in integer."""
    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    layout: Optional[VariableLayout] = None
    eq_tags: Tuple[RowTag, ...] = ()
    ub_tags: Tuple[RowTag, ...] = ()
    big_u: Optional[BigUConfig] = None
    meta: Dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, lb=None, ub=None,
                    integer=()):
        """Build a problem from dense or sparse arrays; missing blocks are empty."""
        c = np.asarray(c, dtype=float)
        n = len(c)

        def block(a, b):
            if a is None:
                return sp.csr_matrix((0, n)), np.zeros(0)
            return sp.csr_matrix(np.atleast_2d(a) if not sp.issparse(a) else a), \
                np.asarray(b, dtype=float)

        a_eq, b_eq = block(a_eq, b_eq)
        a_ub, b_ub = block(a_ub, b_ub)
        return cls(
            c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
            lb=np.zeros(n) if lb is None else np.asarray(lb, dtype=float),
            ub=np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float),
            integer=np.asarray(integer, dtype=int),
        )

    @property
    def n_columns(self):
        return len(self.c)

    @property
    def n_eq(self):
        return self.a_eq.shape[0]

    @property
    def n_ub(self):
        return self.a_ub.shape[0]

    @property
    def column_names(self):
        if self.layout is not None:
            return self.layout.names
        return [f"x{i}" for i in range(self.n_columns)]

    @property
    def integrality(self) -> np.ndarray:
        """Per-column 0/1 flag in the form scipy.optimize.milp expects."""
        flags = np.zeros(self.n_columns, dtype=int)
        flags[self.integer] = 1
        return flags

    def objective(self, x):
        return float(self.c @ np.asarray(x, dtype=float))

    def family_counts(self):
        """Row counts per (sense, family)."""
        counts = {}
        for sense, tags in (("eq", self.eq_tags), ("ub", self.ub_tags)):
            for tag in tags:
                counts[(sense, tag.family)] = counts.get((sense, tag.family), 0) + 1
        return counts
