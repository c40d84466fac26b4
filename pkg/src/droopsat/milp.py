"""Solver-independent mixed-integer linear program representation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DimensionError, InvalidBoundsError

LE, GE, EQ = "L", "G", "E"


class Lin:
    """Sparse affine expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "Lin":
        return cls({index: coef})

    def copy(self) -> "Lin":
        return Lin(self.terms, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, Lin):
            for k, v in other.terms.items():
                out.terms[k] = out.terms.get(k, 0.0) + v
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Lin({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Lin) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        s = float(scalar)
        return Lin({k: v * s for k, v in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def bounds(self, lb, ub) -> tuple[float, float]:
        """Interval of the expression over the variable box."""
        lo = hi = self.const
        for k, v in self.terms.items():
            if v >= 0:
                lo += v * lb[k]
                hi += v * ub[k]
            else:
                lo += v * ub[k]
                hi += v * lb[k]
        return lo, hi


@dataclass(frozen=True)
class MilpInstance:
    """``min c @ x + offset`` s.t. ``A x (<=|>=|==) rhs``, ``lb <= x <= ub``."""

    names: tuple
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    c: np.ndarray
    A: sparse.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: tuple = ()
    annotations: dict = field(default_factory=dict)
    objective_offset: float = 0.0
    # branching priority per variable; higher classes are branched on first
    priority: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.names)
        prio = np.zeros(n, int) if self.priority is None else np.asarray(self.priority, int)
        if prio.shape != (n,):
            raise DimensionError("priority must have one entry per variable")
        object.__setattr__(self, "priority", prio)
        for arr in (self.lb, self.ub, self.binary, self.c):
            if arr.shape != (n,):
                raise DimensionError("variable arrays must all have one entry per variable")
        if self.A.shape[1] != n or self.A.shape[0] != self.rhs.shape[0] != self.sense.shape[0]:
            raise DimensionError("constraint matrix shape mismatch")
        if np.any(self.lb > self.ub):
            raise InvalidBoundsError("variable lower bound above upper bound")
        if np.any(self.lb[self.binary] < 0) or np.any(self.ub[self.binary] > 1):
            raise InvalidBoundsError("binary variables must lie in [0, 1]")

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    def index(self, name: str) -> int:
        return self._index_map()[name]

    def _index_map(self):
        cache = self.__dict__.get("_idx")
        if cache is None:
            cache = {n: i for i, n in enumerate(self.names)}
            object.__setattr__(self, "_idx", cache)
        return cache

    def objective(self, x) -> float:
        return float(self.c @ x + self.objective_offset)

    def violation(self, x) -> float:
        """Largest constraint or bound violation of point ``x``."""
        x = np.asarray(x, float)
        ax = self.A @ x
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.sense == LE, self.sense == GE, self.sense == EQ
        viol[le] = ax[le] - self.rhs[le]
        viol[ge] = self.rhs[ge] - ax[ge]
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        worst = max(viol.max(initial=0.0), (self.lb - x).max(initial=0.0), (x - self.ub).max(initial=0.0))
        return float(worst)

    def with_bounds(self, lb=None, ub=None) -> "MilpInstance":
        return MilpInstance(self.names, self.lb if lb is None else np.asarray(lb, float),
                            self.ub if ub is None else np.asarray(ub, float), self.binary,
                            self.c, self.A, self.sense, self.rhs, self.row_names,
                            self.annotations, self.objective_offset, self.priority)


@dataclass
class MilpSolution:
    status: str  # "optimal" | "infeasible" | "gap_limit"
    objective: float = float("nan")
    x: np.ndarray | None = None
    bound: float = float("nan")
    nodes: int = 0
    backend: str = ""
    node_log: list = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


class MilpBuilder:
    def __init__(self):
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._bin: list[bool] = []
        self._prio: list[int] = []
        self._roles: dict[int, str] = {}
        self._rows: list[dict] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._obj = Lin()

    @property
    def n_vars(self) -> int:
        return len(self._names)

    def add_var(self, name: str, lb: float, ub: float, binary: bool = False,
                role: str | None = None, priority: int = 0) -> Lin:
        if lb > ub:
            raise InvalidBoundsError(f"variable {name}: lb {lb} > ub {ub}")
        idx = len(self._names)
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._bin.append(bool(binary))
        self._prio.append(int(priority))
        self._roles[idx] = role or name
        return Lin.var(idx)

    def add_binary(self, name: str, role: str | None = None, priority: int = 0) -> Lin:
        return self.add_var(name, 0.0, 1.0, binary=True, role=role, priority=priority)

    def bound(self, var: Lin, lb=None, ub=None) -> None:
        (idx,) = var.terms
        if lb is not None:
            self._lb[idx] = max(self._lb[idx], float(lb))
        if ub is not None:
            self._ub[idx] = min(self._ub[idx], float(ub))
        if self._lb[idx] > self._ub[idx]:
            raise InvalidBoundsError(f"variable {self._names[idx]} has empty domain")

    def box(self, expr: Lin) -> tuple[float, float]:
        return expr.bounds(self._lb, self._ub)

    def add(self, lhs: Lin, sense: str, rhs=0.0, name: str = "") -> None:
        expr = lhs - rhs
        terms = {k: v for k, v in expr.terms.items() if v != 0.0}
        self._rows.append(terms)
        self._sense.append(sense)
        self._rhs.append(-expr.const)
        self._row_names.append(name or f"c{len(self._rows) - 1}")

    def le(self, lhs, rhs, name=""):
        self.add(_as_lin(lhs), LE, rhs, name)

    def ge(self, lhs, rhs, name=""):
        self.add(_as_lin(lhs), GE, rhs, name)

    def eq(self, lhs, rhs, name=""):
        self.add(_as_lin(lhs), EQ, rhs, name)

    def minimize(self, expr: Lin) -> None:
        self._obj = expr.copy()

    def build(self) -> MilpInstance:
        n = len(self._names)
        indptr, indices, data = [0], [], []
        for row in self._rows:
            for k in sorted(row):
                indices.append(k)
                data.append(row[k])
            indptr.append(len(indices))
        A = sparse.csr_matrix((np.array(data, float), np.array(indices, dtype=np.int64),
                               np.array(indptr, dtype=np.int64)), shape=(len(self._rows), n))
        c = np.zeros(n)
        for k, v in self._obj.terms.items():
            c[k] += v
        return MilpInstance(
            names=tuple(self._names),
            lb=np.array(self._lb, float),
            ub=np.array(self._ub, float),
            binary=np.array(self._bin, bool),
            c=c,
            A=A,
            sense=np.array(self._sense, dtype="<U1"),
            rhs=np.array(self._rhs, float),
            row_names=tuple(self._row_names),
            annotations=dict(self._roles),
            objective_offset=self._obj.const,
            priority=np.array(self._prio, int),
        )


def _as_lin(v) -> Lin:
    return v if isinstance(v, Lin) else Lin(const=v)
