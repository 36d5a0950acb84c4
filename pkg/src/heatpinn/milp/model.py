"""Mixed-integer linear program container with dense compilation.

All variables carry finite bounds (bounded MILPs only); binaries live inside
[0, 1].  Linear expressions are name-keyed coefficient dicts so model
building reads like arithmetic.
"""

import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "Optimal"
FEASIBLE_BUDGET_EXHAUSTED = "FeasibleBudgetExhausted"
INFEASIBLE = "Infeasible"

RELATIONS = ("<=", "=", ">=")
_REL_CODE = {"<=": -1, "=": 0, ">=": 1}


class LinExpr:
    """Affine expression: sum of coef*var plus a constant."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const: float = 0.0):
        self.terms: dict[str, float] = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def term(name: str, coef: float = 1.0) -> "LinExpr":
        return LinExpr({name: float(coef)})

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def value(self, values: dict) -> float:
        return self.const + sum(c * values[n] for n, c in self.terms.items())

    def _add_scaled(self, other, factor: float) -> "LinExpr":
        out = self.copy()
        if isinstance(other, LinExpr):
            for n, c in other.terms.items():
                out.terms[n] = out.terms.get(n, 0.0) + factor * c
            out.const += factor * other.const
        elif isinstance(other, (int, float)):
            out.const += factor * other
        else:
            return NotImplemented
        return out

    def __add__(self, other):
        return self._add_scaled(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._add_scaled(other, -1.0)

    def __rsub__(self, other):
        return (-self)._add_scaled(other, 1.0)

    def __mul__(self, factor):
        if not isinstance(factor, (int, float)):
            return NotImplemented
        return LinExpr({n: c * factor for n, c in self.terms.items()}, self.const * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor):
        return self * (1.0 / factor)

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        parts = [f"{c:+g} {n}" for n, c in self.terms.items()]
        if self.const or not parts:
            parts.append(f"{self.const:+g}")
        return " ".join(parts)


def lin_sum(exprs) -> LinExpr:
    """Sum many expressions without quadratic dict-copy cost."""
    out = LinExpr()
    for e in exprs:
        if isinstance(e, LinExpr):
            for n, c in e.terms.items():
                out.terms[n] = out.terms.get(n, 0.0) + c
            out.const += e.const
        else:
            out.const += float(e)
    return out


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    is_binary: bool = False


@dataclass(frozen=True)
class Constraint:
    terms: dict
    relation: str
    rhs: float
    name: str


@dataclass
class _Compiled:
    """Dense arrays for the solver: A x (rel) rhs, lb <= x <= ub, min c x + c0."""

    names: list
    index: dict
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    A: np.ndarray
    rel: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    c0: float
    triples: list


class MilpModel:
    """Minimisation MILP over named, box-bounded variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: LinExpr = LinExpr()
        self.binary_triples: list[tuple[str, str, str]] = []
        self.feasibility_hint = None
        self._index: dict[str, int] = {}
        self._compiled: _Compiled | None = None

    # -- construction -----------------------------------------------------
    def add_var(self, name: str, lb: float, ub: float, binary: bool = False) -> LinExpr:
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"variable {name!r} needs finite bounds")
        if lb > ub:
            raise ValueError(f"variable {name!r} has lb > ub")
        if binary and (lb < 0.0 or ub > 1.0):
            raise ValueError(f"binary variable {name!r} must have bounds within [0, 1]")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, binary))
        self._compiled = None
        return LinExpr.term(name)

    def var(self, name: str) -> LinExpr:
        if name not in self._index:
            raise KeyError(name)
        return LinExpr.term(name)

    def add_constraint(self, expr: LinExpr, relation: str, rhs: float = 0.0,
                       name: str | None = None) -> None:
        if relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}")
        for n in expr.terms:
            if n not in self._index:
                raise KeyError(f"constraint references undeclared variable {n!r}")
        cname = name or f"c{len(self.constraints)}"
        self.constraints.append(
            Constraint(dict(expr.terms), relation, float(rhs) - expr.const, cname)
        )
        self._compiled = None

    def set_objective(self, expr: LinExpr) -> None:
        for n in expr.terms:
            if n not in self._index:
                raise KeyError(f"objective references undeclared variable {n!r}")
        self.objective = expr.copy()
        self._compiled = None

    def add_objective(self, expr: LinExpr) -> None:
        self.set_objective(self.objective + expr)

    def register_triple(self, b1: str, b2: str, b3: str) -> None:
        """Tag three binaries as a one-hot zone triple for ternary branching."""
        for n in (b1, b2, b3):
            i = self._index.get(n)
            if i is None or not self.variables[i].is_binary:
                raise ValueError(f"{n!r} is not a declared binary variable")
        self.binary_triples.append((b1, b2, b3))

    # -- queries -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def bounds_of(self, name: str) -> tuple[float, float]:
        v = self.variables[self._index[name]]
        return v.lb, v.ub

    def expr_interval(self, expr: LinExpr) -> tuple[float, float]:
        """Range of an affine expression over the variable boxes."""
        lo = hi = expr.const
        for n, c in expr.terms.items():
            v = self.variables[self._index[n]]
            a, b = c * v.lb, c * v.ub
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def compile(self) -> _Compiled:
        if self._compiled is not None:
            return self._compiled
        nv = len(self.variables)
        m = len(self.constraints)
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        binary = np.array([v.is_binary for v in self.variables], dtype=bool)
        A = np.zeros((m, nv))
        rel = np.zeros(m, dtype=np.int8)
        rhs = np.zeros(m)
        for i, con in enumerate(self.constraints):
            for n, c in con.terms.items():
                A[i, self._index[n]] += c
            rel[i] = _REL_CODE[con.relation]
            rhs[i] = con.rhs
        c = np.zeros(nv)
        for n, coef in self.objective.terms.items():
            c[self._index[n]] += coef
        triples = [
            tuple(self._index[n] for n in trip) for trip in self.binary_triples
        ]
        self._compiled = _Compiled(
            names=[v.name for v in self.variables],
            index=dict(self._index),
            lb=lb,
            ub=ub,
            binary=binary,
            A=A,
            rel=rel,
            rhs=rhs,
            c=c,
            c0=self.objective.const,
            triples=triples,
        )
        return self._compiled


@dataclass
class MilpSolution:
    """Outcome of a branch-and-bound solve."""

    status: str
    values: dict
    objective: float
    node_count: int
    wall_time: float
    best_bound: float = math.nan

    @property
    def gap(self) -> float:
        return self.objective - self.best_bound
