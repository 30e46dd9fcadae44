"""Solver-agnostic convex program container.

A ConicProgram holds real scalar variables, a linear objective
(maximized), linear equality/inequality rows, and (rotated) second-order
cone constraints whose entries are sparse affine expressions of the
variables.  It can export itself to the standard conic form

    minimize c'x  s.t.  Ax = b,  Gx + s = h,  s in R+^l x Q_1 x ... x Q_N

consumed by the interior-point solver, and to a documented text format
for external cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_SQ2 = math.sqrt(2.0)


class Expr:
    """Sparse affine expression: sum coeffs[i] * x_i + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, float] | None = None, const: float = 0.0):
        self.coeffs = coeffs or {}
        self.const = float(const)

    @staticmethod
    def var(idx: int, coef: float = 1.0) -> "Expr":
        return Expr({int(idx): float(coef)})

    @staticmethod
    def const_(value: float) -> "Expr":
        return Expr({}, value)

    def __add__(self, other) -> "Expr":
        if not isinstance(other, Expr):
            return Expr(dict(self.coeffs), self.const + other)
        coeffs = dict(self.coeffs)
        for i, c in other.coeffs.items():
            coeffs[i] = coeffs.get(i, 0.0) + c
        return Expr(coeffs, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr({i: -c for i, c in self.coeffs.items()}, -self.const)

    def __sub__(self, other) -> "Expr":
        return self + (-other if isinstance(other, Expr) else -float(other))

    def __rsub__(self, other) -> "Expr":
        return (-self) + other

    def __mul__(self, scalar: float) -> "Expr":
        s = float(scalar)
        return Expr({i: c * s for i, c in self.coeffs.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.coeffs.items())

    def is_finite(self) -> bool:
        return math.isfinite(self.const) and all(
            math.isfinite(c) for c in self.coeffs.values())


@dataclass(frozen=True)
class VarInfo:
    indices: np.ndarray
    role: str            # "decision" or "aux"
    census_scalars: int   # size in the complexity-count convention


@dataclass
class ConicData:
    """Standard-form export: min c'x, Ax=b, Gx+s=h, s in R+^l x prod Q_i."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    dims_l: int
    dims_q: list[int]
    obj_offset: float    # maximize obj = -c'x + obj_offset


class ConicProgram:
    def __init__(self):
        self.n_vars = 0
        self.var_map: dict[str, VarInfo] = {}
        self.objective = Expr()
        self.eq_constraints: list[Expr] = []      # expr == 0
        self.ineq_constraints: list[Expr] = []    # expr >= 0
        self.soc_constraints: list[list[Expr]] = []     # [head, body...]
        self.rotated_soc_constraints: list[list[Expr]] = []  # [u, v, body...]

    # -- construction ------------------------------------------------

    def add_vars(self, name: str, n: int, role: str = "decision",
                 census_scalars: int | None = None) -> np.ndarray:
        if name in self.var_map:
            raise ValueError(f"variable {name!r} registered twice")
        idx = np.arange(self.n_vars, self.n_vars + n)
        self.n_vars += n
        self.var_map[name] = VarInfo(
            indices=idx, role=role,
            census_scalars=n if census_scalars is None else census_scalars)
        return idx

    def set_objective(self, expr: Expr):
        self.objective = expr

    def add_eq(self, lhs: Expr, rhs: Expr | float = 0.0):
        self.eq_constraints.append(lhs - rhs)

    def add_ge(self, lhs: Expr | float, rhs: Expr | float = 0.0):
        """lhs >= rhs."""
        e = (lhs - rhs) if isinstance(lhs, Expr) else (-(rhs - lhs))
        self.ineq_constraints.append(e)

    def add_le(self, lhs: Expr | float, rhs: Expr | float = 0.0):
        self.add_ge(rhs, lhs)

    def add_soc(self, head: Expr, body: list[Expr]):
        """||body|| <= head."""
        if not body:
            raise ValueError("empty cone body")
        self.soc_constraints.append([head] + list(body))

    def add_rsoc(self, u: Expr, v: Expr, body: list[Expr]):
        """2*u*v >= ||body||^2 with u, v >= 0."""
        if not body:
            raise ValueError("empty cone body")
        self.rotated_soc_constraints.append([u, v] + list(body))

    def add_quad_le(self, body: list[Expr], bound: Expr):
        """||body||^2 <= bound, encoded as a rotated cone with v = 1/2."""
        self.add_rsoc(bound, Expr.const_(0.5), body)

    # -- introspection -----------------------------------------------

    def indices(self, name: str) -> np.ndarray:
        return self.var_map[name].indices

    def census(self) -> dict:
        """Counts in the complexity-analysis convention."""
        decision = sum(v.census_scalars for v in self.var_map.values()
                       if v.role == "decision")
        aux = sum(v.census_scalars for v in self.var_map.values()
                  if v.role == "aux")
        constraints = (len(self.eq_constraints) + len(self.ineq_constraints)
                       + len(self.soc_constraints)
                       + len(self.rotated_soc_constraints))
        return {"decision_vars": decision, "aux_vars": aux,
                "real_vars": self.n_vars, "constraints": constraints}

    def validate(self):
        exprs = ([self.objective] + self.eq_constraints + self.ineq_constraints
                 + [e for cone in self.soc_constraints for e in cone]
                 + [e for cone in self.rotated_soc_constraints for e in cone])
        for e in exprs:
            if not e.is_finite():
                raise ValueError("non-finite coefficient in program")
            for i in e.coeffs:
                if not 0 <= i < self.n_vars:
                    raise ValueError(f"variable index {i} out of range")
        for cone in self.soc_constraints:
            head_vars = set(cone[0].coeffs)
            body_vars = set().union(*(set(e.coeffs) for e in cone[1:]))
            if len(cone[0].coeffs) == 1 and head_vars <= body_vars:
                raise ValueError("SOC head variable appears in cone body")

    # -- export ------------------------------------------------------

    def conic_data(self) -> ConicData:
        self.validate()
        n = self.n_vars

        def rows_to_csr(exprs: list[Expr]) -> tuple[sp.csr_matrix, np.ndarray]:
            data, ri, ci, rhs = [], [], [], []
            for r, e in enumerate(exprs):
                rhs.append(e.const)
                for i, c in e.coeffs.items():
                    ri.append(r)
                    ci.append(i)
                    data.append(c)
            mat = sp.csr_matrix((data, (ri, ci)), shape=(len(exprs), n))
            return mat, np.array(rhs)

        # equalities: expr == 0  ->  (coeffs) x = -const
        A, a_const = rows_to_csr(self.eq_constraints)
        b = -a_const

        # cone rows: s = expr  ->  G row = -coeffs, h = const
        cone_exprs: list[Expr] = list(self.ineq_constraints)
        dims_l = len(cone_exprs)
        dims_q = []
        for cone in self.soc_constraints:
            cone_exprs.extend(cone)
            dims_q.append(len(cone))
        for cone in self.rotated_soc_constraints:
            u, v, body = cone[0], cone[1], cone[2:]
            cone_exprs.append((u + v) * (1.0 / _SQ2))
            cone_exprs.append((u - v) * (1.0 / _SQ2))
            cone_exprs.extend(body)
            dims_q.append(len(body) + 2)
        Gmat, g_const = rows_to_csr(cone_exprs)
        G = (-Gmat).tocsr()
        h = g_const

        c = np.zeros(n)
        for i, coef in self.objective.coeffs.items():
            c[i] = -coef
        return ConicData(c=c, A=A, b=b, G=G, h=h,
                         dims_l=dims_l, dims_q=dims_q,
                         obj_offset=self.objective.const)

    def dump(self, path):
        """Write a plain-text sparse description.

        Format: a header line `conicprogram n_vars n_eq n_ineq n_soc n_rsoc
        obj_offset`, then one `obj i coef` line per objective entry, then one
        block per constraint.  Each block starts with `eq`/`ineq`/`soc d`/
        `rsoc d` and contains one `row` line per expression: `row const
        [i:coef ...]` in COO style.
        """
        lines = [
            f"conicprogram {self.n_vars} {len(self.eq_constraints)} "
            f"{len(self.ineq_constraints)} {len(self.soc_constraints)} "
            f"{len(self.rotated_soc_constraints)} {self.objective.const!r}"
        ]
        for i, c in sorted(self.objective.coeffs.items()):
            lines.append(f"obj {i} {c!r}")

        def row_line(e: Expr) -> str:
            terms = " ".join(f"{i}:{c!r}" for i, c in sorted(e.coeffs.items()))
            return f"row {e.const!r} {terms}".rstrip()

        for e in self.eq_constraints:
            lines.append("eq")
            lines.append(row_line(e))
        for e in self.ineq_constraints:
            lines.append("ineq")
            lines.append(row_line(e))
        for cone in self.soc_constraints:
            lines.append(f"soc {len(cone)}")
            lines.extend(row_line(e) for e in cone)
        for cone in self.rotated_soc_constraints:
            lines.append(f"rsoc {len(cone)}")
            lines.extend(row_line(e) for e in cone)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
