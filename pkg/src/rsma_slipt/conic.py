"""Solver-agnostic conic program representation and solver backends.

A :class:`ConicProgram` holds symmetric matrix variables ("blocks"), scalar
variables, a linear objective to maximise and a typed list of constraints:

* :class:`Linear`      ``expr <= 0`` or ``expr == 0``
* :class:`ExpCone`     ``ln(arg) >= bound``  i.e. ``(bound, 1, arg)`` in the exponential cone
* :class:`RotatedSOC`  ``diff**2 / 4 <= rhs`` (a rotated second-order cone)
* :class:`PSD`         ``block >= 0`` in the semidefinite order

Every expression is an :class:`Affine` functional of the variables, where a
block enters through ``Tr(C @ P)`` for a symmetric coefficient ``C``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class Affine:
    const: float = 0.0
    scalars: Mapping[str, float] = field(default_factory=dict)
    mats: Mapping[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def var(cls, name: str, coef: float = 1.0) -> "Affine":
        return cls(0.0, {name: float(coef)}, {})

    @classmethod
    def trace(cls, block: str, coef) -> "Affine":
        c = np.asarray(coef, dtype=float)
        return cls(0.0, {}, {block: 0.5 * (c + c.T)})

    @classmethod
    def constant(cls, value: float) -> "Affine":
        return cls(float(value), {}, {})

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine.constant(x)

    def __add__(self, other):
        other = Affine.lift(other)
        scalars = dict(self.scalars)
        for k, v in other.scalars.items():
            scalars[k] = scalars.get(k, 0.0) + v
        mats = dict(self.mats)
        for k, v in other.mats.items():
            mats[k] = mats[k] + v if k in mats else v
        return Affine(self.const + other.const, scalars, mats)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, s):
        s = float(s)
        return Affine(self.const * s, {k: v * s for k, v in self.scalars.items()},
                      {k: v * s for k, v in self.mats.items()})

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def evaluate(self, scalars: Mapping[str, float], blocks: Mapping[str, np.ndarray]) -> float:
        val = self.const
        for k, v in self.scalars.items():
            val += v * scalars.get(k, 0.0)
        for k, c in self.mats.items():
            if k in blocks:
                val += float(np.sum(c * blocks[k]))
        return val

    def drop(self, scalars=(), blocks=()) -> "Affine":
        """Substitute zero for the named variables."""
        return Affine(self.const,
                      {k: v for k, v in self.scalars.items() if k not in scalars},
                      {k: v for k, v in self.mats.items() if k not in blocks})

    def variables(self) -> tuple[set, set]:
        return set(self.scalars), set(self.mats)

    def describe(self, precision: int = 6) -> str:
        parts = [f"{self.const:.{precision}g}"] if self.const or not (self.scalars or self.mats) else []
        parts += [f"{v:+.{precision}g}*{k}" for k, v in self.scalars.items() if v]
        parts += [f"+Tr(C{{|C|={np.abs(c).max():.3g}}} {k})" for k, c in self.mats.items() if np.any(c)]
        return " ".join(parts) if parts else "0"


@dataclass(frozen=True, eq=False)
class Linear:
    expr: Affine
    sense: str = "<="           # "<=" or "=="
    name: str = ""
    kind = "linear"

    def violation(self, scalars, blocks) -> float:
        v = self.expr.evaluate(scalars, blocks)
        return max(v, 0.0) if self.sense == "<=" else abs(v)

    def affines(self):
        return (self.expr,)


@dataclass(frozen=True, eq=False)
class ExpCone:
    arg: Affine
    bound: Affine
    name: str = ""
    kind = "exp"

    def violation(self, scalars, blocks) -> float:
        a = self.arg.evaluate(scalars, blocks)
        b = self.bound.evaluate(scalars, blocks)
        if a <= 0:
            return math.inf
        return max(b - math.log(a), 0.0)

    def affines(self):
        return (self.arg, self.bound)


@dataclass(frozen=True, eq=False)
class RotatedSOC:
    diff: Affine
    rhs: Affine
    name: str = ""
    kind = "soc"

    def violation(self, scalars, blocks) -> float:
        d = self.diff.evaluate(scalars, blocks)
        return max(0.25 * d * d - self.rhs.evaluate(scalars, blocks), 0.0)

    def affines(self):
        return (self.diff, self.rhs)


@dataclass(frozen=True, eq=False)
class PSD:
    block: str
    name: str = ""
    kind = "psd"

    def violation(self, scalars, blocks) -> float:
        return max(-float(np.linalg.eigvalsh(blocks[self.block]).min()), 0.0)

    def affines(self):
        return ()


Constraint = Union[Linear, ExpCone, RotatedSOC, PSD]


@dataclass(frozen=True, eq=False)
class ConicProgram:
    block_size: int
    blocks: tuple[str, ...]
    scalars: tuple[str, ...]
    objective: Affine                      # maximised
    constraints: tuple[Constraint, ...]
    context: object = None                 # builder metadata, opaque to backends

    def __post_init__(self):
        sc, bl = set(self.scalars), set(self.blocks)
        for con in self.constraints:
            if isinstance(con, PSD):
                if con.block not in bl:
                    raise ValueError(f"constraint {con.name!r} uses undeclared block {con.block}")
                continue
            for aff in con.affines():
                s, b = aff.variables()
                if not s <= sc or not b <= bl:
                    raise ValueError(f"constraint {con.name!r} uses undeclared variables "
                                     f"{sorted((s - sc) | (b - bl))}")
        s, b = self.objective.variables()
        if not s <= sc or not b <= bl:
            raise ValueError("objective uses undeclared variables")

    def count(self, kind: str) -> int:
        return sum(1 for c in self.constraints if c.kind == kind)

    def find(self, prefix: str) -> list:
        return [c for c in self.constraints if c.name.startswith(prefix)]

    def objective_value(self, scalars, blocks) -> float:
        return self.objective.evaluate(scalars, blocks)

    def max_violation(self, scalars, blocks) -> float:
        return max((c.violation(scalars, blocks) for c in self.constraints), default=0.0)

    def dump(self) -> str:
        """Human-readable listing, one constraint per line."""
        lines = [
            f"maximize {self.objective.describe()}",
            f"blocks ({self.block_size}x{self.block_size} symmetric): {', '.join(self.blocks)}",
            f"scalars: {', '.join(self.scalars)}",
            "subject to",
        ]
        for c in self.constraints:
            if isinstance(c, Linear):
                body = f"{c.expr.describe()} {c.sense} 0"
            elif isinstance(c, ExpCone):
                body = f"ln({c.arg.describe()}) >= {c.bound.describe()}"
            elif isinstance(c, RotatedSOC):
                body = f"({c.diff.describe()})^2/4 <= {c.rhs.describe()}"
            else:
                body = f"{c.block} >= 0 (PSD)"
            lines.append(f"  [{c.kind:6s}] {c.name}: {body}")
        return "\n".join(lines)


@dataclass(eq=False)
class SolveResult:
    status: str                              # optimal | optimal_inaccurate | infeasible | unbounded | error
    scalars: dict
    blocks: dict
    objective: float
    solve_time: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "optimal_inaccurate")


class BackendError(RuntimeError):
    pass


class CvxpyBackend:
    """Solve a :class:`ConicProgram` through cvxpy (Clarabel by default).

    When the interior-point method stalls, the solve is retried with shorter
    steps (Clarabel only) before the failure is reported.
    """

    RETRY_STEPS = (0.9, 0.8, 0.6)

    def __init__(self, solver: str = "CLARABEL", retries: bool = True, **solver_opts):
        self.solver = solver
        self.retries = retries
        self.solver_opts = solver_opts

    def solve(self, program: ConicProgram) -> SolveResult:
        result = self._solve(program, self.solver_opts)
        if result.status == "error" and self.retries and self.solver.upper() == "CLARABEL":
            for step in self.RETRY_STEPS:
                retry = self._solve(program, {**self.solver_opts, "max_step_fraction": step})
                retry.solve_time += result.solve_time
                if retry.status != "error":
                    return retry
                result = retry
        return result

    def _solve(self, program: ConicProgram, solver_opts: dict) -> SolveResult:
        import cvxpy as cp

        n = program.block_size
        x = cp.Variable(len(program.scalars)) if program.scalars else None
        idx = {name: i for i, name in enumerate(program.scalars)}
        P = {name: cp.Variable((n, n), symmetric=True, name=name) for name in program.blocks}

        def expr(a: Affine):
            terms = [a.const]
            if a.scalars:
                coef = np.zeros(len(idx))
                for k, v in a.scalars.items():
                    coef[idx[k]] += v
                terms.append(coef @ x)
            for k, c in a.mats.items():
                terms.append(cp.sum(cp.multiply(c, P[k])))
            return sum(terms[1:], terms[0]) if len(terms) > 1 else cp.Constant(terms[0])

        cons = []
        for c in program.constraints:
            if isinstance(c, Linear):
                e = expr(c.expr)
                cons.append(e <= 0 if c.sense == "<=" else e == 0)
            elif isinstance(c, ExpCone):
                cons.append(cp.log(expr(c.arg)) >= expr(c.bound))
            elif isinstance(c, RotatedSOC):
                cons.append(0.25 * cp.square(expr(c.diff)) <= expr(c.rhs))
            else:
                cons.append(P[c.block] >> 0)
        prob = cp.Problem(cp.Maximize(expr(program.objective)), cons)
        t0 = time.perf_counter()
        try:
            prob.solve(solver=self.solver, **solver_opts)
        except cp.error.SolverError as exc:
            return SolveResult("error", {}, {}, math.nan, time.perf_counter() - t0, str(exc))
        elapsed = time.perf_counter() - t0
        status = {
            cp.OPTIMAL: "optimal",
            cp.OPTIMAL_INACCURATE: "optimal_inaccurate",
            cp.INFEASIBLE: "infeasible",
            cp.INFEASIBLE_INACCURATE: "infeasible",
            cp.UNBOUNDED: "unbounded",
            cp.UNBOUNDED_INACCURATE: "unbounded",
        }.get(prob.status, "error")
        if status not in ("optimal", "optimal_inaccurate"):
            return SolveResult(status, {}, {}, math.nan, elapsed, str(prob.status))
        scal = {k: float(x.value[i]) for k, i in idx.items()} if x is not None else {}
        blocks = {k: 0.5 * (v.value + v.value.T) for k, v in P.items()}
        return SolveResult(status, scal, blocks, float(prob.value), elapsed)
