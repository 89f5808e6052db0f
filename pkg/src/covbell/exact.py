"""Exact rational linear algebra.

Gaussian elimination over the rationals, Fourier-Motzkin feasibility for
systems of strict and non-strict linear inequalities, and exhaustive
maximization of a quadratic over a small polytope.  Everything here works
on :class:`fractions.Fraction` values, which are always kept in reduced
form with a positive denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

Rational = Fraction

INCONSISTENT = "inconsistent"
UNIQUE = "unique"
UNDERDETERMINED = "underdetermined"


def as_rational(value) -> Fraction:
    """Convert ints, Fractions, decimal strings and ``"p/q"`` strings exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        # exact binary value of the float; callers wanting decimals pass strings
        return Fraction(value)
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class LinearSolution:
    """Solution set of ``A x = b``.

    ``status`` is one of ``"inconsistent"``, ``"unique"`` or
    ``"underdetermined"``.  For consistent systems every solution is
    ``particular + sum_j t_j * basis[j]`` for real ``t_j``.
    """

    status: str
    particular: tuple[Fraction, ...] | None = None
    basis: tuple[tuple[Fraction, ...], ...] = ()

    @property
    def consistent(self) -> bool:
        return self.status != INCONSISTENT

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def point(self, params: Sequence[Fraction]) -> tuple[Fraction, ...]:
        if self.particular is None:
            raise ValueError("inconsistent system has no points")
        if len(params) != len(self.basis):
            raise ValueError("wrong number of family parameters")
        out = list(self.particular)
        for t, vec in zip(params, self.basis):
            if t:
                for i, v in enumerate(vec):
                    out[i] += t * v
        return tuple(out)


def _primitive(row: list[int]) -> list[int]:
    g = 0
    for v in row:
        if v:
            g = math.gcd(g, v)
            if g == 1:
                return row
    if g > 1:
        return [v // g for v in row]
    return row


def _integer_row(coeffs: Iterable, rhs) -> list[int]:
    vals = [as_rational(v) for v in coeffs]
    vals.append(as_rational(rhs))
    den = 1
    for v in vals:
        den = den * v.denominator // math.gcd(den, v.denominator)
    return _primitive([v.numerator * (den // v.denominator) for v in vals])


def solve_linear_exact(matrix: Sequence[Sequence], rhs: Sequence) -> LinearSolution:
    """Solve ``matrix @ x = rhs`` exactly and classify the solution set.

    Rows are scaled to integers and reduced by fraction-free Gauss-Jordan
    elimination (rows kept primitive), so intermediate growth stays small.
    """
    if len(matrix) != len(rhs):
        raise ValueError("matrix and rhs have different numbers of rows")
    if not matrix:
        raise ValueError("empty system")
    n = len(matrix[0])
    if any(len(row) != n for row in matrix):
        raise ValueError("ragged matrix")

    rows = [_integer_row(r, b) for r, b in zip(matrix, rhs)]
    pivots: list[tuple[int, int]] = []  # (row index, column)
    r = 0
    for c in range(n):
        p = next((i for i in range(r, len(rows)) if rows[i][c]), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        prow = rows[r]
        pv = prow[c]
        for i in range(len(rows)):
            if i != r:
                e = rows[i][c]
                if e:
                    rows[i] = _primitive([pv * a - e * b for a, b in zip(rows[i], prow)])
        pivots.append((r, c))
        r += 1
        if r == len(rows):
            break
    for i in range(r, len(rows)):
        if rows[i][n]:
            return LinearSolution(INCONSISTENT)

    pivot_cols = {c for _, c in pivots}
    free = [c for c in range(n) if c not in pivot_cols]
    particular = [Fraction(0)] * n
    for i, c in pivots:
        particular[c] = Fraction(rows[i][n], rows[i][c])
    basis = []
    for f in free:
        vec = [Fraction(0)] * n
        vec[f] = Fraction(1)
        for i, c in pivots:
            if rows[i][f]:
                vec[c] = Fraction(-rows[i][f], rows[i][c])
        basis.append(tuple(vec))
    status = UNIQUE if not basis else UNDERDETERMINED
    return LinearSolution(status, tuple(particular), tuple(basis))


@dataclass(frozen=True)
class Inequality:
    """``coeffs . t + const > 0`` if ``strict`` else ``>= 0``."""

    coeffs: tuple[Fraction, ...]
    const: Fraction
    strict: bool = False

    def holds(self, point: Sequence[Fraction]) -> bool:
        v = self.const + sum((c * p for c, p in zip(self.coeffs, point)), Fraction(0))
        return v > 0 if self.strict else v >= 0


def restrict_to_family(
    coeffs: Sequence, const, family: LinearSolution, strict: bool = False
) -> Inequality:
    """Pull ``coeffs . x + const (>|>=) 0`` back to the parameters of ``family``."""
    x0 = family.particular
    k = as_rational(const) + sum((as_rational(a) * b for a, b in zip(coeffs, x0)), Fraction(0))
    cs = tuple(
        sum((as_rational(a) * b for a, b in zip(coeffs, vec)), Fraction(0)) for vec in family.basis
    )
    return Inequality(cs, k, strict)


def _normalize(ineq: Inequality) -> Inequality:
    # positive scaling keeps the inequality; makes duplicates comparable
    nz = [abs(c) for c in ineq.coeffs if c]
    if not nz:
        return ineq
    s = min(nz)
    return Inequality(tuple(c / s for c in ineq.coeffs), ineq.const / s, ineq.strict)


def fourier_motzkin(
    inequalities: Sequence[Inequality], nvars: int
) -> tuple[Fraction, ...] | None:
    """Decide feasibility exactly; return a witness point or ``None``.

    Variables are eliminated from last to first.  The witness is rebuilt by
    back-substitution, picking the midpoint of each non-empty interval, so it
    satisfies strict inequalities as well.
    """
    stages: list[list[Inequality]] = []
    current = list(dict.fromkeys(_normalize(q) for q in inequalities))
    for ineq in current:
        if len(ineq.coeffs) != nvars:
            raise ValueError("inequality has the wrong number of coefficients")
    for var in range(nvars - 1, -1, -1):
        stages.append(current)
        pos, neg, nxt = [], [], []
        for q in current:
            c = q.coeffs[var]
            if c > 0:
                pos.append(q)
            elif c < 0:
                neg.append(q)
            else:
                nxt.append(q)
        for p in pos:
            for m in neg:
                a, b = p.coeffs[var], -m.coeffs[var]
                coeffs = tuple(b * x + a * y for x, y in zip(p.coeffs, m.coeffs))
                nxt.append(
                    _normalize(Inequality(coeffs, b * p.const + a * m.const, p.strict or m.strict))
                )
        current = list(dict.fromkeys(nxt))
    origin = (Fraction(0),) * nvars
    if not all(q.holds(origin) for q in current):
        return None

    point = [Fraction(0)] * nvars
    for var, stage in zip(range(nvars), reversed(stages)):
        lo = hi = None
        lo_strict = hi_strict = False
        for q in stage:
            c = q.coeffs[var]
            if not c:
                continue
            rest = q.const + sum((q.coeffs[j] * point[j] for j in range(var)), Fraction(0))
            bound = -rest / c
            if c > 0:
                if lo is None or bound > lo or (bound == lo and q.strict):
                    lo, lo_strict = bound, q.strict
            else:
                if hi is None or bound < hi or (bound == hi and q.strict):
                    hi, hi_strict = bound, q.strict
        if lo is not None and hi is not None:
            if lo > hi or (lo == hi and (lo_strict or hi_strict)):
                return None  # unreachable if elimination is correct
            point[var] = (lo + hi) / 2
        elif lo is not None:
            point[var] = lo + 1
        elif hi is not None:
            point[var] = hi - 1
    return tuple(point)


@dataclass(frozen=True)
class Quadratic:
    """``const + g . t + t^T H t`` with ``H`` symmetric."""

    const: Fraction
    linear: tuple[Fraction, ...]
    hessian: tuple[tuple[Fraction, ...], ...]

    @property
    def is_constant(self) -> bool:
        return not any(self.linear) and not any(any(r) for r in self.hessian)

    def __call__(self, t: Sequence[Fraction]) -> Fraction:
        v = self.const + sum((g * x for g, x in zip(self.linear, t)), Fraction(0))
        for i, row in enumerate(self.hessian):
            for j, h in enumerate(row):
                if h:
                    v += h * t[i] * t[j]
        return v


def pull_back_quadratic(
    const, linear: Sequence, quad: Sequence[Sequence], family: LinearSolution
) -> Quadratic:
    """Expand ``const + l . x + x^T Q x`` on ``x = x0 + B t`` symbolically."""
    x0 = family.particular
    basis = family.basis
    n = len(x0)
    c0 = as_rational(const)
    lin = [as_rational(v) for v in linear]
    Q = [[as_rational(v) for v in row] for row in quad]
    Qx0 = [sum((Q[i][j] * x0[j] for j in range(n)), Fraction(0)) for i in range(n)]
    x0Q = [sum((x0[i] * Q[i][j] for i in range(n)), Fraction(0)) for j in range(n)]
    k = c0 + sum((a * b for a, b in zip(lin, x0)), Fraction(0))
    k += sum((x0[i] * Qx0[i] for i in range(n)), Fraction(0))
    g = []
    for vec in basis:
        gi = sum((a * b for a, b in zip(lin, vec)), Fraction(0))
        gi += sum(((Qx0[i] + x0Q[i]) * vec[i] for i in range(n)), Fraction(0))
        g.append(gi)
    H = []
    for u in basis:
        Qu = [sum((Q[i][j] * u[j] for j in range(n)), Fraction(0)) for i in range(n)]
        uQ = [sum((u[i] * Q[i][j] for i in range(n)), Fraction(0)) for j in range(n)]
        row = []
        for v in basis:
            # symmetric part of u^T Q v
            row.append((sum((v[i] * uQ[i] for i in range(n)), Fraction(0))
                        + sum((v[i] * Qu[i] for i in range(n)), Fraction(0))) / 2)
        H.append(tuple(row))
    return Quadratic(k, tuple(g), tuple(H))


def maximize_quadratic(
    objective: Quadratic, inequalities: Sequence[Inequality]
) -> tuple[Fraction, tuple[Fraction, ...]] | None:
    """Supremum of ``objective`` over the closure of a bounded polyhedron.

    Exhaustive over faces: for every set of active constraints, the
    stationary points of the objective restricted to that face are found by
    an exact linear solve, and the best closure-feasible candidate is kept.
    The maximizer of a quadratic over a polytope is a stationary point of
    its restriction to the relative interior of some face, so this is exact.
    """
    m = len(objective.linear)
    closed = [Inequality(q.coeffs, q.const, False) for q in inequalities]
    best: tuple[Fraction, tuple[Fraction, ...]] | None = None
    if m == 0:
        if all(q.holds(()) for q in closed):
            return objective(()), ()
        return None
    for size in range(0, m + 1):
        for active in combinations(range(len(closed)), size):
            A = [closed[i].coeffs for i in active]
            # [2H  -A^T][t ]   [-g]
            # [A    0  ][nu] = [-k]
            mat, rhs = [], []
            for i in range(m):
                row = [2 * objective.hessian[i][j] for j in range(m)]
                row += [-A[a][i] for a in range(size)]
                mat.append(row)
                rhs.append(-objective.linear[i])
            for a, idx in enumerate(active):
                mat.append(list(A[a]) + [Fraction(0)] * size)
                rhs.append(-closed[idx].const)
            sol = solve_linear_exact(mat, rhs)
            if not sol.consistent:
                continue
            t = sol.particular[:m]
            if all(q.holds(t) for q in closed):
                val = objective(t)
                if best is None or val > best[0]:
                    best = (val, t)
    return best
