"""Shared-randomness witness: how much hidden randomness a local covCHSH value needs.

A local model reaching ``covCHSH = c`` mixes deterministic strategies with
weights ``q``.  Two figures of merit are reported: the Shannon entropy
``H(q)`` and the max-entropy ``log2 |support|``.  Mixtures of two strategies
give ``c = D q (1 - q)`` and reach at most 2; above that three strategies
are needed, and the level set ``covCHSH = c`` on a three-strategy face is a
conic, so minimizing ``H`` along it is a one-parameter problem.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize, minimize_scalar

from .localset import LocalDecomposition, c_matrix, covchsh_of_weights, strategy_index

C_MAX = 16 / 7
PAIR_MAX = 2.0
LOG2_3 = math.log2(3)


class InfeasibleError(ValueError):
    pass


def h2(x: float) -> float:
    """Binary entropy in the symmetric form ``H((1 + x)/2, (1 - x)/2)``."""
    return shannon_entropy([(1 + x) / 2, (1 - x) / 2])


def shannon_entropy(q: Sequence[float]) -> float:
    """Entropy in bits, with ``0 log 0 = 0``."""
    q = np.asarray(q, dtype=float)
    q = q[q > 0]
    return max(0.0, float(-np.sum(q * np.log2(q))))


@dataclass(frozen=True)
class EntropyCurvePoint:
    c: float
    min_shannon: float
    min_max_entropy: float
    decomposition: LocalDecomposition
    constraint_error: float
    flagged: bool = False

    @property
    def support_size(self) -> int:
        return len(self.decomposition.support)


def _check_range(c: float) -> float:
    c = float(c)
    if not -1e-12 <= c <= C_MAX + 1e-12:
        raise InfeasibleError(f"covCHSH = {c} is not reachable locally; need 0 <= c <= 16/7")
    return min(max(c, 0.0), C_MAX)


def min_max_entropy(c: float) -> float:
    """``log2`` of the smallest support that reaches ``c``: steps at 0 and 2."""
    c = _check_range(c)
    if c == 0:
        return 0.0
    return 1.0 if c <= PAIR_MAX else LOG2_3


@lru_cache(maxsize=1)
def _cmat() -> np.ndarray:
    return c_matrix().astype(float)


# pairs -------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _pair_table() -> list[tuple[float, int, int]]:
    """``(D, k, l)`` with ``covCHSH(q P_k + (1-q) P_l) = D q (1 - q)``, best first."""
    C = _cmat()
    rows = []
    for k, l in combinations(range(len(C)), 2):
        D = C[k, k] + C[l, l] - C[k, l] - C[l, k]
        if D > 0:
            rows.append((float(D), k, l))
    return sorted(rows, key=lambda r: (-r[0], r[1], r[2]))


def _best_pair(c: float):
    D, k, l = _pair_table()[0]
    if c > D / 4 + 1e-15:
        return None
    x = math.sqrt(max(1 - 4 * c / D, 0.0))
    q = np.zeros(len(_cmat()))
    q[k], q[l] = (1 - x) / 2, (1 + x) / 2
    return h2(x), q


# triples -----------------------------------------------------------------------


@dataclass(frozen=True)
class _Triple:
    """covCHSH on the face spanned by three strategies.

    With ``q = e3 + q1 (e1 - e3) + q2 (e2 - e3)`` the constraint
    ``covCHSH = c`` reads ``a2 q2^2 + a1(q1) q2 + a0(q1) - c = 0``.
    """

    idx: tuple[int, int, int]
    a2: float
    a1: np.ndarray  # polynomial coefficients in q1, lowest first
    a0: np.ndarray
    maximum: float
    argmax: tuple[float, float, float]

    @classmethod
    def build(cls, idx: tuple[int, int, int]) -> "_Triple":
        C = _cmat()[np.ix_(idx, idx)]
        d = np.diag(C).copy()
        S = (C + C.T) / 2
        e3 = np.array([0.0, 0.0, 1.0])
        w = np.array([1.0, 0.0, -1.0])
        v = np.array([0.0, 1.0, -1.0])
        a2 = -v @ S @ v
        a1 = np.array([d @ v - 2 * e3 @ S @ v, -2 * w @ S @ v])
        a0 = np.array([d[2] - S[2, 2], d @ w - 2 * e3 @ S @ w, -(w @ S @ w)])
        t = cls(idx, float(a2), a1, a0, 0.0, (0.0, 0.0, 1.0))
        m, arg = t._maximize()
        return cls(idx, float(a2), a1, a0, m, arg)

    def value(self, q1: float, q2: float) -> float:
        return float(self.a2 * q2**2 + P.polyval(q1, self.a1) * q2 + P.polyval(q1, self.a0))

    def _maximize(self):
        # interior stationary point, then the three edges (pairs)
        best, arg = 0.0, (1.0, 0.0, 0.0)
        H = np.array([[2 * self.a0[2], self.a1[1]], [self.a1[1], 2 * self.a2]])
        g = -np.array([self.a0[1], self.a1[0]])
        if abs(np.linalg.det(H)) > 1e-14:
            q1, q2 = np.linalg.solve(H, g)
            if q1 >= 0 and q2 >= 0 and q1 + q2 <= 1:
                val = self.value(q1, q2)
                if val > best:
                    best, arg = val, (q1, q2, 1 - q1 - q2)
        for q1, q2 in ((0.5, 0.0), (0.0, 0.5), (0.5, 0.5)):
            val = self.value(q1, q2)
            if val > best:
                best, arg = val, (q1, q2, 1 - q1 - q2)
        return best, tuple(float(x) for x in arg)

    def _branches(self, q1: float, c: float):
        b = P.polyval(q1, self.a1)
        a0 = P.polyval(q1, self.a0) - c
        if abs(self.a2) < 1e-14:
            return [-a0 / b] if abs(b) > 1e-14 else []
        disc = max(b * b - 4 * self.a2 * a0, 0.0)
        r = math.sqrt(disc)
        return [(-b + r) / (2 * self.a2), (-b - r) / (2 * self.a2)]

    def _weights(self, q1: float, q2: float) -> np.ndarray:
        return np.array([q1, q2, 1 - q1 - q2])

    def _feasible_intervals(self, c: float) -> list[tuple[float, float]]:
        disc = P.polysub(P.polymul(self.a1, self.a1), 4 * self.a2 * P.polysub(self.a0, [c]))
        cuts = [0.0, 1.0]
        for r in P.polyroots(P.polytrim(disc, 1e-15)) if np.any(np.abs(disc[1:]) > 1e-15) else []:
            if abs(r.imag) < 1e-9 and 0 < r.real < 1:
                cuts.append(float(r.real))
        cuts.sort()
        out = []
        for lo, hi in zip(cuts, cuts[1:]):
            if P.polyval((lo + hi) / 2, disc) >= 0:
                out.append((lo, hi))
        return out

    def min_entropy(self, c: float, grid: int = 64):
        """Smallest ``H(q)`` on ``{covCHSH = c}`` within this face, or None."""
        if c > self.maximum + 1e-12:
            return None
        if c >= self.maximum - 1e-12:
            q = np.array(self.argmax)
            return shannon_entropy(q), q
        best = None

        def consider(q1, branch):
            nonlocal best
            roots = self._branches(q1, c)
            if branch >= len(roots):
                return math.inf
            q = self._weights(q1, roots[branch])
            if np.any(q < -1e-12):
                return math.inf
            q = np.maximum(q, 0.0)
            h = shannon_entropy(q / q.sum())
            if best is None or h < best[0]:
                best = (h, q / q.sum())
            return h

        for lo, hi in self._feasible_intervals(c):
            for branch in (0, 1):
                xs = np.linspace(lo, hi, grid)
                hs = [consider(x, branch) for x in xs]
                k = int(np.argmin(hs))
                if not math.isfinite(hs[k]):
                    continue
                a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
                minimize_scalar(
                    lambda x: consider(x, branch), bounds=(a, b), method="bounded",
                    options={"xatol": 1e-13},
                )
        return best


def _canonical(idx: tuple[int, int, int]) -> tuple:
    C = _cmat()
    keys = []
    for p in permutations(idx):
        sub = C[np.ix_(p, p)]
        keys.append(tuple(np.round(sub, 9).ravel()))
    return min(keys)


@lru_cache(maxsize=1)
def _triples() -> tuple[_Triple, ...]:
    """One representative per equivalence class of faces that beat the pair maximum."""
    seen = {}
    for idx in combinations(range(len(_cmat())), 3):
        key = _canonical(idx)
        if key not in seen:
            seen[key] = _Triple.build(idx)
    reps = [t for t in seen.values() if t.maximum > PAIR_MAX + 1e-12]
    return tuple(sorted(reps, key=lambda t: (-t.maximum, t.idx)))


def triple_maximum() -> float:
    return max(t.maximum for t in _triples())


# exhaustive cross-check --------------------------------------------------------


def _exhaustive(c: float, restarts: int, seed: int):
    """SLSQP over all 16 weights; slow and only used to cross-check."""
    C = _cmat()
    diag = np.diag(C)
    n = len(C)

    def H(q):
        q = np.clip(q, 1e-300, None)
        return float(-np.sum(q * np.log2(q)))

    def dH(q):
        return -(np.log2(np.clip(q, 1e-15, None)) + 1 / math.log(2))

    cons = [
        {"type": "eq", "fun": lambda q: np.sum(q) - 1, "jac": lambda q: np.ones(n)},
        {"type": "eq", "fun": lambda q: q @ diag - q @ C @ q - c, "jac": lambda q: diag - (C + C.T) @ q},
    ]
    best = None
    for k in range(restarts):
        rng = np.random.default_rng(seed + k)
        q0 = rng.dirichlet(np.full(n, 0.3))
        res = minimize(H, q0, jac=dH, method="SLSQP", bounds=[(0, 1)] * n, constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 500})
        q = np.maximum(res.x, 0)
        q /= q.sum()
        if abs(q @ diag - q @ C @ q - c) > 1e-6:
            continue
        h = shannon_entropy(q)
        if best is None or h < best[0]:
            best = (h, q)
    return best


# public API --------------------------------------------------------------------


def min_shannon_entropy(
    c: float,
    tol: float = 1e-9,
    max_support: int = 3,
    exhaustive: bool = False,
    restarts: int = 50,
    seed: int = 0,
) -> EntropyCurvePoint:
    """Minimal Shannon entropy of the hidden variable of a local model with ``covCHSH = c``.

    ``max_support`` restricts the search to mixtures of at most that many
    deterministic strategies (2 or 3).  ``exhaustive`` additionally runs a
    multi-start SLSQP over all 16 weights and keeps whichever is lower.
    """
    c = _check_range(c)
    if max_support not in (2, 3):
        raise ValueError("max_support must be 2 or 3")
    n = len(_cmat())
    if c == 0:
        q = np.zeros(n)
        q[strategy_index("++/++")] = 1.0
        return _point(c, q, tol)

    cands = []
    pair = _best_pair(c)
    if pair is not None:
        cands.append(pair)
    if max_support == 3 and c > PAIR_MAX - 1e-12:
        for t in _triples():
            res = t.min_entropy(c)
            if res is not None:
                q = np.zeros(n)
                q[list(t.idx)] = res[1]
                cands.append((res[0], q))
    if exhaustive:
        res = _exhaustive(c, restarts, seed)
        if res is not None:
            cands.append(res)
    if not cands:
        raise InfeasibleError(
            f"covCHSH = {c} cannot be reached with at most {max_support} deterministic strategies"
        )
    h, q = min(cands, key=lambda r: r[0])
    return _point(c, q, tol)


def _point(c: float, q: np.ndarray, tol: float) -> EntropyCurvePoint:
    q = np.where(q < 1e-15, 0.0, q)
    q = q / q.sum()
    decomp = LocalDecomposition(q)
    err = abs(covchsh_of_weights(decomp) - c)
    return EntropyCurvePoint(
        c=c,
        min_shannon=shannon_entropy(q),
        min_max_entropy=min_max_entropy(c),
        decomposition=decomp,
        constraint_error=err,
        flagged=err > tol,
    )


def q1_approximation(c: float) -> float:
    """Rough guide ``1/2 - 0.01 (c - 2)`` for the largest weight when ``2 < c <~ 2.27``."""
    return 0.5 - 0.01 * (c - 2)


def q1_upper_branch(c: float) -> float:
    """``(3 + sqrt(16 - 7c)) / 7``: the largest weight at the optimum once ``c >~ 2.27``."""
    return (3 + math.sqrt(max(16 - 7 * c, 0.0))) / 7


def _curve_point(args):
    c, tol = args
    return min_shannon_entropy(c, tol)


def entropy_curve(
    c_min: float = 0.0, c_max: float = C_MAX, steps: int = 200, tol: float = 1e-9, jobs: int | None = 1
) -> list[EntropyCurvePoint]:
    """``steps`` evenly spaced points from ``c_min`` to ``c_max`` inclusive."""
    _check_range(c_min)
    _check_range(c_max)
    if c_min > c_max or steps < 1:
        raise ValueError("need c_min <= c_max and at least one step")
    cs = np.linspace(c_min, c_max, steps) if steps > 1 else np.array([c_min])
    tasks = [(float(c), tol) for c in cs]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_curve_point, tasks))
    return [_curve_point(t) for t in tasks]


def write_curve_csv(points: Sequence[EntropyCurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "min_shannon", "min_max_entropy"])
        for p in points:
            w.writerow([f"{p.c:.12g}", f"{p.min_shannon:.12g}", f"{p.min_max_entropy:.12g}"])
