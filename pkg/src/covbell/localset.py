"""Deterministic strategies, local mixtures and numeric local bounds.

Strategy ``index`` encodes the outputs as bits ``A0 .. A_{nX-1} B0 .. B_{nY-1}``
read from the most significant bit, a set bit meaning output ``+1``.  So in
the 2x2 scenario ``(++/++)`` is 15 and ``(--/--)`` is 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .correlations import JointDistribution, deterministic_mixture
from .expressions import COVARIANCE, COVCHSH, COVCHSH_PRIME, RAW, BellExpression

WEIGHT_TOL = 1e-12
SUPPORT_TOL = 1e-9


@dataclass(frozen=True)
class DeterministicStrategy:
    a_out: tuple[int, ...]
    b_out: tuple[int, ...]

    @property
    def index(self) -> int:
        idx = 0
        for v in (*self.a_out, *self.b_out):
            idx = (idx << 1) | (v == 1)
        return idx

    @classmethod
    def from_index(cls, index: int, n_x: int, n_y: int) -> "DeterministicStrategy":
        n = n_x + n_y
        if not 0 <= index < 2**n:
            raise ValueError(f"strategy index {index} out of range for {n_x}x{n_y}")
        bits = [1 if (index >> (n - 1 - p)) & 1 else -1 for p in range(n)]
        return cls(tuple(bits[:n_x]), tuple(bits[n_x:]))

    @property
    def label(self) -> str:
        sym = {1: "+", -1: "-"}
        return "".join(sym[v] for v in self.a_out) + "/" + "".join(sym[v] for v in self.b_out)

    def flipped(self) -> "DeterministicStrategy":
        return DeterministicStrategy(tuple(-v for v in self.a_out), tuple(-v for v in self.b_out))


def enumerate_deterministic(n_x: int, n_y: int) -> list[DeterministicStrategy]:
    if n_x < 1 or n_y < 1:
        raise ValueError("need at least one input per party")
    return [DeterministicStrategy.from_index(k, n_x, n_y) for k in range(2 ** (n_x + n_y))]


def strategy_index(label: str) -> int:
    """Index of a ``"+-/-+"`` style label."""
    left, right = label.strip().strip("()").split("/")
    sym = {"+": 1, "-": -1}
    return DeterministicStrategy(tuple(sym[c] for c in left), tuple(sym[c] for c in right)).index


@lru_cache(maxsize=None)
def output_tables(n_x: int, n_y: int) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` with ``A[k, x]`` and ``B[k, y]`` the outputs of strategy ``k``."""
    strats = enumerate_deterministic(n_x, n_y)
    a = np.array([s.a_out for s in strats], dtype=int)
    b = np.array([s.b_out for s in strats], dtype=int)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def c_matrix(signs: Sequence[Sequence[int]] = ((1, 1), (1, -1))) -> np.ndarray:
    """``C[i, j] = sum_xy s[x, y] A_x^i B_y^j`` over all deterministic strategies."""
    signs = np.asarray(signs)
    a, b = output_tables(*signs.shape)
    return np.einsum("ix,xy,jy->ij", a, signs, b)


@dataclass(frozen=True)
class LocalDecomposition:
    """Convex weights over the deterministic strategies of an ``n_x`` x ``n_y`` scenario."""

    weights: np.ndarray
    n_x: int = 2
    n_y: int = 2

    def __post_init__(self):
        w = np.asarray(self.weights)
        exact = w.dtype == object or all(isinstance(v, (int, Fraction)) for v in w.ravel())
        w = np.array([Fraction(v) for v in w], dtype=object) if exact else w.astype(float)
        if w.shape != (2 ** (self.n_x + self.n_y),):
            raise ValueError(f"need {2 ** (self.n_x + self.n_y)} weights, got shape {w.shape}")
        if exact:
            if any(v < 0 for v in w) or sum(w) != 1:
                raise ValueError("weights must be non-negative and sum to 1")
        elif np.any(w < -WEIGHT_TOL) or abs(w.sum() - 1) > WEIGHT_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_terms(cls, terms: Mapping | Sequence[tuple], n_x: int = 2, n_y: int = 2):
        """Build from ``{label_or_index: weight}`` or ``[(weight, label), ...]``."""
        items = terms.items() if isinstance(terms, Mapping) else [(k, w) for w, k in terms]
        items = list(items)
        exact = all(isinstance(w, (int, Fraction)) for _, w in items)
        w = [Fraction(0) if exact else 0.0] * 2 ** (n_x + n_y)
        for key, weight in items:
            k = strategy_index(key) if isinstance(key, str) else int(key)
            w[k] += Fraction(weight) if exact else float(weight)
        return cls(np.array(w, dtype=object if exact else float), n_x, n_y)

    @property
    def exact(self) -> bool:
        return self.weights.dtype == object

    @property
    def support(self) -> tuple[int, ...]:
        if self.exact:
            return tuple(k for k, v in enumerate(self.weights) if v > 0)
        return tuple(int(k) for k in np.flatnonzero(self.weights > SUPPORT_TOL))

    def moments(self):
        """``(exy, ex, ey)`` of the mixture."""
        a, b = output_tables(self.n_x, self.n_y)
        q = self.weights
        if self.exact:
            a, b = a.astype(object), b.astype(object)
        return a.T @ (q[:, None] * b), q @ a, q @ b

    def to_json_dict(self) -> dict:
        out = {}
        for k in self.support:
            v = self.weights[k]
            if isinstance(v, Fraction):
                out[str(k)] = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
            else:
                out[str(k)] = float(v)
        return {"nX": self.n_x, "nY": self.n_y, "weights": out}

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "LocalDecomposition":
        n_x, n_y = int(doc.get("nX", 2)), int(doc.get("nY", 2))
        raw = doc["weights"]
        exact = all(isinstance(v, (int, str)) for v in raw.values())
        terms = {int(k): (Fraction(v) if exact else float(v)) for k, v in raw.items()}
        return cls.from_terms(terms, n_x, n_y)


def mixture_distribution(decomp: LocalDecomposition) -> JointDistribution:
    """``sum_k q_k P_k^det`` as a binary distribution table."""
    a, b = output_tables(decomp.n_x, decomp.n_y)
    exact = decomp.exact
    zero = Fraction(0) if exact else 0.0
    table = {}
    for x in range(decomp.n_x):
        for y in range(decomp.n_y):
            block = [[zero, zero], [zero, zero]]
            for k, q in enumerate(decomp.weights):
                if q:
                    block[0 if a[k, x] == 1 else 1][0 if b[k, y] == 1 else 1] += q
            table[(x, y)] = block
    outs_a = [(1, -1)] * decomp.n_x
    outs_b = [(1, -1)] * decomp.n_y
    return JointDistribution.from_tables(outs_a, outs_b, table, exact=exact)


def covchsh_of_weights(decomp: LocalDecomposition, signs=((1, 1), (1, -1))):
    """``sum_k q_k C_kk - sum_ij q_i q_j C_ij``; exact for rational weights."""
    C = c_matrix(signs)
    if decomp.weights.shape[0] != C.shape[0]:
        raise ValueError("decomposition does not match the sign matrix scenario")
    q = decomp.weights
    if decomp.exact:
        Co = C.astype(object)
        return q @ np.diag(Co) - q @ Co @ q
    return float(q @ np.diag(C) - q @ C @ q)


# numeric optimization over the weight simplex ----------------------------------


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{q >= 0, sum q = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def expression_objective(expr: BellExpression) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Value and gradient of ``expr`` as a function of the mixture weights."""
    a, b = output_tables(*expr.shape)
    a = a.astype(float)
    b = b.astype(float)
    ab = np.einsum("kx,ky->kxy", a, b)

    def fun(q):
        exy = np.einsum("k,kxy->xy", q, ab)
        ex, ey = q @ a, q @ b
        s = q.sum()
        val, (g_exy, g_ex, g_ey, g_ex2, g_ey2) = expr.value_and_grad(
            exy, ex, ey, np.full(ex.shape, s), np.full(ey.shape, s)
        )
        grad = np.einsum("kxy,xy->k", ab, g_exy) + a @ g_ex + b @ g_ey + g_ex2.sum() + g_ey2.sum()
        return val, grad

    return fun


def quadratic_objective(D: np.ndarray) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """``q -> sum_k q_k D_kk - q^T D q`` with its gradient."""
    diag = np.diag(D).astype(float)
    S = (D + D.T).astype(float)
    Df = D.astype(float)

    def fun(q):
        return float(q @ diag - q @ Df @ q), diag - S @ q

    return fun


def _polish_quadratic(D: np.ndarray, q: np.ndarray) -> np.ndarray | None:
    """Re-solve the stationarity conditions on the support of ``q``.

    For quadratic objectives the KKT point with a given support solves a
    small linear system; this removes the optimizer's residual error.
    """
    S = np.flatnonzero(q > 1e-7)
    d = S.size
    M = np.zeros((d + 1, d + 1))
    rhs = np.zeros(d + 1)
    Dss = D[np.ix_(S, S)].astype(float)
    M[:d, :d] = Dss + Dss.T
    M[:d, d] = 1.0
    M[d, :d] = 1.0
    rhs[:d] = np.diag(D)[S]
    rhs[d] = 1.0
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.linalg.norm(M @ sol - rhs) > 1e-9:
        return None
    out = np.zeros_like(q)
    out[S] = sol[:d]
    if np.any(out < 0):
        return None
    return out / out.sum()


def _one_restart(args):
    fun, n, seed, D = args
    rng = np.random.default_rng(seed)
    q0 = rng.dirichlet(np.full(n, 0.5))

    def neg(q):
        v, g = fun(q)
        return -v, -g

    res = minimize(
        neg,
        q0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1.0, "jac": lambda q: np.ones(n)}],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    q = project_to_simplex(res.x)
    val = fun(q)[0]
    if D is not None:
        polished = _polish_quadratic(D, q)
        if polished is not None:
            pv = fun(polished)[0]
            if pv >= val - 1e-12:
                q, val = polished, pv
    return float(val), q, kkt_residual(fun, q) < 1e-6


def kkt_residual(fun, q: np.ndarray) -> float:
    """First-order optimality gap of a maximizer on the simplex.

    On the support the gradient must be constant (``mu``); off the support
    it may not exceed ``mu``.
    """
    _, g = fun(q)
    on = q > SUPPORT_TOL
    mu = g[on].max()
    gap = mu - g[on].min()
    if (~on).any():
        gap = max(gap, float((g[~on] - mu).max()))
    return float(max(gap, 0.0))


@dataclass(frozen=True)
class LocalBoundResult:
    bound: float
    best: LocalDecomposition
    converged: bool
    restarts: int
    successes: int

    def __iter__(self):
        yield self.bound
        yield self.best


def _select(results, tie_tol=1e-9):
    vmax = max(r[0] for r in results)
    cands = [r for r in results if r[0] >= vmax - tie_tol]

    def key(r):
        support = tuple(np.flatnonzero(r[1] > SUPPORT_TOL))
        return (len(support), support, -r[0])

    return min(cands, key=key)


def _run_restarts(fun, n, restarts, seed, D, jobs):
    tasks = [(fun, n, seed + k, D) for k in range(restarts)]
    if jobs is None or jobs <= 1:
        return [_one_restart(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one_restart, tasks, chunksize=max(1, restarts // (4 * jobs))))


DEFAULT_RESTARTS = {(2, 2): 200, (3, 3): 1000}


def _quadratic_matrix(expr: BellExpression) -> np.ndarray | None:
    if expr.kind == COVARIANCE:
        return c_matrix(expr.signs)
    return None


def numeric_local_bound(
    expr: BellExpression,
    restarts: int | None = None,
    tol: float = 1e-9,
    seed: int = 0,
    jobs: int | None = 1,
) -> LocalBoundResult:
    """Multi-start maximization of ``expr`` over local mixtures with binary outputs.

    Restart ``k`` starts from a Dirichlet sample seeded with ``seed + k``.
    Among near-equal optima the decomposition with the smallest support
    (then the lexicographically smallest index set) is returned.
    """
    n_x, n_y = expr.shape
    n = 2 ** (n_x + n_y)
    if restarts is None:
        restarts = DEFAULT_RESTARTS.get((n_x, n_y), 200)
    D = _quadratic_matrix(expr)
    if expr.kind == COVARIANCE and (np.any(expr.marginals_a) or np.any(expr.marginals_b)):
        D = None
    if expr.kind == RAW:
        D = None
    results = _run_restarts(_ExprObjective(expr), n, restarts, seed, D, jobs)
    val, q, _ = _select(results, tie_tol=tol)
    successes = sum(r[2] for r in results)
    best = LocalDecomposition(q, n_x, n_y)
    return LocalBoundResult(val, best, successes > 0, restarts, successes)


class _ExprObjective:
    """Picklable wrapper so restarts can run in worker processes."""

    def __init__(self, expr: BellExpression):
        self.expr = expr
        self._fun = None

    def __call__(self, q):
        if self._fun is None:
            self._fun = expression_objective(self.expr)
        return self._fun(q)

    def __getstate__(self):
        return {"expr": self.expr, "_fun": None}


class _QuadObjective:
    def __init__(self, D):
        self.D = D
        self._fun = quadratic_objective(D)

    def __call__(self, q):
        return self._fun(q)

    def __getstate__(self):
        return {"D": self.D}

    def __setstate__(self, state):
        self.__init__(state["D"])


@dataclass(frozen=True)
class ScanPoint:
    theta: float
    covchsh: float
    covchsh_prime: float
    support_value: float


def _scan_direction(theta, restarts, seed, jobs):
    C = c_matrix(COVCHSH.signs)
    Cp = c_matrix(COVCHSH_PRIME.signs)
    D = math.cos(theta) * C + math.sin(theta) * Cp
    results = _run_restarts(_QuadObjective(D), 16, restarts, seed, D, jobs)
    val, q, _ = _select(results)
    decomp = LocalDecomposition(q)
    return ScanPoint(
        theta,
        covchsh_of_weights(decomp, COVCHSH.signs),
        covchsh_of_weights(decomp, COVCHSH_PRIME.signs),
        val,
    )


def localset_scan(
    directions: int = 360, restarts: int = 20, seed: int = 0, jobs: int | None = 1
) -> list[ScanPoint]:
    """Boundary of the local set projected on the (covCHSH, covCHSH') plane.

    Directions ``theta_i = 2 pi i / directions`` in the first quadrant are
    optimized; the remaining quadrants follow from the reflections
    ``(u, v) -> (+-u, +-v)`` of the local set.
    """
    if directions % 4:
        raise ValueError("number of directions must be a multiple of 4")
    quarter = directions // 4
    base = [_scan_direction(2 * math.pi * i / directions, restarts, seed, jobs) for i in range(quarter + 1)]
    points = []
    for i in range(directions):
        quadrant, j = divmod(i, quarter)
        theta = 2 * math.pi * i / directions
        if quadrant == 0:
            p = base[j]
            points.append(p)
            continue
        # reflect a first-quadrant direction onto this one
        if quadrant == 1:
            src, su, sv = base[quarter - j], -1, 1
        elif quadrant == 2:
            src, su, sv = base[j], -1, -1
        else:
            src, su, sv = base[quarter - j], 1, -1
        points.append(ScanPoint(theta, su * src.covchsh, sv * src.covchsh_prime, src.support_value))
    return points


# ternary outputs ------------------------------------------------------------


def ternary_rchsh_optimum() -> JointDistribution:
    """``4/9 (++/+0) + 4/9 (+-/0+) + 1/9 (00/--)``: rCHSH = 2 sqrt2 exactly with outputs in {+1, 0, -1}."""
    return deterministic_mixture([(Fraction(4, 9), "++/+0"), (Fraction(4, 9), "+-/0+"), (Fraction(1, 9), "00/--")])


def ternary_rchsh_distribution(eps: float) -> JointDistribution:
    """``(1 - eps)(++/+0) + eps/2 (+-/-+) + eps/2 (-+/--)``.

    Bob answers 0 for ``y = 1`` in the dominant term, so his outputs there are
    ternary.  rCHSH tends to ``2 sqrt2`` as ``eps -> 0``: with a third output
    the Pearson expression is no longer capped at 5/2.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return deterministic_mixture([(1 - eps, "++/+0"), (eps / 2, "+-/-+"), (eps / 2, "-+/--")])


def ternary_rchsh_value(eps: float) -> float:
    """Closed form ``2 (1 + sqrt(1 - eps)) / sqrt(2 - eps)`` for the family above."""
    return 2 * (1 + math.sqrt(1 - eps)) / math.sqrt(2 - eps)
