"""Quantum strategies: states, Bloch observables, correlators and optimization."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .correlations import Correlators
from .expressions import COVCHSH, BellExpression

STATE_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SX, SY, SZ)


class QuantumError(ValueError):
    pass


@dataclass(frozen=True)
class TwoQubitState:
    """Density matrix of a bipartite system, ``dims = (dA, dB)``.

    Pure states keep their ket in ``vector``.
    """

    rho: np.ndarray
    dims: tuple[int, int] = (2, 2)
    vector: np.ndarray | None = None

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        d = self.dims[0] * self.dims[1]
        if rho.shape != (d, d):
            raise QuantumError(f"density matrix must be {d}x{d}")
        if not np.allclose(rho, rho.conj().T, atol=STATE_TOL):
            raise QuantumError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > STATE_TOL:
            raise QuantumError("density matrix must have unit trace")
        if np.linalg.eigvalsh(rho).min() < -STATE_TOL:
            raise QuantumError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, vector: Sequence[complex], dims: tuple[int, int] = (2, 2)) -> "TwoQubitState":
        v = np.array(vector, dtype=complex)
        if abs(np.linalg.norm(v) - 1) > STATE_TOL:
            raise QuantumError("state vector must have unit norm")
        v.setflags(write=False)
        return cls(np.outer(v, v.conj()), dims, v)

    @classmethod
    def mixed(cls, rho, dims: tuple[int, int] = (2, 2)) -> "TwoQubitState":
        return cls(rho, dims)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    @property
    def rank(self) -> int:
        return int(np.sum(np.linalg.eigvalsh(self.rho) > 1e-10))


def _check_theta(theta: float) -> None:
    if not 0 < theta <= math.pi / 2 + 1e-15:
        raise QuantumError("theta must lie in (0, pi/2]")


def phi_theta(theta: float) -> TwoQubitState:
    """``cos(theta/2)|00> + sin(theta/2)|11>``."""
    _check_theta(theta)
    return TwoQubitState.pure([math.cos(theta / 2), 0, 0, math.sin(theta / 2)])


def psi_theta(theta: float) -> TwoQubitState:
    """``sin(theta/2)|00> + cos(theta/2)|11>``."""
    _check_theta(theta)
    return TwoQubitState.pure([math.sin(theta / 2), 0, 0, math.cos(theta / 2)])


def rho_theta(theta: float) -> TwoQubitState:
    """Equal mixture of :func:`phi_theta` and :func:`psi_theta`."""
    return TwoQubitState.mixed((phi_theta(theta).rho + psi_theta(theta).rho) / 2)


def phi_plus() -> TwoQubitState:
    return TwoQubitState.pure(np.array([1, 0, 0, 1]) / math.sqrt(2))


def product_state() -> TwoQubitState:
    return TwoQubitState.pure([1, 0, 0, 0])


@dataclass(frozen=True)
class Observable:
    """``bias * 1 + n . sigma`` on a qubit, eigenvalues ``bias +- |n|`` in ``[-1, 1]``.

    ``matrix`` overrides the Bloch form for other local dimensions.
    """

    bloch: tuple[float, float, float] = (0.0, 0.0, 1.0)
    bias: float = 0.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is not None:
            m = np.array(self.matrix, dtype=complex)
            if not np.allclose(m, m.conj().T, atol=1e-12):
                raise QuantumError("observable must be Hermitian")
            ev = np.linalg.eigvalsh(m)
            if ev.min() < -1 - 1e-12 or ev.max() > 1 + 1e-12:
                raise QuantumError("observable eigenvalues must lie in [-1, 1]")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
            return
        n = np.asarray(self.bloch, dtype=float)
        r = float(np.linalg.norm(n))
        if r > 1 + 1e-12:
            raise QuantumError("Bloch vector must have length <= 1")
        if abs(self.bias) + r > 1 + 1e-12:
            raise QuantumError("observable eigenvalues must lie in [-1, 1]")
        object.__setattr__(self, "bloch", tuple(float(v) for v in n))

    @classmethod
    def from_angles(cls, polar: float, azimuth: float) -> "Observable":
        return cls((math.sin(polar) * math.cos(azimuth), math.sin(polar) * math.sin(azimuth), math.cos(polar)))

    @classmethod
    def from_pauli(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "Observable":
        """Normalized ``x sx + y sy + z sz``."""
        n = np.array([x, y, z], dtype=float)
        return cls(tuple(n / np.linalg.norm(n)))

    @property
    def operator(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        nx, ny, nz = self.bloch
        return self.bias * I2 + nx * SX + ny * SY + nz * SZ

    @property
    def is_projective(self) -> bool:
        return self.matrix is None and self.bias == 0 and abs(np.linalg.norm(self.bloch) - 1) < 1e-12


@dataclass(frozen=True)
class QuantumStrategy:
    state: TwoQubitState
    a_obs: tuple[Observable, ...]
    b_obs: tuple[Observable, ...]

    def __post_init__(self):
        object.__setattr__(self, "a_obs", tuple(self.a_obs))
        object.__setattr__(self, "b_obs", tuple(self.b_obs))
        if not self.a_obs or not self.b_obs:
            raise QuantumError("each party needs at least one observable")
        dA, dB = self.state.dims
        for o in self.a_obs:
            if o.operator.shape != (dA, dA):
                raise QuantumError("Alice's observable does not match her local dimension")
        for o in self.b_obs:
            if o.operator.shape != (dB, dB):
                raise QuantumError("Bob's observable does not match his local dimension")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.a_obs), len(self.b_obs)


def quantum_correlators(strat: QuantumStrategy) -> Correlators:
    """``<AxBy> = Tr[rho (Ax (x) By)]`` and the local first and second moments."""
    rho = strat.state.rho
    dA, dB = strat.state.dims
    IA, IB = np.eye(dA), np.eye(dB)
    A = [o.operator for o in strat.a_obs]
    B = [o.operator for o in strat.b_obs]

    def ev(op):
        return float(np.real(np.trace(rho @ op)))

    exy = np.array([[ev(np.kron(a, b)) for b in B] for a in A])
    ex = np.array([ev(np.kron(a, IB)) for a in A])
    ey = np.array([ev(np.kron(IA, b)) for b in B])
    ex2 = np.array([ev(np.kron(a @ a, IB)) for a in A])
    ey2 = np.array([ev(np.kron(IA, b @ b)) for b in B])
    return Correlators.from_moments(exy, ex, ey, ex2, ey2)


def gamma_matrix(strat: QuantumStrategy) -> np.ndarray:
    """Gram matrix of the centred operators ``A0, A1, .., B0, B1, ..``.

    ``Gamma_ij = Tr[rho dX_i dX_j]`` with ``dX = X - <X>``: variances on the
    diagonal, covariances in the Alice-Bob block.
    """
    rho = strat.state.rho
    dA, dB = strat.state.dims
    ops = [np.kron(o.operator, np.eye(dB)) for o in strat.a_obs]
    ops += [np.kron(np.eye(dA), o.operator) for o in strat.b_obs]
    eye = np.eye(dA * dB)
    centred = [op - np.real(np.trace(rho @ op)) * eye for op in ops]
    n = len(centred)
    return np.array([[np.trace(rho @ centred[i] @ centred[j]) for j in range(n)] for i in range(n)])


# Tsirelson-type conditions ---------------------------------------------------


@dataclass(frozen=True)
class ArcsinCheck:
    passed: bool
    margin: float
    worst_signs: tuple[int, int, int, int]

    def __bool__(self) -> bool:
        return self.passed


# the odd-parity sign patterns are exactly the images of (+, +, +, -) under
# input relabelings and outcome flips
ARCSIN_PATTERNS = tuple(
    s for s in product((1, -1), repeat=4) if s.count(-1) % 2 == 1
)


def arcsin_check(values: np.ndarray, tol: float = 1e-12) -> ArcsinCheck:
    """``sum_xy s_xy arcsin(v_xy) <= pi`` for every CHSH-type sign pattern."""
    v = np.asarray(values, dtype=float)
    if v.shape != (2, 2):
        raise ValueError("arcsin condition needs a 2x2 scenario")
    if np.any(np.abs(v) > 1 + tol):
        raise ValueError("correlator values must lie in [-1, 1]")
    angles = np.arcsin(np.clip(v, -1.0, 1.0)).ravel()
    sums = [float(np.dot(s, angles)) for s in ARCSIN_PATTERNS]
    worst = int(np.argmax(sums))
    margin = math.pi - sums[worst]
    return ArcsinCheck(margin >= -tol, margin, ARCSIN_PATTERNS[worst])


def tsirelson_check_cov(corr: Correlators, tol: float = 1e-12) -> ArcsinCheck:
    return arcsin_check(np.asarray(corr.covariances(), dtype=float), tol)


def tsirelson_check_pearson(corr: Correlators, tol: float = 1e-12) -> ArcsinCheck:
    return arcsin_check(corr.pearsons(), tol)


# optimization ------------------------------------------------------------------


def bloch_tensors(state: TwoQubitState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(T, a, b)`` with ``T_ij = <s_i (x) s_j>``, ``a_i = <s_i (x) 1>``, ``b_j = <1 (x) s_j>``."""
    if state.dims != (2, 2):
        raise QuantumError("Bloch tensors need a two-qubit state")
    rho = state.rho
    T = np.array([[np.real(np.trace(rho @ np.kron(p, q))) for q in PAULIS] for p in PAULIS])
    a = np.array([np.real(np.trace(rho @ np.kron(p, I2))) for p in PAULIS])
    b = np.array([np.real(np.trace(rho @ np.kron(I2, q))) for q in PAULIS])
    return T, a, b


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class _Objective:
    """Expression value as a function of flat observable parameters.

    Projective mode: three raw coordinates per observable, normalized to a
    unit Bloch vector.  Unsharp mode adds a length ``cos^2 u`` and a bias
    ``(1 - cos^2 u) sin w`` per observable.
    """

    def __init__(self, state: TwoQubitState, expr: BellExpression, povm: bool):
        self.T, self.a, self.b = bloch_tensors(state)
        self.expr = expr
        self.povm = povm
        self.n_x, self.n_y = expr.shape
        self.per = 5 if povm else 3

    @property
    def size(self) -> int:
        return self.per * (self.n_x + self.n_y)

    def observables(self, p: np.ndarray):
        p = np.asarray(p, dtype=float).reshape(self.n_x + self.n_y, self.per)
        n = _unit(p[:, :3])
        if self.povm:
            r = np.cos(p[:, 3]) ** 2
            bias = (1 - r) * np.sin(p[:, 4])
        else:
            r = np.ones(len(p))
            bias = np.zeros(len(p))
        return n * r[:, None], bias

    def moments(self, p: np.ndarray):
        vec, bias = self.observables(p)
        na, nb = vec[: self.n_x], vec[self.n_x :]
        ba, bb = bias[: self.n_x], bias[self.n_x :]
        ma = na @ self.a
        mb = nb @ self.b
        exy = na @ self.T @ nb.T + np.outer(ba, bb) + np.outer(ba, mb) + np.outer(ma, bb)
        ex = ba + ma
        ey = bb + mb
        ex2 = ba**2 + np.sum(na**2, axis=1) + 2 * ba * ma
        ey2 = bb**2 + np.sum(nb**2, axis=1) + 2 * bb * mb
        return exy, ex, ey, ex2, ey2

    def __call__(self, p: np.ndarray) -> float:
        return self.expr.value_and_grad(*self.moments(p))[0]

    def value_and_grad(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        """Projective mode only: chain rule through ``n = v / |v|``."""
        val, (g_exy, g_ex, g_ey, g_ex2, g_ey2) = self.expr.value_and_grad(*self.moments(p))
        v = np.asarray(p, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(v, axis=1)
        n = v / norms[:, None]
        na, nb = n[: self.n_x], n[self.n_x :]
        gna = g_exy @ nb @ self.T.T + np.outer(g_ex, self.a) + 2 * g_ex2[:, None] * na
        gnb = g_exy.T @ na @ self.T + np.outer(g_ey, self.b) + 2 * g_ey2[:, None] * nb
        gn = np.vstack([gna, gnb])
        gv = (gn - np.sum(gn * n, axis=1)[:, None] * n) / norms[:, None]
        return val, gv.ravel()

    def strategy(self, p: np.ndarray, state: TwoQubitState) -> QuantumStrategy:
        vec, bias = self.observables(p)
        obs = [Observable(tuple(v), float(b)) for v, b in zip(vec, bias)]
        return QuantumStrategy(state, obs[: self.n_x], obs[self.n_x :])


@dataclass(frozen=True)
class QuantumOptimum:
    value: float
    strategy: QuantumStrategy
    converged: bool
    restarts: int

    def __iter__(self):
        yield self.value
        yield self.strategy


def _quantum_restart(args):
    state, expr, povm, seed, tol = args
    obj = _Objective(state, expr, povm)
    rng = np.random.default_rng(seed)
    p0 = rng.normal(size=obj.size)
    if povm:
        p0 = p0.reshape(-1, 5)
        p0[:, 3] = rng.uniform(-0.3, 0.3, size=len(p0))
        p0 = p0.ravel()
    if povm:
        res = minimize(lambda p: -obj(p), p0, method="BFGS", options={"gtol": tol, "maxiter": 2000})
    else:

        def neg(p):
            val, grad = obj.value_and_grad(p)
            return -val, -grad

        res = minimize(neg, p0, jac=True, method="BFGS", options={"gtol": tol, "maxiter": 2000})
    return float(obj(res.x)), res.x, bool(res.success)


def optimize_measurements(
    state: TwoQubitState,
    expr: BellExpression = COVCHSH,
    restarts: int = 100,
    seed: int = 0,
    povm: bool = False,
    tol: float = 1e-10,
    jobs: int | None = 1,
) -> QuantumOptimum:
    """Multi-start maximization of ``expr`` over local qubit observables.

    The returned value is recomputed from the returned strategy through
    :func:`quantum_correlators`, so the two always agree.
    """
    tasks = [(state, expr, povm, seed + k, tol) for k in range(restarts)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_quantum_restart, tasks))
    else:
        results = [_quantum_restart(t) for t in tasks]
    best = max(range(len(results)), key=lambda k: (results[k][0], -k))
    obj = _Objective(state, expr, povm)
    strat = obj.strategy(results[best][1], state)
    value = float(expr(quantum_correlators(strat)))
    return QuantumOptimum(value, strat, any(r[2] for r in results), restarts)


# closed forms and the activation curve -------------------------------------------


def pure_covchsh_reference(theta: float) -> float:
    return 2 * math.sqrt(2) * math.sin(theta)


def mixed_covchsh_reference(theta: float) -> float:
    return 2 * math.sqrt(1 + math.sin(theta) ** 2)


def pure_reference_strategy(theta: float) -> QuantumStrategy:
    """Pauli settings reaching ``2 sqrt2 sin(theta)`` on ``|phi_theta>``."""
    return QuantumStrategy(
        phi_theta(theta),
        (Observable.from_pauli(x=1), Observable.from_pauli(y=1)),
        (Observable.from_pauli(x=1, y=-1), Observable.from_pauli(x=1, y=1)),
    )


def mixed_reference_strategy(theta: float) -> QuantumStrategy:
    """Settings reaching ``2 sqrt(1 + sin^2 theta)`` on ``rho_theta``."""
    s = math.sin(theta)
    return QuantumStrategy(
        rho_theta(theta),
        (Observable.from_pauli(z=1), Observable.from_pauli(x=1)),
        (Observable.from_pauli(z=1, x=s), Observable.from_pauli(z=1, x=-s)),
    )


@dataclass(frozen=True)
class CurvePoint:
    theta: float
    pure_opt: float
    mixed_opt: float
    pure_ref: float
    mixed_ref: float


def activation_curve(
    thetas: Sequence[float], restarts: int = 20, seed: int = 0, jobs: int | None = 1
) -> list[CurvePoint]:
    """Optimized covCHSH for ``|phi_theta>`` and ``rho_theta`` next to the closed forms."""
    out = []
    for theta in thetas:
        pure = optimize_measurements(phi_theta(theta), COVCHSH, restarts, seed, jobs=jobs).value
        mixed = optimize_measurements(rho_theta(theta), COVCHSH, restarts, seed, jobs=jobs).value
        out.append(
            CurvePoint(theta, pure, mixed, pure_covchsh_reference(theta), mixed_covchsh_reference(theta))
        )
    return out


def threshold_crossing(
    state_fn: Callable[[float], TwoQubitState],
    bound: float = 16 / 7,
    bracket: tuple[float, float] = (0.05, math.pi / 2),
    restarts: int = 10,
    seed: int = 0,
    xtol: float = 1e-6,
) -> float:
    """Smallest ``theta`` at which the optimized covCHSH of ``state_fn(theta)`` reaches ``bound``."""

    def gap(theta):
        return optimize_measurements(state_fn(theta), COVCHSH, restarts, seed).value - bound

    return float(brentq(gap, *bracket, xtol=xtol))


def activation_window(restarts: int = 10, seed: int = 0) -> tuple[float, float]:
    """``(mixed crossing, pure crossing)``: neither pure state violates in between."""
    return (
        threshold_crossing(rho_theta, restarts=restarts, seed=seed),
        threshold_crossing(phi_theta, restarts=restarts, seed=seed),
    )


# sampling ----------------------------------------------------------------------------


def random_state(rng: np.random.Generator, rank: int = 1, dims: tuple[int, int] = (2, 2)) -> TwoQubitState:
    d = dims[0] * dims[1]
    if rank == 1:
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        return TwoQubitState.pure(v / np.linalg.norm(v), dims)
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return TwoQubitState.mixed(rho / np.trace(rho).real, dims)


def random_observable(rng: np.random.Generator, projective: bool = True) -> Observable:
    n = _unit(rng.normal(size=3))
    if projective:
        return Observable(tuple(n))
    r = rng.uniform()
    bias = rng.uniform(-(1 - r), 1 - r)
    return Observable(tuple(n * r), bias)


def random_strategy(
    rng: np.random.Generator, shape: tuple[int, int] = (2, 2), rank: int | None = None, projective: bool | None = None
) -> QuantumStrategy:
    rank = rank if rank is not None else int(rng.integers(1, 5))
    projective = projective if projective is not None else bool(rng.integers(0, 2))
    state = random_state(rng, rank)
    return QuantumStrategy(
        state,
        [random_observable(rng, projective) for _ in range(shape[0])],
        [random_observable(rng, projective) for _ in range(shape[1])],
    )
