"""Bipartite conditional distributions and their moments.

A :class:`JointDistribution` holds ``P(a, b | x, y)`` for finite outcome
alphabets with values in ``[-1, 1]``.  Tables are float arrays by default;
when built from exact inputs (ints, ``Fraction``, ``"p/q"`` or decimal
strings) they are object arrays of ``Fraction`` and every moment and
covariance is then computed exactly.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

NORM_TOL = 1e-12
SIGNALLING_WARN_TOL = 1e-12
SIGNALLING_ERROR_TOL = 1e-9
ZERO_STD = 1e-10


class DistributionError(ValueError):
    """Malformed table: wrong shape, negative entries, bad normalization."""


class SignallingError(DistributionError):
    """Marginals depend on the other party's input beyond tolerance."""


class SignallingWarning(UserWarning):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _is_exact(value) -> bool:
    return isinstance(value, (int, Fraction, str)) and not isinstance(value, bool)


def _parse_entry(value, exact: bool):
    if isinstance(value, str):
        value = value.strip()
        if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?(/\d+)?", value):
            raise DistributionError(f"cannot parse probability {value!r}")
        q = Fraction(value)
        return q if exact else float(q)
    if isinstance(value, bool) or not isinstance(value, (int, float, Fraction)):
        raise DistributionError(f"cannot parse probability {value!r}")
    return Fraction(value) if exact else float(value)


@dataclass(frozen=True)
class JointDistribution:
    """``P(a, b | x, y)`` over finite alphabets.

    ``table[(x, y)][i, j]`` is the probability of Alice's ``i``-th outcome of
    input ``x`` and Bob's ``j``-th outcome of input ``y``.
    """

    outcomes_a: tuple[tuple, ...]
    outcomes_b: tuple[tuple, ...]
    table: Mapping[tuple[int, int], np.ndarray]

    def __post_init__(self):
        self._validate()

    @property
    def n_x(self) -> int:
        return len(self.outcomes_a)

    @property
    def n_y(self) -> int:
        return len(self.outcomes_b)

    @property
    def exact(self) -> bool:
        return self.table[(0, 0)].dtype == object

    @classmethod
    def from_tables(
        cls,
        outcomes_a: Sequence[Sequence],
        outcomes_b: Sequence[Sequence],
        table: Mapping[tuple[int, int], Sequence[Sequence]],
        exact: bool | None = None,
    ) -> "JointDistribution":
        if exact is None:
            exact = all(
                _is_exact(p) for block in table.values() for row in block for p in row
            ) and all(_is_exact(v) for out in (*outcomes_a, *outcomes_b) for v in out)
        conv = (lambda v: _parse_entry(v, True)) if exact else (lambda v: _parse_entry(v, False))
        oa = tuple(tuple(conv(v) for v in out) for out in outcomes_a)
        ob = tuple(tuple(conv(v) for v in out) for out in outcomes_b)
        tabs = {}
        for x in range(len(oa)):
            for y in range(len(ob)):
                if (x, y) not in table:
                    raise DistributionError(f"missing table block for inputs x={x}, y={y}")
                block = table[(x, y)]
                if len(block) != len(oa[x]) or any(len(row) != len(ob[y]) for row in block):
                    raise DistributionError(
                        f"block (x={x}, y={y}) must have shape {len(oa[x])}x{len(ob[y])}"
                    )
                arr = np.array(
                    [[conv(p) for p in row] for row in block], dtype=object if exact else float
                )
                tabs[(x, y)] = _frozen(arr)
        return cls(oa, ob, tabs)

    def _validate(self) -> None:
        if not self.outcomes_a or not self.outcomes_b:
            raise DistributionError("need at least one input per party")
        for name, outs in (("A", self.outcomes_a), ("B", self.outcomes_b)):
            for i, out in enumerate(outs):
                if not out:
                    raise DistributionError(f"empty outcome alphabet for {name}{i}")
                if any(not (-1 <= v <= 1) for v in out):
                    raise DistributionError(f"outcomes of {name}{i} must lie in [-1, 1]")
        for (x, y), block in self.table.items():
            if np.any(block < -NORM_TOL):
                i, j = np.argwhere(block < -NORM_TOL)[0]
                raise DistributionError(f"negative probability at x={x}, y={y}, row {i}, column {j}")
            total = block.sum()
            if abs(total - 1) > NORM_TOL:
                raise DistributionError(f"block (x={x}, y={y}) sums to {float(total)!r}, not 1")
        worst = 0.0
        for x in range(self.n_x):
            ref = self.table[(x, 0)].sum(axis=1)
            for y in range(1, self.n_y):
                worst = max(worst, float(np.max(np.abs(self.table[(x, y)].sum(axis=1) - ref))))
        for y in range(self.n_y):
            ref = self.table[(0, y)].sum(axis=0)
            for x in range(1, self.n_x):
                worst = max(worst, float(np.max(np.abs(self.table[(x, y)].sum(axis=0) - ref))))
        if worst > SIGNALLING_ERROR_TOL:
            raise SignallingError(f"marginals differ by {worst:.3g} across inputs")
        if worst > SIGNALLING_WARN_TOL:
            warnings.warn(f"marginals differ by {worst:.3g} across inputs", SignallingWarning)

    def marginal_a(self, x: int) -> np.ndarray:
        return self.table[(x, 0)].sum(axis=1)

    def marginal_b(self, y: int) -> np.ndarray:
        return self.table[(0, y)].sum(axis=0)

    # serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        def enc(v):
            if isinstance(v, Fraction):
                return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
            return float(v)

        return {
            "nX": self.n_x,
            "nY": self.n_y,
            "outcomesA": [[enc(v) for v in out] for out in self.outcomes_a],
            "outcomesB": [[enc(v) for v in out] for out in self.outcomes_b],
            "table": {
                f"{x},{y}": [[enc(p) for p in row] for row in self.table[(x, y)]]
                for x in range(self.n_x)
                for y in range(self.n_y)
            },
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "JointDistribution":
        try:
            n_x, n_y = int(doc["nX"]), int(doc["nY"])
            outcomes_a, outcomes_b = doc["outcomesA"], doc["outcomesB"]
            raw = doc["table"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DistributionError(f"malformed distribution document: {exc}") from None
        if len(outcomes_a) != n_x or len(outcomes_b) != n_y:
            raise DistributionError("nX/nY disagree with the outcome lists")
        table = {}
        for key, block in raw.items():
            m = re.fullmatch(r"\s*(\d+)\s*,\s*(\d+)\s*", key)
            if m is None:
                raise DistributionError(f"bad table key {key!r}; expected 'x,y'")
            table[(int(m.group(1)), int(m.group(2)))] = block
        return cls.from_tables(outcomes_a, outcomes_b, table)


def load_distribution(path: str | Path) -> JointDistribution:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DistributionError(f"invalid JSON: {exc}") from None
    return JointDistribution.from_json_dict(doc)


def save_distribution(dist: JointDistribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dist.to_json_dict(), indent=2) + "\n")


# constructors ------------------------------------------------------------

_SYMBOLS = {"+": 1, "-": -1, "0": 0}


def parse_strategy_label(label: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """``"+-/0+"`` -> ``((1, -1), (0, 1))``."""
    try:
        left, right = label.strip().strip("()").split("/")
        return tuple(_SYMBOLS[c] for c in left), tuple(_SYMBOLS[c] for c in right)
    except (ValueError, KeyError):
        raise ValueError(f"bad strategy label {label!r}") from None


def deterministic_mixture(terms: Sequence[tuple]) -> JointDistribution:
    """Mix deterministic strategies given as ``(weight, label)`` pairs.

    Labels use the ``A0A1.../B0B1...`` notation with ``+``, ``-`` and ``0``.
    Each input's alphabet is the set of values it actually takes, in
    descending order.  Exact weights give an exact table.
    """
    strategies = [(w, *parse_strategy_label(lbl)) for w, lbl in terms]
    n_x, n_y = len(strategies[0][1]), len(strategies[0][2])
    if any(len(a) != n_x or len(b) != n_y for _, a, b in strategies):
        raise ValueError("all strategies must have the same number of inputs")
    exact = all(_is_exact(w) for w, _, _ in strategies)
    oa = [tuple(sorted({a[x] for _, a, _ in strategies}, reverse=True)) for x in range(n_x)]
    ob = [tuple(sorted({b[y] for _, _, b in strategies}, reverse=True)) for y in range(n_y)]
    zero = Fraction(0) if exact else 0.0
    table = {}
    for x in range(n_x):
        for y in range(n_y):
            block = [[zero] * len(ob[y]) for _ in oa[x]]
            for w, a, b in strategies:
                w = Fraction(w) if exact else float(w)
                block[oa[x].index(a[x])][ob[y].index(b[y])] += w
            table[(x, y)] = block
    return JointDistribution.from_tables(oa, ob, table, exact=exact)


def from_binary_correlators(exy, ex, ey) -> JointDistribution:
    """Binary ``+-1`` distribution with the given first moments.

    ``P(a, b | x, y) = (1 + a<Ax> + b<By> + ab<AxBy>) / 4``.
    """
    exy = np.asarray(exy, dtype=object)
    n_x, n_y = exy.shape
    vals = [*exy.ravel(), *ex, *ey]
    exact = all(_is_exact(v) for v in vals)
    cv = Fraction if exact else float
    table = {}
    for x in range(n_x):
        for y in range(n_y):
            table[(x, y)] = [
                [(1 + a * cv(ex[x]) + b * cv(ey[y]) + a * b * cv(exy[x, y])) / 4 for b in (1, -1)]
                for a in (1, -1)
            ]
    outs = [(1, -1)] * n_x, [(1, -1)] * n_y
    return JointDistribution.from_tables(*outs, table, exact=exact)


def pr_box() -> JointDistribution:
    """Popescu-Rohrlich box: ``<AxBy> = (-1)^(xy)``, unbiased marginals."""
    return from_binary_correlators([[1, 1], [1, -1]], [0, 0], [0, 0])


def uniform_distribution(n_x: int = 2, n_y: int = 2) -> JointDistribution:
    return from_binary_correlators(np.zeros((n_x, n_y), dtype=int), [0] * n_x, [0] * n_y)


# moments -------------------------------------------------------------------


@dataclass(frozen=True)
class Correlators:
    """First and second moments per input (pair).

    ``exy[x, y] = <AxBy>``, ``ex[x] = <Ax>``, ``ey[y] = <By>``,
    ``ex2[x] = <Ax^2>``, ``ey2[y] = <By^2>``.
    """

    exy: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    ex2: np.ndarray
    ey2: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.exy.shape

    @classmethod
    def from_moments(cls, exy, ex, ey, ex2=None, ey2=None) -> "Correlators":
        exy = np.asarray(exy)
        ex, ey = np.asarray(ex), np.asarray(ey)
        ex2 = np.ones_like(ex) if ex2 is None else np.asarray(ex2)
        ey2 = np.ones_like(ey) if ey2 is None else np.asarray(ey2)
        return cls(*(_frozen(np.array(a)) for a in (exy, ex, ey, ex2, ey2)))

    def covariances(self) -> np.ndarray:
        return self.exy - np.multiply.outer(self.ex, self.ey)

    def std_a(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.asarray(self.ex2 - self.ex**2, dtype=float), 0.0))

    def std_b(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.asarray(self.ey2 - self.ey**2, dtype=float), 0.0))

    def pearsons(self) -> np.ndarray:
        cov = np.asarray(self.covariances(), dtype=float)
        sa, sb = self.std_a(), self.std_b()
        den = np.multiply.outer(sa, sb)
        out = np.zeros_like(cov)
        ok = np.multiply.outer(sa >= ZERO_STD, sb >= ZERO_STD)
        out[ok] = cov[ok] / den[ok]
        return out


def correlators(dist: JointDistribution) -> Correlators:
    """Exact weighted sums over the outcome table."""
    n_x, n_y = dist.n_x, dist.n_y
    dtype = object if dist.exact else float
    exy = np.empty((n_x, n_y), dtype=dtype)
    for x in range(n_x):
        a = np.array(dist.outcomes_a[x], dtype=dtype)
        for y in range(n_y):
            b = np.array(dist.outcomes_b[y], dtype=dtype)
            exy[x, y] = a @ dist.table[(x, y)] @ b
    ex = np.empty(n_x, dtype=dtype)
    ex2 = np.empty(n_x, dtype=dtype)
    for x in range(n_x):
        a = np.array(dist.outcomes_a[x], dtype=dtype)
        m = dist.marginal_a(x)
        ex[x], ex2[x] = m @ a, m @ (a * a)
    ey = np.empty(n_y, dtype=dtype)
    ey2 = np.empty(n_y, dtype=dtype)
    for y in range(n_y):
        b = np.array(dist.outcomes_b[y], dtype=dtype)
        m = dist.marginal_b(y)
        ey[y], ey2[y] = m @ b, m @ (b * b)
    return Correlators.from_moments(exy, ex, ey, ex2, ey2)


def _check_index(corr: Correlators, x: int, y: int) -> None:
    n_x, n_y = corr.shape
    if not (0 <= x < n_x and 0 <= y < n_y):
        raise IndexError(f"input pair ({x}, {y}) out of range for a {n_x}x{n_y} scenario")


def covariance(corr: Correlators, x: int, y: int):
    _check_index(corr, x, y)
    return corr.exy[x, y] - corr.ex[x] * corr.ey[y]


def pearson(corr: Correlators, x: int, y: int) -> float:
    """Normalized covariance; 0 when either standard deviation vanishes."""
    _check_index(corr, x, y)
    sa = math.sqrt(max(float(corr.ex2[x] - corr.ex[x] ** 2), 0.0))
    sb = math.sqrt(max(float(corr.ey2[y] - corr.ey[y] ** 2), 0.0))
    if sa < ZERO_STD or sb < ZERO_STD:
        return 0.0
    return float(covariance(corr, x, y)) / (sa * sb)


def binarize(dist: JointDistribution) -> JointDistribution:
    """Randomly round every outcome to ``+-1`` keeping its mean.

    ``P'(a', b'|x, y) = sum_{a,b} (1 + a'a)/2 (1 + b'b)/2 P(a, b|x, y)``.
    First moments, hence covariances, are unchanged.
    """
    one = Fraction(1) if dist.exact else 1.0
    dtype = object if dist.exact else float
    table = {}
    for x in range(dist.n_x):
        a = np.array(dist.outcomes_a[x], dtype=dtype)
        ra = np.array([(one + s * a) / 2 for s in (1, -1)], dtype=dtype)
        for y in range(dist.n_y):
            b = np.array(dist.outcomes_b[y], dtype=dtype)
            rb = np.array([(one + s * b) / 2 for s in (1, -1)], dtype=dtype)
            table[(x, y)] = (ra @ dist.table[(x, y)] @ rb.T).tolist()
    binary = [(1, -1)]
    return JointDistribution.from_tables(
        binary * dist.n_x, binary * dist.n_y, table, exact=dist.exact
    )
