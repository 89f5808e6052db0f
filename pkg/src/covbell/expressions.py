"""Linear, covariance and Pearson Bell expressions.

Every expression is a sign matrix applied to one correlator kind plus
optional marginal coefficients:

    value = sum_xy s[x, y] * g(Ax, By) + sum_x m_a[x] <Ax> + sum_y m_b[y] <By>

with ``g`` the raw correlator ``<AxBy>``, the covariance, or the Pearson
correlator.  Named inequalities are presets of this form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .correlations import ZERO_STD, Correlators, JointDistribution, correlators

RAW = "raw"
COVARIANCE = "covariance"
PEARSON = "pearson"
KINDS = (RAW, COVARIANCE, PEARSON)


@dataclass(frozen=True, eq=False)
class BellExpression:
    name: str
    signs: np.ndarray
    kind: str = RAW
    marginals_a: np.ndarray | None = None
    marginals_b: np.ndarray | None = None
    local_bound: float | None = field(default=None, compare=False)

    def __post_init__(self):
        signs = np.array(self.signs, dtype=int)
        if signs.ndim != 2 or not np.isin(signs, (-1, 0, 1)).all():
            raise ValueError("sign matrix must be 2-D with entries in {-1, 0, +1}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown correlator kind {self.kind!r}")
        n_x, n_y = signs.shape
        ma = np.zeros(n_x) if self.marginals_a is None else np.array(self.marginals_a, dtype=float)
        mb = np.zeros(n_y) if self.marginals_b is None else np.array(self.marginals_b, dtype=float)
        if ma.shape != (n_x,) or mb.shape != (n_y,):
            raise ValueError("marginal coefficient vectors do not match the sign matrix")
        for arr in (signs, ma, mb):
            arr.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "marginals_a", ma)
        object.__setattr__(self, "marginals_b", mb)

    def _key(self):
        return (self.name, self.kind, self.signs.tobytes(), self.signs.shape,
                self.marginals_a.tobytes(), self.marginals_b.tobytes())

    def __eq__(self, other):
        if not isinstance(other, BellExpression):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @property
    def shape(self) -> tuple[int, int]:
        return self.signs.shape

    def _terms(self, corr: Correlators):
        if corr.shape != self.shape:
            raise ValueError(
                f"{self.name} needs a {self.shape[0]}x{self.shape[1]} scenario, got "
                f"{corr.shape[0]}x{corr.shape[1]}"
            )
        if self.kind == RAW:
            return corr.exy
        if self.kind == COVARIANCE:
            return corr.covariances()
        return corr.pearsons()

    def __call__(self, corr: Correlators | JointDistribution):
        if isinstance(corr, JointDistribution):
            corr = correlators(corr)
        terms = self._terms(corr)
        # skip zero coefficients so exact (Fraction) inputs stay exact
        value = sum(int(s) * terms[x, y] for (x, y), s in np.ndenumerate(self.signs) if s)
        for x, m in enumerate(self.marginals_a):
            if m:
                value = value + _coef(m) * corr.ex[x]
        for y, m in enumerate(self.marginals_b):
            if m:
                value = value + _coef(m) * corr.ey[y]
        return value

    def value_and_grad(self, exy, ex, ey, ex2, ey2):
        """Float value and gradient with respect to each moment array."""
        exy, ex, ey = np.asarray(exy, float), np.asarray(ex, float), np.asarray(ey, float)
        ex2, ey2 = np.asarray(ex2, float), np.asarray(ey2, float)
        s = self.signs
        g_exy = np.zeros_like(exy)
        g_ex = self.marginals_a.astype(float).copy()
        g_ey = self.marginals_b.astype(float).copy()
        g_ex2 = np.zeros_like(ex2)
        g_ey2 = np.zeros_like(ey2)
        value = float(self.marginals_a @ ex + self.marginals_b @ ey)
        if self.kind == RAW:
            value += float(np.sum(s * exy))
            g_exy += s
        elif self.kind == COVARIANCE:
            cov = exy - np.outer(ex, ey)
            value += float(np.sum(s * cov))
            g_exy += s
            g_ex -= s @ ey
            g_ey -= s.T @ ex
        else:
            cov = exy - np.outer(ex, ey)
            sa = np.sqrt(np.maximum(ex2 - ex**2, 0.0))
            sb = np.sqrt(np.maximum(ey2 - ey**2, 0.0))
            ok = np.outer(sa >= ZERO_STD, sb >= ZERO_STD) & (s != 0)
            for x, y in zip(*np.nonzero(ok)):
                w = s[x, y]
                inv = 1.0 / (sa[x] * sb[y])
                r = cov[x, y] * inv
                value += w * r
                g_exy[x, y] += w * inv
                g_ex[x] += w * (-ey[y] * inv + r * ex[x] / sa[x] ** 2)
                g_ey[y] += w * (-ex[x] * inv + r * ey[y] / sb[y] ** 2)
                g_ex2[x] += w * (-r / (2 * sa[x] ** 2))
                g_ey2[y] += w * (-r / (2 * sb[y] ** 2))
        return value, (g_exy, g_ex, g_ey, g_ex2, g_ey2)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "signs": self.signs.tolist(),
            "marginalsA": self.marginals_a.tolist(),
            "marginalsB": self.marginals_b.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "BellExpression":
        try:
            return cls(
                name=str(doc.get("name", "custom")),
                signs=np.array(doc["signs"]),
                kind=doc.get("kind", RAW),
                marginals_a=doc.get("marginalsA"),
                marginals_b=doc.get("marginalsB"),
                local_bound=doc.get("localBound"),
            )
        except KeyError as exc:
            raise ValueError(f"expression document lacks {exc}") from None


def _coef(m: float):
    return int(m) if float(m).is_integer() else float(m)


def load_expression(path: str | Path) -> BellExpression:
    return BellExpression.from_json_dict(json.loads(Path(path).read_text()))


_CHSH_SIGNS = [[1, 1], [1, -1]]
_CHSH_PRIME_SIGNS = [[1, -1], [-1, -1]]
_I3322_SIGNS = [[1, 1, 1], [1, 1, -1], [1, -1, 0]]

CHSH = BellExpression("chsh", _CHSH_SIGNS, RAW, local_bound=2.0)
COVCHSH = BellExpression("covchsh", _CHSH_SIGNS, COVARIANCE, local_bound=16 / 7)
COVCHSH_PRIME = BellExpression("covchsh_prime", _CHSH_PRIME_SIGNS, COVARIANCE)
I3322 = BellExpression(
    "i3322", _I3322_SIGNS, RAW, marginals_a=[1, 1, 0], marginals_b=[-1, -1, 0], local_bound=4.0
)
COV3322 = BellExpression("cov3322", _I3322_SIGNS, COVARIANCE, local_bound=4.5)
RCHSH = BellExpression("rchsh", _CHSH_SIGNS, PEARSON, local_bound=2.5)

PRESETS: dict[str, BellExpression] = {
    e.name: e for e in (CHSH, COVCHSH, COVCHSH_PRIME, I3322, COV3322, RCHSH)
}


def get_expression(name: str) -> BellExpression:
    key = name.lower().replace("'", "_prime").replace("-", "_")
    try:
        return PRESETS[key]
    except KeyError:
        raise ValueError(f"unknown expression {name!r}; choose from {sorted(PRESETS)}") from None


def chsh(corr):
    return CHSH(corr)


def covchsh(corr):
    return COVCHSH(corr)


def covchsh_prime(corr):
    return COVCHSH_PRIME(corr)


def i3322(corr):
    return I3322(corr)


def cov3322(corr):
    return COV3322(corr)


def rchsh(corr) -> float:
    return RCHSH(corr)
