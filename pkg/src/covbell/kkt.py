"""Exact certification of the covCHSH local bound by KKT case enumeration.

Two independent enumerations, both in rational arithmetic:

* over the weights ``q_k`` of the 16 deterministic strategies: one linear
  system per support subset (stationarity with ``lambda_k = 0`` on the
  support, plus normalization), followed by the inequality checks;
* over the eight expectation values and the CHSH multiplier ``lambda``:
  one 9x9 linear system per choice of active constraints (512 cases).

Underdetermined solution families are handled exactly: feasibility by
Fourier-Motzkin elimination on the family parameters, and the objective
is expanded symbolically on the family.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence


from .exact import (
    INCONSISTENT,
    UNIQUE,
    LinearSolution,
    Quadratic,
    format_rational,
    fourier_motzkin,
    maximize_quadratic,
    pull_back_quadratic,
    restrict_to_family,
    solve_linear_exact,
)
from .localset import DeterministicStrategy, LocalDecomposition, c_matrix, covchsh_of_weights

N_STRATEGIES = 16
D_MAX = 9  # Caratheodory: dim of the 2x2 binary-output local polytope is 8


class CertificationError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _chsh_c() -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in row) for row in c_matrix())


# weights-space enumeration ---------------------------------------------------


@dataclass(frozen=True)
class KKTCaseWeights:
    """One support subset of the weight-space KKT conditions.

    ``solution`` is over the unknowns ``(q_k for k in support) + (mu,)``.
    When feasible, ``witness`` is a point of the solution set meeting every
    inequality (``q_k > 0`` on the support, ``lambda_k >= 0`` off it) and
    ``objective`` the covCHSH value there.  ``objective_constant`` records
    whether covCHSH is constant on the whole family; if it is not,
    ``objective`` is the supremum over the family's feasible region and
    ``needs_interval_analysis`` is set.
    """

    support: tuple[int, ...]
    solution: LinearSolution
    feasible: bool = False
    witness: tuple[Fraction, ...] | None = None
    objective: Fraction | None = None
    objective_constant: bool = True
    needs_interval_analysis: bool = False

    @property
    def d(self) -> int:
        return len(self.support)

    @property
    def status(self) -> str:
        return self.solution.status

    @property
    def weights(self) -> dict[int, Fraction]:
        return dict(zip(self.support, self.witness[: self.d]))

    @property
    def mu(self) -> Fraction:
        return self.witness[self.d]

    def decomposition(self) -> LocalDecomposition:
        return LocalDecomposition.from_terms(self.weights)

    def multipliers(self) -> dict[int, Fraction]:
        """``lambda_k = -C_kk + sum_i q_i (C_ik + C_ki) + mu`` at the witness."""
        C = _chsh_c()
        q = self.weights
        return {
            k: -C[k][k] + sum(v * (C[i][k] + C[k][i]) for i, v in q.items()) + self.mu
            for k in range(N_STRATEGIES)
        }


def _weights_system(support: Sequence[int]):
    C = _chsh_c()
    d = len(support)
    matrix, rhs = [], []
    for k in support:
        # C_kk - sum_i q_i (C_ik + C_ki) - mu = 0
        matrix.append([C[i][k] + C[k][i] for i in support] + [1])
        rhs.append(C[k][k])
    matrix.append([1] * d + [0])
    rhs.append(1)
    return matrix, rhs


def _weights_objective(support: Sequence[int]):
    """covCHSH as ``l . x + x^T Q x`` in the unknowns ``(q_S, mu)``."""
    C = _chsh_c()
    d = len(support)
    lin = [C[k][k] for k in support] + [0]
    Q = [[0] * (d + 1) for _ in range(d + 1)]
    for a, i in enumerate(support):
        for b, j in enumerate(support):
            Q[a][b] = -C[i][j]
    return 0, lin, Q


def solve_weights_case(support: Sequence[int]) -> KKTCaseWeights:
    support = tuple(support)
    if not 1 <= len(support) <= N_STRATEGIES:
        raise ValueError("support must be a non-empty subset of the 16 strategies")
    matrix, rhs = _weights_system(support)
    sol = solve_linear_exact(matrix, rhs)
    if sol.status == INCONSISTENT:
        return KKTCaseWeights(support, sol)
    C = _chsh_c()
    d = len(support)
    ineqs = []
    for a in range(d):
        coeffs = [0] * (d + 1)
        coeffs[a] = 1
        ineqs.append(restrict_to_family(coeffs, 0, sol, strict=True))
    for k in range(N_STRATEGIES):
        if k in support:
            continue
        coeffs = [C[i][k] + C[k][i] for i in support] + [1]
        ineqs.append(restrict_to_family(coeffs, -C[k][k], sol, strict=False))
    witness_t = fourier_motzkin(ineqs, sol.dimension)
    if witness_t is None:
        return KKTCaseWeights(support, sol)
    witness = sol.point(witness_t)
    objective = pull_back_quadratic(*_weights_objective(support), sol)
    value, constant, flagged = _family_value(objective, ineqs, witness_t)
    return KKTCaseWeights(support, sol, True, witness, value, constant, flagged)


def _family_value(objective: Quadratic, ineqs, witness_t):
    if objective.is_constant:
        return objective.const, True, False
    best = maximize_quadratic(objective, ineqs)
    value = objective(witness_t) if best is None else max(best[0], objective(witness_t))
    return value, False, True


@dataclass(frozen=True)
class EnumerationRow:
    d: int
    systems: int
    consistent_eq: int
    consistent_full: int
    local_max: tuple[Fraction, ...]
    unique: int = 0
    underdetermined: int = 0


@dataclass(frozen=True)
class EnumerationReport:
    rows: tuple[EnumerationRow, ...]
    feasible: tuple = field(repr=False, default=())

    @property
    def maximum(self) -> Fraction | None:
        vals = [v for r in self.rows for v in r.local_max]
        return max(vals) if vals else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "systems", "consistent_eq", "consistent_full", "local_max"])
        for r in self.rows:
            lm = ";".join(format_rational(v) for v in r.local_max) if r.local_max else "-"
            w.writerow([r.d, r.systems, r.consistent_eq, r.consistent_full, lm])
        return buf.getvalue()


def _solve_supports(supports: Sequence[tuple[int, ...]]) -> list[KKTCaseWeights]:
    return [solve_weights_case(s) for s in supports]


def _map_cases(fn, items: list, jobs: int | None):
    if not jobs or jobs <= 1 or len(items) < 64:
        return fn(items)
    size = -(-len(items) // (4 * jobs))
    chunks = [items[i : i + size] for i in range(0, len(items), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = []
        for part in pool.map(fn, chunks):
            out.extend(part)
    return out


def _support_key(support: tuple[int, ...]) -> int:
    return sum(1 << k for k in support)


def kkt_weights_enumerate(
    d_min: int = 2, d_max: int = D_MAX, jobs: int | None = 1
) -> tuple[EnumerationReport, list[KKTCaseWeights]]:
    """Enumerate every support of size ``d_min..d_max`` and solve its KKT system."""
    if not 1 <= d_min <= d_max <= N_STRATEGIES:
        raise ValueError("need 1 <= d_min <= d_max <= 16")
    rows, feasible = [], []
    for d in range(d_min, d_max + 1):
        supports = sorted(combinations(range(N_STRATEGIES), d), key=_support_key)
        cases = _map_cases(_solve_supports, supports, jobs)
        consistent = [c for c in cases if c.solution.consistent]
        good = [c for c in consistent if c.feasible]
        rows.append(
            EnumerationRow(
                d,
                len(supports),
                len(consistent),
                len(good),
                tuple(sorted({c.objective for c in good})),
                sum(c.status == UNIQUE for c in consistent),
                sum(c.status != UNIQUE for c in consistent),
            )
        )
        feasible.extend(good)
    return EnumerationReport(tuple(rows), tuple(feasible)), feasible


# expectation-space enumeration ------------------------------------------------

# unknown order: <A0B0>, <A0B1>, <A1B0>, <A1B1>, <A0>, <A1>, <B0>, <B1>, lambda
N_VARS = 9
VAR_NAMES = ("A0B0", "A0B1", "A1B0", "A1B1", "A0", "A1", "B0", "B1", "lambda")


def _exy(x, y):
    return 2 * x + y


def _ax(x):
    return 4 + x


def _by(y):
    return 6 + y


LAMBDA = 8

# the eight (x, y, a, b) with ab = (-1)^(xy+1), in a fixed order
CONSTRAINED_EVENTS: tuple[tuple[int, int, int, int], ...] = tuple(
    (x, y, a, b)
    for x in (0, 1)
    for y in (0, 1)
    for a in (1, -1)
    for b in (1, -1)
    if a * b == (-1) ** (x * y + 1)
)


def _affine(coeffs: dict[int, Fraction], const) -> tuple[list[Fraction], Fraction]:
    row = [Fraction(0)] * N_VARS
    for i, v in coeffs.items():
        row[i] += Fraction(v)
    return row, Fraction(const)


def probability_expr(x, y, a, b):
    """``P(a,b|x,y) = (1 + a<Ax> + b<By> + ab<AxBy>) / 4`` as an affine form."""
    return _affine(
        {_ax(x): Fraction(a, 4), _by(y): Fraction(b, 4), _exy(x, y): Fraction(a * b, 4)},
        Fraction(1, 4),
    )


def multiplier_expr(x, y, a, b):
    """``lambda_xyab = 2[1 - lambda - a(-1)^y <A_xbar> - b(-1)^x <B_ybar>]``."""
    return _affine(
        {LAMBDA: -2, _ax(1 - x): -2 * a * (-1) ** y, _by(1 - y): -2 * b * (-1) ** x}, 2
    )


def chsh_slack_expr():
    """``2 - CHSH``."""
    return _affine({_exy(x, y): -((-1) ** (x * y)) for x in (0, 1) for y in (0, 1)}, 2)


def lambda_expr():
    return _affine({LAMBDA: 1}, 0)


def covchsh_of_expectations(v: Sequence[Fraction]):
    return sum(
        (-1) ** (x * y) * (v[_exy(x, y)] - v[_ax(x)] * v[_by(y)]) for x in (0, 1) for y in (0, 1)
    )


def _expectations_objective():
    lin = [0] * N_VARS
    Q = [[0] * N_VARS for _ in range(N_VARS)]
    for x in (0, 1):
        for y in (0, 1):
            s = (-1) ** (x * y)
            lin[_exy(x, y)] = s
            Q[_ax(x)][_by(y)] = -s
    return 0, lin, Q


def _eval(expr, point):
    row, const = expr
    return const + sum((c * p for c, p in zip(row, point)), Fraction(0))


@dataclass(frozen=True)
class KKTCaseExpectations:
    """One of the 512 active-set choices of the expectation-space KKT system.

    Bit 0 of ``mask`` set means ``CHSH = 2`` (else ``lambda = 0``); bit
    ``i + 1`` set means ``P = 0`` for ``CONSTRAINED_EVENTS[i]`` (else the
    matching multiplier vanishes).
    """

    mask: int
    solution: LinearSolution
    feasible: bool = False
    witness: tuple[Fraction, ...] | None = None
    objective: Fraction | None = None
    objective_constant: bool = True
    needs_interval_analysis: bool = False

    @property
    def status(self) -> str:
        return self.solution.status

    @property
    def lam(self) -> Fraction:
        return self.witness[LAMBDA]

    def expectations(self) -> dict[str, Fraction]:
        return dict(zip(VAR_NAMES[:8], self.witness[:8]))

    def event_multipliers(self) -> dict[tuple[int, int, int, int], Fraction]:
        """Closed-form ``lambda_xyab`` evaluated at the witness."""
        return {ev: _eval(multiplier_expr(*ev), self.witness) for ev in CONSTRAINED_EVENTS}


def stationarity_multipliers(point: Sequence[Fraction]) -> dict[tuple, Fraction]:
    """Solve the eight stationarity equations for the ``lambda_xyab`` directly.

    Independent of the closed form: builds the gradient conditions of the
    Lagrangian with respect to the eight expectation values and solves them.
    """
    lam = Fraction(point[LAMBDA])
    A = [Fraction(point[_ax(x)]) for x in (0, 1)]
    B = [Fraction(point[_by(y)]) for y in (0, 1)]
    events = CONSTRAINED_EVENTS
    matrix, rhs = [], []
    for x in (0, 1):
        for y in (0, 1):
            matrix.append([Fraction(a * b, 4) if (ex, ey) == (x, y) else 0 for ex, ey, a, b in events])
            rhs.append(-((-1) ** (x * y)) * (1 - lam))
    for x in (0, 1):
        matrix.append([Fraction(a, 4) if ex == x else 0 for ex, ey, a, b in events])
        rhs.append(sum((-1) ** (x * y) * B[y] for y in (0, 1)))
    for y in (0, 1):
        matrix.append([Fraction(b, 4) if ey == y else 0 for ex, ey, a, b in events])
        rhs.append(sum((-1) ** (x * y) * A[x] for x in (0, 1)))
    sol = solve_linear_exact(matrix, rhs)
    if sol.status != UNIQUE:
        raise CertificationError(f"stationarity system is {sol.status}")
    return dict(zip(events, sol.particular))


def solve_expectations_case(mask: int) -> KKTCaseExpectations:
    if not 0 <= mask < 512:
        raise ValueError("mask must be in [0, 512)")
    equalities, inequalities = [], []
    if mask & 1:
        equalities.append(chsh_slack_expr())
        inequalities.append(lambda_expr())
    else:
        equalities.append(lambda_expr())
        inequalities.append(chsh_slack_expr())
    for i, ev in enumerate(CONSTRAINED_EVENTS):
        if mask >> (i + 1) & 1:
            equalities.append(probability_expr(*ev))
            inequalities.append(multiplier_expr(*ev))
        else:
            equalities.append(multiplier_expr(*ev))
            inequalities.append(probability_expr(*ev))
    sol = solve_linear_exact([row for row, _ in equalities], [-c for _, c in equalities])
    if sol.status == INCONSISTENT:
        return KKTCaseExpectations(mask, sol)
    ineqs = [restrict_to_family(row, const, sol) for row, const in inequalities]
    witness_t = fourier_motzkin(ineqs, sol.dimension)
    if witness_t is None:
        return KKTCaseExpectations(mask, sol)
    witness = sol.point(witness_t)
    objective = pull_back_quadratic(*_expectations_objective(), sol)
    value, constant, flagged = _family_value(objective, ineqs, witness_t)
    return KKTCaseExpectations(mask, sol, True, witness, value, constant, flagged)


@dataclass(frozen=True)
class ExpectationsReport:
    cases: int
    consistent_eq: int
    consistent_full: int
    local_max: tuple[Fraction, ...]
    maximum: Fraction | None
    flagged: int


def kkt_expectations_enumerate(
    jobs: int | None = 1,
) -> tuple[ExpectationsReport, list[KKTCaseExpectations]]:
    cases = _map_cases(_solve_masks, list(range(512)), jobs)
    consistent = [c for c in cases if c.solution.consistent]
    good = [c for c in consistent if c.feasible]
    values = sorted({c.objective for c in good})
    report = ExpectationsReport(
        512,
        len(consistent),
        len(good),
        tuple(values),
        values[-1] if values else None,
        sum(c.needs_interval_analysis for c in good),
    )
    return report, good


def _solve_masks(masks):
    return [solve_expectations_case(m) for m in masks]


# tables and certification ------------------------------------------------------


def optimal_weight_solutions(cases: Iterable[KKTCaseWeights]) -> list[KKTCaseWeights]:
    cases = list(cases)
    top = max(c.objective for c in cases)
    return [c for c in cases if c.objective == top]


def optimal_expectation_solutions(cases: Iterable[KKTCaseExpectations]) -> list[KKTCaseExpectations]:
    cases = list(cases)
    top = max(c.objective for c in cases)
    return [c for c in cases if c.objective == top]


def table1(cases: Iterable[KKTCaseWeights]) -> list[dict]:
    """Maximal weight-space solutions, heaviest strategy first."""
    out = []
    for c in optimal_weight_solutions(cases):
        terms = sorted(c.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        decomp = c.decomposition()
        out.append(
            {
                "terms": [
                    {"weight": format_rational(w), "strategy": DeterministicStrategy.from_index(k, 2, 2).label, "index": k}
                    for k, w in terms
                ],
                "covchsh": format_rational(c.objective),
                "covchsh_prime": format_rational(covchsh_of_weights(decomp, ((1, -1), (-1, -1)))),
                "mu": format_rational(c.mu),
            }
        )
    return out


def table3(cases: Iterable[KKTCaseExpectations]) -> list[dict]:
    out = []
    for c in optimal_expectation_solutions(cases):
        row = {k: format_rational(v) for k, v in c.expectations().items()}
        row["lambda"] = format_rational(c.lam)
        row["covchsh"] = format_rational(c.objective)
        out.append(row)
    return out


@dataclass(frozen=True)
class Certificate:
    bound: Fraction
    weights_report: EnumerationReport | None
    expectations_report: ExpectationsReport | None
    weights_cases: tuple = field(repr=False, default=())
    expectation_cases: tuple = field(repr=False, default=())


def certify(method: str = "both", d_min: int = 2, d_max: int = D_MAX, jobs: int | None = 1) -> Certificate:
    """Run one or both enumerations and return the certified maximum.

    With ``method="both"`` the two maxima must agree; that comparison only
    makes sense for the full support range, so a restricted ``d`` range
    runs the weight-space enumeration alone.
    """
    if method not in ("weights", "expectations", "both"):
        raise ValueError("method must be 'weights', 'expectations' or 'both'")
    restricted = (d_min, d_max) != (2, D_MAX)
    wr = wc = er = ec = None
    if method in ("weights", "both") or restricted:
        wr, wc = kkt_weights_enumerate(d_min, d_max, jobs)
    if method in ("expectations", "both") and not restricted:
        er, ec = kkt_expectations_enumerate(jobs)
    for rep in (wr, er):
        flagged = 0
        if isinstance(rep, EnumerationReport):
            flagged = sum(c.needs_interval_analysis for c in rep.feasible)
        elif isinstance(rep, ExpectationsReport):
            flagged = rep.flagged
        if flagged:
            # values are family suprema; still usable, but surface it
            warnings.warn(f"{flagged} feasible families have a non-constant objective")
    if wr is not None and er is not None and wr.maximum != er.maximum:
        raise CertificationError(
            f"weights enumeration gives {wr.maximum}, expectations enumeration gives {er.maximum}"
        )
    bound = wr.maximum if wr is not None else er.maximum
    return Certificate(bound, wr, er, tuple(wc or ()), tuple(ec or ()))


def certify_local_bound(method: str = "both", d_min: int = 2, d_max: int = D_MAX, jobs: int | None = 1) -> Fraction:
    return certify(method, d_min, d_max, jobs).bound


TABLE2_REFERENCE = (
    # d, systems, consistent_eq, consistent_full, local maxima
    (2, 120, 120, 4, (Fraction(2),)),
    (3, 560, 560, 8, (Fraction(16, 7),)),
    (4, 1820, 1516, 14, (Fraction(2), Fraction(9, 4))),
    (5, 4368, 3376, 0, ()),
    (6, 8008, 1896, 4, (Fraction(2),)),
    (7, 11440, 688, 0, ()),
    (8, 12870, 154, 1, (Fraction(2),)),
    (9, 11440, 16, 0, ()),
)


def write_report_csv(report: EnumerationReport, path: str | Path) -> None:
    Path(path).write_text(report.to_csv())


def write_solutions_json(cases: Iterable[KKTCaseWeights], path: str | Path) -> None:
    Path(path).write_text(json.dumps(table1(cases), indent=2) + "\n")

