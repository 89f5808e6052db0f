"""Random generators and the acceptance registry shared by the test modules."""

from __future__ import annotations

import numpy as np

from covbell import JointDistribution, LocalDecomposition, pr_box

# criterion number -> (passed, one-line description)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, text: str) -> None:
    ACCEPTANCE[number] = (bool(passed), text)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")


def _alphabet(rng, binary: bool):
    if binary:
        return (1.0, -1.0)
    k = int(rng.integers(2, 4))
    vals = rng.uniform(-1, 1, size=k)
    if rng.uniform() < 0.5:
        vals[0] = 1.0  # endpoints show up often in practice
    return tuple(sorted(set(float(v) for v in vals), reverse=True))


def random_local_table(rng, n_x=2, n_y=2, binary=False, hidden=None):
    """Local hidden-variable model with local randomness; returns (outs_a, outs_b, table)."""
    outs_a = [_alphabet(rng, binary) for _ in range(n_x)]
    outs_b = [_alphabet(rng, binary) for _ in range(n_y)]
    hidden = hidden or int(rng.integers(1, 5))
    p = rng.dirichlet(np.ones(hidden))
    alpha = [[rng.dirichlet(np.full(len(o), 0.5)) for o in outs_a] for _ in range(hidden)]
    beta = [[rng.dirichlet(np.full(len(o), 0.5)) for o in outs_b] for _ in range(hidden)]
    table = {}
    for x in range(n_x):
        for y in range(n_y):
            block = sum(p[l] * np.outer(alpha[l][x], beta[l][y]) for l in range(hidden))
            table[(x, y)] = block / block.sum()
    return outs_a, outs_b, table


def random_distribution(rng, n_x=2, n_y=2, binary=None) -> JointDistribution:
    """Local model, or for binary 2x2 outputs sometimes a mixture with the PR box."""
    if binary is None:
        binary = bool(rng.integers(0, 2))
    outs_a, outs_b, table = random_local_table(rng, n_x, n_y, binary)
    if binary and (n_x, n_y) == (2, 2) and rng.uniform() < 0.3:
        w = rng.uniform()
        pr = pr_box()
        table = {k: (1 - w) * v + w * pr.table[k].astype(float) for k, v in table.items()}
    return JointDistribution.from_tables(outs_a, outs_b, table, exact=False)


def random_decomposition(rng, n_x=2, n_y=2) -> LocalDecomposition:
    n = 2 ** (n_x + n_y)
    d = int(rng.integers(1, n + 1))
    support = rng.choice(n, size=d, replace=False)
    q = np.zeros(n)
    q[support] = rng.dirichlet(np.full(d, 0.7))
    return LocalDecomposition(q / q.sum(), n_x, n_y)
