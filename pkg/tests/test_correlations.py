import json
import math
import warnings
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covbell import (
    DistributionError,
    JointDistribution,
    SignallingError,
    SignallingWarning,
    binarize,
    correlators,
    covariance,
    deterministic_mixture,
    from_binary_correlators,
    load_distribution,
    pearson,
    pr_box,
    rchsh,
    save_distribution,
    uniform_distribution,
)
from covbell.correlations import Correlators, parse_strategy_label
from covbell.localset import ternary_rchsh_distribution, ternary_rchsh_value
from helpers import random_distribution, random_local_table

DATA = Path(__file__).resolve().parents[1] / "data"


def moment_oracle(dist):
    """Direct sum over all events, independent of the vectorized path."""
    n_x, n_y = dist.n_x, dist.n_y
    exy = np.zeros((n_x, n_y), dtype=object)
    ex = [0] * n_x
    ey = [0] * n_y
    ex2 = [0] * n_x
    ey2 = [0] * n_y
    for x in range(n_x):
        for y in range(n_y):
            for i, a in enumerate(dist.outcomes_a[x]):
                for j, b in enumerate(dist.outcomes_b[y]):
                    p = dist.table[(x, y)][i, j]
                    exy[x, y] += p * a * b
                    if y == 0:
                        ex[x] += p * a
                        ex2[x] += p * a * a
                    if x == 0:
                        ey[y] += p * b
                        ey2[y] += p * b * b
    return exy, ex, ey, ex2, ey2


def test_pr_box_moments():
    c = correlators(pr_box())
    assert c.exy.tolist() == [[1, 1], [1, -1]]
    assert list(c.ex) == list(c.ey) == [0, 0]


def test_deterministic_point_mass():
    c = correlators(deterministic_mixture([(F(1), "++/++")]))
    assert np.all(c.exy == 1) and np.all(c.ex == 1) and np.all(c.ey == 1)
    for x in range(2):
        for y in range(2):
            assert covariance(c, x, y) == 0
            assert pearson(c, x, y) == 0.0


def test_uniform_table():
    c = correlators(uniform_distribution())
    assert np.all(c.exy == 0) and np.all(c.ex == 0) and np.all(c.ey == 0)
    assert np.all(c.ex2 == 1) and np.all(c.ey2 == 1)


def test_covariance_examples():
    c = Correlators.from_moments([[1, 0], [0, 0]], [0, 0], [0, 0])
    assert covariance(c, 0, 0) == 1
    p_opt = load_distribution(DATA / "p_opt.json")
    c = correlators(p_opt)
    assert (c.exy[0, 0], c.ex[0], c.ey[0]) == (1, F(-1, 7), F(-1, 7))
    assert covariance(c, 0, 0) == F(48, 49)


def test_pearson_equals_covariance_for_unbiased_binary():
    c = correlators(from_binary_correlators([[0.3, -0.2], [0.5, 0.1]], [0, 0], [0, 0]))
    for x in range(2):
        for y in range(2):
            assert pearson(c, x, y) == pytest.approx(float(covariance(c, x, y)), abs=1e-15)
            assert pearson(c, x, y) == pytest.approx(c.exy[x, y], abs=1e-15)


def test_pearson_zero_variance_threshold():
    # sigma ~ 1e-12 is treated as zero
    tiny = 1e-24
    c = Correlators.from_moments([[1, 0], [0, 0]], [1 - tiny / 2, 0], [0, 0])
    assert pearson(c, 0, 0) == 0.0


def test_pearson_epsilon_family():
    eps = 0.5
    dist = ternary_rchsh_distribution(eps)
    exy, ex, ey, ex2, ey2 = moment_oracle(dist)
    c = correlators(dist)
    r00 = (exy[0, 0] - ex[0] * ey[0]) / math.sqrt((ex2[0] - ex[0] ** 2) * (ey2[0] - ey[0] ** 2))
    assert pearson(c, 0, 0) == pytest.approx(r00, abs=1e-12)
    assert rchsh(c) == pytest.approx(2 * (1 + math.sqrt(1 - eps)) / math.sqrt(2 - eps), abs=1e-12)
    assert rchsh(c) == pytest.approx(ternary_rchsh_value(eps), abs=1e-12)


def test_index_errors():
    c = correlators(pr_box())
    with pytest.raises(IndexError):
        covariance(c, 2, 0)
    with pytest.raises(IndexError):
        pearson(c, 0, -1)


# validation -----------------------------------------------------------------


def _binary(table):
    return JointDistribution.from_tables([(1, -1)] * 2, [(1, -1)] * 2, table)


def test_normalization_error():
    t = {k: [[0.25, 0.25], [0.25, 0.25]] for k in ((0, 0), (0, 1), (1, 0), (1, 1))}
    t[(1, 1)] = [[0.3, 0.25], [0.25, 0.25]]
    with pytest.raises(DistributionError, match="sums to"):
        _binary(t)


def test_negative_entry_reports_position():
    t = {k: [[0.25, 0.25], [0.25, 0.25]] for k in ((0, 0), (0, 1), (1, 0), (1, 1))}
    t[(0, 1)] = [[0.5, 0.0], [0.75, -0.25]]
    with pytest.raises(DistributionError, match="row 1, column 1"):
        _binary(t)


def test_outcome_range_and_shape():
    t = {k: [[0.5, 0.5]] for k in ((0, 0),)}
    with pytest.raises(DistributionError, match="lie in"):
        JointDistribution.from_tables([(2,)], [(1, -1)], t)
    with pytest.raises(DistributionError, match="shape"):
        JointDistribution.from_tables([(1, -1)], [(1, -1)], t)
    with pytest.raises(DistributionError, match="missing"):
        JointDistribution.from_tables([(1, -1)], [(1, -1), (1, -1)], {(0, 0): [[0.5, 0], [0, 0.5]]})


def _signalling(delta):
    t = {k: [[0.25, 0.25], [0.25, 0.25]] for k in ((0, 0), (0, 1), (1, 0), (1, 1))}
    t[(0, 1)] = [[0.25 + delta, 0.25], [0.25 - delta, 0.25]]
    return t


def test_signalling_error_and_warning():
    with pytest.raises(SignallingError):
        _binary(_signalling(1e-6))
    with pytest.warns(SignallingWarning):
        _binary(_signalling(1e-10))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _binary(_signalling(1e-14))


def test_random_tables_are_valid():
    rng = np.random.default_rng(1)
    for _ in range(200):
        outs_a, outs_b, table = random_local_table(rng, n_x=3, n_y=2)
        JointDistribution.from_tables(outs_a, outs_b, table)


# serialization ------------------------------------------------------------------


def test_json_round_trip_exact(tmp_path):
    dist = load_distribution(DATA / "p_opt.json")
    assert dist.exact
    save_distribution(dist, tmp_path / "d.json")
    again = load_distribution(tmp_path / "d.json")
    assert again.exact
    for k in dist.table:
        assert again.table[k].tolist() == dist.table[k].tolist()


def test_json_round_trip_float(tmp_path):
    dist = random_distribution(np.random.default_rng(3), binary=False)
    save_distribution(dist, tmp_path / "d.json")
    again = load_distribution(tmp_path / "d.json")
    for k in dist.table:
        assert np.array_equal(again.table[k], dist.table[k])


def test_malformed_documents(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(DistributionError, match="invalid JSON"):
        load_distribution(bad)
    doc = json.loads((DATA / "pr_box.json").read_text())
    del doc["table"]
    with pytest.raises(DistributionError, match="malformed"):
        JointDistribution.from_json_dict(doc)
    doc = json.loads((DATA / "pr_box.json").read_text())
    doc["table"]["zero"] = doc["table"].pop("0,0")
    with pytest.raises(DistributionError, match="bad table key"):
        JointDistribution.from_json_dict(doc)


def test_strategy_labels():
    assert parse_strategy_label("(+-/0+)") == ((1, -1), (0, 1))
    with pytest.raises(ValueError):
        parse_strategy_label("++")


def test_immutable():
    dist = pr_box()
    with pytest.raises(ValueError):
        dist.table[(0, 0)][0, 0] = 0


# binarize and invariants ------------------------------------------------------


def test_binarize_fixed_point():
    dist = load_distribution(DATA / "p_opt.json")
    b = binarize(dist)
    for k in dist.table:
        assert b.table[k].tolist() == dist.table[k].tolist()


def test_binarize_ternary_example():
    dist = deterministic_mixture([(F(4, 9), "++/+0"), (F(4, 9), "+-/0+"), (F(1, 9), "00/--")])
    b = binarize(dist)
    exy, ex, ey, _, _ = moment_oracle(dist)
    c1 = correlators(b)
    for x in range(2):
        for y in range(2):
            assert covariance(c1, x, y) == exy[x, y] - ex[x] * ey[y]


def test_moments_match_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        dist = random_distribution(rng, n_x=3, n_y=2)
        c = correlators(dist)
        exy, ex, ey, ex2, ey2 = moment_oracle(dist)
        assert np.allclose(c.exy, exy.astype(float), atol=1e-13)
        assert np.allclose(c.ex, ex, atol=1e-13) and np.allclose(c.ey, ey, atol=1e-13)
        assert np.allclose(c.ex2, ex2, atol=1e-13) and np.allclose(c.ey2, ey2, atol=1e-13)
        assert np.all(c.ex2 >= c.ex**2 - 1e-13) and np.all(np.abs(c.pearsons()) <= 1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5), st.integers(0, 1))
def test_covariance_translation_invariant(seed, shift, x):
    rng = np.random.default_rng(seed)
    outs_a, outs_b, table = random_local_table(rng)
    # shift input x of Alice, staying inside [-1, 1]
    lo, hi = min(outs_a[x]), max(outs_a[x])
    shift = max(-1 - lo, min(1 - hi, shift))
    moved = list(outs_a)
    moved[x] = tuple(v + shift for v in outs_a[x])
    c0 = correlators(JointDistribution.from_tables(outs_a, outs_b, table))
    c1 = correlators(JointDistribution.from_tables(moved, outs_b, table))
    assert np.allclose(c0.covariances(), c1.covariances(), atol=1e-12)
    assert np.allclose(c0.pearsons(), c1.pearsons(), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_binarize_is_valid_and_keeps_first_moments(seed):
    dist = random_distribution(np.random.default_rng(seed), n_x=2, n_y=3)
    b = binarize(dist)  # validation runs in the constructor
    c0, c1 = correlators(dist), correlators(b)
    assert np.allclose(c0.exy, c1.exy, atol=1e-12)
    assert np.allclose(c0.ex, c1.ex, atol=1e-12) and np.allclose(c0.ey, c1.ey, atol=1e-12)
    assert np.all(np.abs(c1.pearsons()) <= np.abs(c0.pearsons()) + 1e-12)
