import csv
import io

import pytest

from covbell.reproduce import TargetResult, reproduce, reproduce_fig1, reproduce_fig2


def test_fig2_small():
    res = reproduce_fig2(steps=41)
    assert res.passed, res.diff_report()
    rows = list(csv.reader(io.StringIO(next(iter(res.artifacts.values())))))
    assert rows[0] == ["c", "min_shannon", "min_max_entropy"] and len(rows) == 42


def test_fig1_coarse():
    res = reproduce_fig1(directions=24)
    assert res.passed, res.diff_report()


def test_table1():
    res = reproduce("table1")
    assert res.passed and "table1.json" in res.artifacts


def test_diff_report_lists_failures():
    res = TargetResult("x")
    res.check("good", 1, 1, True)
    res.check("bad", "16/7", "2", False)
    assert not res.passed
    assert res.diff_report() == "x: bad: expected 16/7, got 2"


def test_unknown_target():
    with pytest.raises(ValueError, match="unknown target"):
        reproduce("fig9")
