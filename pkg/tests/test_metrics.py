import pytest
from hypothesis import given, strategies as st

from conftest import S
from statslice.evaluation.metrics import (
    NOT_FOUND,
    EmptyGroundTruth,
    NonPositiveTime,
    coverage_cdf,
    expected_overhead,
    failure_path,
    path_recovery,
    recovery_rate,
    root_cause_distance,
)
from statslice.interp import execute
from statslice.slicer import dynamic_slice

TRAP_COST = 1.8e-6  # seconds per trapped dereference


def test_recovery_full_and_partial():
    stmts = set(range(130))
    assert recovery_rate(stmts, stmts) == 1.0
    assert recovery_rate(set("abcd"), set("bcde")) == 0.75
    assert recovery_rate(set(), {1}) == 0.0
    with pytest.raises(EmptyGroundTruth):
        recovery_rate({1}, set())


def test_root_cause_distance_p1(p1):
    dyn = dynamic_slice(p1, execute(p1, [1]))
    # BFS order: s6 | s4 s5 | s1 s2 s3
    assert root_cause_distance(dyn, {S(2)}) == 5
    assert root_cause_distance(dyn, {S(6)}) == 1
    assert root_cause_distance(dyn, {S(7)}) is NOT_FOUND
    assert failure_path(dyn, {S(2)}) == {S(6), S(4), S(5), S(1), S(2)}
    assert failure_path(dyn, {S(7)}) == frozenset()
    assert path_recovery(dyn.member_set - {S(1)}, dyn, {S(2)}) == 4 / 5


def test_coverage_cdf():
    assert coverage_cdf([{1}, {2}, {1, 2}], {1, 2}) == [0.5, 1.0, 1.0]
    assert coverage_cdf([{9}, {1}], {1, 2}) == [0.0, 0.5]
    with pytest.raises(EmptyGroundTruth):
        coverage_cdf([{1}], set())


@given(st.lists(st.sets(st.integers(0, 9)), max_size=20), st.sets(st.integers(0, 9), min_size=1))
def test_coverage_cdf_monotone(runs, ref):
    cdf = coverage_cdf(runs, ref)
    assert all(0.0 <= a <= b <= 1.0 for a, b in zip(cdf, cdf[1:]))


def test_overhead_hand_values():
    assert expected_overhead(TRAP_COST, 27_778, 1.0) == pytest.approx(1.0500004, rel=1e-12)
    assert round(expected_overhead(TRAP_COST, 27_778, 1.0), 2) == 1.05
    assert expected_overhead(TRAP_COST, 0, 1.0) == 1.0
    assert expected_overhead(TRAP_COST, 1_000_000, 1.0) == pytest.approx(2.8, rel=1e-12)
    assert expected_overhead(TRAP_COST, 1_000_000, 2.0) == pytest.approx(1.9, rel=1e-12)
    for t in (0.0, -1.0):
        with pytest.raises(NonPositiveTime):
            expected_overhead(TRAP_COST, 1, t)


@given(st.floats(0, 1e-3), st.integers(0, 10**7), st.integers(0, 10**7), st.floats(1e-3, 1e3))
def test_overhead_affine(cost, a, b, time):
    f = lambda n: expected_overhead(cost, n, time)
    assert f(0) == 1.0
    assert f(a + b) - 1 == pytest.approx((f(a) - 1) + (f(b) - 1), rel=1e-9, abs=1e-12)
