import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import S
from statslice import odg
from statslice.interp import execute
from statslice.ir import StmtId
from statslice.odg import ConsistencyError, ProgramMismatch
from statslice.tracing import DataDep, full_data_deps


def cooperative_p1(p1):
    g = odg.empty(p1.digest)
    for run_id, vec in enumerate(([1], [0])):
        t = execute(p1, vec)
        g = odg.add_run(g, full_data_deps(p1, t), t.executed(), run_id, p1.digest)
    return g


def test_add_run_p1(p1):
    t1 = execute(p1, [1])
    g = odg.add_run(odg.empty(), full_data_deps(p1, t1), t1.executed(), 1, p1.digest)
    assert g.nodes == {S(k) for k in range(1, 7)}
    assert {k: v.count for k, v in g.data_arcs.items()} == {(S(2), S(5)): 1}
    t0 = execute(p1, [0])
    g = odg.add_run(g, full_data_deps(p1, t0), t0.executed(), 2, p1.digest)
    assert g.nodes == {S(k) for k in range(1, 10)}
    assert g.arc_set == {(S(2), S(5))}
    assert g.runs_total == 2


def test_add_run_rejects_foreign_endpoints(p1):
    with pytest.raises(ConsistencyError):
        odg.add_run(odg.empty(), [DataDep(S(7), S(5))], {S(5)}, 0)


def test_prune_p1(p1):
    g = odg.prune_to_execution(cooperative_p1(p1), {S(k) for k in range(1, 7)})
    assert g.arc_set == {(S(2), S(5))}
    assert not {S(7), S(8), S(9)} & g.nodes


def test_augment_p1(p1):
    g = odg.prune_to_execution(cooperative_p1(p1), {S(k) for k in range(1, 7)})
    aug = odg.augment(g, [DataDep(S(2), S(5), "alias-heap")], {(S(4), S(5)), (S(4), S(6))})
    assert aug.control_arcs == {(S(4), S(5)), (S(4), S(6))}
    info = aug.data_arcs[(S(2), S(5))]
    assert info.kinds == {"observed-heap", "alias-heap"}
    with pytest.raises(ConsistencyError):
        odg.augment(g, [DataDep(S(7), S(5), "alias-heap")], ())
    with pytest.raises(ConsistencyError):
        odg.augment(g, (), {(S(4), S(9))})


def test_merge_mismatch():
    with pytest.raises(ProgramMismatch):
        odg.merge(odg.empty("a" * 16), odg.empty("b" * 16))


def test_json_round_trip(p1):
    g = cooperative_p1(p1)
    assert odg.from_json(odg.to_json(g)) == g
    with pytest.raises(ValueError):
        odg.from_json({"kind": "deps"})


def test_writers_index(p1):
    g = cooperative_p1(p1)
    assert [w for w, _ in g.writers(S(5))] == [S(2)]
    assert g.writers(S(6)) == []


STMTS = [StmtId(0, b, i) for b in range(3) for i in range(3)]


@st.composite
def graphs(draw):
    g = odg.empty("d" * 16)
    for run in range(draw(st.integers(0, 3))):
        executed = set(draw(st.lists(st.sampled_from(STMTS), min_size=1, max_size=6)))
        ex = sorted(executed)
        deps = [
            DataDep(draw(st.sampled_from(ex)), draw(st.sampled_from(ex)), "observed-heap", draw(st.integers(1, 3)))
            for _ in range(draw(st.integers(0, 4)))
        ]
        g = odg.add_run(g, deps, executed, draw(st.integers(0, 99)))
    return g


def canon(g):
    return odg.to_json(g)


@settings(max_examples=100, deadline=None)
@given(graphs(), graphs(), graphs())
def test_merge_algebra(a, b, c):
    assert canon(odg.merge(a, b)) == canon(odg.merge(b, a))
    assert canon(odg.merge(odg.merge(a, b), c)) == canon(odg.merge(a, odg.merge(b, c)))
    assert canon(odg.merge(a, odg.empty())) == canon(a)


def test_partition_invariance(small_corpus):
    rng = random.Random(0)
    for e in small_corpus[:10]:
        runs = []
        for k, vec in enumerate(e.inputs * 2):
            t = execute(e.program, vec)
            runs.append((full_data_deps(e.program, t), t.executed(), k))
        whole = odg.empty(e.program.digest)
        for deps, ex, k in runs:
            whole = odg.add_run(whole, deps, ex, k, e.program.digest)
        rng.shuffle(runs)
        cut = rng.randrange(len(runs) + 1)
        parts = []
        for chunk in (runs[:cut], runs[cut:]):
            g = odg.empty(e.program.digest)
            for deps, ex, k in chunk:
                g = odg.add_run(g, deps, ex, k, e.program.digest)
            parts.append(g)
        assert canon(odg.merge(*parts)) == canon(whole)
