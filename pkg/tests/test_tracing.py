import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import S
from statslice.interp import ROOT_CONTEXT, execute
from statslice.ir import StmtId, parse_program
from statslice.tracing import (
    GAMMA,
    RATE_MIN,
    BranchTrace,
    DataDep,
    DecodeError,
    SampleKey,
    SamplerState,
    adapt_rate,
    decode_branch_trace,
    deps_from_json,
    deps_to_json,
    encode_branch_trace,
    full_data_deps,
    heap_deps,
    sampled_data_deps,
)


def test_encode_p1(p1):
    bt = encode_branch_trace(execute(p1, [1]))
    assert bt.packets == (("T", 1),)
    assert bt.failed and bt.seed == S(6)
    bt0 = encode_branch_trace(execute(p1, [0]))
    assert bt0.packets == (("T", 0), ("I", "exit"))
    assert not bt0.failed and bt0.seed is None


def test_encode_straight_line():
    p = parse_program("fun main() {\nb0:\n  x = const 1\n  ret x\n}\n")
    assert encode_branch_trace(execute(p)).packets == (("I", "exit"),)


def test_decode_p1(p1):
    d = decode_branch_trace(p1, encode_branch_trace(execute(p1, [1])))
    assert d.block_sequence == [(0, 0), (0, 1)]
    assert d.executed == {S(k) for k in range(1, 7)}
    assert d.control_arcs == {(S(4), S(5)), (S(4), S(6))}
    d0 = decode_branch_trace(p1, encode_branch_trace(execute(p1, [0])))
    assert d0.block_sequence == [(0, 0), (0, 2), (0, 3)]
    assert d0.executed == {S(k) for k in (1, 2, 3, 4, 7, 8, 9)}


def test_decode_errors(p1):
    bt = encode_branch_trace(execute(p1, [0]))
    with pytest.raises(DecodeError, match="exhausted"):
        decode_branch_trace(p1, BranchTrace("main", (), digest=bt.digest))
    with pytest.raises(DecodeError, match="remain"):
        decode_branch_trace(p1, BranchTrace("main", bt.packets + (("T", 1),), digest=bt.digest))
    with pytest.raises(DecodeError, match="expected TNT"):
        decode_branch_trace(p1, BranchTrace("main", (("I", "exit"),), digest=bt.digest))
    with pytest.raises(DecodeError, match="different program"):
        decode_branch_trace(p1, BranchTrace("main", bt.packets, digest="0" * 16))
    with pytest.raises(DecodeError, match="fail"):
        decode_branch_trace(p1, BranchTrace("main", (("T", 1),), digest=bt.digest))
    with pytest.raises(DecodeError, match="unknown packet"):
        BranchTrace.from_json({"entry": "main", "packets": [["X", 1]]})


def test_branch_trace_json(p1):
    bt = encode_branch_trace(execute(p1, [1], run_id=4))
    assert BranchTrace.from_json(bt.to_json()) == bt
    assert bt.to_json()["packets"] == [["T", 1]]


def test_round_trip_with_calls(small_corpus):
    for e in small_corpus:
        for vec in e.inputs:
            t = execute(e.program, vec)
            d = decode_branch_trace(e.program, encode_branch_trace(t))
            assert d.block_sequence == t.block_sequence()
            assert d.executed == t.executed()


def test_full_deps_p1(p1):
    assert full_data_deps(p1, execute(p1, [1])) == {DataDep(S(2), S(5))}
    assert full_data_deps(p1, execute(p1, [0])) == frozenset()


def test_full_deps_per_read_and_stack():
    p = parse_program(
        "fun main() {\nb0:\n  p = alloc 1, heap\n  store p[0], 1\n  a = load p[0]\n"
        "  b = load p[0]\n  s = alloc 1, stack\n  store s[0], a\n  c = load s[0]\n  ret c\n}\n"
    )
    deps = full_data_deps(p, execute(p))
    st_ = lambda i: StmtId(0, 0, i)
    assert {(d.writer, d.reader, d.kind) for d in deps} == {
        (st_(1), st_(2), "observed-heap"),
        (st_(1), st_(3), "observed-heap"),
        (st_(5), st_(6), "observed-stack"),
    }
    assert heap_deps(deps) == {DataDep(st_(1), st_(2)), DataDep(st_(1), st_(3))}


def test_sampled_p1(p1):
    r = sampled_data_deps(p1, execute(p1, [1]), SamplerState())
    assert r.deps == {DataDep(S(2), S(5))}
    assert r.poisoned == {0}
    r0 = sampled_data_deps(p1, execute(p1, [0]), SamplerState())
    assert r0.deps == frozenset()


def test_rate_zero_observes_nothing(small_corpus):
    for e in small_corpus:
        t = execute(e.program, e.failing_input)
        assert sampled_data_deps(e.program, t, SamplerState(fixed=0.0)).deps == frozenset()


def test_adapt_rate_examples():
    key = SampleKey(S(1), ROOT_CONTEXT)
    s = SamplerState()
    assert GAMMA == 0.5 and RATE_MIN == 1 / 65536
    assert adapt_rate(s, key, False).rate(key) == 0.5
    assert adapt_rate(SamplerState(rates={key: 0.25}), key, True).rate(key) == 1.0
    floor = SamplerState(rates={key: RATE_MIN})
    assert adapt_rate(floor, key, False).rate(key) == RATE_MIN
    assert adapt_rate(SamplerState(fixed=0.3), key, False).rate(key) == 0.3


def test_p1_adaptation(p1):
    r = sampled_data_deps(p1, execute(p1, [0]), SamplerState())
    assert list(r.state.rates.values()) == [0.5]
    # A new dependence keeps the context at full rate; a repeat halves it.
    r1 = sampled_data_deps(p1, execute(p1, [1]), SamplerState())
    assert list(r1.state.rates.values()) == [1.0]
    assert r1.state.seen == {(S(2), S(5))}
    r2 = sampled_data_deps(p1, execute(p1, [1]), r1.state)
    assert r2.deps == r1.deps
    assert list(r2.state.rates.values()) == [0.5]


def test_sampler_state_json(small_corpus):
    e = small_corpus[0]
    state = SamplerState(seed=5)
    for vec in e.inputs:
        state = sampled_data_deps(e.program, execute(e.program, vec), state).state
    assert SamplerState.from_json(state.to_json()) == state


def test_deps_json():
    deps = {DataDep(S(2), S(5), "observed-heap", 3), DataDep(S(7), S(5), "alias-heap")}
    back = deps_from_json(deps_to_json(deps))
    assert back == deps
    assert {d.count for d in back} == {3, 1}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 29), st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_sampling_soundness_and_determinism(small_corpus, idx, seed, rate):
    e = small_corpus[idx]
    t = execute(e.program, e.failing_input)
    state = SamplerState(seed=seed, rates={})
    r = sampled_data_deps(e.program, t, state)
    pairs = {d.pair for d in r.deps}
    assert pairs <= {d.pair for d in heap_deps(full_data_deps(e.program, t))}
    assert sampled_data_deps(e.program, t, state) == r
    fixed = sampled_data_deps(e.program, t, SamplerState(seed=seed, fixed=rate))
    assert {d.pair for d in fixed.deps} <= {d.pair for d in heap_deps(full_data_deps(e.program, t))}


def test_full_rate_completeness(small_corpus):
    for e in small_corpus:
        for vec in e.inputs:
            t = execute(e.program, vec)
            r = sampled_data_deps(e.program, t, SamplerState(fixed=1.0))
            assert r.deps == heap_deps(full_data_deps(e.program, t))


def test_repeated_input_converges(small_corpus):
    rng = random.Random(3)
    for e in small_corpus:
        vec = rng.choice(e.inputs)
        t = execute(e.program, vec)
        full = {d.pair for d in heap_deps(full_data_deps(e.program, t))}
        state, seen = SamplerState(seed=rng.randrange(1000)), set()
        for _ in range(200):
            r = sampled_data_deps(e.program, t, state)
            state = r.state
            seen |= {d.pair for d in r.deps}
            if seen == full:
                break
        assert seen == full


def test_rates_stay_in_range(small_corpus):
    e = small_corpus[1]
    state = SamplerState()
    for k in range(100):
        state = sampled_data_deps(e.program, execute(e.program, e.inputs[k % len(e.inputs)]), state).state
        assert all(RATE_MIN <= r <= 1.0 for r in state.rates.values())
