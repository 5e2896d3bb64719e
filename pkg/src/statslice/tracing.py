"""Runtime monitors: compressed branch traces and heap dependence tracing.

Branch traces mimic a hardware tracer: one taken/not-taken bit per
conditional branch and one target packet per return.  Data dependences are
gathered by poisoning a random subset of heap objects at allocation time and
recording last-writer/reader statement pairs on poisoned objects only.
"""

from __future__ import annotations

import json
import random
from array import array
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Optional

from . import _kernels
from .interp import Alloc, Branch, ContextKey, FullTrace, Read, RetEv, Write
from .ir import Program, StmtId, control_deps

GAMMA = 0.5
RATE_MIN = 1.0 / 65536
DECODE_BUDGET = 10**6

DEP_KINDS = ("observed-heap", "observed-stack", "alias-stack", "alias-heap")


class DecodeError(ValueError):
    """Branch trace and program disagree."""


@dataclass(frozen=True, order=True)
class DataDep:
    writer: StmtId
    reader: StmtId
    kind: str = "observed-heap"
    count: int = field(default=1, compare=False)

    @property
    def pair(self) -> tuple[StmtId, StmtId]:
        return (self.writer, self.reader)


# -- branch traces -------------------------------------------------------------


@dataclass(frozen=True)
class BranchTrace:
    """Packets are ``("T", 0|1)`` per conditional branch and ``("I", target)``
    per return, where target is the return-to statement or ``"exit"``."""

    entry: str
    packets: tuple[tuple[str, object], ...]
    run_id: int = 0
    failed: bool = False
    seed: Optional[StmtId] = None
    digest: str = ""

    def to_json(self) -> dict:
        return {
            "entry": self.entry,
            "packets": [list(p) for p in self.packets],
            "run_id": self.run_id,
            "failed": self.failed,
            "seed": str(self.seed) if self.seed is not None else None,
            "digest": self.digest,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "BranchTrace":
        packets = []
        for kind, value in d["packets"]:
            if kind not in ("T", "I"):
                raise DecodeError(f"unknown packet type {kind!r}")
            packets.append((kind, value))
        seed = d.get("seed")
        return cls(
            d["entry"], tuple(packets), d.get("run_id", 0), d.get("failed", False),
            StmtId.parse(seed) if seed else None, d.get("digest", ""),
        )


def encode_branch_trace(trace: FullTrace) -> BranchTrace:
    packets: list[tuple[str, object]] = []
    for e in trace.events:
        t = type(e)
        if t is Branch:
            packets.append(("T", int(e.taken)))
        elif t is RetEv:
            packets.append(("I", str(e.return_to) if e.return_to is not None else "exit"))
    seed = trace.fault.stmt if trace.fault is not None else None
    return BranchTrace("main", tuple(packets), trace.run_id, trace.failed, seed, trace.digest)


@dataclass(frozen=True)
class DecodedTrace:
    block_sequence: list[tuple[int, int]]
    executed: frozenset[StmtId]
    control_arcs: frozenset[tuple[StmtId, StmtId]]


def decode_branch_trace(program: Program, bt: BranchTrace) -> DecodedTrace:
    """Replay the program along the recorded packets.

    A failed trace stops at the first visit of its seed once every packet
    has been consumed.
    """
    if bt.digest and bt.digest != program.digest:
        raise DecodeError("branch trace recorded for a different program")
    if bt.entry not in program.func_index:
        raise DecodeError(f"unknown entry function {bt.entry}")
    functions = program.functions
    packets = bt.packets
    npk = len(packets)
    k = 0
    blocks: list[tuple[int, int]] = []
    executed: set[StmtId] = set()
    # Shadow call stack of return-to statements.
    stack: list[StmtId] = []
    f, b, i = program.func_index[bt.entry], 0, 0
    for _ in range(DECODE_BUDGET):
        s = functions[f].blocks[b].stmts[i]
        sid = s.id
        executed.add(sid)
        if i == 0:
            blocks.append((f, b))
        if bt.failed and k == npk and sid == bt.seed:
            break
        kind = s.kind
        if kind == "branch":
            if k == npk:
                raise DecodeError(f"packets exhausted at branch {sid}")
            ptype, bit = packets[k]
            k += 1
            if ptype != "T":
                raise DecodeError(f"expected TNT packet at {sid}, got {ptype}")
            b = functions[f].block_index(s.targets[0 if bit else 1])
            i = 0
        elif kind == "jump":
            b, i = functions[f].block_index(s.targets[0]), 0
        elif kind == "call":
            stack.append(program.next_stmt(sid))
            f, b, i = program.func_index[s.callee], 0, 0
        elif kind == "ret":
            if k == npk:
                raise DecodeError(f"packets exhausted at return {sid}")
            ptype, target = packets[k]
            k += 1
            expected = str(stack[-1]) if stack else "exit"
            if ptype != "I" or target != expected:
                raise DecodeError(f"return at {sid}: expected TIP {expected}, got {ptype} {target}")
            if not stack:
                if k != npk:
                    raise DecodeError("packets remain after program exit")
                break
            f, b, i = stack.pop()
        elif kind == "fail":
            raise DecodeError(f"reached fail at {sid} in a trace that does not end there")
        else:
            i += 1
    else:
        raise DecodeError("decode budget exceeded")
    if bt.failed and sid != bt.seed:
        raise DecodeError("trace ended before its fault statement")
    cdeps = control_deps(program)
    arcs = frozenset(
        (c, s) for s in executed for c in cdeps.controllers[s] if c in executed
    )
    return DecodedTrace(blocks, frozenset(executed), arcs)


# -- memory columns ----------------------------------------------------------


class MemoryColumns(NamedTuple):
    ops: array
    stmts: array
    objs: array
    locs: array
    n_locs: int
    # Per object, in allocation order.
    regions: list[str]
    sites: list[StmtId]
    contexts: list[ContextKey]


def memory_columns(program: Program, trace: FullTrace) -> MemoryColumns:
    """Columnar view of the trace's memory events, cached on the trace."""
    cached = trace._columns
    if cached is not None and cached[0] is program:
        return cached[1]
    index = program.index
    ops, stmts, objs, locs = array("b"), array("i"), array("i"), array("i")
    bases: list[int] = []
    regions: list[str] = []
    sites: list[StmtId] = []
    contexts: list[ContextKey] = []
    n_locs = 0
    for e in trace.events:
        t = type(e)
        if t is Read or t is Write:
            loc = e.loc
            ops.append(1 if t is Read else 0)
            stmts.append(index[e.stmt])
            objs.append(loc.object)
            locs.append(bases[loc.object] + loc.offset)
        elif t is Alloc:
            bases.append(n_locs)
            n_locs += e.size
            regions.append(e.region)
            sites.append(e.stmt)
            contexts.append(e.context)
    cols = MemoryColumns(ops, stmts, objs, locs, n_locs, regions, sites, contexts)
    trace._columns = (program, cols)
    return cols


def _scan(program: Program, cols: MemoryColumns, mask: bytes, groups: array):
    n_groups = max(groups) + 1 if len(groups) else 1
    return _kernels.scan_deps(
        cols.ops, cols.stmts, cols.objs, cols.locs, cols.n_locs, mask, groups,
        len(program.stmts), n_groups,
    )


def full_data_deps(program: Program, trace: FullTrace) -> frozenset[DataDep]:
    """Exact last-writer to reader statement pairs for every read."""
    cols = memory_columns(program, trace)
    n_obj = len(cols.regions)
    mask = bytes([1]) * n_obj
    groups = array("i", (0 if r == "heap" else 1 for r in cols.regions))
    ws, rs, gs, cs = _scan(program, cols, mask, groups)
    stmts = program.stmts
    return frozenset(
        DataDep(stmts[w].id, stmts[r].id, "observed-heap" if g == 0 else "observed-stack", c)
        for w, r, g, c in zip(ws, rs, gs, cs)
    )


def heap_deps(deps: Iterable[DataDep]) -> frozenset[DataDep]:
    return frozenset(d for d in deps if d.kind == "observed-heap")


# -- adaptive sampling -------------------------------------------------------


class SampleKey(NamedTuple):
    """Allocation context: allocation site plus the two innermost call sites."""

    site: StmtId
    context: ContextKey

    def __str__(self) -> str:
        return f"{self.site}@{self.context}"

    @classmethod
    def parse(cls, text: str) -> "SampleKey":
        site, ctx = text.split("@")
        return cls(StmtId.parse(site), ContextKey.parse(ctx))


@dataclass(frozen=True)
class SamplerState:
    """Per-client sampling rates.  ``fixed`` pins every context and disables
    adaptation; ``seen`` is the client's cumulative dependence set."""

    rates: Mapping[SampleKey, float] = field(default_factory=dict)
    gamma: float = GAMMA
    rate_min: float = RATE_MIN
    seed: int = 0
    fixed: Optional[float] = None
    runs: int = 0
    seen: frozenset[tuple[StmtId, StmtId]] = frozenset()

    def rate(self, key: SampleKey) -> float:
        if self.fixed is not None:
            return self.fixed
        return self.rates.get(key, 1.0)

    def to_json(self) -> dict:
        return {
            "rates": {str(k): v for k, v in sorted(self.rates.items())},
            "gamma": self.gamma,
            "rate_min": self.rate_min,
            "seed": self.seed,
            "fixed": self.fixed,
            "runs": self.runs,
            "seen": sorted([str(w), str(r)] for w, r in self.seen),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "SamplerState":
        return cls(
            rates={SampleKey.parse(k): v for k, v in d.get("rates", {}).items()},
            gamma=d.get("gamma", GAMMA),
            rate_min=d.get("rate_min", RATE_MIN),
            seed=d.get("seed", 0),
            fixed=d.get("fixed"),
            runs=d.get("runs", 0),
            seen=frozenset(
                (StmtId.parse(w), StmtId.parse(r)) for w, r in d.get("seen", [])
            ),
        )


def adapt_rate(state: SamplerState, key: SampleKey, found_new_dep: bool) -> SamplerState:
    if state.fixed is not None:
        return state
    rates = dict(state.rates)
    if found_new_dep:
        rates[key] = 1.0
    else:
        rates[key] = max(state.rate(key) * state.gamma, state.rate_min)
    return replace(state, rates=rates)


@dataclass(frozen=True)
class SampleResult:
    deps: frozenset[DataDep]
    state: SamplerState
    poisoned: frozenset[int]
    tags: dict[int, int]


def sampled_data_deps(program: Program, trace: FullTrace, state: SamplerState) -> SampleResult:
    """Observe dependences through poisoned heap objects for one run.

    Each heap allocation is poisoned with its context's current rate; the
    pointer keeps its tag for the object's lifetime, so every derived
    pointer stays observed.  Rates adapt once per context at run end.
    """
    cols = memory_columns(program, trace)
    rng = random.Random(f"{state.seed}/{state.runs}")
    n_obj = len(cols.regions)
    mask = bytearray(n_obj)
    tags: dict[int, int] = {}
    keys = [SampleKey(site, ctx) for site, ctx in zip(cols.sites, cols.contexts)]
    key_ids: dict[SampleKey, int] = {}
    heap_keys: set[SampleKey] = set()
    groups = array("i", [0]) * n_obj
    for obj, (region, key) in enumerate(zip(cols.regions, keys)):
        groups[obj] = key_ids.setdefault(key, len(key_ids))
        if region != "heap":
            continue
        heap_keys.add(key)
        if rng.random() < state.rate(key):
            mask[obj] = 1
            tags[obj] = rng.randint(0x0001, 0xFFFE)
    ws, rs, gs, cs = _scan(program, cols, bytes(mask), groups)

    stmts = program.stmts
    counts: dict[tuple[StmtId, StmtId], int] = {}
    new_in_group: set[int] = set()
    for w, r, g, c in zip(ws, rs, gs, cs):
        pair = (stmts[w].id, stmts[r].id)
        counts[pair] = counts.get(pair, 0) + c
        if pair not in state.seen:
            new_in_group.add(g)
    deps = frozenset(DataDep(w, r, "observed-heap", c) for (w, r), c in counts.items())

    new_state = state
    for key, g in sorted(key_ids.items(), key=lambda kv: str(kv[0])):
        if key in heap_keys:
            new_state = adapt_rate(new_state, key, g in new_in_group)
    new_state = replace(
        new_state, runs=state.runs + 1, seen=state.seen | frozenset(counts)
    )
    return SampleResult(deps, new_state, frozenset(tags), tags)


def deps_to_json(deps: Iterable[DataDep]) -> list[dict]:
    return [
        {"writer": str(d.writer), "reader": str(d.reader), "kind": d.kind, "count": d.count}
        for d in sorted(deps)
    ]


def deps_from_json(items: Iterable[Mapping]) -> frozenset[DataDep]:
    return frozenset(
        DataDep(StmtId.parse(d["writer"]), StmtId.parse(d["reader"]), d["kind"], d.get("count", 1))
        for d in items
    )


def dump_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(obj, fp, indent=1, sort_keys=False)
        fp.write("\n")
