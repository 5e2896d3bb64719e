"""Backward slicers: statistical (over an observed graph), dynamic and static.

All three walk the same kinds of dependence and differ only in where the
arcs come from:

* register def-use (formals resolve to the actual arguments at call sites),
* control dependence on branches, plus the call site for statements that
  run whenever their function is entered,
* memory: observed/alias arcs (statistical), last writer per read
  (dynamic), or any store whose points-to set overlaps (static),
* a call depends on the returns of its callee.
"""

from __future__ import annotations

import json
from array import array
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from . import _kernels
from .alias import may_alias_deps, must_alias_deps, points_to
from .interp import Branch, CallEv, Exec, FullTrace, Read, RetEv, Write
from .ir import ParamDef, Program, StmtId, control_deps, def_use, format_stmt
from .odg import ODG, augment, prune_to_execution
from .tracing import BranchTrace, decode_branch_trace

PROVENANCES = (
    "seed", "control", "register-def", "call-return", "argument",
    "memory-observed", "memory-alias",
)


class SeedNotExecuted(ValueError):
    pass


class MissingControlArcs(ValueError):
    pass


class NoSeed(ValueError):
    pass


@dataclass(frozen=True)
class SliceMember:
    stmt: StmtId
    depth: int
    provenance: str


@dataclass(frozen=True)
class SliceReport:
    seed: StmtId
    members: tuple[SliceMember, ...]
    arcs: tuple[tuple[StmtId, StmtId, str], ...]
    mode: str
    digest: str
    unit: str = "IR statements"
    notes: tuple[str, ...] = field(default=())

    @property
    def member_set(self) -> frozenset[StmtId]:
        return frozenset(m.stmt for m in self.members)

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    def depth_of(self, stmt: StmtId) -> Optional[int]:
        for m in self.members:
            if m.stmt == stmt:
                return m.depth
        return None

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "seed": str(self.seed),
            "digest": self.digest,
            "unit": self.unit,
            "size": len(self.members),
            "arc_count": self.arc_count,
            "members": [
                {"stmt": str(m.stmt), "depth": m.depth, "provenance": m.provenance}
                for m in self.members
            ],
            "arcs": [[str(a), str(b), p] for a, b, p in self.arcs],
            "notes": list(self.notes),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    def render(self, program: Program) -> str:
        """IR listing with the slice members annotated."""
        info = {m.stmt: m for m in self.members}
        lines = [
            f"; {self.mode} slice from {self.seed}: {len(self.members)} {self.unit}",
        ]
        lines += [f"; note: {n}" for n in self.notes]
        for f in program.functions:
            lines.append(f"fun {f.name}({', '.join(f.params)}) {{")
            for b in f.blocks:
                lines.append(f"{b.label}:")
                for s in b.stmts:
                    m = info.get(s.id)
                    mark = f"[{m.depth:>2} {m.provenance:<15}]" if m else " " * 20
                    lines.append(f"{mark}  {format_stmt(s):<28} ; {s.id}")
            lines.append("}")
        return "\n".join(lines) + "\n"


Preds = Callable[[StmtId], dict[StmtId, str]]


def _bfs(seed: StmtId, preds: Preds) -> tuple[dict[StmtId, int], dict[StmtId, str], list]:
    """FIFO closure; predecessors are visited in StmtId order."""
    depth = {seed: 0}
    prov = {seed: "seed"}
    arcs = []
    queue = deque([seed])
    while queue:
        node = queue.popleft()
        for p, kind in sorted(preds(node).items()):
            arcs.append((node, p, kind))
            if p not in depth:
                depth[p] = depth[node] + 1
                prov[p] = kind
                queue.append(p)
    return depth, prov, arcs


def _report(seed, depth, prov, arcs, mode, program, notes=()) -> SliceReport:
    members = tuple(
        SliceMember(s, depth[s], prov[s]) for s in sorted(depth, key=lambda s: (depth[s], s))
    )
    return SliceReport(seed, members, tuple(sorted(arcs)), mode, program.digest, notes=tuple(notes))


class _StaticView:
    """Executed-restricted static lookups shared by the statistical and
    static slicers (``live`` is every statement for the latter)."""

    def __init__(self, program: Program, live: frozenset[StmtId]):
        self.program = program
        self.live = live
        self.du = def_use(program)
        self.cdeps = control_deps(program)
        self.call_sites: dict[int, list[StmtId]] = {}
        self.rets: dict[int, list[StmtId]] = {}
        for s in program.stmts:
            if s.kind == "call" and s.id in live:
                self.call_sites.setdefault(program.func_index[s.callee], []).append(s.id)
            elif s.kind == "ret" and s.id in live:
                self.rets.setdefault(s.id.func, []).append(s.id)

    def register_sources(self, sid: StmtId, out: dict[StmtId, str]) -> None:
        program, live = self.program, self.live
        seen = set()
        todo = [(sid, pos, "register-def") for pos, _ in program.stmt(sid).uses()]
        while todo:
            site, pos, kind = todo.pop()
            for d in self.du[(site, pos)]:
                if isinstance(d, ParamDef):
                    for call in self.call_sites.get(d.func, ()):
                        actual = program.stmt(call).operands[d.index]
                        if isinstance(actual, str) and (call, d.index) not in seen:
                            seen.add((call, d.index))
                            todo.append((call, d.index, "argument"))
                elif d in live:
                    out.setdefault(d, kind)

    def entry_callers(self, sid: StmtId, out: dict[StmtId, str]) -> None:
        if sid.func != self.program.main and sid in self.cdeps.entry_controlled:
            for call in self.call_sites.get(sid.func, ()):
                out.setdefault(call, "control")

    def callee_returns(self, sid: StmtId, out: dict[StmtId, str]) -> None:
        s = self.program.stmt(sid)
        if s.kind == "call":
            for r in self.rets.get(self.program.func_index[s.callee], ()):
                out.setdefault(r, "call-return")


def statistical_slice(
    program: Program, g: ODG, executed: Iterable[StmtId], seed: StmtId
) -> SliceReport:
    """Backward closure over an augmented observed graph, restricted to
    the statements executed by the faulty run."""
    executed = frozenset(executed)
    if seed not in executed:
        raise SeedNotExecuted(f"seed {seed} was not executed")
    view = _StaticView(program, executed)
    controls: dict[StmtId, list[StmtId]] = {}
    for c, s in g.control_arcs:
        controls.setdefault(s, []).append(c)
    for s in executed:
        for c in view.cdeps.controllers[s]:
            if c in executed and c not in controls.get(s, ()):
                raise MissingControlArcs(f"graph lacks control arc {c}->{s}")

    def preds(sid: StmtId) -> dict[StmtId, str]:
        out: dict[StmtId, str] = {}
        s = program.stmt(sid)
        for c in controls.get(sid, ()):
            out.setdefault(c, "control")
        view.entry_callers(sid, out)
        view.register_sources(sid, out)
        if s.kind == "load":
            for w, info in g.writers(sid):
                if w in executed:
                    observed = any(k.startswith("observed") for k in info.kinds)
                    out.setdefault(w, "memory-observed" if observed else "memory-alias")
        view.callee_returns(sid, out)
        return out

    notes = ["program is recursive"] if program.is_recursive() else []
    return _report(seed, *_bfs(seed, preds), "statistical", program, notes)


def static_slice(program: Program, seed: StmtId) -> SliceReport:
    """Conservative closure over the whole-program dependence graph."""
    if seed not in program.index:
        raise SeedNotExecuted(f"unknown statement {seed}")
    view = _StaticView(program, frozenset(program.index))
    writers: dict[StmtId, list[StmtId]] = {}
    for d in may_alias_deps(program):
        writers.setdefault(d.reader, []).append(d.writer)

    def preds(sid: StmtId) -> dict[StmtId, str]:
        out: dict[StmtId, str] = {}
        for c in view.cdeps.controllers[sid]:
            out.setdefault(c, "control")
        view.entry_callers(sid, out)
        view.register_sources(sid, out)
        for w in writers.get(sid, ()):
            out.setdefault(w, "memory-alias")
        view.callee_returns(sid, out)
        return out

    return _report(seed, *_bfs(seed, preds), "static", program)


class _Frame:
    __slots__ = ("regdef", "last_ctrl", "call_inst")

    def __init__(self, regdef, call_inst):
        self.regdef: dict[str, tuple[int, str]] = regdef
        self.last_ctrl: dict[StmtId, int] = {}
        self.call_inst: Optional[int] = call_inst


def dynamic_dependence_graph(program: Program, trace: FullTrace):
    """Instance-level dependence arcs of one run.

    Returns ``(instance statements, arcs)`` where each arc is
    ``(dependent instance, dependency instance, provenance)``.
    """
    cdeps = control_deps(program)
    stmt_of = program.stmt
    insts: list[StmtId] = []
    arcs: list[tuple[int, int, str]] = []
    add = arcs.append
    frames = [_Frame({}, None)]
    writer: dict[tuple[int, int], int] = {}
    cur = -1
    for e in trace.events:
        t = type(e)
        if t is Exec:
            cur = len(insts)
            sid = e.stmt
            insts.append(sid)
            fr = frames[-1]
            s = stmt_of(sid)
            for _, reg in s.uses():
                d = fr.regdef.get(reg)
                if d is not None:
                    add((cur, d[0], d[1]))
            best = -1
            for c in cdeps.controllers[sid]:
                i = fr.last_ctrl.get(c, -1)
                if i > best:
                    best = i
            if best >= 0:
                add((cur, best, "control"))
            elif fr.call_inst is not None and sid in cdeps.entry_controlled:
                add((cur, fr.call_inst, "control"))
            if s.dest and s.kind != "call":
                fr.regdef[s.dest] = (cur, "register-def")
        elif t is Branch:
            frames[-1].last_ctrl[e.stmt] = cur
        elif t is Write:
            writer[(e.loc.object, e.loc.offset)] = cur
        elif t is Read:
            w = writer.get((e.loc.object, e.loc.offset))
            if w is not None:
                add((cur, w, "memory-observed"))
        elif t is CallEv:
            caller = frames[-1]
            callee = program.function(e.callee)
            regdef = {}
            for param, actual in zip(callee.params, stmt_of(e.stmt).operands):
                if isinstance(actual, str) and actual in caller.regdef:
                    regdef[param] = (caller.regdef[actual][0], "argument")
            frames.append(_Frame(regdef, cur))
        elif t is RetEv:
            done = frames.pop()
            if frames:
                add((done.call_inst, cur, "call-return"))
                call = stmt_of(insts[done.call_inst])
                if call.dest:
                    frames[-1].regdef[call.dest] = (done.call_inst, "register-def")
    return insts, arcs


def dynamic_slice(program: Program, trace: FullTrace, seed: Optional[StmtId] = None) -> SliceReport:
    """Closure over the run's dependence instances, projected onto statements."""
    if seed is None:
        if trace.fault is None:
            raise NoSeed("no seed: run did not fault and no seed statement given")
        seed = trace.fault.stmt
    insts, arcs = dynamic_dependence_graph(program, trace)
    positions = [i for i, s in enumerate(insts) if s == seed]
    if not positions:
        raise SeedNotExecuted(f"seed {seed} was not executed")
    start = positions[-1]

    n = len(insts)
    arcs.sort(key=lambda a: a[0])
    indptr = array("i", [0]) * (n + 1)
    for src, _, _ in arcs:
        indptr[src + 1] += 1
    for i in range(n):
        indptr[i + 1] += indptr[i]
    indices = array("i", (dst for _, dst, _ in arcs))
    reached = set(_kernels.closure(indptr, indices, start))

    projected: dict[StmtId, dict[StmtId, str]] = {}
    for src, dst, kind in arcs:
        if src in reached:
            projected.setdefault(insts[src], {}).setdefault(insts[dst], kind)
    return _report(seed, *_bfs(seed, lambda s: projected.get(s, {})), "dynamic", program)


def slice_pipeline(
    program: Program, g: ODG, bt: BranchTrace, seed: Optional[StmtId] = None
) -> SliceReport:
    """Decode, prune, alias-augment and slice for one faulty run."""
    if seed is None:
        if not bt.failed or bt.seed is None:
            raise NoSeed("no seed: trace did not fault and no seed statement given")
        seed = bt.seed
    decoded = decode_branch_trace(program, bt)
    executed = decoded.executed
    pruned = prune_to_execution(g, executed)
    # Every statement of the faulty run is a node, observed arcs or not.
    pruned = replace(pruned, nodes=executed)
    alias = must_alias_deps(program, points_to(program, executed), executed)
    graph = augment(pruned, alias, decoded.control_arcs)
    return statistical_slice(program, graph, executed, seed)
