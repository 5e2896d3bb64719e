"""Inclusion-based points-to analysis restricted to executed statements.

Allocation-site abstraction, flow- and context-insensitive.  Only
statements in the ``executed`` set generate constraints, so passing the
faulty run's executed statements gives the execution-driven variant and
passing every statement gives the conventional whole-program analysis.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

from .ir import Program, StmtId
from .tracing import DataDep


class AbstractObject(NamedTuple):
    site: StmtId
    region: str

    def __str__(self) -> str:
        return f"{self.region}@{self.site}"


Var = tuple[int, str]  # (function index, register)


@dataclass(frozen=True)
class PointsToSets:
    pts: dict[Var, frozenset[AbstractObject]]
    scope: frozenset[StmtId]

    def __getitem__(self, var: Var) -> frozenset[AbstractObject]:
        return self.pts.get(var, frozenset())


def points_to(program: Program, executed: Iterable[StmtId]) -> PointsToSets:
    executed = frozenset(executed)
    stmts = [s for s in program.stmts if s.id in executed]

    # Nodes are register variables ("r", func, reg) or object contents ("o", obj).
    pts: dict[tuple, set[AbstractObject]] = defaultdict(set)
    succ: dict[tuple, set[tuple]] = defaultdict(set)
    loads: dict[tuple, list[tuple]] = defaultdict(list)   # pointer -> load dests
    stores: dict[tuple, list[tuple]] = defaultdict(list)  # pointer -> stored values
    worklist: deque[tuple] = deque()
    variables: set[Var] = set()

    def reg(f: int, name) -> tuple | None:
        return ("r", f, name) if isinstance(name, str) else None

    def add_edge(src: tuple, dst: tuple) -> None:
        if dst in succ[src]:
            return
        succ[src].add(dst)
        if pts[src] - pts[dst]:
            pts[dst] |= pts[src]
            worklist.append(dst)

    rets_by_func: dict[int, list] = defaultdict(list)
    for s in stmts:
        if s.kind == "ret" and s.operands and isinstance(s.operands[0], str):
            rets_by_func[s.id.func].append(s.operands[0])

    for s in stmts:
        f = s.id.func
        if s.dest:
            variables.add((f, s.dest))
        k = s.kind
        if k == "alloc":
            node = reg(f, s.dest)
            pts[node].add(AbstractObject(s.id, s.op))  # type: ignore[arg-type]
            worklist.append(node)
        elif k in ("copy", "getptr"):
            src = reg(f, s.operands[0])
            if src is not None:
                add_edge(src, reg(f, s.dest))
        elif k == "load":
            loads[reg(f, s.operands[0])].append(reg(f, s.dest))
        elif k == "store":
            value = reg(f, s.operands[2])
            if value is not None:
                stores[reg(f, s.operands[0])].append(value)
        elif k == "call":
            callee = program.func_index[s.callee]
            params = program.functions[callee].params
            for param, actual in zip(params, s.operands):
                variables.add((callee, param))
                src = reg(f, actual)
                if src is not None:
                    add_edge(src, ("r", callee, param))
            if s.dest:
                for ret_reg in rets_by_func[callee]:
                    add_edge(("r", callee, ret_reg), reg(f, s.dest))

    while worklist:
        node = worklist.popleft()
        for obj in list(pts[node]):
            content = ("o", obj)
            for dst in loads.get(node, ()):
                add_edge(content, dst)
            for src in stores.get(node, ()):
                add_edge(src, content)
        for dst in list(succ[node]):
            if pts[node] - pts[dst]:
                pts[dst] |= pts[node]
                worklist.append(dst)

    return PointsToSets(
        {v: frozenset(pts.get(("r",) + v, ())) for v in sorted(variables)},
        executed,
    )


TOP = object()  # offset not provably constant


def pointer_offsets(program: Program, executed: Iterable[StmtId]) -> dict[Var, object]:
    """Constant word offset of each pointer register relative to its object.

    Registers whose offset depends on a dynamic value, a memory load, a call
    result or a formal parameter map to ``TOP``.
    """
    executed = frozenset(executed)
    defs = [s for s in program.stmts if s.id in executed and s.dest]
    offsets: dict[Var, object] = {}
    for f in range(len(program.functions)):
        for p in program.functions[f].params:
            offsets[(f, p)] = TOP

    def join(var: Var, value: object) -> bool:
        old = offsets.get(var)
        if old is None:
            new = value
        elif old is TOP or value is TOP or old != value:
            new = TOP
        else:
            return False
        if new is old:
            return False
        offsets[var] = new
        return True

    changed = True
    while changed:
        changed = False
        for s in defs:
            f = s.id.func
            if s.kind == "alloc":
                value: object = 0
            elif s.kind == "getptr":
                base = offsets.get((f, s.operands[0]))
                off = s.operands[1]
                if base is None:
                    continue
                value = base + off if base is not TOP and isinstance(off, int) else TOP
            elif s.kind == "copy" and isinstance(s.operands[0], str):
                value = offsets.get((f, s.operands[0]))
                if value is None:
                    continue
            else:
                value = TOP
            changed |= join((f, s.dest), value)
    return offsets


def _access_offset(offsets, f: int, ptr: str, off) -> Optional[int]:
    base = offsets.get((f, ptr))
    if base is None or base is TOP or not isinstance(off, int):
        return None
    return base + off


def must_alias_deps(
    program: Program, pts: PointsToSets, executed: Iterable[StmtId]
) -> frozenset[DataDep]:
    """(store, load) pairs whose pointers must reach the same abstract word."""
    executed = frozenset(executed)
    offsets = pointer_offsets(program, executed)
    stores, loads = [], []
    for s in program.stmts:
        if s.id not in executed or s.kind not in ("store", "load"):
            continue
        f = s.id.func
        objs = pts[(f, s.operands[0])]
        if len(objs) != 1:
            continue
        off = _access_offset(offsets, f, s.operands[0], s.operands[1])
        if off is None:
            continue
        (obj,) = objs
        (stores if s.kind == "store" else loads).append((s.id, obj, off))
    deps = set()
    for w, wobj, woff in stores:
        for r, robj, roff in loads:
            if wobj == robj and woff == roff:
                deps.add(DataDep(w, r, f"alias-{wobj.region}"))
    return frozenset(deps)


def may_alias_deps(program: Program) -> frozenset[DataDep]:
    """(store, load) pairs whose whole-program points-to sets intersect."""
    if "may_alias" in program.cache:
        return program.cache["may_alias"]
    pts = points_to(program, (s.id for s in program.stmts))
    stores = [s for s in program.stmts if s.kind == "store"]
    loads = [s for s in program.stmts if s.kind == "load"]
    deps = set()
    for w in stores:
        wp = pts[(w.id.func, w.operands[0])]
        for r in loads:
            common = wp & pts[(r.id.func, r.operands[0])]
            if common:
                region = "heap" if any(o.region == "heap" for o in common) else "stack"
                deps.add(DataDep(w.id, r.id, f"alias-{region}"))
    result = frozenset(deps)
    program.cache["may_alias"] = result
    return result
