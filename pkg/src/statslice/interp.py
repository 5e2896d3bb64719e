"""Deterministic reference interpreter producing full event traces."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Optional, Union

from .ir import Program, StmtId

DEFAULT_STEP_BUDGET = 10**6
WORD_MASK = (1 << 64) - 1
ADDR_MASK = (1 << 48) - 1
TAG_MIN, TAG_MAX = 0x0001, 0xFFFE
NO_SITE = None  # padding for call stacks shallower than two frames


class ResourceLimit(RuntimeError):
    """Raised when a run exceeds its step budget (likely nontermination)."""


class ContextKey(NamedTuple):
    """The two innermost call sites at allocation time."""

    inner: Optional[StmtId]
    outer: Optional[StmtId]

    def __str__(self) -> str:
        return "|".join(str(s) if s is not None else "-" for s in self)

    @classmethod
    def parse(cls, text: str) -> "ContextKey":
        parts = [None if p == "-" else StmtId.parse(p) for p in text.split("|")]
        return cls(*parts)


ROOT_CONTEXT = ContextKey(None, None)


class MemLoc(NamedTuple):
    object: int
    offset: int
    region: str
    alloc_site: StmtId
    alloc_context: ContextKey


class Pointer(NamedTuple):
    object: int
    offset: int


# Events.  The first field of each is the statement it belongs to.
class Exec(NamedTuple):
    stmt: StmtId


class Branch(NamedTuple):
    stmt: StmtId
    taken: bool


class Read(NamedTuple):
    stmt: StmtId
    loc: MemLoc


class Write(NamedTuple):
    stmt: StmtId
    loc: MemLoc


class Alloc(NamedTuple):
    stmt: StmtId
    object: int
    size: int
    region: str
    context: ContextKey
    tag: int = 0


class FreeEv(NamedTuple):
    stmt: StmtId
    object: int


class CallEv(NamedTuple):
    stmt: StmtId
    callee: str


class RetEv(NamedTuple):
    stmt: StmtId
    return_to: Optional[StmtId]  # None when main returns


class Fault(NamedTuple):
    stmt: StmtId
    reason: str


Event = Union[Exec, Branch, Read, Write, Alloc, FreeEv, CallEv, RetEv, Fault]


@dataclass
class FullTrace:
    run_id: int
    input: tuple[int, ...]
    events: list
    digest: str = ""
    failed: bool = False
    fault: Optional[Fault] = None
    _columns: object = field(default=None, repr=False, compare=False)

    def executed(self) -> set[StmtId]:
        return {e.stmt for e in self.events if type(e) is Exec}

    def block_sequence(self) -> list[tuple[int, int]]:
        return [
            (e.stmt.func, e.stmt.block)
            for e in self.events
            if type(e) is Exec and e.stmt.index == 0
        ]

    def exec_sequence(self) -> list[StmtId]:
        return [e.stmt for e in self.events if type(e) is Exec]


class _Object:
    __slots__ = ("size", "region", "site", "context", "cells", "freed")

    def __init__(self, size, region, site, context):
        self.size = size
        self.region = region
        self.site = site
        self.context = context
        self.cells = [None] * size
        self.freed = False


class _Frame:
    __slots__ = ("func", "regs", "stack_objects", "call_stmt", "pos")

    def __init__(self, func, regs, call_stmt):
        self.func = func
        self.regs = regs
        self.stack_objects: list[int] = []
        self.call_stmt = call_stmt
        self.pos = (0, 0)


class _Fault(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _word(x: int) -> int:
    x &= WORD_MASK
    return x - (1 << 64) if x >> 63 else x


def _binop(op: str, a, b) -> int:
    if type(a) is Pointer or type(b) is Pointer:
        raise _Fault("pointer arithmetic")
    if op == "add":
        return _word(a + b)
    if op == "sub":
        return _word(a - b)
    if op == "mul":
        return _word(a * b)
    if op in ("div", "mod"):
        if b == 0:
            raise _Fault("division by zero")
        return _word(a // b if op == "div" else a % b)
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "lt":
        return int(a < b)
    if op == "le":
        return int(a <= b)
    if op == "gt":
        return int(a > b)
    if op == "ge":
        return int(a >= b)
    if op == "eq":
        return int(a == b)
    if op == "ne":
        return int(a != b)
    if op == "min":
        return min(a, b)
    if op == "max":
        return max(a, b)
    raise ValueError(op)


def execute(
    program: Program,
    inputs: Iterable[int] = (),
    run_id: int = 0,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> FullTrace:
    """Run ``main`` and record every event.  Missing inputs read as 0."""
    inputs = tuple(inputs)
    trace = FullTrace(run_id, inputs, [], program.digest)
    events = trace.events
    emit = events.append
    objects: list[_Object] = []
    next_input = 0
    frames = [_Frame(program.main, {}, None)]
    functions = program.functions
    steps = 0

    def value(regs, operand):
        return regs[operand] if type(operand) is str else operand

    def access(regs, ptr_reg, off_operand) -> tuple[_Object, MemLoc]:
        ptr = regs[ptr_reg]
        if type(ptr) is not Pointer:
            raise _Fault("null dereference" if ptr == 0 else "invalid pointer")
        off = value(regs, off_operand)
        if type(off) is Pointer:
            raise _Fault("pointer arithmetic")
        obj = objects[ptr.object]
        if obj.freed:
            raise _Fault("use after free")
        offset = ptr.offset + off
        if not 0 <= offset < obj.size:
            raise _Fault("out of bounds")
        return obj, MemLoc(ptr.object, offset, obj.region, obj.site, obj.context)

    while True:
        frame = frames[-1]
        func = functions[frame.func]
        b, i = frame.pos
        s = func.blocks[b].stmts[i]
        sid = s.id
        steps += 1
        if steps > step_budget:
            raise ResourceLimit(f"step budget {step_budget} exceeded")
        emit(Exec(sid))
        regs = frame.regs
        kind = s.kind
        ops = s.operands
        try:
            if kind == "binop":
                regs[s.dest] = _binop(s.op, value(regs, ops[0]), value(regs, ops[1]))
            elif kind == "load":
                obj, loc = access(regs, ops[0], ops[1])
                cell = obj.cells[loc.offset]
                if cell is None:
                    raise _Fault("uninitialized read")
                emit(Read(sid, loc))
                regs[s.dest] = cell
            elif kind == "store":
                obj, loc = access(regs, ops[0], ops[1])
                obj.cells[loc.offset] = value(regs, ops[2])
                emit(Write(sid, loc))
            elif kind == "branch":
                cond = value(regs, ops[0])
                taken = cond != 0
                emit(Branch(sid, taken))
                frame.pos = (func.block_index(s.targets[0 if taken else 1]), 0)
                continue
            elif kind == "jump":
                frame.pos = (func.block_index(s.targets[0]), 0)
                continue
            elif kind == "const":
                regs[s.dest] = ops[0]
            elif kind == "copy":
                regs[s.dest] = value(regs, ops[0])
            elif kind == "input":
                regs[s.dest] = inputs[next_input] if next_input < len(inputs) else 0
                next_input += 1
            elif kind == "getptr":
                base = regs[ops[0]]
                off = value(regs, ops[1])
                if type(base) is not Pointer or type(off) is Pointer:
                    raise _Fault("invalid pointer arithmetic")
                regs[s.dest] = Pointer(base.object, base.offset + off)
            elif kind == "alloc":
                size = value(regs, ops[0])
                if type(size) is Pointer or size < 1:
                    raise _Fault("bad allocation size")
                context = ContextKey(
                    frames[-1].call_stmt,
                    frames[-2].call_stmt if len(frames) > 1 else NO_SITE,
                )
                obj_id = len(objects)
                objects.append(_Object(size, s.op, sid, context))
                if s.op == "stack":
                    frame.stack_objects.append(obj_id)
                emit(Alloc(sid, obj_id, size, s.op, context))
                regs[s.dest] = Pointer(obj_id, 0)
            elif kind == "free":
                ptr = regs[ops[0]]
                if type(ptr) is not Pointer:
                    raise _Fault("null dereference" if ptr == 0 else "invalid pointer")
                obj = objects[ptr.object]
                if obj.region != "heap" or ptr.offset != 0:
                    raise _Fault("invalid free")
                if obj.freed:
                    raise _Fault("double free")
                obj.freed = True
                emit(FreeEv(sid, ptr.object))
            elif kind == "call":
                callee_index = program.func_index[s.callee]
                callee = functions[callee_index]
                args = {p: value(regs, a) for p, a in zip(callee.params, ops)}
                emit(CallEv(sid, s.callee))
                frame.pos = (b, i + 1)
                new = _Frame(callee_index, args, sid)
                frames.append(new)
                continue
            elif kind == "ret":
                result = value(regs, ops[0]) if ops else 0
                for obj_id in frame.stack_objects:
                    objects[obj_id].freed = True
                    emit(FreeEv(sid, obj_id))
                frames.pop()
                if not frames:
                    emit(RetEv(sid, None))
                    return trace
                caller = frames[-1]
                call = functions[caller.func].blocks[caller.pos[0]].stmts[caller.pos[1] - 1]
                emit(RetEv(sid, program.next_stmt(call.id)))
                if call.dest:
                    caller.regs[call.dest] = result
                continue
            elif kind == "fail":
                raise _Fault("fail")
        except _Fault as fault:
            trace.failed = True
            trace.fault = Fault(sid, fault.reason)
            emit(trace.fault)
            return trace
        frame.pos = (b, i + 1)


def address_render(loc: MemLoc, tag: int = 0, salt: int = 0) -> int:
    """Display address of ``loc``: salted low 48 bits, tag in the top 16.

    Purely cosmetic; dependence matching never looks at rendered addresses.
    """
    if not (tag == 0 or TAG_MIN <= tag <= TAG_MAX):
        raise ValueError(f"tag {tag:#x} out of range")
    seed = hashlib.sha256(f"{salt}".encode()).digest()
    base = int.from_bytes(seed[:6], "little") & ~0xFFF
    low = (base + (loc.object << 12) + 8 * loc.offset) & ADDR_MASK
    return low | (tag << 48)


# -- JSON Lines serialization --------------------------------------------------


def _loc_fields(loc: MemLoc) -> dict:
    return {
        "obj": loc.object,
        "off": loc.offset,
        "region": loc.region,
        "site": str(loc.alloc_site),
        "ctx": str(loc.alloc_context),
    }


def event_to_json(e) -> dict:
    t = type(e)
    base = {"ev": t.__name__.lower().removesuffix("ev"), "stmt": str(e.stmt)}
    if t is Branch:
        base["taken"] = e.taken
    elif t in (Read, Write):
        base.update(_loc_fields(e.loc))
    elif t is Alloc:
        base.update(
            obj=e.object, size=e.size, region=e.region, ctx=str(e.context), tag=e.tag
        )
    elif t is FreeEv:
        base["obj"] = e.object
    elif t is CallEv:
        base["callee"] = e.callee
    elif t is RetEv:
        base["to"] = str(e.return_to) if e.return_to is not None else "exit"
    elif t is Fault:
        base["reason"] = e.reason
    return base


def event_from_json(d: dict):
    ev = d["ev"]
    sid = StmtId.parse(d["stmt"])
    if ev == "exec":
        return Exec(sid)
    if ev == "branch":
        return Branch(sid, d["taken"])
    if ev in ("read", "write"):
        loc = MemLoc(
            d["obj"], d["off"], d["region"], StmtId.parse(d["site"]),
            ContextKey.parse(d["ctx"]),
        )
        return (Read if ev == "read" else Write)(sid, loc)
    if ev == "alloc":
        return Alloc(sid, d["obj"], d["size"], d["region"], ContextKey.parse(d["ctx"]), d["tag"])
    if ev == "free":
        return FreeEv(sid, d["obj"])
    if ev == "call":
        return CallEv(sid, d["callee"])
    if ev == "ret":
        return RetEv(sid, None if d["to"] == "exit" else StmtId.parse(d["to"]))
    if ev == "fault":
        return Fault(sid, d["reason"])
    raise ValueError(f"unknown event {ev!r}")


def dump_trace(trace: FullTrace, fp: IO[str]) -> None:
    header = {
        "run_id": trace.run_id,
        "input": list(trace.input),
        "failed": trace.failed,
        "digest": trace.digest,
    }
    fp.write(json.dumps(header) + "\n")
    for e in trace.events:
        fp.write(json.dumps(event_to_json(e)) + "\n")


def load_trace(fp: IO[str]) -> FullTrace:
    header = json.loads(fp.readline())
    events = [event_from_json(json.loads(line)) for line in fp if line.strip()]
    fault = events[-1] if events and type(events[-1]) is Fault else None
    return FullTrace(
        header["run_id"], tuple(header["input"]), events, header.get("digest", ""),
        header["failed"], fault,
    )
