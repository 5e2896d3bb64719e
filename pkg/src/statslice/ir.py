"""Textual mini-IR: parser, printer, validation, CFG and static dependences.

Programs are lists of functions made of labelled basic blocks.  Each
statement gets a stable :class:`StmtId` ``f:b:i`` (function, block and
instruction ordinals), which is the node universe for every graph in the
package.

Example::

    fun main() {
    b0:
      x = alloc 1, heap
      store x[0], 7
      c = input
      br c, b1, b2
    ...
    }
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

Operand = Union[str, int]

BINOPS = frozenset(
    "add sub mul div mod and or xor lt le gt ge eq ne min max".split()
)
TERMINATORS = frozenset({"branch", "jump", "ret", "fail"})
REGIONS = ("heap", "stack")


class StmtId(NamedTuple):
    func: int
    block: int
    index: int

    def __str__(self) -> str:
        return f"{self.func}:{self.block}:{self.index}"

    @classmethod
    def parse(cls, text: str) -> "StmtId":
        try:
            f, b, i = (int(part) for part in text.split(":"))
        except ValueError:
            raise ValueError(f"bad statement id {text!r}") from None
        return cls(f, b, i)


class ParamDef(NamedTuple):
    """Pseudo-definition of a formal parameter at function entry."""

    func: int
    index: int

    def __str__(self) -> str:
        return f"{self.func}:param{self.index}"


Def = Union[StmtId, ParamDef]


class IRSyntaxError(SyntaxError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.msg = message
        self.lineno = line
        self.offset = column


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Statement:
    """One IR statement.

    Operand layout per kind: ``const (value)``, ``binop (a, b)`` with
    ``op``, ``copy (a)``, ``input ()``, ``alloc (size)`` with ``op`` the
    region, ``free (ptr)``, ``load (ptr, off)``, ``store (ptr, off, value)``,
    ``getptr (base, off)``, ``branch (cond)``, ``call (actuals...)``,
    ``ret``/``fail`` ``(value?)``.
    """

    id: StmtId
    kind: str
    dest: str | None = None
    operands: tuple[Operand, ...] = ()
    targets: tuple[str, ...] = ()
    callee: str | None = None
    op: str | None = None
    line: int = 0

    @property
    def is_terminator(self) -> bool:
        return self.kind in TERMINATORS

    def uses(self) -> Iterator[tuple[int, str]]:
        """Yield ``(operand position, register)`` for every register read."""
        if self.kind == "const":
            return
        for pos, operand in enumerate(self.operands):
            if isinstance(operand, str):
                yield pos, operand

    @property
    def pointer(self) -> str | None:
        if self.kind in ("load", "store", "free", "getptr"):
            return self.operands[0]  # type: ignore[return-value]
        return None


@dataclass(frozen=True)
class BasicBlock:
    label: str
    stmts: tuple[Statement, ...]

    @property
    def terminator(self) -> Statement:
        return self.stmts[-1]


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    blocks: tuple[BasicBlock, ...]

    def block_index(self, label: str) -> int:
        for i, block in enumerate(self.blocks):
            if block.label == label:
                return i
        raise KeyError(label)


@dataclass(frozen=True, eq=False)
class Program:
    functions: tuple[Function, ...]
    # Derived analyses are memoised here; the program itself never changes.
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        stmts = [s for f in self.functions for b in f.blocks for s in b.stmts]
        object.__setattr__(self, "stmts", tuple(stmts))
        object.__setattr__(self, "index", {s.id: n for n, s in enumerate(stmts)})
        object.__setattr__(
            self, "func_index", {f.name: n for n, f in enumerate(self.functions)}
        )

    stmts: tuple[Statement, ...] = field(init=False, repr=False, compare=False)
    index: dict = field(init=False, repr=False, compare=False)
    func_index: dict = field(init=False, repr=False, compare=False)

    def stmt(self, sid: StmtId) -> Statement:
        return self.stmts[self.index[sid]]

    def function(self, name: str) -> Function:
        return self.functions[self.func_index[name]]

    def next_stmt(self, sid: StmtId) -> StmtId:
        return StmtId(sid.func, sid.block, sid.index + 1)

    def block_of(self, sid: StmtId) -> BasicBlock:
        return self.functions[sid.func].blocks[sid.block]

    @property
    def main(self) -> int:
        return self.func_index["main"]

    @property
    def digest(self) -> str:
        if "digest" not in self.cache:
            text = print_program(self)
            self.cache["digest"] = hashlib.sha256(text.encode()).hexdigest()[:16]
        return self.cache["digest"]

    def call_sites(self, func: int) -> list[StmtId]:
        name = self.functions[func].name
        return [s.id for s in self.stmts if s.kind == "call" and s.callee == name]

    def returns(self, func: int) -> list[StmtId]:
        return [s.id for s in self.stmts if s.id.func == func and s.kind == "ret"]

    def is_recursive(self) -> bool:
        graph: dict[str, set[str]] = {f.name: set() for f in self.functions}
        for s in self.stmts:
            if s.kind == "call":
                graph[self.functions[s.id.func].name].add(s.callee)  # type: ignore[arg-type]
        for start in graph:
            seen: set[str] = set()
            stack = list(graph[start])
            while stack:
                name = stack.pop()
                if name == start:
                    return True
                if name not in seen:
                    seen.add(name)
                    stack.extend(graph[name])
        return False


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(-?\d+)|([A-Za-z_][A-Za-z0-9_.]*)|(\S))")


class _Tokens:
    def __init__(self, text: str, line: int):
        self.line = line
        self.items: list[tuple[str, object, int]] = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:  # only trailing whitespace left
                break
            col = m.start(m.lastindex) + 1  # type: ignore[arg-type]
            if m.group(1) is not None:
                self.items.append(("int", int(m.group(1)), col))
            elif m.group(2) is not None:
                self.items.append(("name", m.group(2), col))
            else:
                self.items.append(("punct", m.group(3), col))
            pos = m.end()
        self.items.append(("eol", None, len(text) + 1))
        self.pos = 0

    def peek(self) -> tuple[str, object, int]:
        return self.items[self.pos]

    def error(self, message: str) -> IRSyntaxError:
        return IRSyntaxError(message, self.line, self.peek()[2])

    def next(self) -> tuple[str, object, int]:
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def name(self, what: str = "name") -> str:
        kind, value, _ = self.peek()
        if kind != "name":
            raise self.error(f"expected {what}")
        self.pos += 1
        return value  # type: ignore[return-value]

    def operand(self) -> Operand:
        kind, value, _ = self.peek()
        if kind not in ("name", "int"):
            raise self.error("expected register or integer")
        self.pos += 1
        return value  # type: ignore[return-value]

    def punct(self, char: str) -> None:
        kind, value, _ = self.peek()
        if kind != "punct" or value != char:
            raise self.error(f"expected {char!r}")
        self.pos += 1

    def accept(self, char: str) -> bool:
        kind, value, _ = self.peek()
        if kind == "punct" and value == char:
            self.pos += 1
            return True
        return False

    def end(self) -> None:
        if self.peek()[0] != "eol":
            raise self.error("unexpected trailing input")


def _parse_stmt(toks: _Tokens) -> dict:
    """Parse one statement line into constructor keywords (id assigned later)."""
    kind, first, _ = toks.peek()
    if kind != "name":
        raise toks.error("expected statement")
    # Statements with a destination look like `reg = ...`.
    if toks.items[1][0] == "punct" and toks.items[1][1] == "=":
        dest = toks.name()
        toks.punct("=")
        word = toks.name("operation")
        if word == "const":
            value = toks.next()
            if value[0] != "int":
                toks.pos -= 1
                raise toks.error("expected integer")
            return dict(kind="const", dest=dest, operands=(value[1],))
        if word in BINOPS:
            a = toks.operand()
            toks.punct(",")
            b = toks.operand()
            return dict(kind="binop", dest=dest, op=word, operands=(a, b))
        if word == "copy":
            return dict(kind="copy", dest=dest, operands=(toks.operand(),))
        if word == "input":
            return dict(kind="input", dest=dest)
        if word == "alloc":
            size = toks.operand()
            toks.punct(",")
            region = toks.name("region")
            if region not in REGIONS:
                toks.pos -= 1
                raise toks.error("region must be heap or stack")
            return dict(kind="alloc", dest=dest, op=region, operands=(size,))
        if word == "load":
            ptr = toks.name("pointer register")
            toks.punct("[")
            off = toks.operand()
            toks.punct("]")
            return dict(kind="load", dest=dest, operands=(ptr, off))
        if word == "getptr":
            ptr = toks.name("pointer register")
            toks.punct(",")
            return dict(kind="getptr", dest=dest, operands=(ptr, toks.operand()))
        if word == "call":
            return _parse_call(toks, dest)
        toks.pos -= 1
        raise toks.error(f"unknown operation {word!r}")
    word = toks.name()
    if word == "store":
        ptr = toks.name("pointer register")
        toks.punct("[")
        off = toks.operand()
        toks.punct("]")
        toks.punct(",")
        return dict(kind="store", operands=(ptr, off, toks.operand()))
    if word == "free":
        return dict(kind="free", operands=(toks.name("pointer register"),))
    if word == "br":
        cond = toks.operand()
        toks.punct(",")
        then = toks.name("label")
        toks.punct(",")
        other = toks.name("label")
        return dict(kind="branch", operands=(cond,), targets=(then, other))
    if word == "jmp":
        return dict(kind="jump", targets=(toks.name("label"),))
    if word == "call":
        return _parse_call(toks, None)
    if word in ("ret", "fail"):
        if toks.peek()[0] == "eol":
            return dict(kind=word)
        return dict(kind=word, operands=(toks.operand(),))
    toks.pos -= 1
    raise toks.error(f"unknown statement {word!r}")


def _parse_call(toks: _Tokens, dest: str | None) -> dict:
    callee = toks.name("function name")
    toks.punct("(")
    args: list[Operand] = []
    if not toks.accept(")"):
        args.append(toks.operand())
        while toks.accept(","):
            args.append(toks.operand())
        toks.punct(")")
    return dict(kind="call", dest=dest, callee=callee, operands=tuple(args))


def parse_program(text: str) -> Program:
    """Parse and validate IR source text."""
    functions: list[Function] = []
    func: dict | None = None
    block: dict | None = None

    def close_block() -> None:
        nonlocal block
        if block is not None:
            func["blocks"].append(block)  # type: ignore[index]
            block = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        if not line.strip():
            continue
        toks = _Tokens(line, lineno)
        kind, value, _ = toks.peek()
        if func is None:
            if (kind, value) != ("name", "fun"):
                raise toks.error("expected 'fun'")
            toks.next()
            name = toks.name("function name")
            toks.punct("(")
            params: list[str] = []
            if not toks.accept(")"):
                params.append(toks.name("parameter"))
                while toks.accept(","):
                    params.append(toks.name("parameter"))
                toks.punct(")")
            toks.punct("{")
            toks.end()
            func = dict(name=name, params=tuple(params), blocks=[], line=lineno)
            continue
        if kind == "punct" and value == "}":
            toks.next()
            toks.end()
            close_block()
            functions.append(_build_function(func, len(functions)))
            func = None
            continue
        if kind == "name" and toks.items[1][0] == "punct" and toks.items[1][1] == ":":
            close_block()
            toks.pos = 2
            toks.end()
            block = dict(label=value, stmts=[], line=lineno)
            continue
        if block is None:
            raise toks.error("statement outside of a block")
        parsed = _parse_stmt(toks)
        toks.end()
        parsed["line"] = lineno
        block["stmts"].append(parsed)
    if func is not None:
        raise IRSyntaxError("unterminated function body", func["line"], 1)
    program = Program(tuple(functions))
    validate(program)
    return program


def _build_function(func: dict, findex: int) -> Function:
    blocks = []
    for bindex, block in enumerate(func["blocks"]):
        stmts = tuple(
            Statement(id=StmtId(findex, bindex, i), **kw)
            for i, kw in enumerate(block["stmts"])
        )
        blocks.append(BasicBlock(block["label"], stmts))
    return Function(func["name"], func["params"], tuple(blocks))


# -- printing ----------------------------------------------------------------


def format_stmt(s: Statement) -> str:
    ops = s.operands
    k = s.kind
    if k == "const":
        return f"{s.dest} = const {ops[0]}"
    if k == "binop":
        return f"{s.dest} = {s.op} {ops[0]}, {ops[1]}"
    if k == "copy":
        return f"{s.dest} = copy {ops[0]}"
    if k == "input":
        return f"{s.dest} = input"
    if k == "alloc":
        return f"{s.dest} = alloc {ops[0]}, {s.op}"
    if k == "free":
        return f"free {ops[0]}"
    if k == "load":
        return f"{s.dest} = load {ops[0]}[{ops[1]}]"
    if k == "store":
        return f"store {ops[0]}[{ops[1]}], {ops[2]}"
    if k == "getptr":
        return f"{s.dest} = getptr {ops[0]}, {ops[1]}"
    if k == "branch":
        return f"br {ops[0]}, {s.targets[0]}, {s.targets[1]}"
    if k == "jump":
        return f"jmp {s.targets[0]}"
    if k == "call":
        call = f"call {s.callee}({', '.join(str(a) for a in ops)})"
        return f"{s.dest} = {call}" if s.dest else call
    if k in ("ret", "fail"):
        return f"{k} {ops[0]}" if ops else k
    raise ValueError(k)


def print_program(program: Program) -> str:
    lines = []
    for f in program.functions:
        lines.append(f"fun {f.name}({', '.join(f.params)}) {{")
        for b in f.blocks:
            lines.append(f"{b.label}:")
            lines.extend(f"  {format_stmt(s)}" for s in b.stmts)
        lines.append("}")
    return "\n".join(lines) + "\n"


# -- validation --------------------------------------------------------------


def validate(program: Program) -> None:
    names = [f.name for f in program.functions]
    if "main" not in names:
        raise ValidationError("missing main")
    if len(set(names)) != len(names):
        raise ValidationError("duplicate function name")
    if program.function("main").params:
        raise ValidationError("main must take no parameters")
    for f in program.functions:
        if len(set(f.params)) != len(f.params):
            raise ValidationError(f"duplicate parameter in {f.name}")
        if not f.blocks:
            raise ValidationError(f"function {f.name} has no blocks")
        labels = [b.label for b in f.blocks]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate label in {f.name}")
        for b in f.blocks:
            if not b.stmts or not b.stmts[-1].is_terminator:
                raise ValidationError(f"block {b.label} in {f.name} lacks a terminator")
            for s in b.stmts[:-1]:
                if s.is_terminator:
                    raise ValidationError(
                        f"terminator before end of block {b.label} (line {s.line})"
                    )
            for s in b.stmts:
                for target in s.targets:
                    if target not in labels:
                        raise ValidationError(f"undefined label {target}")
                if s.kind == "call":
                    if s.callee not in program.func_index:
                        raise ValidationError(f"undefined function {s.callee}")
                    arity = len(program.function(s.callee).params)
                    if arity != len(s.operands):
                        raise ValidationError(
                            f"call to {s.callee} with {len(s.operands)} args, expected {arity}"
                        )
    for findex, cfg in enumerate(build_cfg(program)):
        unreachable = set(range(len(cfg.succ))) - cfg.reachable()
        if unreachable:
            f = program.functions[findex]
            raise ValidationError(
                f"unreachable block {f.blocks[min(unreachable)].label} in {f.name}"
            )
    _check_defined_before_use(program)


def _check_defined_before_use(program: Program) -> None:
    """Forward must-analysis: registers defined on every path from entry."""
    for f, cfg in zip(program.functions, build_cfg(program)):
        params = frozenset(f.params)
        everything = params | {s.dest for b in f.blocks for s in b.stmts if s.dest}

        def block_in(b: int, out: dict[int, frozenset]) -> frozenset:
            if b == cfg.entry:
                return params
            defined = everything
            for p in cfg.pred[b]:
                defined = defined & out[p]
            return defined

        out = {b: everything for b in range(len(f.blocks))}
        changed = True
        while changed:
            changed = False
            for b in cfg.order:
                defined = block_in(b, out) | {
                    s.dest for s in f.blocks[b].stmts if s.dest
                }
                if defined != out[b]:
                    out[b] = defined
                    changed = True
        for b in cfg.order:
            defined = set(block_in(b, out))
            for s in f.blocks[b].stmts:
                for _, reg in s.uses():
                    if reg not in defined:
                        raise ValidationError(
                            f"use before def of {reg} at {s.id} (line {s.line})"
                        )
                if s.dest:
                    defined.add(s.dest)


# -- CFG ---------------------------------------------------------------------


@dataclass(frozen=True)
class CFG:
    """Block-level control-flow graph of one function; block 0 is the entry."""

    func: int
    succ: tuple[tuple[int, ...], ...]
    pred: tuple[tuple[int, ...], ...]
    entry: int = 0

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(a, b) for a, ss in enumerate(self.succ) for b in ss}

    def reachable(self, start: int = 0) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            for n in self.succ[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return seen

    @property
    def order(self) -> list[int]:
        """Reverse postorder from the entry."""
        out: list[int] = []
        seen: set[int] = set()

        def visit(n: int) -> None:
            seen.add(n)
            for s in self.succ[n]:
                if s not in seen:
                    visit(s)
            out.append(n)

        visit(self.entry)
        return out[::-1]


def _function_cfg(f: Function, findex: int) -> CFG:
    succ: list[tuple[int, ...]] = []
    for b in f.blocks:
        term = b.terminator
        targets: list[int] = []
        for label in term.targets:
            t = f.block_index(label)
            if t not in targets:
                targets.append(t)
        succ.append(tuple(targets))
    pred: list[list[int]] = [[] for _ in f.blocks]
    for a, ss in enumerate(succ):
        for b in ss:
            pred[b].append(a)
    return CFG(findex, tuple(succ), tuple(tuple(p) for p in pred))


def build_cfg(program: Program) -> list[CFG]:
    if "cfg" not in program.cache:
        program.cache["cfg"] = [
            _function_cfg(f, n) for n, f in enumerate(program.functions)
        ]
    return program.cache["cfg"]


# -- def-use chains ----------------------------------------------------------


def _def_key(d: Def) -> tuple:
    return (0, d.index) if isinstance(d, ParamDef) else (1, d)


@dataclass(frozen=True)
class DefUseChains:
    """Reaching definitions for every register use site ``(stmt, operand pos)``."""

    defs: dict[tuple[StmtId, int], tuple[Def, ...]]

    def __getitem__(self, site: tuple[StmtId, int]) -> tuple[Def, ...]:
        return self.defs[site]


def def_use(program: Program) -> DefUseChains:
    """Reaching-definitions fixpoint over each function's CFG."""
    if "def_use" in program.cache:
        return program.cache["def_use"]
    chains: dict[tuple[StmtId, int], tuple[Def, ...]] = {}
    for findex, (f, cfg) in enumerate(zip(program.functions, build_cfg(program))):
        entry_defs = {p: frozenset({ParamDef(findex, i)}) for i, p in enumerate(f.params)}

        def transfer(b: int, state: dict[str, frozenset]) -> dict[str, frozenset]:
            state = dict(state)
            for s in f.blocks[b].stmts:
                if s.dest:
                    state[s.dest] = frozenset({s.id})
            return state

        out: dict[int, dict[str, frozenset]] = {b: {} for b in range(len(f.blocks))}
        worklist = list(cfg.order)
        while worklist:
            b = worklist.pop(0)
            state = _join_in(b, cfg, out, entry_defs)
            new = transfer(b, state)
            if new != out[b]:
                out[b] = new
                for s in cfg.succ[b]:
                    if s not in worklist:
                        worklist.append(s)
        for b in range(len(f.blocks)):
            state = dict(_join_in(b, cfg, out, entry_defs))
            for s in f.blocks[b].stmts:
                for pos, reg in s.uses():
                    chains[(s.id, pos)] = tuple(sorted(state.get(reg, ()), key=_def_key))
                if s.dest:
                    state[s.dest] = frozenset({s.id})
    result = DefUseChains(chains)
    program.cache["def_use"] = result
    return result


def _join_in(b, cfg, out, entry_defs) -> dict[str, frozenset]:
    state: dict[str, frozenset] = dict(entry_defs) if b == cfg.entry else {}
    for p in cfg.pred[b]:
        for reg, defs in out[p].items():
            state[reg] = state.get(reg, frozenset()) | defs
    return state


# -- control dependence ------------------------------------------------------

EXIT = -1


def postdominators(cfg: CFG) -> dict[int, frozenset[int]]:
    """Postdominator sets over blocks plus a virtual exit node ``EXIT``.

    Blocks ending in ``ret``/``fail`` flow to ``EXIT``; blocks that cannot
    reach an exit get a virtual edge there as well.
    """
    succ = _exit_augmented(cfg)
    nodes = list(range(len(cfg.succ)))
    full = frozenset(nodes) | {EXIT}
    pdom: dict[int, frozenset[int]] = {n: full for n in nodes}
    pdom[EXIT] = frozenset({EXIT})
    changed = True
    while changed:
        changed = False
        for n in reversed(cfg.order):
            new = full
            for s in succ[n]:
                new = new & pdom[s]
            new = new | {n}
            if new != pdom[n]:
                pdom[n] = new
                changed = True
    return pdom


def _exit_augmented(cfg: CFG) -> dict[int, tuple[int, ...]]:
    succ = {n: ss if ss else (EXIT,) for n, ss in enumerate(cfg.succ)}
    reaches = {EXIT}
    changed = True
    while changed:
        changed = False
        for n, ss in succ.items():
            if n not in reaches and any(s in reaches for s in ss):
                reaches.add(n)
                changed = True
    for n in range(len(cfg.succ)):
        if n not in reaches:
            succ[n] = succ[n] + (EXIT,)
    return succ


@dataclass(frozen=True)
class ControlDeps:
    """Branch controllers per statement.

    ``entry_controlled`` holds statements whose block postdominates the
    function entry: they run whenever the function is entered, so their
    only controller is whatever invoked the function.
    """

    controllers: dict[StmtId, frozenset[StmtId]]
    entry_controlled: frozenset[StmtId]

    def __getitem__(self, sid: StmtId) -> frozenset[StmtId]:
        return self.controllers[sid]


def control_deps(program: Program) -> ControlDeps:
    if "control_deps" in program.cache:
        return program.cache["control_deps"]
    controllers: dict[StmtId, set[StmtId]] = {s.id: set() for s in program.stmts}
    entry_controlled: set[StmtId] = set()
    for f, cfg in zip(program.functions, build_cfg(program)):
        pdom = postdominators(cfg)
        block_ctrl: dict[int, set[StmtId]] = {b: set() for b in range(len(f.blocks))}
        for a, ss in enumerate(cfg.succ):
            if len(ss) < 2:
                continue
            branch = f.blocks[a].terminator.id
            for s in ss:
                for y in pdom[s]:
                    if y == EXIT:
                        continue
                    if y == a or y not in pdom[a]:
                        block_ctrl[y].add(branch)
        for b, block in enumerate(f.blocks):
            entry_hit = b in pdom[cfg.entry]
            for s in block.stmts:
                controllers[s.id] |= block_ctrl[b]
                if entry_hit:
                    entry_controlled.add(s.id)
    result = ControlDeps(
        {k: frozenset(v) for k, v in controllers.items()}, frozenset(entry_controlled)
    )
    program.cache["control_deps"] = result
    return result
