"""Random buggy-program generator.

Each program has a ``main`` plus up to two helpers, heap and stack
objects, bounded loops, branches on input-derived values and one injected
defect: a store of an input-scaled value into a carrier heap object.  The
carrier word is later copied into a checked cell, and a large value there
reaches ``fail``.  Carrier writes and reads go through literal offsets,
dynamic indices, a pointer cell or a helper.  Stack objects are only touched through
their own allocation register at literal offsets; heap objects may be
indexed dynamically, passed to helpers and reached through pointer cells.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..interp import ResourceLimit, execute
from ..ir import Program, StmtId, parse_program
from ..slicer import dynamic_slice

WORD_OPS = ("add", "sub", "mul", "and", "or", "xor", "min", "max")
CMP_OPS = ("lt", "le", "gt", "ge", "eq", "ne")
THRESHOLD = 20
DEFECT_SCALE = 3
INPUT_MAX = 9


class GenerationExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class CorpusParams:
    max_blocks: int = 12
    max_call_depth: int = 3
    loop_bound: int = 8
    n_inputs: int = 3
    pool_size: int = 8
    max_failing: int = 3
    stmts_per_region: int = 4
    candidates: int = 60
    retries: int = 50
    step_budget: int = 200_000

    def __post_init__(self):
        if not 4 <= self.max_blocks <= 12:
            raise ValueError("max_blocks must be within [4, 12]")
        if not 1 <= self.max_call_depth <= 3:
            raise ValueError("max_call_depth must be within [1, 3]")
        if not 0 <= self.loop_bound <= 8:
            raise ValueError("loop_bound must be within [0, 8]")


@dataclass
class CorpusEntry:
    name: str
    source: str
    program: Program
    inputs: list[tuple[int, ...]]
    failing: list[int]
    root_cause: StmtId
    meta: dict = field(default_factory=dict)

    @property
    def failing_input(self) -> tuple[int, ...]:
        return self.inputs[self.failing[0]]


class _Fn:
    """Structured emitter for one function body."""

    def __init__(self, gen: "_Gen", name: str, params: list[str], depth: int):
        self.gen = gen
        self.rng = gen.rng
        self.name = name
        self.params = params
        self.depth = depth
        self.blocks: list[tuple[str, list[str]]] = [("b0", [])]
        self.words: list[str] = []
        self.inputs: list[str] = []
        self.heap: list[tuple[str, int]] = []
        self.stack: list[tuple[str, int]] = []
        self.cells: list[tuple[str, int]] = []
        self.counters = 0
        self.temps = 0
        self.pending = 0  # blocks promised by open if/loop constructs

    # -- plumbing --

    def emit(self, line: str) -> None:
        self.blocks[-1][1].append(line)

    def new_block(self) -> str:
        label = f"b{len(self.blocks)}"
        self.blocks.append((label, []))
        return label

    def reserve(self, label: str) -> None:
        self.pending -= 1
        self.blocks.append((label, []))

    def fresh(self, stem: str) -> str:
        self.temps += 1
        return f"{stem}{self.temps}"

    def word(self) -> str:
        return self.rng.choice(self.words)

    def operand(self) -> str:
        if self.rng.random() < 0.25:
            return str(self.rng.randint(0, 5))
        return self.word()

    def blocks_left(self) -> int:
        return self.gen.params.max_blocks - len(self.blocks) - self.pending

    # -- statements --

    def simple(self) -> None:
        rng = self.rng
        choices = ["binop", "binop", "heap_store", "heap_load", "stack_store", "stack_load"]
        if self.cells:
            choices.append("cell")
        if any(size > 1 for _, size in self.heap):
            choices.append("dyn")
        if self.depth < self.gen.max_depth and self.gen.helpers_for(self.depth):
            choices.append("call")
        kind = rng.choice(choices)
        if kind == "binop":
            self.emit(f"{self.word()} = {rng.choice(WORD_OPS)} {self.word()}, {self.operand()}")
        elif kind in ("heap_store", "heap_load") and self.heap:
            ptr, size = rng.choice(self.heap)
            off = rng.randrange(size)
            if kind == "heap_store":
                self.emit(f"store {ptr}[{off}], {self.operand()}")
            else:
                self.emit(f"{self.word()} = load {ptr}[{off}]")
        elif kind in ("stack_store", "stack_load") and self.stack:
            ptr, size = rng.choice(self.stack)
            off = rng.randrange(size)
            if kind == "stack_store":
                self.emit(f"store {ptr}[{off}], {self.operand()}")
            else:
                self.emit(f"{self.word()} = load {ptr}[{off}]")
        elif kind == "cell":
            cell, size = rng.choice(self.cells)
            q = self.fresh("q")
            self.emit(f"{q} = load {cell}[0]")
            off = rng.randrange(size)
            if rng.random() < 0.5:
                self.emit(f"store {q}[{off}], {self.operand()}")
            else:
                self.emit(f"{self.word()} = load {q}[{off}]")
        elif kind == "dyn":
            ptr, size = rng.choice([h for h in self.heap if h[1] > 1])
            t, q = self.fresh("t"), self.fresh("q")
            self.emit(f"{t} = and {self.word()}, {size - 1}")
            self.emit(f"{q} = getptr {ptr}, {t}")
            if rng.random() < 0.5:
                self.emit(f"store {q}[0], {self.operand()}")
            else:
                self.emit(f"{self.word()} = load {q}[0]")
        elif kind == "call":
            callee = rng.choice(self.gen.helpers_for(self.depth))
            shared = [h for h in self.heap if h[1] == 4]
            if shared:
                ptr = rng.choice(shared)[0]
                self.emit(f"{self.word()} = call {callee}({ptr}, {self.operand()})")
                self.gen.called.add(callee)
            else:
                self.emit(f"{self.word()} = add {self.word()}, 1")
        else:
            self.emit(f"{self.word()} = {rng.choice(WORD_OPS)} {self.word()}, {self.operand()}")

    def condition(self) -> str:
        c = self.fresh("c")
        pool = self.inputs or self.words
        lhs = self.rng.choice(pool) if self.rng.random() < 0.6 else self.word()
        self.emit(f"{c} = {self.rng.choice(CMP_OPS)} {lhs}, {self.rng.randint(0, INPUT_MAX)}")
        return c

    def region(self, budget: int, hooks: list) -> None:
        """Emit ``budget`` items; each hook fires once at a random item."""
        slots = {}
        for hook in hooks:
            slots.setdefault(self.rng.randrange(budget), []).append(hook)
        for k in range(budget):
            here = slots.get(k, [])
            roll = self.rng.random()
            nested = budget > 1
            if roll < 0.2 and nested and self.blocks_left() >= 3:
                self.if_else(max(1, budget // 2), here)
            elif (
                roll < 0.35
                and nested
                and self.gen.params.loop_bound > 0
                and self.blocks_left() >= 3
            ):
                self.loop(max(1, budget // 2), here)
            else:
                for hook in here:
                    hook(self)
                self.simple()

    def if_else(self, budget: int, hooks: list) -> None:
        c = self.condition()
        then_l, else_l, join_l = self.labels(3)
        self.pending += 3
        self.emit(f"br {c}, {then_l}, {else_l}")
        self.reserve(then_l)
        self.region(budget, hooks)
        self.emit(f"jmp {join_l}")
        self.reserve(else_l)
        if self.rng.random() < 0.6:
            self.region(budget, [])
        self.emit(f"jmp {join_l}")
        self.reserve(join_l)

    def loop(self, budget: int, hooks: list) -> None:
        self.counters += 1
        i = f"i{self.counters}"
        bound = self.rng.randint(1, self.gen.params.loop_bound)
        head, body, done = self.labels(3)
        self.pending += 3
        self.emit(f"{i} = const 0")
        self.emit(f"jmp {head}")
        self.reserve(head)
        t = self.fresh("t")
        self.emit(f"{t} = lt {i}, {bound}")
        self.emit(f"br {t}, {body}, {done}")
        self.reserve(body)
        self.region(budget, hooks)
        self.emit(f"{i} = add {i}, 1")
        self.emit(f"jmp {head}")
        self.reserve(done)

    def labels(self, n: int) -> list[str]:
        # Placeholders; text() renumbers blocks in emission order.
        self.gen.label_seq += n
        return [f"L{self.gen.label_seq - n + k}" for k in range(n)]

    # -- frame setup --

    def prologue(self, n_inputs: int) -> None:
        rng = self.rng
        for k in range(n_inputs):
            name = f"in{k}"
            self.emit(f"{name} = input")
            self.inputs.append(name)
        for k in range(rng.randint(2, 4)):
            name = f"w{k}"
            src = self.params[1] if self.params and k == 0 else None
            if src is None and self.inputs and rng.random() < 0.5:
                src = rng.choice(self.inputs)
            self.emit(f"{name} = copy {src}" if src else f"{name} = const {rng.randint(0, 5)}")
            self.words.append(name)
        if self.params:
            self.heap.append((self.params[0], 4))
        for k in range(rng.randint(0 if self.params else 1, 2)):
            size = rng.choice((1, 2, 4, 4))
            self.alloc(f"h{k}", size, "heap")
            self.heap.append((f"h{k}", size))
        for k in range(rng.randint(0, 2)):
            size = rng.randint(1, 3)
            self.alloc(f"s{k}", size, "stack")
            self.stack.append((f"s{k}", size))
        targets = [h for h in self.heap if not h[0].startswith("p")]
        if targets and rng.random() < 0.5:
            ptr, size = rng.choice(targets)
            self.emit("cell = alloc 1, heap")
            self.emit(f"store cell[0], {ptr}")
            self.cells.append(("cell", size))

    def alloc(self, name: str, size: int, region: str) -> None:
        self.emit(f"{name} = alloc {size}, {region}")
        for off in range(size):
            self.emit(f"store {name}[{off}], {self.operand()}")

    def text(self) -> str:
        lines = [f"fun {self.name}({', '.join(self.params)}) {{"]
        # Relabel to b0..bn in emission order.
        rename = {label: f"b{k}" for k, (label, _) in enumerate(self.blocks)}
        for label, body in self.blocks:
            lines.append(f"{rename[label]}:")
            for line in body:
                for old, new in rename.items():
                    line = _replace_label(line, old, new)
                lines.append("  " + line)
        lines.append("}")
        return "\n".join(lines)


def _replace_label(line: str, old: str, new: str) -> str:
    if not (line.startswith("br ") or line.startswith("jmp ")):
        return line
    head, _, rest = line.partition(" ")
    parts = [p.strip() for p in rest.split(",")]
    parts = [new if p == old else p for p in parts]
    return f"{head} {', '.join(parts)}"


class _Gen:
    def __init__(self, rng: random.Random, params: CorpusParams):
        self.rng = rng
        self.params = params
        self.label_seq = 0
        n_helpers = rng.randint(0, 2)
        self.helpers = [f"h{k + 1}fn" for k in range(n_helpers)]
        self.max_depth = params.max_call_depth
        self.called: set[str] = set()

    def helpers_for(self, depth: int) -> list[str]:
        # main is depth 1; helper k sits at depth k + 1 and calls only deeper ones.
        return [h for k, h in enumerate(self.helpers) if k + 2 > depth and k + 2 <= self.max_depth]

    def build(self) -> str:
        rng, params = self.rng, self.params
        texts = []
        for k, name in enumerate(self.helpers):
            fn = _Fn(self, name, ["p", "a"], depth=k + 2)
            fn.prologue(0)
            fn.region(rng.randint(1, params.stmts_per_region), [])
            fn.emit(f"ret {fn.word()}")
            texts.append(fn.text())

        main = _Fn(self, "main", [], depth=1)
        main.pending = 2  # fail and ok blocks
        main.prologue(params.n_inputs)
        # Carrier object for the defect value, plus its access paths.
        main.emit("k = alloc 4, heap")
        for off in range(4):
            main.emit(f"store k[{off}], {rng.randint(0, 5)}")
        main.emit(f"kix = and {rng.choice(main.inputs)}, 3")
        main.emit("kcell = alloc 1, heap")
        main.emit("store kcell[0], k")
        main.emit("g = alloc 1, heap")
        main.emit("store g[0], 0")
        main.heap.append(("k", 4))
        slot = rng.randrange(4)
        write_mode = rng.choice(("literal", "dynamic", "cell"))
        read_mode = rng.choice(("literal", "dynamic", "cell", "helper"))

        def access(fn: _Fn, mode: str) -> str:
            if mode == "dynamic":
                q = fn.fresh("q")
                fn.emit(f"{q} = getptr k, kix")
                return f"{q}[0]"
            if mode == "cell":
                q = fn.fresh("q")
                fn.emit(f"{q} = load kcell[0]")
                return f"{q}[{slot}]"
            return f"k[{slot}]"

        def defect(fn: _Fn) -> None:
            fn.emit(f"dv = mul {rng.choice(fn.inputs)}, {DEFECT_SCALE}")
            fn.emit(f"store {access(fn, write_mode)}, dv")

        main.region(rng.randint(2, params.stmts_per_region + 2), [defect])
        if read_mode == "helper":
            main.emit(f"x = call getfn(k, {slot})")
        else:
            main.emit(f"x = load {access(main, read_mode)}")
        main.emit("store g[0], x")
        fail_l, ok_l = main.labels(2)
        main.emit("v = load g[0]")
        main.emit(f"bad = ge v, {THRESHOLD}")
        main.emit(f"br bad, {fail_l}, {ok_l}")
        main.reserve(fail_l)
        main.emit("fail v")
        main.reserve(ok_l)
        main.emit(f"ret {main.word()}")
        if read_mode == "helper":
            texts.append(
                "fun getfn(p, j) {\nb0:\n  t = and j, 3\n  q = getptr p, t\n"
                "  r = load q[0]\n  ret r\n}"
            )
        return "\n\n".join([main.text()] + texts) + "\n"


def _defect_site(program: Program) -> StmtId:
    for s in program.stmts:
        if s.kind == "store" and s.operands[2] == "dv":
            return s.id
    raise AssertionError("defect store missing")


def generate_entry(seed: int, index: int, params: CorpusParams = CorpusParams()) -> CorpusEntry:
    for attempt in range(params.retries):
        rng = random.Random(f"{seed}/{index}/{attempt}")
        source = _Gen(rng, params).build()
        program = parse_program(source)
        root = _defect_site(program)
        fail_stmt = next(s.id for s in program.stmts if s.kind == "fail")
        failing: list[tuple[int, ...]] = []
        passing: list[tuple[int, ...]] = []
        ok = True
        tried = set()
        for _ in range(params.candidates):
            vec = tuple(rng.randint(0, INPUT_MAX) for _ in range(params.n_inputs))
            if vec in tried:
                continue
            tried.add(vec)
            try:
                trace = execute(program, vec, step_budget=params.step_budget)
            except ResourceLimit:
                ok = False
                break
            if trace.failed:
                if trace.fault.stmt != fail_stmt:
                    ok = False
                    break
                if root in dynamic_slice(program, trace).member_set:
                    failing.append(vec)
            else:
                passing.append(vec)
        if not ok or not failing or not passing:
            continue
        n_fail = min(len(failing), params.max_failing, params.pool_size - 1)
        n_pass = min(len(passing), params.pool_size - n_fail)
        # Interleave so every prefix of the workload mixes both outcomes.
        pool = [failing[0]] + passing[:n_pass] + failing[1:n_fail]
        rng.shuffle(pool)
        return CorpusEntry(
            name=f"g{seed}_{index:04d}",
            source=source,
            program=program,
            inputs=pool,
            failing=[k for k, v in enumerate(pool) if v in failing],
            root_cause=root,
            meta={"attempt": attempt, "blocks": sum(len(f.blocks) for f in program.functions)},
        )
    raise GenerationExhausted(f"no valid program for seed {seed} index {index}")


def generate_corpus(seed: int, n: int, params: Optional[CorpusParams] = None) -> list[CorpusEntry]:
    params = params or CorpusParams()
    return [generate_entry(seed, k, params) for k in range(n)]
