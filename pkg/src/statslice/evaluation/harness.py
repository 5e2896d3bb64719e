"""Cooperative workload simulation and the per-bug metrics table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .. import odg as odg_mod
from ..interp import FullTrace, execute
from ..odg import ODG
from ..slicer import SliceReport, dynamic_slice, slice_pipeline, static_slice
from ..tracing import SamplerState, encode_branch_trace, full_data_deps, heap_deps, sampled_data_deps
from .corpus import CorpusEntry
from .metrics import (
    NOT_FOUND,
    coverage_cdf,
    path_recovery,
    recovery_rate,
    root_cause_distance,
)

TABLE_COLUMNS = (
    "program", "stmts", "runs",
    "static", "dynamic", "statistical",
    "size_vs_dynamic", "size_vs_static",
    "recovery", "rootcause_path",
    "dist_static", "dist_dynamic", "dist_statistical",
    "coverage",
)
CDF_COLUMNS = ("program", "run", "fraction")


@dataclass(frozen=True)
class WorkloadConfig:
    runs: int = 50
    adaptive: bool = True
    rate: float = 1.0
    rng_seed: int = 0
    clients: int = 1


class TraceCache:
    """Full traces per distinct input; sampling re-reads the same trace."""

    def __init__(self, entry: CorpusEntry):
        self.entry = entry
        self.traces: dict[tuple[int, ...], FullTrace] = {}

    def __call__(self, vec: tuple[int, ...]) -> FullTrace:
        trace = self.traces.get(vec)
        if trace is None:
            trace = execute(self.entry.program, vec)
            self.traces[vec] = trace
        return trace


@dataclass
class WorkloadResult:
    odg: ODG
    per_run: list[frozenset]
    universe: frozenset
    states: list[SamplerState]
    cache: TraceCache


def run_workload(entry: CorpusEntry, cfg: WorkloadConfig, cache: Optional[TraceCache] = None) -> WorkloadResult:
    """Sample every run of the mixed-input workload and merge the results.

    Runs cycle through the entry's input pool and are dealt round-robin to
    ``cfg.clients`` clients, each adapting its own sampler state.
    """
    program = entry.program
    cache = cache or TraceCache(entry)
    fixed = None if cfg.adaptive else cfg.rate
    states = [
        SamplerState(seed=cfg.rng_seed * 1000 + c, fixed=fixed) for c in range(cfg.clients)
    ]
    g = odg_mod.empty(program.digest)
    per_run = []
    universe: set = set()
    for r in range(cfg.runs):
        trace = cache(entry.inputs[r % len(entry.inputs)])
        client = r % cfg.clients
        result = sampled_data_deps(program, trace, states[client])
        states[client] = result.state
        g = odg_mod.add_run(g, result.deps, trace.executed(), r, program.digest)
        per_run.append(frozenset(d.pair for d in result.deps))
        universe.update(d.pair for d in heap_deps(full_data_deps(program, trace)))
    return WorkloadResult(g, per_run, frozenset(universe), states, cache)


@dataclass
class EntryEvaluation:
    entry: CorpusEntry
    statistical: SliceReport
    dynamic: SliceReport
    static: SliceReport
    coverage: list[float] = field(default_factory=list)
    row: dict = field(default_factory=dict)


def evaluate_entry(entry: CorpusEntry, cfg: WorkloadConfig) -> EntryEvaluation:
    program = entry.program
    work = run_workload(entry, cfg)
    faulty = work.cache(entry.failing_input)
    stat = slice_pipeline(program, work.odg, encode_branch_trace(faulty))
    dyn = dynamic_slice(program, faulty)
    sta = static_slice(program, dyn.seed)
    coverage = coverage_cdf(work.per_run, work.universe) if work.universe else [1.0] * cfg.runs
    roots = {entry.root_cause}
    row = {
        "program": entry.name,
        "stmts": len(program.stmts),
        "runs": cfg.runs,
        "static": len(sta.members),
        "dynamic": len(dyn.members),
        "statistical": len(stat.members),
        "size_vs_dynamic": len(stat.members) / len(dyn.members),
        "size_vs_static": len(stat.members) / len(sta.members),
        "recovery": recovery_rate(stat.member_set, dyn.member_set),
        "rootcause_path": path_recovery(stat.member_set, dyn, roots),
        "dist_static": root_cause_distance(sta, roots),
        "dist_dynamic": root_cause_distance(dyn, roots),
        "dist_statistical": root_cause_distance(stat, roots),
        "coverage": coverage[-1] if coverage else 1.0,
    }
    return EntryEvaluation(entry, stat, dyn, sta, coverage, row)


def _fmt(value) -> str:
    if value is NOT_FOUND:
        return "NOT_FOUND"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def table_csv(rows: Iterable[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in TABLE_COLUMNS])
    return out.getvalue()


def cdf_csv(evaluations: Iterable[EntryEvaluation]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CDF_COLUMNS)
    for ev in evaluations:
        for k, frac in enumerate(ev.coverage, 1):
            writer.writerow([ev.entry.name, k, _fmt(frac)])
    return out.getvalue()


def evaluate_corpus(entries: Iterable[CorpusEntry], cfg: WorkloadConfig) -> list[EntryEvaluation]:
    return [evaluate_entry(e, cfg) for e in entries]
