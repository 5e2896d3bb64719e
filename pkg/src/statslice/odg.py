"""Observed dependency graph aggregated over monitored runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional

from .ir import StmtId
from .tracing import DataDep


class ProgramMismatch(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class ArcInfo:
    """Arc metadata.  Runs are kept as a sketch: first/last id and a count."""

    count: int
    kinds: frozenset[str]
    first_run: Optional[int]
    last_run: Optional[int]
    runs: int

    def combine(self, other: "ArcInfo") -> "ArcInfo":
        firsts = [r for r in (self.first_run, other.first_run) if r is not None]
        lasts = [r for r in (self.last_run, other.last_run) if r is not None]
        return ArcInfo(
            self.count + other.count,
            self.kinds | other.kinds,
            min(firsts) if firsts else None,
            max(lasts) if lasts else None,
            self.runs + other.runs,
        )


Arc = tuple[StmtId, StmtId]


@dataclass(frozen=True)
class ODG:
    digest: Optional[str] = None
    nodes: frozenset[StmtId] = frozenset()
    data_arcs: Mapping[Arc, ArcInfo] = field(default_factory=dict)
    control_arcs: frozenset[Arc] = frozenset()
    runs_total: int = 0

    @property
    def arc_set(self) -> frozenset[Arc]:
        return frozenset(self.data_arcs)

    def writers(self, reader: StmtId) -> list[tuple[StmtId, ArcInfo]]:
        index = self._reader_index()
        return index.get(reader, [])

    def _reader_index(self) -> dict[StmtId, list]:
        cached = self.__dict__.get("_by_reader")
        if cached is None:
            cached = {}
            for (w, r), info in sorted(self.data_arcs.items()):
                cached.setdefault(r, []).append((w, info))
            object.__setattr__(self, "_by_reader", cached)
        return cached


def empty(digest: Optional[str] = None) -> ODG:
    return ODG(digest)


def _check_digest(a: Optional[str], b: Optional[str]) -> Optional[str]:
    if a is not None and b is not None and a != b:
        raise ProgramMismatch(f"program digests differ: {a} vs {b}")
    return a if a is not None else b


def add_run(
    g: ODG,
    deps: Iterable[DataDep],
    executed: Iterable[StmtId],
    run_id: int,
    digest: Optional[str] = None,
) -> ODG:
    digest = _check_digest(g.digest, digest)
    executed = frozenset(executed)
    arcs = dict(g.data_arcs)
    for d in deps:
        if d.writer not in executed or d.reader not in executed:
            raise ConsistencyError(f"dependence {d.writer}->{d.reader} outside executed set")
        info = ArcInfo(d.count, frozenset({d.kind}), run_id, run_id, 1)
        key = (d.writer, d.reader)
        arcs[key] = arcs[key].combine(info) if key in arcs else info
    return ODG(digest, g.nodes | executed, arcs, g.control_arcs, g.runs_total + 1)


def merge(a: ODG, b: ODG) -> ODG:
    digest = _check_digest(a.digest, b.digest)
    arcs = dict(a.data_arcs)
    for key, info in b.data_arcs.items():
        arcs[key] = arcs[key].combine(info) if key in arcs else info
    return ODG(
        digest,
        a.nodes | b.nodes,
        arcs,
        a.control_arcs | b.control_arcs,
        a.runs_total + b.runs_total,
    )


def prune_to_execution(g: ODG, executed: Iterable[StmtId]) -> ODG:
    executed = frozenset(executed)
    return ODG(
        g.digest,
        g.nodes & executed,
        {k: v for k, v in g.data_arcs.items() if k[0] in executed and k[1] in executed},
        frozenset(a for a in g.control_arcs if a[0] in executed and a[1] in executed),
        g.runs_total,
    )


def augment(g: ODG, alias_deps: Iterable[DataDep], control: Iterable[Arc]) -> ODG:
    """Add must-alias arcs and install the faulty run's control arcs."""
    arcs = dict(g.data_arcs)
    for d in alias_deps:
        if d.writer not in g.nodes or d.reader not in g.nodes:
            raise ConsistencyError(f"alias arc {d.writer}->{d.reader} outside graph nodes")
        info = ArcInfo(d.count, frozenset({d.kind}), None, None, 0)
        key = (d.writer, d.reader)
        arcs[key] = arcs[key].combine(info) if key in arcs else info
    control = frozenset(control)
    for c, s in control:
        if c not in g.nodes or s not in g.nodes:
            raise ConsistencyError(f"control arc {c}->{s} outside graph nodes")
    return replace(g, data_arcs=arcs, control_arcs=control)


# -- files -------------------------------------------------------------------


def to_json(g: ODG) -> dict:
    return {
        "kind": "odg",
        "digest": g.digest,
        "runs_total": g.runs_total,
        "nodes": [str(n) for n in sorted(g.nodes)],
        "arcs": [
            {
                "writer": str(w),
                "reader": str(r),
                "count": info.count,
                "kinds": sorted(info.kinds),
                "first_run": info.first_run,
                "last_run": info.last_run,
                "runs": info.runs,
            }
            for (w, r), info in sorted(g.data_arcs.items())
        ],
        "control_arcs": [[str(c), str(s)] for c, s in sorted(g.control_arcs)],
    }


def from_json(d: Mapping) -> ODG:
    if d.get("kind") != "odg":
        raise ValueError("not an ODG file")
    arcs = {
        (StmtId.parse(a["writer"]), StmtId.parse(a["reader"])): ArcInfo(
            a["count"], frozenset(a["kinds"]), a["first_run"], a["last_run"], a["runs"]
        )
        for a in d["arcs"]
    }
    return ODG(
        d["digest"],
        frozenset(StmtId.parse(n) for n in d["nodes"]),
        arcs,
        frozenset((StmtId.parse(c), StmtId.parse(s)) for c, s in d["control_arcs"]),
        d["runs_total"],
    )


def dumps(g: ODG) -> str:
    return json.dumps(to_json(g), indent=1) + "\n"
