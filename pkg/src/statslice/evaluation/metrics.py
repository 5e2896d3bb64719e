"""Slice quality metrics and the analytic overhead estimator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Iterable, Sequence, Union

from ..ir import StmtId
from ..slicer import SliceReport


class EmptyGroundTruth(ValueError):
    pass


class NonPositiveTime(ValueError):
    pass


class _NotFound:
    __slots__ = ()

    def __repr__(self) -> str:
        return "NOT_FOUND"

    def __str__(self) -> str:
        return "NOT_FOUND"


NOT_FOUND = _NotFound()


def recovery_rate(candidate: AbstractSet, truth: AbstractSet) -> float:
    """Fraction of the ground-truth statements present in ``candidate``."""
    if not truth:
        raise EmptyGroundTruth("ground-truth slice is empty")
    return len(set(candidate) & set(truth)) / len(truth)


def inspection_order(report: SliceReport) -> list[StmtId]:
    return [m.stmt for m in sorted(report.members, key=lambda m: (m.depth, m.stmt))]


def root_cause_distance(report: SliceReport, root_cause: AbstractSet[StmtId]) -> Union[int, _NotFound]:
    """Statements a developer inspects, in BFS order, until reaching a root cause."""
    for i, stmt in enumerate(inspection_order(report), 1):
        if stmt in root_cause:
            return i
    return NOT_FOUND


def failure_path(report: SliceReport, root_cause: AbstractSet[StmtId]) -> frozenset[StmtId]:
    """Inspection prefix of ``report`` up to and including the first root cause.

    Empty when no root cause is in the report.
    """
    order = inspection_order(report)
    for i, stmt in enumerate(order):
        if stmt in root_cause:
            return frozenset(order[: i + 1])
    return frozenset()


def path_recovery(candidate: AbstractSet[StmtId], truth: SliceReport, root_cause: AbstractSet[StmtId]) -> float:
    """Share of the ground-truth failure path present in ``candidate``."""
    return recovery_rate(candidate, failure_path(truth, root_cause))


def coverage_cdf(per_run: Sequence[Iterable], reference: AbstractSet) -> list[float]:
    if not reference:
        raise EmptyGroundTruth("reference dependence set is empty")
    seen: set = set()
    out = []
    for deps in per_run:
        seen.update(d for d in deps if d in reference)
        out.append(len(seen) / len(reference))
    return out


def expected_overhead(avg_trap_cost: float, exp_hmem_acc: float, orig_time: float) -> float:
    """Slowdown factor when ``exp_hmem_acc`` accesses each pay ``avg_trap_cost`` seconds."""
    if orig_time <= 0:
        raise NonPositiveTime(f"original run time must be positive, got {orig_time}")
    return 1 + (avg_trap_cost * exp_hmem_acc) / orig_time


@dataclass
class EvalMetrics:
    recovery_slice: float
    recovery_rootcause_path: float
    size_vs_dynamic: float
    size_vs_static: float
    rootcause_inspection_count: Union[int, _NotFound]
    coverage: list[float] = field(default_factory=list)
