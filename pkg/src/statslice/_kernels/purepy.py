"""Pure-Python kernels.  Same contracts as the compiled ``_scan`` module."""

from __future__ import annotations


def scan_deps(ops, stmts, objs, locs, n_locs, mask, groups, n_stmts, n_groups):
    """Last-writer scan over a columnar memory-event stream.

    ``ops[k]`` is 0 for a write and 1 for a read of dense location ``locs[k]``
    (belonging to object ``objs[k]``) by statement ordinal ``stmts[k]``.
    Only events on objects with ``mask[obj]`` set are observed.  Returns
    parallel lists ``(writers, readers, groups, counts)`` of distinct
    ``(writer, reader, groups[obj])`` triples, ordered by that triple.
    """
    last = [-1] * n_locs
    counts: dict[tuple[int, int, int], int] = {}
    for op, stmt, obj, loc in zip(ops, stmts, objs, locs):
        if not mask[obj]:
            continue
        if op == 0:
            last[loc] = stmt
        else:
            w = last[loc]
            if w >= 0:
                key = (w, stmt, groups[obj])
                counts[key] = counts.get(key, 0) + 1
    keys = sorted(counts)
    return (
        [k[0] for k in keys],
        [k[1] for k in keys],
        [k[2] for k in keys],
        [counts[k] for k in keys],
    )


def closure(indptr, indices, start):
    """Nodes reachable from ``start`` in a CSR graph, in ascending order."""
    n = len(indptr) - 1
    seen = bytearray(n)
    seen[start] = 1
    stack = [start]
    while stack:
        node = stack.pop()
        for k in range(indptr[node], indptr[node + 1]):
            nxt = indices[k]
            if not seen[nxt]:
                seen[nxt] = 1
                stack.append(nxt)
    return [i for i in range(n) if seen[i]]
