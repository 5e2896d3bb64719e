# cython: language_level=3, boundscheck=False, wraparound=False
# distutils: language = c++
"""Compiled kernels; see ``purepy`` for the reference semantics."""

from libcpp.map cimport map as cmap
from libcpp.vector cimport vector


def scan_deps(const signed char[:] ops, const int[:] stmts, const int[:] objs,
              const int[:] locs, Py_ssize_t n_locs, const unsigned char[:] mask,
              const int[:] groups, long long n_stmts, long long n_groups):
    cdef vector[int] last = vector[int](n_locs, -1)
    cdef cmap[long long, long long] counts
    cdef Py_ssize_t k, n = ops.shape[0]
    cdef int obj, w
    cdef long long key
    for k in range(n):
        obj = objs[k]
        if not mask[obj]:
            continue
        if ops[k] == 0:
            last[locs[k]] = stmts[k]
        else:
            w = last[locs[k]]
            if w >= 0:
                key = (w * n_stmts + stmts[k]) * n_groups + groups[obj]
                counts[key] += 1
    writers, readers, gs, cs = [], [], [], []
    for item in counts:
        key = item.first
        gs.append(key % n_groups)
        key //= n_groups
        readers.append(key % n_stmts)
        writers.append(key // n_stmts)
        cs.append(item.second)
    return writers, readers, gs, cs


def closure(const int[:] indptr, const int[:] indices, int start):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef vector[char] seen = vector[char](n, 0)
    cdef vector[int] stack
    cdef int node, nxt, k
    seen[start] = 1
    stack.push_back(start)
    while stack.size():
        node = stack.back()
        stack.pop_back()
        for k in range(indptr[node], indptr[node + 1]):
            nxt = indices[k]
            if not seen[nxt]:
                seen[nxt] = 1
                stack.push_back(nxt)
    return [i for i in range(n) if seen[i]]
