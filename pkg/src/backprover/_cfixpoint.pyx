# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled fixpoint kernel; same contract as ``_pyfixpoint.stratified_depths``."""

from libc.stdlib cimport malloc, free

cdef long long INF = 1 << 30


def stratified_depths(Py_ssize_t n_atoms, init, head, rule_start, body_atom, body_naf, strata_start):
    cdef const long long[:] c_init = init
    cdef const long long[:] c_head = head
    cdef const long long[:] c_start = rule_start
    cdef const long long[:] c_body = body_atom
    cdef const long long[:] c_naf = body_naf
    cdef const long long[:] c_strata = strata_start
    cdef long long *depth = <long long *> malloc(max(n_atoms, 1) * sizeof(long long))
    if depth == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, s, r, j, lo, hi
    cdef long long cand, d, p, h
    cdef bint changed
    try:
        for i in range(n_atoms):
            depth[i] = c_init[i]
        for s in range(c_strata.shape[0] - 1):
            lo = c_strata[s]
            hi = c_strata[s + 1]
            changed = True
            while changed:
                changed = False
                for r in range(lo, hi):
                    cand = 0
                    for j in range(c_start[r], c_start[r + 1]):
                        d = depth[c_body[j]]
                        p = c_naf[j]
                        if p >= 0 and depth[p] >= INF:
                            d = 0
                        if d >= INF:
                            cand = INF
                            break
                        if d > cand:
                            cand = d
                    if cand < INF:
                        cand += 1
                        h = c_head[r]
                        if cand < depth[h]:
                            depth[h] = cand
                            changed = True
        return [depth[i] for i in range(n_atoms)]
    finally:
        free(depth)
