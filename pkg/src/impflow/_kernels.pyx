# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: exact 1-D k-means, weighted max-min water-filling and
exhaustive unsplittable-flow search.  Semantics match ``_kernels_py``."""

from libc.math cimport INFINITY, isfinite
from libc.stdlib cimport malloc, free

import numpy as np

cdef double TIE_TOL = 1e-9


def kmeans1d(values, int k):
    cdef double[::1] x = np.ascontiguousarray(values, dtype=np.float64).copy()
    cdef Py_ssize_t n = x.shape[0]
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= len(values)")
    cdef Py_ssize_t i, j, m, a_best
    cdef double mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    for i in range(n):
        x[i] -= mean
    cdef double[::1] s1 = np.zeros(n + 1)
    cdef double[::1] s2 = np.zeros(n + 1)
    for i in range(n):
        s1[i + 1] = s1[i] + x[i]
        s2[i + 1] = s2[i] + x[i] * x[i]
    cdef double tol = TIE_TOL * (1.0 + s2[n])
    cdef double[:, ::1] best = np.full((k + 1, n + 1), INFINITY)
    cdef long[:, ::1] arg = np.zeros((k + 1, n + 1), dtype=np.int_)
    cdef double b, c, prev, d
    best[0, 0] = 0.0
    for j in range(1, k + 1):
        for i in range(j, n - (k - j) + 1):
            b = INFINITY
            a_best = j - 1
            for m in range(j - 1, i):
                prev = best[j - 1, m]
                if prev == INFINITY:
                    continue
                d = s1[i] - s1[m]
                c = prev + ((s2[i] - s2[m]) - d * d / (i - m))
                if c < b - tol:
                    b = c
                    a_best = m
            best[j, i] = b
            arg[j, i] = a_best
    starts = [0] * k
    i = n
    for j in range(k, 0, -1):
        m = arg[j, i]
        starts[j - 1] = m
        i = m
    return starts


def maxmin_fair(ptr, idx, capacity, caps, weights):
    cdef long[::1] p = np.ascontiguousarray(ptr, dtype=np.int_)
    cdef long[::1] li = np.ascontiguousarray(idx, dtype=np.int_)
    cdef double[::1] cap = np.ascontiguousarray(capacity, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(caps, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = hi.shape[0]
    cdef Py_ssize_t nl = cap.shape[0]
    out = np.zeros(n)
    cdef double[::1] rates = out
    if n == 0:
        return out
    cdef double[::1] residual = np.array(cap, dtype=np.float64)
    cdef double[::1] wsum = np.zeros(nl)
    cdef char[::1] active = np.zeros(n, dtype=np.int8)
    cdef char[::1] sat = np.zeros(nl, dtype=np.int8)
    cdef Py_ssize_t s, e, l, n_active = 0
    cdef double t, h, eps_l
    for s in range(n):
        if hi[s] > 0 and w[s] > 0:
            active[s] = 1
            n_active += 1
    while n_active > 0:
        for l in range(nl):
            wsum[l] = 0.0
        for s in range(n):
            if active[s]:
                for e in range(p[s], p[s + 1]):
                    wsum[li[e]] += w[s]
        t = INFINITY
        for l in range(nl):
            if wsum[l] > 0:
                h = residual[l] / wsum[l]
                if h < t:
                    t = h
        for s in range(n):
            if active[s]:
                h = (hi[s] - rates[s]) / w[s]
                if h < t:
                    t = h
        if not isfinite(t):
            raise ValueError("unbounded subflow: no links and infinite cap")
        if t < 0:
            t = 0.0
        for s in range(n):
            if active[s]:
                rates[s] += w[s] * t
        for l in range(nl):
            sat[l] = 0
            if wsum[l] > 0:
                residual[l] -= wsum[l] * t
                eps_l = TIE_TOL * (cap[l] if cap[l] > 1.0 else 1.0)
                if residual[l] <= eps_l:
                    residual[l] = 0.0
                    sat[l] = 1
        for s in range(n):
            if not active[s]:
                continue
            h = TIE_TOL * (hi[s] if hi[s] > 1.0 else 1.0)
            if rates[s] >= hi[s] - h:
                active[s] = 0
                n_active -= 1
                continue
            for e in range(p[s], p[s + 1]):
                if sat[li[e]]:
                    active[s] = 0
                    n_active -= 1
                    break
    return out


cdef bint _dfs(int pos, int nm, int* members, double* demands, long* path_ptr,
               long* edge_ptr, long* edges, double* residual, int* choice, double tol):
    if pos == nm:
        return True
    cdef int i = members[pos]
    cdef double d = demands[i]
    cdef long q, e
    cdef bint fits
    for q in range(path_ptr[i], path_ptr[i + 1]):
        fits = True
        for e in range(edge_ptr[q], edge_ptr[q + 1]):
            if residual[edges[e]] + tol < d:
                fits = False
                break
        if not fits:
            continue
        for e in range(edge_ptr[q], edge_ptr[q + 1]):
            residual[edges[e]] -= d
        choice[i] = <int>(q - path_ptr[i])
        if _dfs(pos + 1, nm, members, demands, path_ptr, edge_ptr, edges,
                residual, choice, tol):
            for e in range(edge_ptr[q], edge_ptr[q + 1]):
                residual[edges[e]] += d
            return True
        for e in range(edge_ptr[q], edge_ptr[q + 1]):
            residual[edges[e]] += d
        choice[i] = -1
    return False


def unsplittable_search(demands, weights, path_ptr, edge_ptr, edges, capacity):
    cdef double[::1] dm = np.ascontiguousarray(demands, dtype=np.float64)
    cdef double[::1] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef long[::1] pp = np.ascontiguousarray(path_ptr, dtype=np.int_)
    cdef long[::1] ep = np.ascontiguousarray(edge_ptr, dtype=np.int_)
    cdef long[::1] ed = np.ascontiguousarray(edges, dtype=np.int_)
    cdef double[::1] res = np.array(capacity, dtype=np.float64)
    cdef int n = dm.shape[0]
    if n == 0:
        return 0, [], 0.0
    cdef Py_ssize_t nmask = 1 << n
    cdef double[::1] wmask = np.zeros(nmask)
    cdef Py_ssize_t mask, low, bit
    cdef double tol = 1.0
    cdef Py_ssize_t l
    for l in range(res.shape[0]):
        if res[l] > tol:
            tol = res[l]
    tol *= TIE_TOL
    for mask in range(1, nmask):
        low = mask & -mask
        bit = 0
        while (low >> bit) != 1:
            bit += 1
        wmask[mask] = wmask[mask ^ low] + wt[bit]
    cdef int* members = <int*>malloc(max(n, 1) * sizeof(int))
    cdef int* choice = <int*>malloc(max(n, 1) * sizeof(int))
    cdef int i, nm
    cdef Py_ssize_t best_mask = 0
    cdef double best_w = 0.0
    best_choice = [-1] * n
    cdef long* edges_ptr = &ed[0] if ed.shape[0] > 0 else NULL
    cdef double* res_ptr = &res[0] if res.shape[0] > 0 else NULL
    try:
        for mask in range(1, nmask):
            if not wmask[mask] > best_w:
                continue
            nm = 0
            for i in range(n):
                choice[i] = -1
                if (mask >> i) & 1:
                    members[nm] = i
                    nm += 1
            if _dfs(0, nm, members, &dm[0], &pp[0], &ep[0], edges_ptr, res_ptr,
                    choice, tol):
                best_mask = mask
                best_w = wmask[mask]
                best_choice = [choice[i] for i in range(n)]
    finally:
        free(members)
        free(choice)
    return int(best_mask), best_choice, best_w
