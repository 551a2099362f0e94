"""Pure-Python implementations of the hot kernels.

These mirror ``_kernels.pyx`` line for line and are used when the compiled
extension is unavailable (or when ``IMPFLOW_PURE_PYTHON=1``).
"""

import numpy as np

TIE_TOL = 1e-9


def kmeans1d(values, k):
    """Exact 1-D k-means over ``values`` kept in the given order.

    Clusters are contiguous runs of ``values`` (the caller sorts).  Returns the
    start index of each of the ``k`` clusters.  Among equal-cost solutions the
    one with the earliest split points wins.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= len(values)")
    x = x - x.mean()
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    tol = TIE_TOL * (1.0 + float(s2[n]))

    def cost(a, b):
        d = s1[b] - s1[a]
        return (s2[b] - s2[a]) - d * d / (b - a)

    inf = float("inf")
    best = [[inf] * (n + 1) for _ in range(k + 1)]
    arg = [[0] * (n + 1) for _ in range(k + 1)]
    best[0][0] = 0.0
    for j in range(1, k + 1):
        for i in range(j, n - (k - j) + 1):
            b = inf
            a_best = j - 1
            for m in range(j - 1, i):
                prev = best[j - 1][m]
                if prev == inf:
                    continue
                c = prev + cost(m, i)
                if c < b - tol:
                    b = c
                    a_best = m
            best[j][i] = b
            arg[j][i] = a_best
    starts = [0] * k
    i = n
    for j in range(k, 0, -1):
        m = arg[j][i]
        starts[j - 1] = m
        i = m
    return starts


def maxmin_fair(ptr, idx, capacity, caps, weights):
    """Weighted max-min fair rates by progressive filling.

    Subflow ``s`` crosses links ``idx[ptr[s]:ptr[s+1]]``; it is bounded by
    ``caps[s]`` and grows at speed ``weights[s]``.
    """
    ptr = np.asarray(ptr, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    capacity = np.asarray(capacity, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = caps.shape[0]
    nl = capacity.shape[0]
    rates = np.zeros(n)
    if n == 0:
        return rates
    residual = capacity.copy()
    owner = np.repeat(np.arange(n), np.diff(ptr))
    active = (caps > 0) & (weights > 0)
    eps = TIE_TOL * np.maximum(capacity, 1.0)
    while active.any():
        on = active[owner]
        wsum = np.bincount(idx[on], weights=weights[owner[on]], minlength=nl)
        used = wsum > 0
        t = np.inf
        if used.any():
            t = float(np.min(residual[used] / wsum[used]))
        head = (caps[active] - rates[active]) / weights[active]
        t = min(t, float(head.min()))
        if not np.isfinite(t):
            raise ValueError("unbounded subflow: no links and infinite cap")
        t = max(t, 0.0)
        rates[active] += weights[active] * t
        residual -= wsum * t
        sat = used & (residual <= eps)
        residual[sat] = 0.0
        hit = np.zeros(n, dtype=bool)
        sat_entries = sat[idx]
        hit[owner[sat_entries]] = True
        with np.errstate(invalid="ignore"):
            capped = rates >= caps - TIE_TOL * np.maximum(caps, 1.0)
        active &= ~(hit | capped)
    return rates


def unsplittable_search(demands, weights, path_ptr, edge_ptr, edges, capacity):
    """Exhaustive max-weight unsplittable routing.

    Flow ``i`` may use candidate paths ``path_ptr[i]..path_ptr[i+1]-1``; path
    ``q`` consumes ``demands[i]`` on each edge ``edges[edge_ptr[q]:edge_ptr[q+1]]``.
    Returns ``(mask, assignment, value)`` where ``assignment[i]`` is the local
    path index or -1.  Ties go to the numerically smallest selection mask.
    """
    demands = [float(d) for d in demands]
    weights = [float(w) for w in weights]
    path_ptr = [int(p) for p in path_ptr]
    edge_ptr = [int(p) for p in edge_ptr]
    edges = [int(e) for e in edges]
    n = len(demands)
    residual = [float(c) for c in capacity]
    tol = TIE_TOL * max([1.0] + residual)

    wmask = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        wmask[mask] = wmask[mask ^ low] + weights[low.bit_length() - 1]

    choice = [-1] * n

    def dfs(members, pos):
        if pos == len(members):
            return True
        i = members[pos]
        d = demands[i]
        for q in range(path_ptr[i], path_ptr[i + 1]):
            es = edges[edge_ptr[q]:edge_ptr[q + 1]]
            if all(residual[e] + tol >= d for e in es):
                for e in es:
                    residual[e] -= d
                choice[i] = q - path_ptr[i]
                ok = dfs(members, pos + 1)
                for e in es:
                    residual[e] += d
                if ok:
                    return True
                choice[i] = -1
        return False

    best_mask = 0
    best_w = 0.0
    best_choice = [-1] * n
    for mask in range(1, 1 << n):
        if not wmask[mask] > best_w:
            continue
        members = [i for i in range(n) if mask >> i & 1]
        for i in range(n):
            choice[i] = -1
        if dfs(members, 0):
            best_mask = mask
            best_w = wmask[mask]
            best_choice = list(choice)
    return best_mask, best_choice, best_w
