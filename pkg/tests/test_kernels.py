"""The compiled and pure-Python kernels must agree."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impflow import _kernels_py as py
from impflow import kernels

try:
    from impflow import _kernels as cy
except ImportError:  # extension not built
    cy = None

BACKENDS = [py] + ([cy] if cy is not None else [])


def test_dispatch_backend():
    assert kernels.BACKEND in ("cython", "python")
    if cy is not None:
        assert kernels.BACKEND == "cython"


def sse(groups):
    return sum(((np.asarray(g) - np.mean(g)) ** 2).sum() for g in groups if len(g))


@pytest.mark.parametrize("impl", BACKENDS)
def test_kmeans_small(impl):
    assert impl.kmeans1d([10, 10, 1, 1], 2) == [0, 2]
    assert impl.kmeans1d([5, 5, 5], 1) == [0]
    assert impl.kmeans1d([9, 5, 1], 3) == [0, 1, 2]
    with pytest.raises(ValueError):
        impl.kmeans1d([1], 2)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=12))
def test_kmeans_matches_brute_force(values):
    x = sorted(values, reverse=True)
    n = len(x)
    best = min(sse([x[:i], x[i:]]) for i in range(1, n))
    for impl in BACKENDS:
        (a, b) = impl.kmeans1d(x, 2)
        assert a == 0
        assert sse([x[:b], x[b:]]) == pytest.approx(best, abs=1e-6 * (1 + best))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=3, max_size=9), st.integers(1, 3))
def test_kmeans_backends_agree(values, k):
    if len(values) < k:
        return
    x = sorted(values, reverse=True)
    results = [impl.kmeans1d(x, k) for impl in BACKENDS]
    assert all(r == results[0] for r in results)


def random_network(rng, n_links, n_sub):
    ptr, idx = [0], []
    for _ in range(n_sub):
        links = rng.choice(n_links, size=int(rng.integers(1, 4)), replace=False)
        idx.extend(int(l) for l in links)
        ptr.append(len(idx))
    cap = rng.uniform(1, 10, n_links)
    caps = np.where(rng.random(n_sub) < 0.3, rng.uniform(0.1, 5, n_sub), np.inf)
    w = rng.uniform(0.5, 3, n_sub)
    return np.array(ptr), np.array(idx, dtype=np.int64), cap, caps, w


@pytest.mark.parametrize("impl", BACKENDS)
def test_maxmin_examples(impl):
    r = impl.maxmin_fair([0, 1, 2], [0, 0], [1e9], [np.inf, np.inf], [1, 1])
    assert list(r) == [5e8, 5e8]
    r = impl.maxmin_fair([0, 1], [0], [1e9], [np.inf], [1])
    assert list(r) == [1e9]
    # classic line network: long flow over two links, one short flow on each
    r = impl.maxmin_fair([0, 2, 3, 4], [0, 1, 0, 1], [1.0, 2.0], [np.inf] * 3, [1, 1, 1])
    assert r == pytest.approx([0.5, 0.5, 1.5])


@pytest.mark.parametrize("seed", range(30))
def test_maxmin_properties_and_agreement(seed):
    rng = np.random.default_rng(seed)
    ptr, idx, cap, caps, w = random_network(rng, 6, 10)
    results = [impl.maxmin_fair(ptr, idx, cap, caps, w) for impl in BACKENDS]
    for r in results[1:]:
        assert r == pytest.approx(results[0], rel=1e-9, abs=1e-9)
    r = results[0]
    load = np.bincount(idx, weights=np.repeat(r, np.diff(ptr)), minlength=len(cap))
    assert (load <= cap * (1 + 1e-9)).all()
    assert (r <= caps * (1 + 1e-9)).all()
    # every subflow is blocked by its cap or by a saturated link
    for s in range(len(caps)):
        links = idx[ptr[s]:ptr[s + 1]]
        assert r[s] >= caps[s] * (1 - 1e-9) or any(load[l] >= cap[l] * (1 - 1e-9) for l in links)


def brute_unsplittable(demands, weights, paths, capacity):
    n = len(demands)
    best = (0.0, 0)
    for mask in range(1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        w = sum(weights[i] for i in members)
        if w <= best[0]:
            continue
        for choice in itertools.product(*[range(len(paths[i])) for i in members]):
            load = np.zeros(len(capacity))
            for i, q in zip(members, choice):
                for e in paths[i][q]:
                    load[e] += demands[i]
            if (load <= np.asarray(capacity) + 1e-9).all():
                best = (w, mask)
                break
    return best


@pytest.mark.parametrize("seed", range(40))
def test_unsplittable_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, n_edges = int(rng.integers(1, 7)), 5
    demands = rng.uniform(1, 5, n).round(1)
    weights = rng.integers(1, 10, n).astype(float)
    paths = [[list(rng.choice(n_edges, size=int(rng.integers(1, 3)), replace=False))
              for _ in range(int(rng.integers(1, 4)))] for _ in range(n)]
    capacity = rng.uniform(2, 8, n_edges).round(1)
    path_ptr, edge_ptr, edges = [0], [0], []
    for ps in paths:
        for es in ps:
            edges.extend(int(e) for e in es)
            edge_ptr.append(len(edges))
        path_ptr.append(len(edge_ptr) - 1)
    want_w, want_mask = brute_unsplittable(demands, weights, paths, capacity)
    for impl in BACKENDS:
        mask, choice, w = impl.unsplittable_search(demands, weights, np.array(path_ptr), np.array(edge_ptr),
                                                   np.array(edges, dtype=np.int64), capacity)
        assert w == want_w
        assert mask == want_mask
        load = np.zeros(n_edges)
        for i in range(n):
            if mask >> i & 1:
                assert choice[i] >= 0
                for e in paths[i][choice[i]]:
                    load[e] += demands[i]
            else:
                assert choice[i] == -1
        assert (load <= capacity + 1e-9).all()


def test_unsplittable_empty():
    for impl in BACKENDS:
        mask, choice, w = impl.unsplittable_search([], [], [0], [0], np.array([], dtype=np.int64), [1.0])
        assert (mask, list(choice), w) == (0, [], 0.0)
