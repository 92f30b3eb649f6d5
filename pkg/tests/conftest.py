import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from fginfer.core import FactorGraph, tensor_sum, reduce_except
from fginfer.generators import random_graph, random_tree_graph

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def graph_from_seed(seed, **kw):
    return random_graph(np.random.default_rng(seed), **kw)


def tree_from_seed(seed, **kw):
    return random_tree_graph(np.random.default_rng(seed), **kw)


def brute_force(g: FactorGraph):
    """Enumeration with the last variable varying slowest, in plain Python."""
    n = g.num_vars
    weights = {}
    for rev in itertools.product(*[range(c) for c in reversed(g.cardinalities)]):
        x = rev[::-1]
        weights[x] = sum(float(p[tuple(x[i] for i in s)]) for s, p in zip(g.scopes, g.log_potentials))
    top = max(weights.values())
    Z = sum(np.exp(v - top) for v in weights.values())
    log_Z = top + np.log(Z)
    marg = [np.zeros(c) for c in g.cardinalities]
    for x, v in weights.items():
        for i in range(n):
            marg[i][x[i]] += np.exp(v - log_Z)
    best = min((x for x, v in weights.items() if v == top))
    return log_Z, marg, best, top


def reference_bp(g: FactorGraph, iters=200, damping=0.0, mode="sum", tol=1e-8, damp_v2f=True):
    """Per-edge dictionary BP built from the dense tensor helpers."""
    def norm(v):
        return v - np.logaddexp.reduce(v)

    edges = [(a, i) for a, s in enumerate(g.scopes) for i in s]
    f2v = {e: np.zeros(g.cardinalities[e[1]]) for e in edges}
    v2f = {e: np.zeros(g.cardinalities[e[1]]) for e in edges}
    for _ in range(iters):
        new_v2f = {}
        for a, i in edges:
            v = sum((f2v[(b, j)] for b, j in edges if j == i and b != a), np.zeros(g.cardinalities[i]))
            v = norm(v)
            if damping and damp_v2f:
                v = norm(v + damping * (v2f[(a, i)] - v))
            new_v2f[(a, i)] = v
        new_f2v = {}
        for a, i in edges:
            scope = g.scopes[a]
            ops = [new_v2f[(a, j)] if j != i else np.zeros(g.cardinalities[j]) for j in scope]
            t = g.log_potentials[a] + tensor_sum(ops)
            v = norm(reduce_except(t, scope.index(i), "max" if mode == "max" else "logsumexp"))
            if damping:
                v = norm(v + damping * (f2v[(a, i)] - v))
            new_f2v[(a, i)] = v
        delta = max(max(np.max(np.abs(new_f2v[e] - f2v[e])) for e in edges),
                    max(np.max(np.abs(new_v2f[e] - v2f[e])) for e in edges)) if edges else 0.0
        f2v, v2f = new_f2v, new_v2f
        if delta < tol:
            break
    beliefs = []
    for i, c in enumerate(g.cardinalities):
        t = sum((f2v[(a, j)] for a, j in edges if j == i), np.zeros(c))
        beliefs.append(np.exp(norm(t)))
    return beliefs


@pytest.fixture
def single_var():
    return FactorGraph([2], [(0,)], [np.log([1.0, 3.0])])
