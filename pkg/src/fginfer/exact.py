"""Exact inference by exhaustive enumeration of the joint state space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FactorGraph

DEFAULT_CAP = 2 ** 24
_CHUNK = 1 << 16


class StateSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExactResult:
    log_Z: float
    marginals: tuple[np.ndarray, ...]
    map_assignment: tuple[int, ...]
    map_log_score: float


def _chunk_scores(g: FactorGraph, flat_pots, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(start, stop, dtype=np.int64)
    states = np.stack(np.unravel_index(idx, g.cardinalities), axis=1) if g.num_vars else np.zeros((idx.size, 0), np.int64)
    scores = np.zeros(idx.size)
    for scope, pot, flat in zip(g.scopes, g.log_potentials, flat_pots):
        cell = np.ravel_multi_index(tuple(states[:, i] for i in scope), pot.shape)
        scores += flat[cell]
    return states, scores


def enumerate_exact(g: FactorGraph, cap: int = DEFAULT_CAP) -> ExactResult:
    """Partition function, marginals and MAP of ``g`` by brute force.

    Assignments are visited in mixed-radix order with variable 0 most
    significant, so the first maximum found is the lexicographically
    smallest MAP assignment.
    """
    total = int(np.prod(g.cardinalities, dtype=np.int64)) if g.num_vars else 1
    if total > cap:
        raise StateSpaceTooLarge(f"{total} joint states exceed the cap of {cap}")
    flat_pots = [p.ravel() for p in g.log_potentials]

    # first pass: global max, MAP and the log partition function
    best_score, best_idx = -np.inf, 0
    run_max, run_sum = -np.inf, 0.0
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        _, scores = _chunk_scores(g, flat_pots, start, stop)
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score, best_idx = float(scores[k]), start + k
        m = scores.max()
        if m > run_max:
            if np.isfinite(run_max):
                run_sum *= np.exp(run_max - m)
            run_max = m
        if np.isfinite(run_max):
            run_sum += np.exp(scores - run_max).sum()
    log_Z = float(run_max + np.log(run_sum)) if np.isfinite(run_max) else -np.inf

    # second pass: marginals
    acc = [np.zeros(c) for c in g.cardinalities]
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        states, scores = _chunk_scores(g, flat_pots, start, stop)
        p = np.exp(scores - log_Z)
        for i, c in enumerate(g.cardinalities):
            acc[i] += np.bincount(states[:, i], weights=p, minlength=c)
    marginals = tuple(a / a.sum() for a in acc)

    if g.num_vars:
        map_assignment = tuple(int(s) for s in np.unravel_index(best_idx, g.cardinalities))
    else:
        map_assignment = ()
    # re-add in factor order so the score matches a direct evaluation bit for bit
    best_score = float(sum(p[tuple(map_assignment[i] for i in s)] for s, p in zip(g.scopes, g.log_potentials)))
    return ExactResult(log_Z, marginals, map_assignment, best_score)


def probability(g: FactorGraph, x, log_Z: float) -> float:
    from .bp import log_score

    return float(np.exp(log_score(g, x) - log_Z))
