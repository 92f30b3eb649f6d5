"""Local-search MAP baselines: beam search over single-variable flips and
best-first search (a beam of width one)."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import FactorGraph


@dataclass(frozen=True)
class SearchConfig:
    cache_size: int = 10
    max_steps: int = 100_000
    max_seconds: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        if self.cache_size < 1:
            raise ValueError("cache_size must be at least 1")


@dataclass
class SearchResult:
    assignment: tuple[int, ...]
    log_score: float
    steps: int
    best_scores: list[float] = field(default_factory=list)
    caches: list[list[tuple[int, ...]]] = field(default_factory=list)


def batch_log_scores(g: FactorGraph, states: np.ndarray) -> np.ndarray:
    """Log-scores of many assignments (rows of ``states``) at once."""
    states = np.atleast_2d(np.asarray(states, dtype=np.int64))
    scores = np.zeros(states.shape[0])
    for scope, pot in zip(g.scopes, g.log_potentials):
        cell = np.ravel_multi_index(tuple(states[:, i] for i in scope), pot.shape)
        scores += pot.ravel()[cell]
    return scores


def _neighbors(x: tuple[int, ...], cards) -> list[tuple[int, ...]]:
    out = []
    for i, c in enumerate(cards):
        for s in range(c):
            if s != x[i]:
                out.append(x[:i] + (s,) + x[i + 1:])
    return out


def _top_k(states: list[tuple[int, ...]], scores: np.ndarray, k: int):
    ranked = sorted(zip(states, scores.tolist()), key=lambda t: (-t[1], t[0]))
    return ranked[:k]


def beam_search(g: FactorGraph, cfg: SearchConfig = SearchConfig(), keep_trace: bool = False) -> SearchResult:
    """Keep the ``cache_size`` best states seen; expand all their one-flip neighbours each step.

    Ties in score are broken toward the lexicographically smaller assignment.
    Stops when a full expansion leaves the cached state set unchanged.
    """
    rng = np.random.default_rng(cfg.seed)
    cards = g.cardinalities
    x0 = tuple(int(rng.integers(0, c)) for c in cards)
    cache = [(x0, float(batch_log_scores(g, [x0])[0]))]
    trace_scores = [cache[0][1]]
    trace_caches = [[x0]] if keep_trace else []
    start = time.monotonic()
    steps = 0
    while steps < cfg.max_steps and time.monotonic() - start < cfg.max_seconds:
        pool = {x for x, _ in cache}
        for x, _ in cache:
            pool.update(_neighbors(x, cards))
        candidates = sorted(pool)
        scores = batch_log_scores(g, np.array(candidates)) if g.num_vars else np.zeros(1)
        new_cache = _top_k(candidates, scores, cfg.cache_size)
        steps += 1
        changed = {x for x, _ in new_cache} != {x for x, _ in cache}
        cache = new_cache
        trace_scores.append(cache[0][1])
        if keep_trace:
            trace_caches.append([x for x, _ in cache])
        if not changed:
            break
    best_x, best_s = cache[0]
    return SearchResult(best_x, best_s, steps, trace_scores, trace_caches)


def best_first_search(g: FactorGraph, cfg: SearchConfig = SearchConfig(), keep_trace: bool = False) -> SearchResult:
    return beam_search(g, SearchConfig(1, cfg.max_steps, cfg.max_seconds, cfg.seed), keep_trace)
