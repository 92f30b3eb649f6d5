"""Seeded synthetic factor graphs and on-disk datasets.

Randomness comes from numpy's PCG64 bit generator. Instance ``k`` of a
dataset with seed ``s`` draws from ``SeedSequence([s, k])``, so each
instance can be regenerated on its own and parallel generation matches
sequential generation.

Spins ``x = +1`` and ``x = -1`` map to states 0 and 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bp import log_score
from .core import FactorGraph
from .exact import DEFAULT_CAP, ExactResult, enumerate_exact
from .uai import load_uai, save_uai

SPIN = np.array([1.0, -1.0])
FAMILIES = ("ising", "asym")


@dataclass(frozen=True)
class DatasetSpec:
    family: str = "ising"
    n: int = 3
    count: int = 1
    seed: int = 0
    sigma_b: float = 0.25
    sigma_J: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.n < 2:
            raise ValueError("grid side must be at least 2")
        if self.count < 1:
            raise ValueError("count must be at least 1")


@dataclass
class Instance:
    graph: FactorGraph
    label: ExactResult | None
    meta: dict


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """Horizontal edges row-major, then vertical edges row-major."""
    horiz = [(r * cols + c, r * cols + c + 1) for r in range(rows) for c in range(cols - 1)]
    vert = [(r * cols + c, (r + 1) * cols + c) for r in range(rows - 1) for c in range(cols)]
    return horiz + vert


def ising_graph(rows: int, cols: int, biases: Sequence[float], couplings: Sequence[float]) -> FactorGraph:
    """Unary factors ``[b_i, -b_i]`` then pairwise ``J_ij * x_i * x_j`` per grid edge."""
    edges = grid_edges(rows, cols)
    n = rows * cols
    if len(biases) != n or len(couplings) != len(edges):
        raise ValueError("wrong number of biases or couplings for the grid")
    scopes = [(i,) for i in range(n)] + edges
    pots = [b * SPIN for b in biases] + [J * np.outer(SPIN, SPIN) for J in couplings]
    return FactorGraph([2] * n, scopes, pots)


def asym_bmrf_graph(rows: int, cols: int, biases: Sequence[float], couplings: Sequence[tuple[float, float]]) -> FactorGraph:
    """Ising unaries plus pairwise ``[[Jij+Jji, -2Jij], [-2Jji, Jij+Jji]]`` (log space)."""
    edges = grid_edges(rows, cols)
    n = rows * cols
    if len(biases) != n or len(couplings) != len(edges):
        raise ValueError("wrong number of biases or couplings for the grid")
    scopes = [(i,) for i in range(n)] + edges
    pots = [b * SPIN for b in biases]
    for jij, jji in couplings:
        pots.append(np.array([[jij + jji, -2.0 * jij], [-2.0 * jji, jij + jji]]))
    return FactorGraph([2] * n, scopes, pots)


def _draw_graph(spec: DatasetSpec, index: int) -> FactorGraph:
    rng = instance_rng(spec.seed, index)
    n = spec.n
    n_edges = len(grid_edges(n, n))
    b = spec.sigma_b * rng.standard_normal(n * n)
    if spec.family == "ising":
        J = spec.sigma_J * rng.standard_normal(n_edges)
        return ising_graph(n, n, b, J)
    J = spec.sigma_J * rng.standard_normal((n_edges, 2))
    return asym_bmrf_graph(n, n, b, [tuple(r) for r in J])


def _generate(spec: DatasetSpec, label: bool, cap: int) -> list[tuple[FactorGraph, ExactResult | None]]:
    out = []
    for k in range(spec.count):
        g = _draw_graph(spec, k)
        lab = enumerate_exact(g, cap) if label and 2 ** g.num_vars <= cap else None
        out.append((g, lab))
    return out


def gen_ising(spec: DatasetSpec, label: bool = True, cap: int = DEFAULT_CAP):
    if spec.family != "ising":
        spec = DatasetSpec("ising", spec.n, spec.count, spec.seed, spec.sigma_b, spec.sigma_J)
    return _generate(spec, label, cap)


def gen_asym_bmrf(spec: DatasetSpec, label: bool = True, cap: int = DEFAULT_CAP):
    if spec.family != "asym":
        spec = DatasetSpec("asym", spec.n, spec.count, spec.seed, spec.sigma_b, spec.sigma_J)
    return _generate(spec, label, cap)


def generate(spec: DatasetSpec, label: bool = True, cap: int = DEFAULT_CAP):
    return gen_ising(spec, label, cap) if spec.family == "ising" else gen_asym_bmrf(spec, label, cap)


# ---- random graphs for audits and tests ---------------------------------------

def _random_table(rng, shape, scale):
    return scale * rng.standard_normal(shape)


def random_graph(rng: np.random.Generator, n_vars: int = 6, n_factors: int = 8, max_card: int = 3,
                 max_arity: int = 3, scale: float = 1.0, min_card: int = 2) -> FactorGraph:
    """Random factor graph with Gaussian log potentials; every variable gets a unary factor."""
    cards = rng.integers(min_card, max_card + 1, size=n_vars)
    scopes = [(i,) for i in range(n_vars)]
    for _ in range(n_factors):
        k = int(rng.integers(2, max(2, min(max_arity, n_vars)) + 1)) if n_vars >= 2 else 1
        scopes.append(tuple(int(v) for v in rng.choice(n_vars, size=k, replace=False)))
    pots = [_random_table(rng, tuple(cards[i] for i in s), scale) for s in scopes]
    return FactorGraph(cards, scopes, pots)


def random_tree_graph(rng: np.random.Generator, max_vars: int = 8, max_card: int = 4, max_arity: int = 3,
                      scale: float = 1.0, min_card: int = 2) -> FactorGraph:
    """Random factor graph whose bipartite graph is a tree (plus unary factors)."""
    n_target = int(rng.integers(2, max_vars + 1))
    n = 1
    scopes: list[tuple[int, ...]] = []
    while n < n_target:
        k = int(rng.integers(2, max_arity + 1))
        k = min(k, n_target - n + 1)
        anchor = int(rng.integers(0, n))
        new = list(range(n, n + k - 1))
        scope = [anchor] + new
        rng.shuffle(scope)
        scopes.append(tuple(scope))
        n += k - 1
    for i in range(n):
        if rng.random() < 0.7:
            scopes.append((i,))
    cards = rng.integers(min_card, max_card + 1, size=n)
    order = rng.permutation(len(scopes))
    scopes = [scopes[a] for a in order]
    pots = [_random_table(rng, tuple(cards[i] for i in s), scale) for s in scopes]
    return FactorGraph(cards, scopes, pots)


# ---- persistence -------------------------------------------------------------

def _sidecar(spec: DatasetSpec, index: int, label: ExactResult | None) -> dict:
    doc = {"seed": spec.seed, "family": spec.family, "index": index}
    if label is not None:
        doc.update({
            "oracle_marginals": [[float(p) for p in m] for m in label.marginals],
            "oracle_log_Z": float(label.log_Z),
            "oracle_map": [int(s) for s in label.map_assignment],
            "oracle_map_log_score": float(label.map_log_score),
        })
    return doc


def save_dataset(spec: DatasetSpec, items, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (g, lab) in enumerate(items):
        stem = out / f"{spec.family}_{k:05d}"
        save_uai(g, stem.with_suffix(".uai"))
        stem.with_suffix(".json").write_text(json.dumps(_sidecar(spec, k, lab), indent=1) + "\n")
        paths.append(stem.with_suffix(".uai"))
    return paths


def load_dataset(in_dir) -> list[Instance]:
    """All ``*.uai`` files of a directory (sorted by name) with their JSON sidecars."""
    d = Path(in_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory {d} does not exist")
    out = []
    for p in sorted(d.glob("*.uai")):
        g = load_uai(p)
        side = p.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        label = None
        if "oracle_marginals" in meta:
            x_star = tuple(int(s) for s in meta["oracle_map"])
            # the file stores linear-space tables, so re-score x* on the graph as read back
            label = ExactResult(
                float(meta["oracle_log_Z"]),
                tuple(np.asarray(m, dtype=np.float64) for m in meta["oracle_marginals"]),
                x_star,
                log_score(g, x_star),
            )
        out.append(Instance(g, label, meta))
    return out


def ensure_labels(instances: list[Instance], cap: int = DEFAULT_CAP) -> list[Instance]:
    """Fill in missing oracle labels by enumeration."""
    for inst in instances:
        if inst.label is None:
            inst.label = enumerate_exact(inst.graph, cap)
    return instances


def train_test_split(items: Sequence, seed: int = 0, train_fraction: float = 0.7):
    """Seeded shuffle, then the first ``train_fraction`` of items for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly inside (0, 1)")
    order = np.random.default_rng(seed).permutation(len(items))
    cut = int(round(train_fraction * len(items)))
    return [items[k] for k in order[:cut]], [items[k] for k in order[cut:]]
