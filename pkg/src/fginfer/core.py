"""Factor-graph data model, dense tensor helpers and isomorphism witnesses.

Potentials are kept in log space as numpy arrays whose axes follow the
factor's scope order. All values are immutable once constructed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

ZERO_LOG = float(np.log(1e-30))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Discrete factor graph with log-space potentials.

    ``scopes[a]`` lists the variables of factor ``a`` in axis order and
    ``log_potentials[a]`` has shape ``tuple(cardinalities[i] for i in scopes[a])``.
    """

    cardinalities: tuple[int, ...]
    scopes: tuple[tuple[int, ...], ...]
    log_potentials: tuple[np.ndarray, ...]

    def __init__(self, cardinalities, scopes, log_potentials):
        cards = tuple(int(c) for c in cardinalities)
        scopes = tuple(tuple(int(i) for i in s) for s in scopes)
        pots = tuple(_frozen(p) for p in log_potentials)
        if any(c < 1 for c in cards):
            raise ValueError("cardinalities must be positive")
        if len(scopes) != len(pots):
            raise ValueError("one potential per factor is required")
        for a, (scope, pot) in enumerate(zip(scopes, pots)):
            if len(scope) == 0:
                raise ValueError(f"factor {a} has an empty scope")
            if len(set(scope)) != len(scope):
                raise ValueError(f"factor {a} repeats a variable")
            if any(i < 0 or i >= len(cards) for i in scope):
                raise ValueError(f"factor {a} references an unknown variable")
            expected = tuple(cards[i] for i in scope)
            if pot.shape != expected:
                raise ValueError(f"factor {a} potential has shape {pot.shape}, expected {expected}")
            if np.isnan(pot).any() or np.isposinf(pot).any():
                raise ValueError(f"factor {a} potential has NaN or +inf entries")
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "scopes", scopes)
        object.__setattr__(self, "log_potentials", pots)

    @classmethod
    def from_linear(cls, cardinalities, scopes, tables, zero_log: float = ZERO_LOG):
        """Build from linear-space tables; zero entries are clamped to ``zero_log``."""
        pots = []
        for t in tables:
            t = np.asarray(t, dtype=np.float64)
            if (t < 0).any():
                raise ValueError("potential tables must be non-negative")
            with np.errstate(divide="ignore"):
                logt = np.log(t)
            pots.append(np.where(t > 0, logt, zero_log))
        return cls(cardinalities, scopes, pots)

    @property
    def num_vars(self) -> int:
        return len(self.cardinalities)

    @property
    def num_factors(self) -> int:
        return len(self.scopes)

    def neighbors(self, i: int) -> list[int]:
        """Factors whose scope contains variable ``i``, in index order."""
        return [a for a, s in enumerate(self.scopes) if i in s]

    def edges(self) -> list[tuple[int, int]]:
        """(factor, variable) pairs ordered by factor, then scope position."""
        return [(a, i) for a, s in enumerate(self.scopes) for i in s]

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_factors, self.num_vars), dtype=np.int8)
        for a, s in enumerate(self.scopes):
            A[a, list(s)] = 1
        return A

    def components(self) -> list[list[int]]:
        """Connected components as sorted variable lists."""
        parent = list(range(self.num_vars))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for s in self.scopes:
            for i in s[1:]:
                ri, r0 = find(i), find(s[0])
                if ri != r0:
                    parent[ri] = r0
        groups: dict[int, list[int]] = {}
        for i in range(self.num_vars):
            groups.setdefault(find(i), []).append(i)
        return sorted(groups.values())

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def equals(self, other: "FactorGraph", tol: float = 0.0) -> bool:
        if self.cardinalities != other.cardinalities or self.scopes != other.scopes:
            return False
        for p, q in zip(self.log_potentials, other.log_potentials):
            if p.shape != q.shape:
                return False
            same_inf = np.isneginf(p) == np.isneginf(q)
            if not same_inf.all():
                return False
            fin = ~np.isneginf(p)
            if fin.any() and np.max(np.abs(p[fin] - q[fin])) > tol:
                return False
        return True


class EdgeKind(Enum):
    VAR_TO_FAC = "var-to-fac"
    FAC_TO_VAR = "fac-to-var"


@dataclass(frozen=True)
class DirectedEdge:
    kind: EdgeKind
    factor: int
    variable: int


def tensor_sum(operands: Sequence[Sequence[float]]) -> np.ndarray:
    """Outer sum: entry ``(i1, ..., iK)`` equals ``v1[i1] + ... + vK[iK]``."""
    if len(operands) == 0:
        raise ValueError("tensor_sum needs at least one operand")
    vecs = [np.asarray(v, dtype=np.float64).ravel() for v in operands]
    if any(v.size == 0 for v in vecs):
        raise ValueError("tensor_sum operands must be non-empty")
    k = len(vecs)
    out = np.zeros(tuple(v.size for v in vecs))
    for axis, v in enumerate(vecs):
        shape = [1] * k
        shape[axis] = v.size
        out = out + v.reshape(shape)
    return out


def reduce_except(t: np.ndarray, keep_axis: int, mode: str = "logsumexp") -> np.ndarray:
    """Reduce every axis but ``keep_axis`` with a stable log-sum-exp or a max."""
    t = np.asarray(t, dtype=np.float64)
    if not 0 <= keep_axis < t.ndim:
        raise ValueError(f"axis {keep_axis} out of range for rank {t.ndim}")
    axes = tuple(ax for ax in range(t.ndim) if ax != keep_axis)
    if mode == "max":
        return t.max(axis=axes) if axes else t.copy()
    if mode != "logsumexp":
        raise ValueError(f"unknown reduction mode {mode!r}")
    if not axes:
        return t.copy()
    m = t.max(axis=axes, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(t - m).sum(axis=axes, keepdims=True)
    with np.errstate(divide="ignore"):
        return (m + np.log(s)).reshape(t.shape[keep_axis])


def _is_perm(p, n: int) -> bool:
    p = np.asarray(p)
    return p.shape == (n,) and np.array_equal(np.sort(p), np.arange(n))


@dataclass(frozen=True)
class PermutationWitness:
    """Bijections mapping a factor graph onto an isomorphic one.

    Old factor ``a`` becomes ``factor_perm[a]``; old variable ``i`` becomes
    ``var_perm[i]``; axis ``k`` of factor ``a`` moves to position
    ``local_perms[a][k]``; state ``s`` of variable ``i`` becomes
    ``assignment_perms[i][s]``.
    """

    factor_perm: tuple[int, ...]
    var_perm: tuple[int, ...]
    local_perms: tuple[tuple[int, ...], ...]
    assignment_perms: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for name in ("factor_perm", "var_perm"):
            object.__setattr__(self, name, tuple(int(x) for x in getattr(self, name)))
        for name in ("local_perms", "assignment_perms"):
            object.__setattr__(self, name, tuple(tuple(int(x) for x in p) for p in getattr(self, name)))
        if not _is_perm(self.factor_perm, len(self.factor_perm)):
            raise ValueError("factor_perm is not a bijection")
        if not _is_perm(self.var_perm, len(self.var_perm)):
            raise ValueError("var_perm is not a bijection")
        for p in self.local_perms + self.assignment_perms:
            if not _is_perm(p, len(p)):
                raise ValueError(f"{p} is not a bijection")

    @classmethod
    def identity(cls, g: FactorGraph) -> "PermutationWitness":
        return cls(
            tuple(range(g.num_factors)),
            tuple(range(g.num_vars)),
            tuple(tuple(range(len(s))) for s in g.scopes),
            tuple(tuple(range(c)) for c in g.cardinalities),
        )

    @classmethod
    def random(cls, g: FactorGraph, rng: np.random.Generator, symmetries=("global", "local", "assignment")):
        """Random witness; components outside ``symmetries`` are identities."""
        w = cls.identity(g)
        fp, vp, lp, ap = w.factor_perm, w.var_perm, w.local_perms, w.assignment_perms
        if "global" in symmetries:
            fp = tuple(rng.permutation(g.num_factors))
            vp = tuple(rng.permutation(g.num_vars))
        if "local" in symmetries:
            lp = tuple(tuple(rng.permutation(len(s))) for s in g.scopes)
        if "assignment" in symmetries:
            ap = tuple(tuple(rng.permutation(c)) for c in g.cardinalities)
        return cls(fp, vp, lp, ap)

    def fits(self, g: FactorGraph) -> bool:
        return (
            len(self.factor_perm) == g.num_factors
            and len(self.var_perm) == g.num_vars
            and len(self.local_perms) == g.num_factors
            and len(self.assignment_perms) == g.num_vars
            and all(len(p) == len(s) for p, s in zip(self.local_perms, g.scopes))
            and all(len(p) == c for p, c in zip(self.assignment_perms, g.cardinalities))
        )

    def inverse(self) -> "PermutationWitness":
        finv = np.argsort(self.factor_perm)
        vinv = np.argsort(self.var_perm)
        local = tuple(tuple(np.argsort(self.local_perms[a])) for a in finv)
        assign = tuple(tuple(np.argsort(self.assignment_perms[i])) for i in vinv)
        return PermutationWitness(tuple(finv), tuple(vinv), local, assign)

    def then(self, other: "PermutationWitness") -> "PermutationWitness":
        """Witness equivalent to applying ``self`` first and ``other`` second."""
        fp = tuple(other.factor_perm[b] for b in self.factor_perm)
        vp = tuple(other.var_perm[j] for j in self.var_perm)
        local = [
            tuple(other.local_perms[b][l] for l in self.local_perms[a])
            for a, b in enumerate(self.factor_perm)
        ]
        assign = [
            tuple(other.assignment_perms[j][s] for s in self.assignment_perms[i])
            for i, j in enumerate(self.var_perm)
        ]
        return PermutationWitness(fp, vp, tuple(local), tuple(assign))


def apply_witness(g: FactorGraph, w: PermutationWitness) -> FactorGraph:
    """Relabel factors, variables, factor axes and states of ``g`` by ``w``."""
    if not w.fits(g):
        raise ValueError("witness does not match the graph's sizes")
    M, N = g.num_factors, g.num_vars
    cards = [0] * N
    for i, j in enumerate(w.var_perm):
        cards[j] = g.cardinalities[i]
    scopes: list = [None] * M
    pots: list = [None] * M
    for a, b in enumerate(w.factor_perm):
        scope, pot = g.scopes[a], g.log_potentials[a]
        for k, i in enumerate(scope):
            inv_states = np.argsort(w.assignment_perms[i])
            pot = np.take(pot, inv_states, axis=k)
        order = np.argsort(w.local_perms[a])
        scopes[b] = tuple(w.var_perm[scope[k]] for k in order)
        pots[b] = np.transpose(pot, order)
    return FactorGraph(cards, scopes, pots)


def verify_witness(g: FactorGraph, g2: FactorGraph, w: PermutationWitness, tol: float = 1e-12) -> bool:
    """True iff ``apply_witness(g, w)`` reproduces ``g2`` (potentials to ``tol``)."""
    if not w.fits(g):
        return False
    if g.num_vars != g2.num_vars or g.num_factors != g2.num_factors:
        return False
    return apply_witness(g, w).equals(g2, tol=tol)


def permute_marginals(marginals: Sequence[np.ndarray], w: PermutationWitness) -> list[np.ndarray]:
    """Map per-variable vectors of a graph onto the witness-image graph."""
    out: list = [None] * len(marginals)
    for i, j in enumerate(w.var_perm):
        v = np.asarray(marginals[i])
        moved = np.empty_like(v)
        moved[list(w.assignment_perms[i])] = v
        out[j] = moved
    return out


def permute_assignment(x: Sequence[int], w: PermutationWitness) -> tuple[int, ...]:
    out = [0] * len(x)
    for i, j in enumerate(w.var_perm):
        out[j] = w.assignment_perms[i][x[i]]
    return tuple(out)
