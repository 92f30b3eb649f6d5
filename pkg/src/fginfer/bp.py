"""Synchronous log-space loopy belief propagation (sum- and max-product)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FactorGraph
from .layout import Layout


@dataclass(frozen=True)
class BpConfig:
    mode: str = "sum"
    damping: float = 0.0
    max_iters: int = 200
    convergence_tol: float = 1e-8
    # damped BP damps both directions; FE-NBP's fixed point only damps fac->var
    damp_var_to_fac: bool = True

    def __post_init__(self):
        if self.mode not in ("sum", "max"):
            raise ValueError(f"mode must be 'sum' or 'max', got {self.mode!r}")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class MessageSet:
    """Log-space messages on every directed edge.

    Both arrays are indexed by message entry ``(edge, state)`` of ``layout``;
    edges follow :meth:`FactorGraph.edges` order.
    """

    layout: Layout
    var_to_fac: np.ndarray
    fac_to_var: np.ndarray

    def edge_vector(self, direction: str, factor: int, variable: int) -> np.ndarray:
        g = self.layout.graphs[0]
        e = g.edges().index((factor, variable))
        lo = self.layout.edge_offset[e]
        arr = self.var_to_fac if direction == "var-to-fac" else self.fac_to_var
        return arr[lo:lo + g.cardinalities[variable]].copy()


@dataclass
class BeliefSet:
    variable_beliefs: list[np.ndarray]
    factor_beliefs: list[np.ndarray] = field(default_factory=list)


@dataclass
class BpResult:
    messages: MessageSet
    beliefs: BeliefSet
    converged: bool
    iterations: int


def normalize_messages(x: np.ndarray, lay: Layout) -> np.ndarray:
    """Shift each edge's vector so its log-sum-exp is zero."""
    return x - lay.by_edge.logsumexp(x)[lay.me_edge]


def var_to_fac_raw(f2v: np.ndarray, lay: Layout) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised variable-to-factor messages; also returns per-state totals."""
    total = lay.by_vs.sum(f2v)
    return total[lay.me_vs] - f2v, total


def factor_joint(v2f: np.ndarray, lay: Layout) -> np.ndarray:
    """``Psi_a`` plus the incoming messages of all scope variables, per factor cell."""
    return lay.psi + lay.by_cell.sum(v2f[lay.pe_me])


def fac_to_var_raw(v2f: np.ndarray, lay: Layout, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Factor-to-variable update before normalisation; also returns the joint."""
    joint = factor_joint(v2f, lay)
    excl = joint[lay.pe_fe] - v2f[lay.pe_me]
    if mode == "max":
        return lay.by_me.max(excl), joint
    return lay.by_me.logsumexp(excl), joint


def compute_beliefs(f2v: np.ndarray, v2f: np.ndarray, lay: Layout) -> tuple[list, list]:
    """Per-graph variable and factor beliefs from the current messages."""
    total = lay.by_vs.sum(f2v)
    log_bv = total - lay.by_var.logsumexp(total)[lay.vs_var]
    joint = factor_joint(v2f, lay)
    log_bf = joint - lay.by_factor.logsumexp(joint)[lay.fe_factor]
    return lay.split_vs(np.exp(log_bv)), lay.split_fe(np.exp(log_bf))


def run_bp(g: FactorGraph, cfg: BpConfig = BpConfig()) -> BpResult:
    lay = Layout([g])
    alpha = cfg.damping
    f2v = np.zeros(lay.n_me)
    v2f = np.zeros(lay.n_me)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        new_v2f, _ = var_to_fac_raw(f2v, lay)
        new_v2f = normalize_messages(new_v2f, lay)
        if alpha and cfg.damp_var_to_fac:
            new_v2f = normalize_messages(new_v2f + alpha * (v2f - new_v2f), lay)
        new_f2v, _ = fac_to_var_raw(new_v2f, lay, cfg.mode)
        new_f2v = normalize_messages(new_f2v, lay)
        if alpha:
            new_f2v = normalize_messages(new_f2v + alpha * (f2v - new_f2v), lay)
        delta = max(np.max(np.abs(new_v2f - v2f), initial=0.0), np.max(np.abs(new_f2v - f2v), initial=0.0))
        v2f, f2v = new_v2f, new_f2v
        if delta < cfg.convergence_tol:
            converged = True
            break
    vb, fb = compute_beliefs(f2v, v2f, lay)
    return BpResult(MessageSet(lay, v2f, f2v), BeliefSet(vb[0], fb[0]), converged, it)


def decode_map(beliefs) -> tuple[int, ...]:
    """Per-variable argmax; ``np.argmax`` already breaks ties toward state 0."""
    vecs = beliefs.variable_beliefs if isinstance(beliefs, BeliefSet) else beliefs
    return tuple(int(np.argmax(b)) for b in vecs)


def log_score(g: FactorGraph, x) -> float:
    """Unnormalised log-probability ``sum_a Psi_a(x_a)``."""
    x = tuple(int(s) for s in x)
    if len(x) != g.num_vars:
        raise ValueError("assignment length does not match the number of variables")
    for i, s in enumerate(x):
        if not 0 <= s < g.cardinalities[i]:
            raise ValueError(f"state {s} out of range for variable {i}")
    return float(sum(pot[tuple(x[i] for i in scope)] for scope, pot in zip(g.scopes, g.log_potentials)))


def map_bounds(g: FactorGraph, r: BpResult, log_Z: float) -> tuple[float, float]:
    """Lower and upper bounds on the probability of the true MAP assignment.

    Valid for any set of factor-to-variable messages: the message terms
    telescope at the MAP state and each maximum can only increase them.
    """
    lay = r.messages.layout
    f2v = r.messages.fac_to_var
    # Psi_a(x_a) - sum_j m_{a->j}(x_j) per factor cell, maximised per factor
    reparam = lay.psi - lay.by_cell.sum(f2v[lay.pe_me])
    fac_term = lay.by_factor.max(reparam).sum()
    total = lay.by_vs.sum(f2v)
    var_term = lay.by_var.max(total).sum()
    upper = float(np.exp(-log_Z + fac_term + var_term))
    x_hat = decode_map(r.beliefs)
    lower = float(np.exp(-log_Z + log_score(g, x_hat)))
    return lower, upper
