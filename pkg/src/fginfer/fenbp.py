"""Factor-equivariant neural BP: loopy BP whose factor-to-variable damping
ratio is predicted per message entry by a small shared network.

The network sees five scalars for entry ``(a -> i, x)``: the previous
message, the fresh BP update, the variable log-belief, and the log of the
summed and of the maximal factor belief with ``X_i = x``. Because it acts
on one scalar state at a time, any relabelling of nodes, factor axes or
states permutes its inputs and outputs identically.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .bp import BeliefSet, BpResult, MessageSet, compute_beliefs
from .core import FactorGraph
from .layout import Layout
from .nn import autodiff as ad
from .nn.layers import MLP
from .nn.params import ParamStore

log = logging.getLogger(__name__)

N_FEATURES = 5
CKPT_PREFIX = "fenbp/"


@dataclass(frozen=True)
class FeNbpConfig:
    iterations: int = 10
    mode: str = "sum"
    hidden: int = 64
    activation: str = "leaky_relu"
    graph_norm: bool = False
    init_damping: float = 0.5

    def __post_init__(self):
        if self.mode not in ("sum", "max"):
            raise ValueError(f"mode must be 'sum' or 'max', got {self.mode!r}")
        if not 0.0 < self.init_damping < 1.0:
            raise ValueError("init_damping must lie strictly inside (0, 1)")


class FeNbpModel:
    """Damping network ``phi`` (5 -> hidden -> hidden -> 1, sigmoid output).

    ``init``:
      * ``"zero"``: every parameter zero, so every damping ratio is 0.5;
      * ``"train"``: random hidden layers, zero output weights and an output
        bias giving ``config.init_damping``, so training starts from damped BP
        without the dead-gradient symmetry of an all-zero network;
      * ``"random"``: every parameter random (used by the equivariance audit).
    """

    def __init__(self, config: FeNbpConfig = FeNbpConfig(), init: str = "zero", seed: int = 0):
        if init not in ("zero", "train", "random"):
            raise ValueError(f"unknown init {init!r}")
        self.config = config
        self.params = ParamStore()
        rng = None if init == "zero" else np.random.default_rng(seed)
        sizes = [N_FEATURES, config.hidden, config.hidden, 1]
        self.phi = MLP(self.params, "phi", sizes, activation=config.activation, graph_norm=config.graph_norm,
                       rng=rng, zero_output=(init == "train"))
        if init == "train":
            d = config.init_damping
            self.params["phi.b2"].data = np.array([np.log(d / (1.0 - d))])

    def save(self, path) -> None:
        self.params.save(path, CKPT_PREFIX)

    def load(self, path) -> "FeNbpModel":
        self.params.load(path, CKPT_PREFIX)
        return self

    def describe(self) -> dict:
        return {"model": "fenbp", **asdict(self.config)}


def _normalize(x: ad.Tensor, lay: Layout) -> ad.Tensor:
    return x - ad.gather(ad.segment_logsumexp(x, lay.by_edge), lay.me_edge, lay.by_edge)


def propagate(lay: Layout, model: FeNbpModel, iterations: int | None = None, trace: list | None = None):
    """Run the unrolled schedule on a batch; returns (var_to_fac, fac_to_var) tensors.

    ``trace``, if given, receives the damping ratios of every iteration.
    """
    cfg = model.config
    T = cfg.iterations if iterations is None else iterations
    psi = ad.Tensor(lay.psi)
    f2v = ad.Tensor(np.zeros(lay.n_me))
    v2f = ad.Tensor(np.zeros(lay.n_me))
    for _ in range(T):
        total = ad.segment_sum(f2v, lay.by_vs)
        v2f = _normalize(ad.gather(total, lay.me_vs, lay.by_vs) - f2v, lay)
        v2f_pairs = ad.gather(v2f, lay.pe_me, lay.by_me)
        joint = psi + ad.segment_sum(v2f_pairs, lay.by_cell)
        excl = ad.gather(joint, lay.pe_fe, lay.by_cell) - v2f_pairs
        if cfg.mode == "max":
            fresh = ad.segment_max(excl, lay.by_me)
        else:
            fresh = ad.segment_logsumexp(excl, lay.by_me)
        fresh = _normalize(fresh, lay)

        log_bv = total - ad.gather(ad.segment_logsumexp(total, lay.by_var), lay.vs_var, lay.by_var)
        log_bf = joint - ad.gather(ad.segment_logsumexp(joint, lay.by_factor), lay.fe_factor, lay.by_factor)
        bf_pairs = ad.gather(log_bf, lay.pe_fe, lay.by_cell)
        feats = ad.stack_columns([
            f2v,
            fresh,
            ad.gather(log_bv, lay.me_vs, lay.by_vs),
            ad.segment_logsumexp(bf_pairs, lay.by_me),
            ad.segment_max(bf_pairs, lay.by_me),
        ])
        alpha = ad.reshape(ad.sigmoid(model.phi(feats, groups=lay.me_by_graph)), (-1,))
        if trace is not None:
            trace.append(alpha.data.copy())
        f2v = _normalize(fresh + alpha * (f2v - fresh), lay)
    return v2f, f2v


def log_variable_beliefs(f2v: ad.Tensor, lay: Layout) -> ad.Tensor:
    total = ad.segment_sum(f2v, lay.by_vs)
    return total - ad.gather(ad.segment_logsumexp(total, lay.by_var), lay.vs_var, lay.by_var)


def fenbp_forward(g: FactorGraph, model: FeNbpModel, iterations: int | None = None) -> BpResult:
    lay = Layout([g])
    with ad.no_grad():
        v2f, f2v = propagate(lay, model, iterations)
    vb, fb = compute_beliefs(f2v.data, v2f.data, lay)
    T = model.config.iterations if iterations is None else iterations
    return BpResult(MessageSet(lay, v2f.data, f2v.data), BeliefSet(vb[0], fb[0]), converged=False, iterations=T)


def fenbp_marginals_batch(graphs: Sequence[FactorGraph], model: FeNbpModel) -> list[list[np.ndarray]]:
    lay = Layout(graphs)
    with ad.no_grad():
        _, f2v = propagate(lay, model)
        log_bv = log_variable_beliefs(f2v, lay)
    return lay.split_vs(np.exp(log_bv.data))


def marginal_loss(model: FeNbpModel, lay: Layout, targets: np.ndarray) -> ad.Tensor:
    """Cross-entropy of the beliefs against target marginals.

    ``targets`` is flat over the layout's variable states. Averaged over the
    variables of each graph, then over graphs.
    """
    _, f2v = propagate(lay, model)
    log_bv = log_variable_beliefs(f2v, lay)
    ce = ad.segment_sum(ad.Tensor(-targets) * log_bv, lay.vs_by_graph)
    n_vars = lay.vars_by_graph.counts.astype(np.float64)
    return ad.mean(ce / n_vars)


def expected_log_score(log_bv: ad.Tensor, lay: Layout) -> ad.Tensor:
    """Per-graph expectation of the log-score when each variable is drawn from its belief."""
    log_prob_cells = ad.segment_sum(ad.gather(log_bv, lay.pe_vs, lay.by_pair_vs), lay.by_cell)
    return ad.segment_sum(ad.exp(log_prob_cells) * lay.psi, lay.fe_by_graph)


def uai_loss_from_beliefs(log_bv: ad.Tensor, lay: Layout, map_scores: np.ndarray) -> ad.Tensor:
    expected = expected_log_score(log_bv, lay)
    s = np.asarray(map_scores, dtype=np.float64)
    return ad.mean(ad.abs((ad.Tensor(s) - expected) / s))


def uai_loss(model: FeNbpModel, lay: Layout, map_scores: np.ndarray) -> ad.Tensor:
    """Mean relative gap between the MAP log-score and its expectation under the beliefs."""
    _, f2v = propagate(lay, model)
    return uai_loss_from_beliefs(log_variable_beliefs(f2v, lay), lay, map_scores)


def _flat_targets(lay: Layout, marginals: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([np.asarray(m, dtype=np.float64) for m in ms]) for ms in marginals])


def fenbp_train_marginals(model: FeNbpModel, train, val, epochs: int = 100, lr: float = 1e-3,
                          early_stop_window: int = 5, batch_size: int = 16, seed: int = 0):
    """Fit ``model`` to oracle marginals. ``train``/``val`` hold (graph, marginals) pairs."""
    from .training import fit

    def loss_fn(m, graphs, labels):
        lay = Layout(graphs)
        return marginal_loss(m, lay, _flat_targets(lay, labels))

    return fit(model, loss_fn, train, val, epochs=epochs, lr=lr, early_stop_window=early_stop_window,
               batch_size=batch_size, seed=seed)


def filter_map_training_set(items, eps_score: float = 1e-6):
    kept = []
    for idx, (g, score) in enumerate(items):
        if abs(score) <= eps_score:
            log.warning("dropping graph %d from MAP training: |log score(x*)| <= %g", idx, eps_score)
            continue
        kept.append((g, score))
    return kept


def fenbp_train_map(model: FeNbpModel, train, val, epochs: int = 100, lr: float = 1e-3,
                    early_stop_window: int = 5, batch_size: int = 16, seed: int = 0, eps_score: float = 1e-6):
    """Fit ``model`` in max mode to the expected-score loss; items are (graph, map_log_score)."""
    from .training import fit

    if model.config.mode != "max":
        raise ValueError("MAP training needs a max-mode model")
    train = filter_map_training_set(train, eps_score)
    val = filter_map_training_set(val, eps_score)

    def loss_fn(m, graphs, scores):
        return uai_loss(m, Layout(graphs), np.asarray(scores))

    return fit(model, loss_fn, train, val, epochs=epochs, lr=lr, early_stop_window=early_stop_window,
               batch_size=batch_size, seed=seed)
