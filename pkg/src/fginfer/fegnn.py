"""Factor-equivariant GNN over directed-edge hidden states.

Variable-to-factor states are updated by a GRU from the summed MLP images
of the other factors' states. Factor-to-variable states are updated by a
second GRU from a BP-style aggregation: each incoming state is mapped to a
per-state vector, tensor-summed with the log potential along its own axis
and reduced by log-sum-exp onto the receiving variable. The aggregation
never looks at axis order, so factor-local variable reorderings do not
change the output.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import FactorGraph
from .layout import Layout
from .nn import autodiff as ad
from .nn.layers import MLP, GRUCell
from .nn.params import ParamStore

CKPT_PREFIX = "fegnn/"


@dataclass(frozen=True)
class FeGnnConfig:
    hidden_dim: int = 5
    cardinality: int = 2
    layers: int = 10
    mlp_hidden: int = 64
    handcrafted_features: bool = False

    def __post_init__(self):
        if self.hidden_dim < 1 or self.cardinality < 1 or self.layers < 0:
            raise ValueError("invalid FE-GNN configuration")


class FeGnnModel:
    """Parameters: MLP_1 (H->H), MLP_2 (H->C), MLP_3 (H->C readout), GRU_1, GRU_2
    and a linear C->H projection in front of GRU_2. ``init`` is ``"zero"`` or
    ``"random"``.
    """

    def __init__(self, config: FeGnnConfig = FeGnnConfig(), init: str = "random", seed: int = 0):
        if init not in ("zero", "random"):
            raise ValueError(f"unknown init {init!r}")
        self.config = config
        self.params = ParamStore()
        rng = None if init == "zero" else np.random.default_rng(seed)
        H, C, W = config.hidden_dim, config.cardinality, config.mlp_hidden
        in1 = H + C if config.handcrafted_features else H
        self.mlp1 = MLP(self.params, "mlp1", [in1, W, W, H], activation="relu", rng=rng)
        self.mlp2 = MLP(self.params, "mlp2", [H, W, W, C], activation="relu", rng=rng)
        self.mlp3 = MLP(self.params, "mlp3", [H, W, W, C], activation="relu", rng=rng)
        self.gru1 = GRUCell(self.params, "gru1", H, H, rng=rng)
        self.proj2 = MLP(self.params, "proj2", [C, H], activation="linear", rng=rng)
        self.gru2 = GRUCell(self.params, "gru2", H, H, rng=rng)

    def save(self, path) -> None:
        self.params.save(path, CKPT_PREFIX)

    def load(self, path) -> "FeGnnModel":
        self.params.load(path, CKPT_PREFIX)
        return self

    def describe(self) -> dict:
        return {"model": "fegnn", **asdict(self.config)}


def factor_aggregate(u: ad.Tensor, lay: Layout) -> ad.Tensor:
    """For every edge ``a -> i``: LSE over ``x_a \\ X_i`` of ``Psi_a`` plus the
    tensor sum of the other scope variables' vectors ``u``, normalised to
    log-sum-exp zero. ``u`` and the result are flat over message entries.
    """
    u_pairs = ad.gather(u, lay.pe_me, lay.by_me)
    joint = ad.Tensor(lay.psi) + ad.segment_sum(u_pairs, lay.by_cell)
    excl = ad.gather(joint, lay.pe_fe, lay.by_cell) - u_pairs
    out = ad.segment_logsumexp(excl, lay.by_me)
    return out - ad.gather(ad.segment_logsumexp(out, lay.by_edge), lay.me_edge, lay.by_edge)


def _check_cardinality(lay: Layout, C: int) -> None:
    if lay.n_vars and not np.all(lay.var_card == C):
        raise ValueError(f"FE-GNN model expects every variable to have cardinality {C}")


def logits(lay: Layout, model: FeGnnModel) -> ad.Tensor:
    """Readout logits, one row of length C per variable of the batch."""
    cfg = model.config
    H, C = cfg.hidden_dim, cfg.cardinality
    _check_cardinality(lay, C)
    E = lay.n_edges
    h_v2f = ad.Tensor(np.zeros((E, H)))
    h_f2v = ad.Tensor(np.zeros((E, H)))
    agg_prev = ad.Tensor(np.zeros((E, C)))
    for _ in range(cfg.layers):
        src = ad.concat([h_f2v, agg_prev], axis=1) if cfg.handcrafted_features else h_f2v
        q = model.mlp1(src)
        others = ad.gather(ad.segment_sum(q, lay.edges_by_var), lay.edge_var, lay.edges_by_var) - q
        h_v2f = model.gru1(h_v2f, others)
        u = ad.reshape(model.mlp2(h_v2f), (-1,))
        agg = ad.reshape(factor_aggregate(u, lay), (E, C))
        h_f2v = model.gru2(h_f2v, model.proj2(agg))
        agg_prev = agg
    pooled = ad.segment_sum(h_f2v, lay.edges_by_var)
    return model.mlp3(pooled)


def fegnn_forward(g: FactorGraph, model: FeGnnModel) -> list[np.ndarray]:
    """Estimated marginal for every variable of ``g``."""
    return fegnn_marginals_batch([g], model)[0]


def fegnn_marginals_batch(graphs: Sequence[FactorGraph], model: FeGnnModel) -> list[list[np.ndarray]]:
    lay = Layout(graphs)
    with ad.no_grad():
        p = ad.softmax(logits(lay, model), axis=1).data
    out = []
    for gi, g in enumerate(graphs):
        base = lay.graph_var_base[gi]
        out.append([p[base + i].copy() for i in range(g.num_vars)])
    return out


def marginal_loss(model: FeGnnModel, lay: Layout, targets: np.ndarray) -> ad.Tensor:
    """Cross-entropy of the softmax readout; ``targets`` has shape (n_vars, C)."""
    logp = ad.log_softmax(logits(lay, model), axis=1)
    ce = ad.sum(ad.Tensor(-targets) * logp, axis=1)
    per_graph = ad.segment_sum(ce, lay.vars_by_graph) / lay.vars_by_graph.counts.astype(np.float64)
    return ad.mean(per_graph)


def fegnn_train(model: FeGnnModel, train, val, epochs: int = 100, lr: float = 1e-3, early_stop_window: int = 5,
                batch_size: int = 32, seed: int = 0):
    """Fit ``model`` to oracle marginals; items are (graph, marginals) pairs."""
    from .training import fit

    C = model.config.cardinality
    for g, _ in list(train) + list(val):
        if any(c != C for c in g.cardinalities):
            raise ValueError(f"FE-GNN training needs every variable to have cardinality {C}")

    def loss_fn(m, graphs, labels):
        lay = Layout(graphs)
        targets = np.array([np.asarray(v, dtype=np.float64) for ms in labels for v in ms]).reshape(-1, C)
        return marginal_loss(m, lay, targets)

    return fit(model, loss_fn, train, val, epochs=epochs, lr=lr, early_stop_window=early_stop_window,
               batch_size=batch_size, seed=seed)
