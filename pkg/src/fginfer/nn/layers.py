"""MLP, GRU cell and graph-wise normalisation built on the autodiff ops."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..layout import Segments
from . import autodiff as ad
from .params import ParamStore

GRAPH_NORM_EPS = 1e-5

ACTIVATIONS = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "linear": lambda x: x,
}


def graph_norm(x, groups: Segments | None = None, eps: float = GRAPH_NORM_EPS) -> ad.Tensor:
    """Standardise each column of ``x`` using statistics of its own graph.

    ``groups`` maps rows to graphs; without it all rows form one graph.
    """
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("graph_norm expects a non-empty (rows, channels) matrix")
    if groups is None:
        groups = Segments(np.zeros(x.shape[0], dtype=np.int64), 1)
    counts = groups.counts.astype(np.float64).reshape(-1, 1)
    counts = np.where(counts > 0, counts, 1.0)
    mu = ad.segment_sum(x, groups) / counts
    centred = x - ad.gather(mu, groups.ids, groups)
    var = ad.segment_sum(centred * centred, groups) / counts
    scale = ad.sqrt(var + eps)
    return centred / ad.gather(scale, groups.ids, groups)


def _init_matrix(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class MLP:
    """Affine layers with optional graph-norm before each hidden activation.

    ``sizes`` is ``[in, hidden..., out]``; the last layer is linear.
    """

    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int], activation: str = "relu",
                 graph_norm: bool = False, rng: np.random.Generator | None = None, zero_output: bool = False):
        if len(sizes) < 2:
            raise ValueError("an MLP needs input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = list(sizes)
        self.activation = activation
        self.use_graph_norm = graph_norm
        self.weights, self.biases = [], []
        n_layers = len(sizes) - 1
        for l in range(n_layers):
            fan_in, fan_out = sizes[l], sizes[l + 1]
            if rng is None or (zero_output and l == n_layers - 1):
                w = np.zeros((fan_in, fan_out))
            else:
                w = _init_matrix(rng, fan_in, fan_out)
            self.weights.append(store.add(f"{name}.W{l}", w))
            self.biases.append(store.add(f"{name}.b{l}", np.zeros(fan_out)))

    def __call__(self, x, groups: Segments | None = None) -> ad.Tensor:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"MLP expects {self.sizes[0]} input features, got {x.shape[-1]}")
        act = ACTIVATIONS[self.activation]
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if l < last:
                if self.use_graph_norm:
                    x = graph_norm(x, groups)
                x = act(x)
        return x


def mlp_forward(store: ParamStore, name: str, x, sizes: Sequence[int], activation: str = "relu",
                use_graphnorm: bool = False, norm_context: Segments | None = None) -> ad.Tensor:
    """Functional form of :class:`MLP` over parameters already in ``store``."""
    x = ad.as_tensor(x)
    act = ACTIVATIONS[activation]
    n_layers = len(sizes) - 1
    for l in range(n_layers):
        w, b = store[f"{name}.W{l}"], store[f"{name}.b{l}"]
        if w.shape != (sizes[l], sizes[l + 1]):
            raise ValueError(f"{name}.W{l} has shape {w.shape}, expected {(sizes[l], sizes[l + 1])}")
        x = x @ w + b
        if l < n_layers - 1:
            if use_graphnorm:
                x = graph_norm(x, norm_context)
            x = act(x)
    return x


class GRUCell:
    """Gated recurrent unit (reset, update, candidate gates)."""

    def __init__(self, store: ParamStore, name: str, input_dim: int, hidden_dim: int,
                 rng: np.random.Generator | None = None):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        H = hidden_dim
        if rng is None:
            wi, wh = np.zeros((input_dim, 3 * H)), np.zeros((H, 3 * H))
        else:
            bound = 1.0 / np.sqrt(H)
            wi = rng.uniform(-bound, bound, size=(input_dim, 3 * H))
            wh = rng.uniform(-bound, bound, size=(H, 3 * H))
        self.w_in = store.add(f"{name}.W_in", wi)
        self.w_hid = store.add(f"{name}.W_hid", wh)
        self.b_in = store.add(f"{name}.b_in", np.zeros(3 * H))
        self.b_hid = store.add(f"{name}.b_hid", np.zeros(3 * H))

    def __call__(self, hidden, x) -> ad.Tensor:
        hidden, x = ad.as_tensor(hidden), ad.as_tensor(x)
        H = self.hidden_dim
        if hidden.shape[-1] != H or x.shape[-1] != self.input_dim:
            raise ValueError("GRU input or hidden size mismatch")
        gi = x @ self.w_in + self.b_in
        gh = hidden @ self.w_hid + self.b_hid
        r = ad.sigmoid(gi[..., :H] + gh[..., :H])
        z = ad.sigmoid(gi[..., H:2 * H] + gh[..., H:2 * H])
        n = ad.tanh(gi[..., 2 * H:] + r * gh[..., 2 * H:])
        return n + z * (hidden - n)


def gru_cell(store: ParamStore, name: str, hidden, x) -> ad.Tensor:
    """Functional GRU step over parameters registered by :class:`GRUCell`."""
    cell = GRUCell.__new__(GRUCell)
    cell.w_in, cell.w_hid = store[f"{name}.W_in"], store[f"{name}.W_hid"]
    cell.b_in, cell.b_hid = store[f"{name}.b_in"], store[f"{name}.b_hid"]
    cell.input_dim, cell.hidden_dim = cell.w_in.shape[0], cell.w_hid.shape[0]
    return cell(hidden, x)
