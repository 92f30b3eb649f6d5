from .autodiff import Tensor, no_grad, record_kinks
from .gradcheck import gradcheck
from .layers import MLP, GRUCell, graph_norm, gru_cell, mlp_forward
from .optim import Adam, adam_step
from .params import ParamStore

__all__ = [
    "Tensor", "no_grad", "record_kinks", "gradcheck", "MLP", "GRUCell", "graph_norm", "gru_cell",
    "mlp_forward", "Adam", "adam_step", "ParamStore",
]
